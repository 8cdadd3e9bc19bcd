//! Triplet objectives and the projection-consistency penalty.
//!
//! All losses operate on projections: Pauli-Z expectation values read from
//! designated qubits, so every coordinate lies in [-1, 1]. Nothing here
//! clamps at zero; the objectives are differences of distances and go
//! negative as training separates positives from negatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in 2-D projection space.
pub type Point = [f64; 2];

/// Measured coordinates in [-1, 1].
///
/// Two-coordinate projections come from single-sample runs. Four-coordinate
/// projections come from paired runs and are always ordered
/// `(anchor_x, anchor_y, partner_x, partner_y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Projection {
    coords: Vec<f64>,
}

impl Projection {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() != 2 && coords.len() != 4 {
            return Err(Error::Shape(format!("projection must have 2 or 4 coordinates, got {}", coords.len())));
        }
        if let Some(c) = coords.iter().find(|c| !(-1.0..=1.0).contains(*c)) {
            return Err(Error::Validation(format!("projection coordinate {c} outside [-1, 1]")));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// The single point of a two-coordinate projection.
    pub fn point(&self) -> Result<Point> {
        match self.coords[..] {
            [x, y] => Ok([x, y]),
            _ => Err(arity_error(2, self.coords.len())),
        }
    }

    pub fn anchor_point(&self) -> Result<Point> {
        match self.coords[..] {
            [x, y, _, _] => Ok([x, y]),
            _ => Err(arity_error(4, self.coords.len())),
        }
    }

    pub fn partner_point(&self) -> Result<Point> {
        match self.coords[..] {
            [_, _, x, y] => Ok([x, y]),
            _ => Err(arity_error(4, self.coords.len())),
        }
    }
}

fn arity_error(expected: usize, got: usize) -> Error {
    Error::Shape(format!("expected a {expected}-coordinate projection, got {got}"))
}

/// Weights of the objective and consistency terms in the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.alpha) || !ok(self.beta) {
            return Err(Error::Validation(format!(
                "loss weights must be finite and nonnegative, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::Validation("alpha and beta cannot both be zero".into()));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

pub fn l1_distance(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
}

pub fn squared_l2_distance(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Which distance a triplet objective is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `d(A,P) - d(A,N)` with squared Euclidean distance.
    SquaredL2,
    /// `d(A,P) - d(A,N)` with Manhattan distance.
    L1,
}

impl Objective {
    pub fn distance(self, a: &Point, b: &Point) -> f64 {
        match self {
            Objective::SquaredL2 => squared_l2_distance(a, b),
            Objective::L1 => l1_distance(a, b),
        }
    }

    /// Partial derivatives of `distance(a, b)` with respect to `a`; the
    /// derivative with respect to `b` is the negation.
    pub fn distance_grad(self, a: &Point, b: &Point) -> Point {
        match self {
            Objective::SquaredL2 => [2.0 * (a[0] - b[0]), 2.0 * (a[1] - b[1])],
            Objective::L1 => [sign(a[0] - b[0]), sign(a[1] - b[1])],
        }
    }

    /// Largest attainable `|distance|` between points of [-1,1]^2.
    pub fn max_distance(self) -> f64 {
        match self {
            Objective::SquaredL2 => 8.0,
            Objective::L1 => 4.0,
        }
    }
}

/// Subgradient of `|x|`, zero at the kink.
#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn two_point(p: &Projection) -> Result<Point> {
    p.point()
}

/// Squared-distance triplet loss:
/// `[(Ax-Px)^2 + (Ay-Py)^2] - [(Ax-Nx)^2 + (Ay-Ny)^2]`.
pub fn triplet_l2_loss(a: &Projection, p: &Projection, n: &Projection) -> Result<f64> {
    let (a, p, n) = (two_point(a)?, two_point(p)?, two_point(n)?);
    Ok(squared_l2_distance(&a, &p) - squared_l2_distance(&a, &n))
}

/// Manhattan triplet objective:
/// `(|Ax-Px| + |Ay-Py|) - (|Ax-Nx| + |Ay-Ny|)`.
pub fn l_obj(a: &Projection, p: &Projection, n: &Projection) -> Result<f64> {
    let (a, p, n) = (two_point(a)?, two_point(p)?, two_point(n)?);
    Ok(l1_distance(&a, &p) - l1_distance(&a, &n))
}

/// Consistency between the anchor's projections from its two paired runs:
/// `|A_px - A_nx| + |A_py - A_ny|`.
pub fn l_pvm(anchor_from_positive: &Projection, anchor_from_negative: &Projection) -> Result<f64> {
    let (ap, an) = (two_point(anchor_from_positive)?, two_point(anchor_from_negative)?);
    Ok(l1_distance(&ap, &an))
}

/// `alpha * obj + beta * pvm`.
pub fn l_total(weights: &LossWeights, obj: f64, pvm: f64) -> Result<f64> {
    if !obj.is_finite() || !pvm.is_finite() {
        return Err(Error::Validation(format!("loss terms must be finite, got obj={obj} pvm={pvm}")));
    }
    if pvm < 0.0 {
        return Err(Error::Validation(format!("consistency loss {pvm} is negative")));
    }
    Ok(weights.alpha * obj + weights.beta * pvm)
}

/// Optional hinge on the triplet objective: `max(obj + margin, 0)`.
#[inline]
pub fn apply_margin(obj: f64, margin: Option<f64>) -> f64 {
    match margin {
        Some(m) => (obj + m).max(0.0),
        None => obj,
    }
}

/// Derivative of [`apply_margin`] with respect to `obj`.
#[inline]
pub fn margin_slope(obj: f64, margin: Option<f64>) -> f64 {
    match margin {
        Some(m) if obj + m <= 0.0 => 0.0,
        _ => 1.0,
    }
}
