//! Dense statevector simulator.
//!
//! Qubit ordering is little-endian throughout the crate: qubit `q` is bit `q`
//! of the basis index, so qubit 0 is the least-significant bit. For two
//! qubits the basis order is |q1 q0> = |00>, |01>, |10>, |11>.
//!
//! The simulator is exact: `expectation_z` returns the marginal computed from
//! the amplitudes, never a sampled estimate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on simulated qubits (2^24 amplitudes, 256 MiB).
pub const MAX_QUBITS: usize = 24;

/// A 2x2 complex matrix in row-major order.
pub type Matrix2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Single-qubit rotation about Z: diag(e^{-i phi/2}, e^{i phi/2}).
pub fn rz_matrix(phi: f64) -> Matrix2 {
    let half = 0.5 * phi;
    [[Complex64::from_polar(1.0, -half), ZERO], [ZERO, Complex64::from_polar(1.0, half)]]
}

/// Single-qubit rotation about Y: [[cos t/2, -sin t/2], [sin t/2, cos t/2]].
pub fn ry_matrix(theta: f64) -> Matrix2 {
    let (s, c) = (0.5 * theta).sin_cos();
    [[Complex64::new(c, 0.0), Complex64::new(-s, 0.0)], [Complex64::new(s, 0.0), Complex64::new(c, 0.0)]]
}

pub fn matmul2(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut out = [[ZERO; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// The R3 gate as a ZYZ Euler rotation, `U = Rz(p3) · Ry(p2) · Rz(p1)`.
///
/// `p1` is applied first. Written out with `c = cos(p2/2)`, `s = sin(p2/2)`:
///
/// ```text
/// U = [[ e^{-i(p1+p3)/2} c,  -e^{ i(p1-p3)/2} s ],
///      [ e^{-i(p1-p3)/2} s,   e^{ i(p1+p3)/2} c ]]
/// ```
///
/// Its inverse is `R3(-p3, -p2, -p1)`.
pub fn r3_matrix(p1: f64, p2: f64, p3: f64) -> Matrix2 {
    let (s, c) = (0.5 * p2).sin_cos();
    let sum = 0.5 * (p1 + p3);
    let diff = 0.5 * (p1 - p3);
    [
        [Complex64::from_polar(c, -sum), -Complex64::from_polar(s, diff)],
        [Complex64::from_polar(s, -diff), Complex64::from_polar(c, sum)],
    ]
}

/// One gate of the circuits used here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GateOp {
    R3 { qubit: usize, params: [f64; 3] },
    Cx { control: usize, target: usize },
}

impl GateOp {
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        match *self {
            GateOp::R3 { qubit, .. } => check_qubit(qubit, n_qubits),
            GateOp::Cx { control, target } => check_pair(control, target, n_qubits),
        }
    }
}

fn check_qubit(qubit: usize, n_qubits: usize) -> Result<()> {
    if qubit >= n_qubits {
        return Err(Error::Index(format!("qubit {qubit} out of range for {n_qubits} qubits")));
    }
    Ok(())
}

fn check_pair(control: usize, target: usize, n_qubits: usize) -> Result<()> {
    check_qubit(control, n_qubits)?;
    check_qubit(target, n_qubits)?;
    if control == target {
        return Err(Error::Index(format!("control and target are both qubit {control}")));
    }
    Ok(())
}

fn check_qubit_count(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Resource(format!("{n_qubits} qubits requested, supported range is 1..={MAX_QUBITS}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The all-zero basis state |0...0>.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        Ok(Self { n_qubits, amplitudes })
    }

    /// Amplitude embedding of a real vector: `amplitudes[k] = v[k] / |v|`.
    pub fn from_real(values: &[f64]) -> Result<Self> {
        let n_qubits = qubits_for_len(values.len())?;
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Validation("input vector has non-finite entries".into()));
        }
        if norm == 0.0 {
            return Err(Error::Degenerate("cannot embed a zero vector".into()));
        }
        let amplitudes = values.iter().map(|v| Complex64::new(v / norm, 0.0)).collect();
        Ok(Self { n_qubits, amplitudes })
    }

    /// Wrap raw amplitudes. No normalization is performed.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let n_qubits = qubits_for_len(amplitudes.len())?;
        Ok(Self { n_qubits, amplitudes })
    }

    #[inline]
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply(&mut self, op: &GateOp) -> Result<()> {
        match *op {
            GateOp::R3 { qubit, params } => self.apply_r3(qubit, params[0], params[1], params[2]),
            GateOp::Cx { control, target } => self.apply_cx(control, target),
        }
    }

    pub fn apply_r3(&mut self, qubit: usize, p1: f64, p2: f64, p3: f64) -> Result<()> {
        self.apply_single_qubit(qubit, &r3_matrix(p1, p2, p3))
    }

    pub fn apply_single_qubit(&mut self, qubit: usize, m: &Matrix2) -> Result<()> {
        check_qubit(qubit, self.n_qubits)?;
        apply_matrix_unchecked(&mut self.amplitudes, qubit, m);
        Ok(())
    }

    pub fn apply_cx(&mut self, control: usize, target: usize) -> Result<()> {
        check_pair(control, target, self.n_qubits)?;
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for k in 0..self.amplitudes.len() {
            // visit each swapped pair once, from its target-bit-clear member
            if k & cbit != 0 && k & tbit == 0 {
                self.amplitudes.swap(k, k | tbit);
            }
        }
        Ok(())
    }

    /// Exact <Z> on one qubit: sum of |a_k|^2 weighted +1 for bit clear, -1 for bit set.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        check_qubit(qubit, self.n_qubits)?;
        Ok(expectation_z_unchecked(&self.amplitudes, qubit))
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::Shape(format!("amplitude vector length {len} is not a power of two")));
    }
    let n_qubits = len.trailing_zeros() as usize;
    if n_qubits == 0 {
        return Err(Error::Shape("a state needs at least one qubit (length >= 2)".into()));
    }
    check_qubit_count(n_qubits)?;
    Ok(n_qubits)
}

#[inline]
pub(crate) fn apply_matrix_unchecked(amps: &mut [Complex64], qubit: usize, m: &Matrix2) {
    let stride = 1usize << qubit;
    let [[m00, m01], [m10, m11]] = *m;
    for block in amps.chunks_exact_mut(stride << 1) {
        let (lo, hi) = block.split_at_mut(stride);
        for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
            let x0 = *a0;
            let x1 = *a1;
            *a0 = m00 * x0 + m01 * x1;
            *a1 = m10 * x0 + m11 * x1;
        }
    }
}

#[inline]
pub(crate) fn expectation_z_unchecked(amps: &[Complex64], qubit: usize) -> f64 {
    let stride = 1usize << qubit;
    let mut total = 0.0;
    for block in amps.chunks_exact(stride << 1) {
        let (lo, hi) = block.split_at(stride);
        total += lo.iter().map(|a| a.norm_sqr()).sum::<f64>();
        total -= hi.iter().map(|a| a.norm_sqr()).sum::<f64>();
    }
    total.clamp(-1.0, 1.0)
}
