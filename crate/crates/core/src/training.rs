//! Forward passes, triplet losses, gradients and the gradient-descent loop.
//!
//! Paired mode runs each triplet as two circuits: (A, P) with the anchor in
//! the first interleave slot and (N, A) with the anchor in the second. The
//! anchor's measured pair therefore moves between the two halves of the
//! measured qubits; [`Network::forward_sliq`] routes coordinates so callers
//! always receive `(anchor_x, anchor_y, partner_x, partner_y)`.
//!
//! Single-sample mode embeds A, P and N separately, three circuits per triplet.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Circuit, CircuitSpec, ParameterVector};
use crate::data::{self, Dataset, Sample, Slot, Triplet};
use crate::error::{Error, Result};
use crate::loss::{self, apply_margin, margin_slope, sign, LossWeights, Objective, Point, Projection};
use crate::statevector::StateVector;

/// Step used by the finite-difference gradient.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    ParameterShift,
    FiniteDifference,
    /// Reverse-mode sweep over the simulated state; same gradient as the shift rule.
    Adjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    /// Interwoven pairs, four measured qubits, consistency penalty.
    Sliq,
    /// One sample per run, two measured qubits.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub n_layers: usize,
    pub weights: LossWeights,
    pub gradient_mode: GradientMode,
    pub seed: u64,
    pub mode: NetworkMode,
    /// Triplet distance; `None` picks L1 for paired mode and squared L2 for single-sample mode.
    pub objective: Option<Objective>,
    /// Hinge `max(obj + margin, 0)` on the triplet objective. Off by default.
    pub margin: Option<f64>,
    /// Number of triplets generated; `None` means one per training sample.
    pub triplets: Option<usize>,
    /// Draw a fresh triplet list every epoch instead of once per run.
    pub resample_triplets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 30,
            epochs: 500,
            n_layers: 4,
            weights: LossWeights::default(),
            gradient_mode: GradientMode::ParameterShift,
            seed: 0,
            mode: NetworkMode::Sliq,
            objective: None,
            margin: None,
            triplets: None,
            resample_triplets: false,
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> Objective {
        self.objective.unwrap_or(match self.mode {
            NetworkMode::Sliq => Objective::L1,
            NetworkMode::Baseline => Objective::SquaredL2,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be positive".into()));
        }
        if self.n_layers == 0 {
            return Err(Error::Validation("need at least one layer".into()));
        }
        if self.margin.is_some_and(|m| !m.is_finite()) {
            return Err(Error::Validation("margin must be finite".into()));
        }
        if self.triplets == Some(0) {
            return Err(Error::Validation("triplet count must be positive".into()));
        }
        self.weights.validate()
    }

    /// Upper bound on `|loss|` for one triplet.
    pub fn loss_bound(&self) -> f64 {
        let d = self.objective().max_distance();
        let margin = self.margin.map_or(0.0, f64::abs);
        match self.mode {
            NetworkMode::Sliq => self.weights.alpha * (d + margin) + 4.0 * self.weights.beta,
            NetworkMode::Baseline => self.weights.alpha * (d + margin),
        }
    }
}

/// Independent RNG streams derived from one user seed (splitmix64).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_TRIPLETS: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

/// Parameters drawn uniformly from [0, 2π).
pub fn initial_parameters(spec: &CircuitSpec, seed: u64) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, STREAM_INIT));
    let values = (0..spec.parameter_count()).map(|_| rng.gen_range(0.0..TAU)).collect();
    ParameterVector::new(spec, values).expect("length matches spec")
}

/// Coordinates of one run with their parameter Jacobian (`jac[j * m + c]`).
struct RunDerivatives {
    coords: Vec<f64>,
    jacobian: Vec<f64>,
}

/// A compiled circuit plus the routing and loss logic around it.
#[derive(Debug, Clone)]
pub struct Network {
    circuit: Circuit,
    mode: NetworkMode,
}

impl Network {
    pub fn new(spec: CircuitSpec) -> Self {
        let mode = if spec.is_paired() { NetworkMode::Sliq } else { NetworkMode::Baseline };
        Self { circuit: Circuit::new(spec), mode }
    }

    pub fn spec(&self) -> &CircuitSpec {
        self.circuit.spec()
    }

    pub fn mode(&self) -> NetworkMode {
        self.mode
    }

    /// Circuit executions so far, shifted gradient evaluations included.
    pub fn executions(&self) -> u64 {
        self.circuit.executions()
    }

    pub fn reset_executions(&self) {
        self.circuit.reset_executions()
    }

    fn require(&self, mode: NetworkMode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::Validation(format!("operation needs a {mode:?} circuit, this one is {:?}", self.mode)));
        }
        Ok(())
    }

    fn pair_state(&self, anchor: &Sample, partner: &Sample, slot: Slot) -> Result<StateVector> {
        let input = match slot {
            Slot::First => data::prepare_pair_input(anchor, partner, self.spec())?,
            Slot::Second => data::prepare_pair_input(partner, anchor, self.spec())?,
        };
        StateVector::from_real(&input)
    }

    fn single_state(&self, sample: &Sample) -> Result<StateVector> {
        StateVector::from_real(&data::prepare_single_input(sample, self.spec())?)
    }

    /// Measured positions in anchor-first order for a slot.
    fn routing(slot: Slot) -> [usize; 4] {
        match slot {
            Slot::First => [0, 1, 2, 3],
            Slot::Second => [2, 3, 0, 1],
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.spec().parameter_count() {
            return Err(Error::Shape(format!(
                "circuit takes {} parameters, got {}",
                self.spec().parameter_count(),
                params.len()
            )));
        }
        Ok(())
    }

    /// One paired run. The result is always `(anchor_x, anchor_y, partner_x, partner_y)`.
    pub fn forward_sliq(&self, params: &[f64], anchor: &Sample, partner: &Sample, slot: Slot) -> Result<Projection> {
        self.require(NetworkMode::Sliq)?;
        let state = self.pair_state(anchor, partner, slot)?;
        let raw = self.circuit.coords(&state, params)?;
        Projection::new(Self::routing(slot).iter().map(|&i| raw[i]).collect())
    }

    /// One single-sample run measuring two qubits.
    pub fn forward_baseline(&self, params: &[f64], sample: &Sample) -> Result<Projection> {
        self.require(NetworkMode::Baseline)?;
        let state = self.single_state(sample)?;
        Projection::new(self.circuit.coords(&state, params)?)
    }

    fn jacobian(&self, state: &StateVector, params: &[f64], adjoint: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        if adjoint {
            self.circuit.coords_with_jacobian_adjoint(state, params)
        } else {
            self.circuit.coords_with_jacobian(state, params)
        }
    }

    /// `with_jacobian`: `None` for coordinates only, `Some(adjoint)` to differentiate.
    fn pair_run(
        &self,
        params: &[f64],
        anchor: &Sample,
        partner: &Sample,
        slot: Slot,
        with_jacobian: Option<bool>,
    ) -> Result<RunDerivatives> {
        let state = self.pair_state(anchor, partner, slot)?;
        let route = Self::routing(slot);
        let (raw, raw_jac) = if let Some(adjoint) = with_jacobian {
            self.jacobian(&state, params, adjoint)?
        } else {
            (self.circuit.coords(&state, params)?, Vec::new())
        };
        let coords = route.iter().map(|&i| raw[i]).collect();
        let jacobian = raw_jac.chunks_exact(4).flat_map(|row| route.map(|i| row[i])).collect();
        Ok(RunDerivatives { coords, jacobian })
    }

    fn single_run(&self, params: &[f64], sample: &Sample, with_jacobian: Option<bool>) -> Result<RunDerivatives> {
        let state = self.single_state(sample)?;
        let (coords, jacobian) = if let Some(adjoint) = with_jacobian {
            self.jacobian(&state, params, adjoint)?
        } else {
            (self.circuit.coords(&state, params)?, Vec::new())
        };
        Ok(RunDerivatives { coords, jacobian })
    }

    /// Paired triplet loss `alpha * L_obj + beta * L_pvm` over the runs (A, P) and (N, A).
    ///
    /// Each partner is compared with the anchor measured in its own run;
    /// the consistency term compares the two anchor measurements.
    pub fn sliq_triplet_loss(
        &self,
        params: &[f64],
        a: &Sample,
        p: &Sample,
        n: &Sample,
        config: &TrainConfig,
    ) -> Result<f64> {
        self.require(NetworkMode::Sliq)?;
        let r1 = self.pair_run(params, a, p, Slot::First, None)?;
        let r2 = self.pair_run(params, a, n, Slot::Second, None)?;
        Ok(sliq_loss_terms(&r1.coords, &r2.coords, config).0)
    }

    /// Single-sample triplet loss `alpha * (d(A,P) - d(A,N))` over three runs.
    pub fn baseline_triplet_loss(
        &self,
        params: &[f64],
        a: &Sample,
        p: &Sample,
        n: &Sample,
        config: &TrainConfig,
    ) -> Result<f64> {
        self.require(NetworkMode::Baseline)?;
        let ra = self.single_run(params, a, None)?;
        let rp = self.single_run(params, p, None)?;
        let rn = self.single_run(params, n, None)?;
        Ok(baseline_loss_terms(&ra.coords, &rp.coords, &rn.coords, config).0)
    }

    pub fn triplet_loss(&self, params: &[f64], dataset: &Dataset, t: &Triplet, config: &TrainConfig) -> Result<f64> {
        let (a, p, n) = (dataset.get(t.anchor)?, dataset.get(t.positive)?, dataset.get(t.negative)?);
        match self.mode {
            NetworkMode::Sliq => self.sliq_triplet_loss(params, a, p, n, config),
            NetworkMode::Baseline => self.baseline_triplet_loss(params, a, p, n, config),
        }
    }

    /// Loss and parameter-shift gradient of one triplet.
    fn triplet_loss_and_gradient(
        &self,
        params: &[f64],
        dataset: &Dataset,
        t: &Triplet,
        config: &TrainConfig,
    ) -> Result<(f64, Vec<f64>)> {
        let (a, p, n) = (dataset.get(t.anchor)?, dataset.get(t.positive)?, dataset.get(t.negative)?);
        let jac = Some(config.gradient_mode == GradientMode::Adjoint);
        let mut grad = vec![0.0; params.len()];
        let loss = match self.mode {
            NetworkMode::Sliq => {
                let r1 = self.pair_run(params, a, p, Slot::First, jac)?;
                let r2 = self.pair_run(params, a, n, Slot::Second, jac)?;
                let (loss, d1, d2) = sliq_loss_terms(&r1.coords, &r2.coords, config);
                accumulate(&mut grad, &r1.jacobian, &d1);
                accumulate(&mut grad, &r2.jacobian, &d2);
                loss
            }
            NetworkMode::Baseline => {
                let ra = self.single_run(params, a, jac)?;
                let rp = self.single_run(params, p, jac)?;
                let rn = self.single_run(params, n, jac)?;
                let (loss, da, dp, dn) = baseline_loss_terms(&ra.coords, &rp.coords, &rn.coords, config);
                accumulate(&mut grad, &ra.jacobian, &da);
                accumulate(&mut grad, &rp.jacobian, &dp);
                accumulate(&mut grad, &rn.jacobian, &dn);
                loss
            }
        };
        Ok((loss, grad))
    }

    /// Mean loss over a batch, evaluated in parallel and reduced in batch order.
    pub fn batch_loss(
        &self,
        params: &[f64],
        dataset: &Dataset,
        batch: &[Triplet],
        config: &TrainConfig,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let losses =
            batch.par_iter().map(|t| self.triplet_loss(params, dataset, t, config)).collect::<Result<Vec<_>>>()?;
        Ok(losses.iter().sum::<f64>() / batch.len() as f64)
    }

    /// Gradient of the mean batch loss.
    pub fn gradient(
        &self,
        params: &[f64],
        dataset: &Dataset,
        batch: &[Triplet],
        config: &TrainConfig,
    ) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(params, dataset, batch, config)?.1)
    }

    /// Mean batch loss and its gradient under `config.gradient_mode`.
    pub fn loss_and_gradient(
        &self,
        params: &[f64],
        dataset: &Dataset,
        batch: &[Triplet],
        config: &TrainConfig,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        if batch.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        match config.gradient_mode {
            GradientMode::ParameterShift | GradientMode::Adjoint => {
                let per_triplet = batch
                    .par_iter()
                    .map(|t| self.triplet_loss_and_gradient(params, dataset, t, config))
                    .collect::<Result<Vec<_>>>()?;
                let mut grad = vec![0.0; params.len()];
                let mut loss = 0.0;
                for (l, g) in &per_triplet {
                    loss += l;
                    for (acc, v) in grad.iter_mut().zip(g) {
                        *acc += v;
                    }
                }
                grad.iter_mut().for_each(|g| *g *= scale);
                Ok((loss * scale, grad))
            }
            GradientMode::FiniteDifference => {
                let loss = self.batch_loss(params, dataset, batch, config)?;
                let h = FINITE_DIFFERENCE_STEP;
                let mut shifted = params.to_vec();
                let mut grad = Vec::with_capacity(params.len());
                for j in 0..params.len() {
                    shifted[j] = params[j] + h;
                    let plus = self.batch_loss(&shifted, dataset, batch, config)?;
                    shifted[j] = params[j] - h;
                    let minus = self.batch_loss(&shifted, dataset, batch, config)?;
                    shifted[j] = params[j];
                    grad.push((plus - minus) / (2.0 * h));
                }
                Ok((loss, grad))
            }
        }
    }
}

/// `grad[j] += Σ_c jac[j * m + c] * dcoords[c]`.
fn accumulate(grad: &mut [f64], jacobian: &[f64], dcoords: &[f64]) {
    let m = dcoords.len();
    for (g, row) in grad.iter_mut().zip(jacobian.chunks_exact(m)) {
        *g += row.iter().zip(dcoords).map(|(j, d)| j * d).sum::<f64>();
    }
}

fn point(c: &[f64], offset: usize) -> Point {
    [c[offset], c[offset + 1]]
}

/// Paired loss and its partials with respect to both runs' routed coordinates.
fn sliq_loss_terms(run1: &[f64], run2: &[f64], config: &TrainConfig) -> (f64, [f64; 4], [f64; 4]) {
    let objective = config.objective();
    let LossWeights { alpha, beta } = config.weights;
    let (a1, p) = (point(run1, 0), point(run1, 2));
    let (a2, n) = (point(run2, 0), point(run2, 2));

    let obj = objective.distance(&a1, &p) - objective.distance(&a2, &n);
    let pvm = loss::l1_distance(&a1, &a2);
    let value = alpha * apply_margin(obj, config.margin) + beta * pvm;

    let s = alpha * margin_slope(obj, config.margin);
    let g_ap = objective.distance_grad(&a1, &p);
    let g_an = objective.distance_grad(&a2, &n);
    let g_pvm = [sign(a1[0] - a2[0]), sign(a1[1] - a2[1])];
    let d1 = [s * g_ap[0] + beta * g_pvm[0], s * g_ap[1] + beta * g_pvm[1], -s * g_ap[0], -s * g_ap[1]];
    let d2 = [-s * g_an[0] - beta * g_pvm[0], -s * g_an[1] - beta * g_pvm[1], s * g_an[0], s * g_an[1]];
    (value, d1, d2)
}

fn baseline_loss_terms(a: &[f64], p: &[f64], n: &[f64], config: &TrainConfig) -> (f64, [f64; 2], [f64; 2], [f64; 2]) {
    let objective = config.objective();
    let alpha = config.weights.alpha;
    let (a, p, n) = (point(a, 0), point(p, 0), point(n, 0));
    let obj = objective.distance(&a, &p) - objective.distance(&a, &n);
    let value = alpha * apply_margin(obj, config.margin);
    let s = alpha * margin_slope(obj, config.margin);
    let g_ap = objective.distance_grad(&a, &p);
    let g_an = objective.distance_grad(&a, &n);
    (
        value,
        [s * (g_ap[0] - g_an[0]), s * (g_ap[1] - g_an[1])],
        [-s * g_ap[0], -s * g_ap[1]],
        [s * g_an[0], s * g_an[1]],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: CircuitSpec,
    pub params: ParameterVector,
    /// Mean triplet loss of each completed epoch.
    pub loss_history: Vec<f64>,
    pub config: TrainConfig,
}

impl TrainedModel {
    pub fn network(&self) -> Network {
        Network::new(self.spec.clone())
    }

    pub fn mode(&self) -> NetworkMode {
        self.config.mode
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let model: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if model.params.len() != model.spec.parameter_count() {
            return Err(format!(
                "model has {} parameters, its circuit takes {}",
                model.params.len(),
                model.spec.parameter_count()
            ));
        }
        if model.spec.is_paired() != (model.config.mode == NetworkMode::Sliq) {
            return Err("circuit layout does not match the recorded mode".into());
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|m| Error::format(path, m))
    }
}

/// Train with one triplet list per run (or per epoch when resampling).
pub fn train(dataset: &Dataset, spec: &CircuitSpec, config: &TrainConfig) -> Result<TrainedModel> {
    train_with_observer(dataset, spec, config, |_, _| {})
}

/// [`train`], calling `observer(epoch, mean_loss)` after every epoch.
pub fn train_with_observer(
    dataset: &Dataset,
    spec: &CircuitSpec,
    config: &TrainConfig,
    mut observer: impl FnMut(usize, f64),
) -> Result<TrainedModel> {
    config.validate()?;
    if spec.n_layers() != config.n_layers {
        return Err(Error::Validation(format!(
            "circuit has {} layers, config asks for {}",
            spec.n_layers(),
            config.n_layers
        )));
    }
    let network = Network::new(spec.clone());
    if network.mode() != config.mode {
        return Err(Error::Validation(format!("{:?} training needs a matching circuit layout", config.mode)));
    }

    let mut params = initial_parameters(spec, config.seed);
    let count = config.triplets.unwrap_or(dataset.len());
    let mut triplets = data::make_triplets(dataset, count, stream_seed(config.seed, STREAM_TRIPLETS))?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, STREAM_SHUFFLE));
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.resample_triplets && epoch > 0 {
            let seed = stream_seed(config.seed, STREAM_TRIPLETS.wrapping_add((epoch as u64) << 8));
            triplets = data::make_triplets(dataset, count, seed)?;
        }
        triplets.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in triplets.chunks(config.batch_size) {
            let (loss, grad) = network.loss_and_gradient(params.as_slice(), dataset, batch, config)?;
            total += loss * batch.len() as f64;
            for (p, g) in params.as_mut_slice().iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
        let mean = total / triplets.len() as f64;
        loss_history.push(mean);
        observer(epoch, mean);
    }

    Ok(TrainedModel { spec: spec.clone(), params, loss_history, config: config.clone() })
}
