//! The layered variational circuit.
//!
//! Each layer applies one R3 per qubit in ascending qubit order, consuming
//! three parameters per gate, and then the entangler: CX(i, i+1) for
//! i = 0..n-1, closed by CX(n-1, 0) when n >= 3. Parameters are laid out as
//! `params[3 * (layer * n_qubits + qubit) + k]` for k in {p1, p2, p3}.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Projection;
use crate::statevector::{apply_matrix_unchecked, expectation_z_unchecked, r3_matrix, GateOp, Matrix2, StateVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCircuitSpec")]
pub struct CircuitSpec {
    n_qubits: usize,
    n_layers: usize,
    measured_qubits: Vec<usize>,
    anchor_slots: Vec<usize>,
}

#[derive(Deserialize)]
struct RawCircuitSpec {
    n_qubits: usize,
    n_layers: usize,
    measured_qubits: Vec<usize>,
    anchor_slots: Vec<usize>,
}

impl TryFrom<RawCircuitSpec> for CircuitSpec {
    type Error = Error;

    fn try_from(raw: RawCircuitSpec) -> Result<Self> {
        CircuitSpec::new(raw.n_qubits, raw.n_layers, raw.measured_qubits, raw.anchor_slots)
    }
}

impl CircuitSpec {
    /// Validates the measurement layout.
    ///
    /// Paired (four-qubit) layouts must designate the first two positions to
    /// the anchor. Single-sample (two-qubit) layouts own both positions.
    pub fn new(
        n_qubits: usize,
        n_layers: usize,
        measured_qubits: Vec<usize>,
        anchor_slots: Vec<usize>,
    ) -> Result<Self> {
        if n_qubits == 0 || n_qubits > crate::statevector::MAX_QUBITS {
            return Err(Error::Resource(format!(
                "circuit width {n_qubits} outside 1..={}",
                crate::statevector::MAX_QUBITS
            )));
        }
        if n_layers == 0 {
            return Err(Error::Validation("circuit needs at least one layer".into()));
        }
        for (i, &q) in measured_qubits.iter().enumerate() {
            if q >= n_qubits {
                return Err(Error::Index(format!("measured qubit {q} out of range for {n_qubits} qubits")));
            }
            if measured_qubits[..i].contains(&q) {
                return Err(Error::Validation(format!("qubit {q} measured twice")));
            }
        }
        match (measured_qubits.len(), anchor_slots.as_slice()) {
            (4, [0, 1]) | (2, [0, 1]) => {}
            (m, slots) => {
                return Err(Error::Validation(format!(
                    "unsupported measurement layout: {m} measured qubits with anchor slots {slots:?}"
                )))
            }
        }
        Ok(Self { n_qubits, n_layers, measured_qubits, anchor_slots })
    }

    /// Paired layout: qubits 0,1 carry the anchor and 2,3 the partner.
    pub fn sliq(n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits < 4 {
            return Err(Error::Resource(format!("paired circuits measure four qubits, {n_qubits} requested")));
        }
        Self::new(n_qubits, n_layers, vec![0, 1, 2, 3], vec![0, 1])
    }

    /// Single-sample layout measuring qubits 0 and 1.
    pub fn baseline(n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits < 2 {
            return Err(Error::Resource(format!("single-sample circuits measure two qubits, {n_qubits} requested")));
        }
        Self::new(n_qubits, n_layers, vec![0, 1], vec![0, 1])
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn measured_qubits(&self) -> &[usize] {
        &self.measured_qubits
    }

    pub fn anchor_slots(&self) -> &[usize] {
        &self.anchor_slots
    }

    pub fn is_paired(&self) -> bool {
        self.measured_qubits.len() == 4
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn parameter_count(&self) -> usize {
        3 * self.n_qubits * self.n_layers
    }

    /// CX (control, target) pairs of one entangling block, in application order.
    pub fn entangler_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        let mut pairs: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if n >= 3 {
            pairs.push((n - 1, 0));
        }
        pairs
    }

    /// The full gate list for a parameter vector.
    pub fn gates(&self, params: &ParameterVector) -> Result<Vec<GateOp>> {
        self.check_params(params.as_slice())?;
        let p = params.as_slice();
        let mut ops = Vec::with_capacity(self.n_layers * (2 * self.n_qubits));
        for layer in 0..self.n_layers {
            for qubit in 0..self.n_qubits {
                let g = 3 * (layer * self.n_qubits + qubit);
                ops.push(GateOp::R3 { qubit, params: [p[g], p[g + 1], p[g + 2]] });
            }
            ops.extend(self.entangler_pairs().into_iter().map(|(control, target)| GateOp::Cx { control, target }));
        }
        Ok(ops)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "circuit takes {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        Ok(())
    }
}

/// Rotation angles for every R3 gate of a circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(spec: &CircuitSpec, values: Vec<f64>) -> Result<Self> {
        spec.check_params(&values)?;
        Ok(Self(values))
    }

    pub fn zeros(spec: &CircuitSpec) -> Self {
        Self(vec![0.0; spec.parameter_count()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Embed `input` and run the layered circuit on it.
pub fn run_circuit(input: &[f64], spec: &CircuitSpec, params: &ParameterVector) -> Result<StateVector> {
    Circuit::new(spec.clone()).run(input, params.as_slice())
}

/// `<Z>` of each measured qubit, in `measured_qubits` order.
pub fn measure_projection(state: &StateVector, spec: &CircuitSpec) -> Result<Projection> {
    if state.n_qubits() != spec.n_qubits() {
        return Err(Error::Shape(format!(
            "state has {} qubits, circuit expects {}",
            state.n_qubits(),
            spec.n_qubits()
        )));
    }
    let coords = spec.measured_qubits().iter().map(|&q| state.expectation_z(q)).collect::<Result<Vec<_>>>()?;
    Projection::new(coords)
}

/// A circuit ready for repeated execution.
///
/// The entangling block is a fixed basis permutation and is applied as one
/// gather instead of gate by gate. Every execution, including the shifted
/// evaluations of [`Circuit::coords_with_jacobian`], bumps a counter.
#[derive(Debug)]
pub struct Circuit {
    spec: CircuitSpec,
    entangler: Vec<usize>,
    executions: AtomicU64,
}

impl Clone for Circuit {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            entangler: self.entangler.clone(),
            executions: AtomicU64::new(self.executions()),
        }
    }
}

impl Circuit {
    pub fn new(spec: CircuitSpec) -> Self {
        let pairs = spec.entangler_pairs();
        let entangler = (0..spec.dim())
            .map(|mut k| {
                for &(c, t) in &pairs {
                    if k >> c & 1 == 1 {
                        k ^= 1 << t;
                    }
                }
                k
            })
            .collect();
        Self { spec, entangler, executions: AtomicU64::new(0) }
    }

    pub fn spec(&self) -> &CircuitSpec {
        &self.spec
    }

    /// Number of circuit executions performed so far.
    pub fn executions(&self) -> u64 {
        self.executions.load(Ordering::Relaxed)
    }

    pub fn reset_executions(&self) {
        self.executions.store(0, Ordering::Relaxed);
    }

    fn count(&self, n: u64) {
        self.executions.fetch_add(n, Ordering::Relaxed);
    }

    /// Embed a real vector of length `2^n_qubits` and run the circuit.
    pub fn run(&self, input: &[f64], params: &[f64]) -> Result<StateVector> {
        if input.len() != self.spec.dim() {
            return Err(Error::Shape(format!(
                "circuit on {} qubits takes {} inputs, got {}",
                self.spec.n_qubits(),
                self.spec.dim(),
                input.len()
            )));
        }
        self.run_state(StateVector::from_real(input)?, params)
    }

    pub fn run_state(&self, state: StateVector, params: &[f64]) -> Result<StateVector> {
        self.check_state(&state)?;
        self.spec.check_params(params)?;
        self.count(1);
        let mats = self.gate_matrices(params);
        let mut amps = state.into_amplitudes();
        let mut scratch = Vec::with_capacity(amps.len());
        self.run_from(&mut amps, &mats, 0, &mut scratch);
        StateVector::from_amplitudes(amps)
    }

    /// Measured coordinates after running the circuit on an embedded state.
    pub fn coords(&self, input: &StateVector, params: &[f64]) -> Result<Vec<f64>> {
        let out = self.run_state(input.clone(), params)?;
        Ok(self.measure_amplitudes(out.amplitudes()))
    }

    /// Measured coordinates and their exact derivatives by the parameter-shift rule.
    ///
    /// Every rotation angle enters the circuit through exactly one `exp(-i θ P / 2)`
    /// factor with `P` a Pauli, so `d<Z>/dθ = (<Z>(θ + π/2) - <Z>(θ - π/2)) / 2`.
    /// Returns `(coords, jacobian)` with `jacobian[j * m + c] = d coords[c] / d params[j]`
    /// where `m` is the number of measured qubits.
    pub fn coords_with_jacobian(&self, input: &StateVector, params: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(input)?;
        self.spec.check_params(params)?;
        let n = self.spec.n_qubits();
        let n_gates = n * self.spec.n_layers();
        let m = self.spec.measured_qubits().len();
        let mats = self.gate_matrices(params);

        // states entering each R3 gate
        let mut prefixes: Vec<Vec<Complex64>> = Vec::with_capacity(n_gates);
        let mut amps = input.amplitudes().to_vec();
        let mut scratch = Vec::with_capacity(amps.len());
        for (g, mat) in mats.iter().enumerate() {
            prefixes.push(amps.clone());
            apply_matrix_unchecked(&mut amps, g % n, mat);
            if (g + 1) % n == 0 {
                self.entangle(&mut amps, &mut scratch);
            }
        }
        let coords = self.measure_amplitudes(&amps);

        // The suffix after gate g is linear, so the outputs for every shifted
        // version of g are combinations of the suffix applied to the four
        // single-entry lifts |a><b| of the prefix on g's qubit.
        let mut jacobian = vec![0.0; params.len() * m];
        let mut lifted: [Vec<Complex64>; 4] = Default::default();
        let mut combined = vec![Complex64::new(0.0, 0.0); amps.len()];
        for (g, prefix) in prefixes.iter().enumerate() {
            let q = g % n;
            for (ab, out) in lifted.iter_mut().enumerate() {
                lift_component(prefix, q, ab >> 1, ab & 1, out);
                if (g + 1) % n == 0 {
                    self.entangle(out, &mut scratch);
                }
                self.run_from(out, &mats, g + 1, &mut scratch);
            }
            let base = &params[3 * g..3 * g + 3];
            for k in 0..3 {
                let mut diff = [0.0; 4];
                for (sign, weight) in [(1.0, 0.5), (-1.0, -0.5)] {
                    let mut shifted = [base[0], base[1], base[2]];
                    shifted[k] += sign * FRAC_PI_2;
                    let u = r3_matrix(shifted[0], shifted[1], shifted[2]);
                    let w = [u[0][0], u[0][1], u[1][0], u[1][1]];
                    for (i, c) in combined.iter_mut().enumerate() {
                        *c = w[0] * lifted[0][i] + w[1] * lifted[1][i] + w[2] * lifted[2][i] + w[3] * lifted[3][i];
                    }
                    for (c, &mq) in self.spec.measured_qubits().iter().enumerate() {
                        diff[c] += weight * expectation_z_unchecked(&combined, mq);
                    }
                }
                let j = 3 * g + k;
                jacobian[j * m..(j + 1) * m].copy_from_slice(&diff[..m]);
            }
        }
        self.count(1 + 2 * params.len() as u64);
        Ok((coords, jacobian))
    }

    /// Same result as [`Circuit::coords_with_jacobian`] by reverse-mode
    /// (adjoint) differentiation: one forward pass, then a backward sweep that
    /// uncomputes the state and carries `Z_c |out>` for every measured qubit.
    /// Gate derivatives use `dG/dθ = (G(θ + π) - G(θ - π)) / 4`.
    ///
    /// Simulator-only; counts as a single execution.
    pub fn coords_with_jacobian_adjoint(&self, input: &StateVector, params: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(input)?;
        self.spec.check_params(params)?;
        self.count(1);
        let n = self.spec.n_qubits();
        let measured = self.spec.measured_qubits();
        let m = measured.len();
        let mats = self.gate_matrices(params);

        let mut phi = input.amplitudes().to_vec();
        let mut scratch = Vec::with_capacity(phi.len());
        self.run_from(&mut phi, &mats, 0, &mut scratch);
        let coords: Vec<f64> = measured.iter().map(|&q| expectation_z_unchecked(&phi, q)).collect();

        let mut lambdas: Vec<Vec<Complex64>> = measured
            .iter()
            .map(|&q| {
                let mut l = phi.clone();
                apply_z(&mut l, q);
                l
            })
            .collect();
        let mut jacobian = vec![0.0; params.len() * m];
        let mut moved = vec![Complex64::new(0.0, 0.0); phi.len()];
        for g in (0..mats.len()).rev() {
            let q = g % n;
            if (g + 1) % n == 0 {
                self.disentangle(&mut phi, &mut scratch);
                for l in &mut lambdas {
                    self.disentangle(l, &mut scratch);
                }
            }
            apply_matrix_unchecked(&mut phi, q, &adjoint(&mats[g]));
            let base = &params[3 * g..3 * g + 3];
            for k in 0..3 {
                let mut plus = [base[0], base[1], base[2]];
                let mut minus = plus;
                plus[k] += PI;
                minus[k] -= PI;
                let (up, um) = (r3_matrix(plus[0], plus[1], plus[2]), r3_matrix(minus[0], minus[1], minus[2]));
                let mut d = [[Complex64::new(0.0, 0.0); 2]; 2];
                for (i, row) in d.iter_mut().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        *cell = 0.25 * (up[i][j] - um[i][j]);
                    }
                }
                moved.copy_from_slice(&phi);
                apply_matrix_unchecked(&mut moved, q, &d);
                let j = 3 * g + k;
                for (c, l) in lambdas.iter().enumerate() {
                    let overlap: f64 = l.iter().zip(&moved).map(|(a, b)| (a.conj() * b).re).sum();
                    jacobian[j * m + c] = 2.0 * overlap;
                }
            }
            let inv = adjoint(&mats[g]);
            for l in &mut lambdas {
                apply_matrix_unchecked(l, q, &inv);
            }
        }
        Ok((coords, jacobian))
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.n_qubits() != self.spec.n_qubits() {
            return Err(Error::Shape(format!(
                "state has {} qubits, circuit expects {}",
                state.n_qubits(),
                self.spec.n_qubits()
            )));
        }
        Ok(())
    }

    fn gate_matrices(&self, params: &[f64]) -> Vec<Matrix2> {
        params.chunks_exact(3).map(|p| r3_matrix(p[0], p[1], p[2])).collect()
    }

    /// Apply gates `start..` (with the entangler after each completed layer).
    fn run_from(&self, amps: &mut Vec<Complex64>, mats: &[Matrix2], start: usize, scratch: &mut Vec<Complex64>) {
        let n = self.spec.n_qubits();
        for (g, mat) in mats.iter().enumerate().skip(start) {
            apply_matrix_unchecked(amps, g % n, mat);
            if (g + 1) % n == 0 {
                self.entangle(amps, scratch);
            }
        }
    }

    fn disentangle(&self, amps: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) {
        scratch.clear();
        scratch.resize(amps.len(), Complex64::new(0.0, 0.0));
        for (k, &src) in self.entangler.iter().enumerate() {
            scratch[k] = amps[src];
        }
        std::mem::swap(amps, scratch);
    }

    fn entangle(&self, amps: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) {
        scratch.clear();
        scratch.resize(amps.len(), Complex64::new(0.0, 0.0));
        for (k, &dest) in self.entangler.iter().enumerate() {
            scratch[dest] = amps[k];
        }
        std::mem::swap(amps, scratch);
    }

    fn measure_amplitudes(&self, amps: &[Complex64]) -> Vec<f64> {
        self.spec.measured_qubits().iter().map(|&q| expectation_z_unchecked(amps, q)).collect()
    }
}

fn adjoint(m: &Matrix2) -> Matrix2 {
    [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
}

fn apply_z(amps: &mut [Complex64], qubit: usize) {
    let stride = 1usize << qubit;
    for block in amps.chunks_exact_mut(stride << 1) {
        for a in &mut block[stride..] {
            *a = -*a;
        }
    }
}

/// `out = (|a><b| on qubit q) · state`: entries whose qubit-q bit is `b`
/// moved to bit value `a`, everything else zero.
fn lift_component(state: &[Complex64], qubit: usize, a: usize, b: usize, out: &mut Vec<Complex64>) {
    let stride = 1usize << qubit;
    out.clear();
    out.resize(state.len(), Complex64::new(0.0, 0.0));
    for (dst, src) in out.chunks_exact_mut(stride << 1).zip(state.chunks_exact(stride << 1)) {
        dst[a * stride..(a + 1) * stride].copy_from_slice(&src[b * stride..(b + 1) * stride]);
    }
}
