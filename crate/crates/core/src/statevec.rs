// Copyright 2026 The hubcast Developers
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except
// in compliance with the License. You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under
// the License.

//! Dense statevector engine.
//!
//! Qubit 0 is the leftmost tensor factor and the most significant bit of a basis index, so
//! `|100>` on three qubits lives at index 4. Every operation here is a pure function of its
//! inputs; in-place variants exist for the hot loops of the protocol simulator.

use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;

use crate::error::{argument, HubError, Result};

/// Dense complex matrix used for gate payloads, circuit unitaries and density blocks.
pub type Matrix = DMatrix<Complex64>;

/// Tolerance for unitarity and normalization checks.
pub const UNITARY_TOL: f64 = 1e-10;

/// Outcomes with probability at or below this are omitted from exhaustive measurement.
pub const ZERO_PROBABILITY: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn real_matrix(dim: usize, entries: &[f64]) -> Matrix {
    Matrix::from_row_iterator(dim, dim, entries.iter().map(|&x| Complex64::new(x, 0.0)))
}

/// Largest entrywise modulus of `a - b`. Panics on shape mismatch.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "matrix shapes differ");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_unitary(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let product = m.adjoint() * m;
    max_abs_diff(&product, &Matrix::identity(m.nrows(), m.ncols())) <= tol
}

/// Kronecker product in big-endian order: `a` acts on the leading qubits.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Single-qubit Pauli operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Matrix {
        match self {
            Pauli::I => Matrix::identity(2, 2),
            Pauli::X => real_matrix(2, &[0.0, 1.0, 1.0, 0.0]),
            Pauli::Y => Matrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Pauli::Z => real_matrix(2, &[1.0, 0.0, 0.0, -1.0]),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// A tensor product of single-qubit Paulis, listed as `(qubit, pauli)`.
pub type PauliString = Vec<(usize, Pauli)>;

/// A computational-basis measurement result `s_1 ... s_N`, with `s_1` the most significant bit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome {
    bits: Vec<u8>,
}

impl Outcome {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(argument(format!("outcome bit {b} is not binary")));
        }
        Ok(Self { bits })
    }

    pub fn from_integer(value: usize, width: usize) -> Self {
        let bits = (0..width)
            .map(|i| ((value >> (width - 1 - i)) & 1) as u8)
            .collect();
        Self { bits }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Bit `i` (0-based, `s_{i+1}` in one-based notation).
    pub fn bit(&self, i: usize) -> u8 {
        self.bits[i]
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_integer(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// What a gate does to its targets, before any controls are attached.
#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    I,
    X,
    Y,
    Z,
    H,
    /// `exp(-i theta Y / 2)`.
    Ry(f64),
    /// `Ry(theta) * Z`: the amplitude-splitting rotation used by the W-state circuits.
    RyZ(f64),
    /// Arbitrary unitary on `2^k` dimensions, `k` = number of targets.
    Unitary(Matrix),
}

impl GateKind {
    pub fn matrix(&self) -> Matrix {
        match self {
            GateKind::I => Pauli::I.matrix(),
            GateKind::X => Pauli::X.matrix(),
            GateKind::Y => Pauli::Y.matrix(),
            GateKind::Z => Pauli::Z.matrix(),
            GateKind::H => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                real_matrix(2, &[h, h, h, -h])
            }
            GateKind::Ry(theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                real_matrix(2, &[c, -s, s, c])
            }
            GateKind::RyZ(theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                real_matrix(2, &[c, s, s, -c])
            }
            GateKind::Unitary(m) => m.clone(),
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            GateKind::Unitary(m) => {
                let dim = m.nrows();
                (dim.is_power_of_two() && dim >= 2).then(|| dim.trailing_zeros() as usize)
            }
            _ => Some(1),
        }
    }

    fn transpose(&self) -> GateKind {
        match self {
            GateKind::Y => GateKind::Unitary(Pauli::Y.matrix().transpose()),
            GateKind::Ry(theta) => GateKind::Ry(-theta),
            GateKind::Unitary(m) => GateKind::Unitary(m.transpose()),
            // Real symmetric.
            other => other.clone(),
        }
    }

    fn adjoint(&self) -> GateKind {
        match self {
            GateKind::Ry(theta) => GateKind::Ry(-theta),
            GateKind::Unitary(m) => GateKind::Unitary(m.adjoint()),
            // The remaining kinds are Hermitian.
            other => other.clone(),
        }
    }
}

/// A control qubit. `on_one == false` is an open-circle (zero-state) control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Control {
    pub qubit: usize,
    pub on_one: bool,
}

impl Control {
    pub fn on(qubit: usize) -> Self {
        Self {
            qubit,
            on_one: true,
        }
    }

    pub fn off(qubit: usize) -> Self {
        Self {
            qubit,
            on_one: false,
        }
    }
}

/// A local unitary applied at explicit qubit indices, optionally controlled.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    kind: GateKind,
    targets: Vec<usize>,
    controls: Vec<Control>,
}

impl GateOp {
    pub fn new(kind: GateKind, targets: Vec<usize>) -> Result<Self> {
        let arity = kind
            .arity()
            .ok_or_else(|| HubError::Validation("unitary payload must be 2^k square".into()))?;
        if arity != targets.len() {
            return Err(argument(format!(
                "gate acts on {arity} qubits but {} targets were given",
                targets.len()
            )));
        }
        if let GateKind::Unitary(m) = &kind {
            if !is_unitary(m, UNITARY_TOL) {
                return Err(HubError::Validation("gate matrix is not unitary".into()));
            }
        }
        let op = Self {
            kind,
            targets,
            controls: Vec::new(),
        };
        op.check_distinct()?;
        Ok(op)
    }

    fn single(kind: GateKind, qubit: usize) -> Self {
        Self {
            kind,
            targets: vec![qubit],
            controls: Vec::new(),
        }
    }

    pub fn i(qubit: usize) -> Self {
        Self::single(GateKind::I, qubit)
    }

    pub fn x(qubit: usize) -> Self {
        Self::single(GateKind::X, qubit)
    }

    pub fn y(qubit: usize) -> Self {
        Self::single(GateKind::Y, qubit)
    }

    pub fn z(qubit: usize) -> Self {
        Self::single(GateKind::Z, qubit)
    }

    pub fn h(qubit: usize) -> Self {
        Self::single(GateKind::H, qubit)
    }

    pub fn ry(qubit: usize, theta: f64) -> Self {
        Self::single(GateKind::Ry(theta), qubit)
    }

    pub fn ryz(qubit: usize, theta: f64) -> Self {
        Self::single(GateKind::RyZ(theta), qubit)
    }

    pub fn unitary(targets: Vec<usize>, matrix: Matrix) -> Result<Self> {
        Self::new(GateKind::Unitary(matrix), targets)
    }

    pub fn cx(control: usize, target: usize) -> Self {
        Self::x(target).controlled_by(control)
    }

    /// Adds a filled-dot control.
    pub fn controlled_by(mut self, qubit: usize) -> Self {
        self.controls.push(Control::on(qubit));
        self
    }

    /// Adds an open-circle control.
    pub fn anti_controlled_by(mut self, qubit: usize) -> Self {
        self.controls.push(Control::off(qubit));
        self
    }

    pub fn with_controls(mut self, controls: impl IntoIterator<Item = Control>) -> Self {
        self.controls.extend(controls);
        self
    }

    pub fn kind(&self) -> &GateKind {
        &self.kind
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    /// Matrix on the targets only.
    pub fn target_matrix(&self) -> Matrix {
        self.kind.matrix()
    }

    pub fn adjoint(&self) -> GateOp {
        Self {
            kind: self.kind.adjoint(),
            targets: self.targets.clone(),
            controls: self.controls.clone(),
        }
    }

    /// Transpose in the computational basis. Controls are diagonal projectors, so they carry over.
    pub fn transpose(&self) -> GateOp {
        Self {
            kind: self.kind.transpose(),
            targets: self.targets.clone(),
            controls: self.controls.clone(),
        }
    }

    /// Same gate with every qubit index passed through `map`.
    pub fn remapped(&self, map: impl Fn(usize) -> usize) -> GateOp {
        Self {
            kind: self.kind.clone(),
            targets: self.targets.iter().map(|&q| map(q)).collect(),
            controls: self
                .controls
                .iter()
                .map(|c| Control {
                    qubit: map(c.qubit),
                    on_one: c.on_one,
                })
                .collect(),
        }
    }

    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.controls
            .iter()
            .map(|c| c.qubit)
            .chain(self.targets.iter().copied())
    }

    fn check_distinct(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for q in self.qubits() {
            if !seen.insert(q) {
                return Err(argument(format!("qubit {q} appears twice in one gate")));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, num_qubits: usize) -> Result<()> {
        self.check_distinct()?;
        if let Some(q) = self.qubits().find(|&q| q >= num_qubits) {
            return Err(argument(format!(
                "qubit {q} out of range for {num_qubits} qubits"
            )));
        }
        if self.kind.arity() != Some(self.targets.len()) {
            return Err(argument("gate arity does not match its targets"));
        }
        Ok(())
    }

    /// Dense unitary of this gate embedded into `num_qubits` qubits.
    pub fn embedded_matrix(&self, num_qubits: usize) -> Result<Matrix> {
        self.validate_for(num_qubits)?;
        let dim = 1usize << num_qubits;
        let mut out = Matrix::zeros(dim, dim);
        for col in 0..dim {
            let mut basis = Statevector::zero_unchecked(num_qubits);
            basis.amps[0] = ZERO;
            basis.amps[col] = ONE;
            basis.apply_gate_in_place(self)?;
            for (row, amp) in basis.amps.iter().enumerate() {
                out[(row, col)] = *amp;
            }
        }
        Ok(out)
    }
}

#[inline]
fn qubit_mask(num_qubits: usize, qubit: usize) -> usize {
    1usize << (num_qubits - 1 - qubit)
}

/// Pure state of `num_qubits` qubits as `2^num_qubits` amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// Wraps amplitudes, checking the length is a power of two and the norm is 1.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(argument(format!("{len} amplitudes is not 2^n for n >= 1")));
        }
        let state = Self {
            num_qubits: len.trailing_zeros() as usize,
            amps,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > UNITARY_TOL {
            return Err(HubError::Validation(format!(
                "state norm^2 is {norm}, expected 1"
            )));
        }
        Ok(state)
    }

    /// Wraps amplitudes and rescales them to unit norm.
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(argument(format!("{len} amplitudes is not 2^n for n >= 1")));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm <= ZERO_PROBABILITY {
            return Err(HubError::Validation(
                "cannot normalize the zero vector".into(),
            ));
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amps: amps.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(amps.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zero(num_qubits: usize) -> Result<Self> {
        make_basis_state(num_qubits, 0)
    }

    pub(crate) fn zero_unchecked(num_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << num_qubits];
        amps[0] = ONE;
        Self { num_qubits, amps }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amps(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.amps[index].norm_sqr()
    }

    fn check_same_dim(&self, other: &Statevector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(argument(format!(
                "dimension mismatch: {} vs {} qubits",
                self.num_qubits, other.num_qubits
            )));
        }
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Statevector) -> Result<Complex64> {
        self.check_same_dim(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &Statevector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// `self (x) other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &Statevector) -> Statevector {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Statevector {
            num_qubits: self.num_qubits + other.num_qubits,
            amps,
        }
    }

    pub fn apply_gate(&self, gate: &GateOp) -> Result<Statevector> {
        let mut out = self.clone();
        out.apply_gate_in_place(gate)?;
        Ok(out)
    }

    pub fn apply_gate_in_place(&mut self, gate: &GateOp) -> Result<()> {
        gate.validate_for(self.num_qubits)?;
        let n = self.num_qubits;
        let k = gate.targets.len();
        let sub = 1usize << k;
        let m = gate.target_matrix();
        let entries: Vec<Complex64> = (0..sub)
            .flat_map(|r| (0..sub).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)])
            .collect();

        let target_masks: Vec<usize> = gate.targets.iter().map(|&q| qubit_mask(n, q)).collect();
        let all_targets = target_masks.iter().fold(0, |acc, m| acc | m);
        let (ctrl_mask, ctrl_value) = gate.controls.iter().fold((0, 0), |(mask, value), c| {
            let bit = qubit_mask(n, c.qubit);
            (mask | bit, if c.on_one { value | bit } else { value })
        });
        // offsets[j]: bit pattern of local index j spread over the target positions, targets[0] most significant.
        let offsets: Vec<usize> = (0..sub)
            .map(|j| {
                (0..k)
                    .filter(|t| (j >> (k - 1 - t)) & 1 == 1)
                    .fold(0, |acc, t| acc | target_masks[t])
            })
            .collect();

        let mut local = vec![ZERO; sub];
        for base in 0..self.amps.len() {
            if base & all_targets != 0 || base & ctrl_mask != ctrl_value {
                continue;
            }
            for (slot, off) in local.iter_mut().zip(&offsets) {
                *slot = self.amps[base | off];
            }
            for (r, off) in offsets.iter().enumerate() {
                let row = &entries[r * sub..(r + 1) * sub];
                self.amps[base | off] = row.iter().zip(&local).map(|(a, b)| a * b).sum();
            }
        }
        Ok(())
    }

    /// Applies a tensor product of Paulis. Qubit indices must be distinct.
    pub fn apply_pauli_string(&self, paulis: &[(usize, Pauli)]) -> Result<Statevector> {
        let mut out = vec![ZERO; self.dim()];
        self.accumulate_pauli_string(paulis, ONE, &mut out)?;
        Ok(Statevector {
            num_qubits: self.num_qubits,
            amps: out,
        })
    }

    /// Applies `sum_t coeff_t P_t`. The sum must be unitary on this state.
    pub fn apply_pauli_sum(&self, terms: &[(Complex64, PauliString)]) -> Result<Statevector> {
        let mut out = vec![ZERO; self.dim()];
        for (coeff, paulis) in terms {
            self.accumulate_pauli_string(paulis, *coeff, &mut out)?;
        }
        let state = Statevector {
            num_qubits: self.num_qubits,
            amps: out,
        };
        let norm = state.norm_sqr();
        if (norm - self.norm_sqr()).abs() > UNITARY_TOL {
            return Err(HubError::Validation(format!(
                "Pauli sum changed the norm^2 to {norm}"
            )));
        }
        Ok(state)
    }

    fn accumulate_pauli_string(
        &self,
        paulis: &[(usize, Pauli)],
        coeff: Complex64,
        out: &mut [Complex64],
    ) -> Result<()> {
        let n = self.num_qubits;
        let mut seen = HashSet::new();
        let mut flip = 0usize;
        let mut z_mask = 0usize;
        let mut y_count = 0u32;
        for &(q, p) in paulis {
            if q >= n {
                return Err(argument(format!("qubit {q} out of range for {n} qubits")));
            }
            if !seen.insert(q) {
                return Err(argument(format!("duplicate qubit {q} in Pauli string")));
            }
            let bit = qubit_mask(n, q);
            match p {
                Pauli::I => {}
                Pauli::X => flip |= bit,
                Pauli::Z => z_mask |= bit,
                Pauli::Y => {
                    flip |= bit;
                    z_mask |= bit;
                    y_count += 1;
                }
            }
        }
        // Y = i X Z, so each Y contributes a factor i on top of the X flip and Z sign.
        let global = coeff * I.powu(y_count);
        for (idx, amp) in self.amps.iter().enumerate() {
            let sign = if (idx & z_mask).count_ones() % 2 == 1 {
                -1.0
            } else {
                1.0
            };
            out[idx ^ flip] += global * sign * amp;
        }
        Ok(())
    }

    fn check_qubit_list(&self, qubits: &[usize], what: &str) -> Result<()> {
        if qubits.is_empty() {
            return Err(argument(format!("{what} list is empty")));
        }
        let mut seen = HashSet::new();
        for &q in qubits {
            if q >= self.num_qubits {
                return Err(argument(format!(
                    "qubit {q} out of range for {} qubits",
                    self.num_qubits
                )));
            }
            if !seen.insert(q) {
                return Err(argument(format!("duplicate qubit {q} in {what} list")));
            }
        }
        Ok(())
    }

    fn outcome_index(&self, index: usize, qubits: &[usize]) -> usize {
        qubits.iter().fold(0, |acc, &q| {
            (acc << 1) | usize::from(index & qubit_mask(self.num_qubits, q) != 0)
        })
    }

    fn outcome_probabilities(&self, qubits: &[usize]) -> Vec<f64> {
        let mut probs = vec![0.0; 1 << qubits.len()];
        for (idx, amp) in self.amps.iter().enumerate() {
            probs[self.outcome_index(idx, qubits)] += amp.norm_sqr();
        }
        probs
    }

    fn collapse(&self, qubits: &[usize], outcome: usize, probability: f64) -> Statevector {
        let scale = 1.0 / probability.sqrt();
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(idx, amp)| {
                if self.outcome_index(idx, qubits) == outcome {
                    amp * scale
                } else {
                    ZERO
                }
            })
            .collect();
        Statevector {
            num_qubits: self.num_qubits,
            amps,
        }
    }

    /// Every nonzero-probability outcome of measuring `qubits`, with the collapsed state on the
    /// full register. The first listed qubit is the most significant outcome bit.
    pub fn measure_subset_all_outcomes(&self, qubits: &[usize]) -> Result<Vec<MeasurementBranch>> {
        self.check_qubit_list(qubits, "measured qubit")?;
        let probs = self.outcome_probabilities(qubits);
        Ok(probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > ZERO_PROBABILITY)
            .map(|(o, &p)| MeasurementBranch {
                outcome: Outcome::from_integer(o, qubits.len()),
                probability: p,
                state: self.collapse(qubits, o, p),
            })
            .collect())
    }

    /// Draws one Born-rule outcome with a generator seeded from `seed`.
    pub fn sample_measurement(
        &self,
        qubits: &[usize],
        seed: u64,
    ) -> Result<(Outcome, Statevector)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_measurement_with(qubits, &mut rng)
    }

    pub fn sample_measurement_with<R: Rng + ?Sized>(
        &self,
        qubits: &[usize],
        rng: &mut R,
    ) -> Result<(Outcome, Statevector)> {
        self.check_qubit_list(qubits, "measured qubit")?;
        let probs = self.outcome_probabilities(qubits);
        let chosen = sample_index(&probs, rng);
        let state = self.collapse(qubits, chosen, probs[chosen]);
        Ok((Outcome::from_integer(chosen, qubits.len()), state))
    }

    /// Reduced density matrix on `keep`, in the listed order.
    pub fn partial_trace_keep(&self, keep: &[usize]) -> Result<DensityBlock> {
        self.check_qubit_list(keep, "kept qubit")?;
        let n = self.num_qubits;
        let kept_mask = keep.iter().fold(0, |acc, &q| acc | qubit_mask(n, q));
        let dim = 1usize << keep.len();
        let rest_len = 1usize << (n - keep.len());
        let rest_positions: Vec<usize> = (0..n)
            .filter(|&q| kept_mask & qubit_mask(n, q) == 0)
            .collect();

        let mut columns = vec![ZERO; rest_len * dim];
        for (idx, amp) in self.amps.iter().enumerate() {
            let a = self.outcome_index(idx, keep);
            let r = rest_positions.iter().fold(0, |acc, &q| {
                (acc << 1) | usize::from(idx & qubit_mask(n, q) != 0)
            });
            columns[r * dim + a] = *amp;
        }
        let mut entries = Matrix::zeros(dim, dim);
        for r in 0..rest_len {
            let v = &columns[r * dim..(r + 1) * dim];
            for a in 0..dim {
                if v[a] == ZERO {
                    continue;
                }
                for b in 0..dim {
                    entries[(a, b)] += v[a] * v[b].conj();
                }
            }
        }
        Ok(DensityBlock { entries })
    }

    pub fn equal_up_to_global_phase(&self, other: &Statevector, tol: f64) -> Result<bool> {
        equal_up_to_global_phase(self, other, tol)
    }
}

impl Serialize for Statevector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.amps.len()))?;
        for a in &self.amps {
            seq.serialize_element(&[a.re, a.im])?;
        }
        seq.end()
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_nonzero
}

/// One branch of an exhaustive measurement.
#[derive(Clone, Debug)]
pub struct MeasurementBranch {
    pub outcome: Outcome,
    pub probability: f64,
    pub state: Statevector,
}

/// A reduced density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityBlock {
    entries: Matrix,
}

impl DensityBlock {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        max_abs_diff(&self.entries, &self.entries.adjoint()) <= tol
    }

    pub fn max_deviation_from(&self, other: &Matrix) -> f64 {
        max_abs_diff(&self.entries, other)
    }
}

/// Assignment of Bell-pair halves to register positions: `pairs[i] = (c_i, e_i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairLayout {
    pairs: Vec<(usize, usize)>,
}

impl PairLayout {
    /// Checks that the pairs use every index in `0..2 * pairs.len()` exactly once.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let total = 2 * pairs.len();
        let mut seen = HashSet::new();
        for &(c, e) in &pairs {
            for q in [c, e] {
                if q >= total {
                    return Err(argument(format!(
                        "pair index {q} out of range for {total} qubits"
                    )));
                }
                if !seen.insert(q) {
                    return Err(argument(format!(
                        "qubit {q} assigned to two Bell-pair roles"
                    )));
                }
            }
        }
        Ok(Self { pairs })
    }

    /// `c_1 ... c_n e_1 ... e_n`.
    pub fn central_first(n_pairs: usize) -> Self {
        Self {
            pairs: (0..n_pairs).map(|i| (i, n_pairs + i)).collect(),
        }
    }

    /// `c_1 e_1 c_2 e_2 ...`.
    pub fn interleaved(n_pairs: usize) -> Self {
        Self {
            pairs: (0..n_pairs).map(|i| (2 * i, 2 * i + 1)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn make_basis_state(num_qubits: usize, index: usize) -> Result<Statevector> {
    if num_qubits == 0 || num_qubits >= usize::BITS as usize {
        return Err(argument(format!("unsupported qubit count {num_qubits}")));
    }
    let dim = 1usize << num_qubits;
    if index >= dim {
        return Err(argument(format!(
            "basis index {index} out of range for {num_qubits} qubits"
        )));
    }
    let mut amps = vec![ZERO; dim];
    amps[index] = ONE;
    Ok(Statevector { num_qubits, amps })
}

/// Tensor product of `n_pairs` copies of `(|00> + |11>)/sqrt(2)` placed according to `layout`.
pub fn make_bell_pairs(n_pairs: usize, layout: &PairLayout) -> Result<Statevector> {
    if n_pairs == 0 {
        return Err(argument("at least one Bell pair is required"));
    }
    if layout.len() != n_pairs {
        return Err(argument(format!(
            "layout describes {} pairs, expected {n_pairs}",
            layout.len()
        )));
    }
    let num_qubits = 2 * n_pairs;
    let amp = Complex64::new((0.5f64).powf(n_pairs as f64 / 2.0), 0.0);
    let mut amps = vec![ZERO; 1 << num_qubits];
    for pattern in 0..(1usize << n_pairs) {
        let idx = layout
            .pairs
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &(c, e))| {
                if (pattern >> (n_pairs - 1 - i)) & 1 == 1 {
                    acc | qubit_mask(num_qubits, c) | qubit_mask(num_qubits, e)
                } else {
                    acc
                }
            });
        amps[idx] = amp;
    }
    Ok(Statevector { num_qubits, amps })
}

/// True iff `|<a|b>| >= 1 - tol`.
pub fn equal_up_to_global_phase(a: &Statevector, b: &Statevector, tol: f64) -> Result<bool> {
    Ok(a.inner(b)?.norm() >= 1.0 - tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;
    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < TOL
    }

    fn assert_amps(state: &Statevector, expected: &[Complex64]) {
        assert_eq!(state.dim(), expected.len());
        for (i, (a, b)) in state.amps().iter().zip(expected).enumerate() {
            assert!(close(*a, *b), "amplitude {i}: {a} != {b}");
        }
    }

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn basis_states_are_big_endian() {
        assert_amps(&make_basis_state(1, 0).unwrap(), &[ONE, ZERO]);
        assert_amps(&make_basis_state(2, 3).unwrap(), &[ZERO, ZERO, ZERO, ONE]);
        let s = make_basis_state(3, 4).unwrap();
        assert_eq!(s.amps()[4], ONE);
        // |100>: qubit 0 set
        let via_gate = Statevector::zero(3)
            .unwrap()
            .apply_gate(&GateOp::x(0))
            .unwrap();
        assert_eq!(s, via_gate);
        assert!(matches!(make_basis_state(2, 4), Err(HubError::Argument(_))));
    }

    #[test]
    fn bell_pair_layouts() {
        let one = make_bell_pairs(1, &PairLayout::central_first(1)).unwrap();
        assert_amps(&one, &[re(H), ZERO, ZERO, re(H)]);

        let blocked = make_bell_pairs(2, &PairLayout::central_first(2)).unwrap();
        let interleaved = make_bell_pairs(2, &PairLayout::interleaved(2)).unwrap();
        for idx in 0..16 {
            let want_blocked = [0b0000, 0b0101, 0b1010, 0b1111].contains(&idx);
            let want_interleaved = [0b0000, 0b0011, 0b1100, 0b1111].contains(&idx);
            assert!(close(
                blocked.amps()[idx],
                re(if want_blocked { 0.5 } else { 0.0 })
            ));
            assert!(close(
                interleaved.amps()[idx],
                re(if want_interleaved { 0.5 } else { 0.0 })
            ));
        }
        assert!(PairLayout::new(vec![(0, 1), (1, 2)]).is_err());
        assert!(PairLayout::new(vec![(0, 0)]).is_err());
        assert!(make_bell_pairs(2, &PairLayout::central_first(3)).is_err());
    }

    #[test]
    fn elementary_gates() {
        let plus = Statevector::zero(1)
            .unwrap()
            .apply_gate(&GateOp::h(0))
            .unwrap();
        assert_amps(&plus, &[re(H), re(H)]);

        let s = Statevector::zero(2)
            .unwrap()
            .apply_gate(&GateOp::x(1))
            .unwrap();
        assert_amps(&s, &[ZERO, ONE, ZERO, ZERO]);

        let input = Statevector::from_real(&[H, 0.0, H, 0.0]).unwrap();
        let out = input.apply_gate(&GateOp::cx(0, 1)).unwrap();
        assert_amps(&out, &[re(H), ZERO, ZERO, re(H)]);

        let open = input
            .apply_gate(&GateOp::x(1).anti_controlled_by(0))
            .unwrap();
        assert_amps(&open, &[ZERO, re(H), re(H), ZERO]);
    }

    #[test]
    fn gate_validation() {
        let bad = Matrix::from_element(2, 2, ONE);
        assert!(matches!(
            GateOp::unitary(vec![0], bad),
            Err(HubError::Validation(_))
        ));
        assert!(GateOp::unitary(vec![0, 1], Pauli::X.matrix()).is_err());
        let s = Statevector::zero(2).unwrap();
        assert!(s.apply_gate(&GateOp::x(2)).is_err());
        assert!(s.apply_gate(&GateOp::cx(1, 1)).is_err());
    }

    #[test]
    fn two_qubit_unitary_payload_matches_kron() {
        let m = kron(&Pauli::X.matrix(), &Pauli::Z.matrix());
        let gate = GateOp::unitary(vec![2, 0], m).unwrap();
        let s = make_basis_state(3, 0b001).unwrap();
        // X on qubit 2, Z on qubit 0 (which is |0>): |001> -> |000>
        let out = s.apply_gate(&gate).unwrap();
        assert_amps(&out, &make_basis_state(3, 0).unwrap().amps);
    }

    #[test]
    fn pauli_string_examples() {
        let one = make_basis_state(1, 1).unwrap();
        // XZ acts as Z then X.
        let xz = one.apply_pauli_string(&[(0, Pauli::Z)]).unwrap();
        let xz = xz.apply_pauli_string(&[(0, Pauli::X)]).unwrap();
        assert_amps(&xz, &[-ONE, ZERO]);

        let zero = make_basis_state(1, 0).unwrap();
        assert_eq!(zero.apply_pauli_string(&[(0, Pauli::Z)]).unwrap(), zero);

        let y = zero.apply_pauli_string(&[(0, Pauli::Y)]).unwrap();
        assert_amps(&y, &[ZERO, I]);

        assert!(zero
            .apply_pauli_string(&[(0, Pauli::X), (0, Pauli::Z)])
            .is_err());
    }

    #[test]
    fn exhaustive_measurement_examples() {
        let bell = make_bell_pairs(1, &PairLayout::central_first(1)).unwrap();
        let branches = bell.measure_subset_all_outcomes(&[0]).unwrap();
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0].outcome.as_integer(), 0);
        assert!((branches[0].probability - 0.5).abs() < TOL);
        assert_eq!(branches[0].state, make_basis_state(2, 0).unwrap());
        assert_eq!(branches[1].state.amps()[3], ONE);

        let one = make_basis_state(1, 1).unwrap();
        let branches = one.measure_subset_all_outcomes(&[0]).unwrap();
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].outcome.bits(), &[1]);
        assert!((branches[0].probability - 1.0).abs() < TOL);

        assert!(one.measure_subset_all_outcomes(&[]).is_err());
        assert!(bell.measure_subset_all_outcomes(&[0, 0]).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_born_distributed() {
        let bell = make_bell_pairs(1, &PairLayout::central_first(1)).unwrap();
        let (a, sa) = bell.sample_measurement(&[0], 17).unwrap();
        let (b, sb) = bell.sample_measurement(&[0], 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(a.bit(0) <= 1);

        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let shots = 100_000;
        let zeros = (0..shots)
            .filter(|_| {
                bell.sample_measurement_with(&[0], &mut rng)
                    .unwrap()
                    .0
                    .bit(0)
                    == 0
            })
            .count();
        let freq = zeros as f64 / shots as f64;
        assert!((freq - 0.5).abs() < 0.01, "frequency {freq}");

        let basis = make_basis_state(3, 0b101).unwrap();
        for seed in 0..20 {
            let (o, s) = basis.sample_measurement(&[0, 1, 2], seed).unwrap();
            assert_eq!(o.as_integer(), 0b101);
            assert_eq!(s, basis);
        }
    }

    #[test]
    fn partial_trace_examples() {
        let bell = make_bell_pairs(1, &PairLayout::central_first(1)).unwrap();
        let rho = bell.partial_trace_keep(&[0]).unwrap();
        assert!(rho.max_deviation_from(&(Matrix::identity(2, 2) * re(0.5))) < TOL);

        let s = make_basis_state(2, 0b01).unwrap();
        let rho = s.partial_trace_keep(&[0]).unwrap();
        assert!(rho.max_deviation_from(&real_matrix(2, &[1.0, 0.0, 0.0, 0.0])) < TOL);
        let rho = s.partial_trace_keep(&[1]).unwrap();
        assert!(rho.max_deviation_from(&real_matrix(2, &[0.0, 0.0, 0.0, 1.0])) < TOL);

        let full = bell.partial_trace_keep(&[0, 1]).unwrap();
        assert!((full.trace() - ONE).norm() < TOL);
        assert!((full.entries()[(0, 3)] - re(0.5)).norm() < TOL);
        assert!(bell.partial_trace_keep(&[2]).is_err());
    }

    #[test]
    fn global_phase_comparison() {
        let zero = make_basis_state(1, 0).unwrap();
        let minus_zero = Statevector::from_amplitudes(vec![-ONE, ZERO]).unwrap();
        let i_zero = Statevector::from_amplitudes(vec![I, ZERO]).unwrap();
        let one = make_basis_state(1, 1).unwrap();
        assert!(equal_up_to_global_phase(&zero, &minus_zero, 1e-10).unwrap());
        assert!(equal_up_to_global_phase(&zero, &i_zero, 1e-10).unwrap());
        assert!(!equal_up_to_global_phase(&zero, &one, 1e-10).unwrap());
        assert!(equal_up_to_global_phase(&zero, &make_basis_state(2, 0).unwrap(), 1e-10).is_err());
    }

    #[test]
    fn ry_and_ryz_matrices() {
        let theta = 0.7;
        let ryz = GateKind::RyZ(theta).matrix();
        let expected = GateKind::Ry(theta).matrix() * Pauli::Z.matrix();
        assert!(max_abs_diff(&ryz, &expected) < TOL);
        assert!(is_unitary(&ryz, TOL));
        let g = GateOp::ry(0, theta);
        let product = g.adjoint().target_matrix() * g.target_matrix();
        assert!(max_abs_diff(&product, &Matrix::identity(2, 2)) < TOL);
    }

    #[test]
    fn outcome_integer_round_trip() {
        let o = Outcome::from_integer(6, 3);
        assert_eq!(o.bits(), &[1, 1, 0]);
        assert_eq!(o.as_integer(), 6);
        assert_eq!(o.to_string(), "110");
        assert!(Outcome::from_bits(vec![0, 2]).is_err());
    }
}
