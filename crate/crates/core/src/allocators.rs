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

//! The allocation protocols as data: central operation, per-node recovery tables and the message
//! rule that maps a measurement outcome to the integer each end node receives.
//!
//! A protocol never stores a recovery "per outcome". Node `i` looks its correction up in
//! `recovery_table[i]` using only its own message `alpha_i(s)`, so recovery locality holds by
//! construction and the tests check it anyway.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{argument, HubError, Result};
use crate::statevec::{
    make_bell_pairs, GateOp, Matrix, PairLayout, Pauli, PauliString, Statevector, UNITARY_TOL,
};

pub use crate::statevec::Outcome;

/// Largest `n` for which dense `2^n x 2^n` central matrices are built.
pub const MAX_DENSE_QUBITS: usize = 12;

/// `(1/sqrt(n)) sum_k X_k |0...0>`.
pub fn w_state(n: usize) -> Result<Statevector> {
    if n == 0 || n > 30 {
        return Err(argument(format!("W state needs 1..=30 qubits, got {n}")));
    }
    let amp = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    for k in 0..n {
        amps[1 << (n - 1 - k)] = amp;
    }
    Statevector::from_amplitudes(amps)
}

/// `(|0...0> + |1...1>)/sqrt(2)`.
pub fn ghz_state(n: usize) -> Result<Statevector> {
    if n == 0 || n > 30 {
        return Err(argument(format!("GHZ state needs 1..=30 qubits, got {n}")));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    amps[0] = Complex64::new(h, 0.0);
    amps[(1 << n) - 1] = Complex64::new(h, 0.0);
    Statevector::from_amplitudes(amps)
}

/// The `n` Pauli strings of the W unitary: term `r` is `Z^(r) X I^(n-r-1)`.
pub fn w_pauli_terms(n: usize) -> Vec<PauliString> {
    (0..n)
        .map(|r| {
            (0..=r)
                .map(|k| (k, if k < r { Pauli::Z } else { Pauli::X }))
                .collect()
        })
        .collect()
}

fn check_protocol_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(argument(format!(
            "protocols need at least 2 end nodes, got {n}"
        )));
    }
    Ok(())
}

fn check_dense(n: usize) -> Result<()> {
    if n > MAX_DENSE_QUBITS {
        return Err(HubError::Resource(format!(
            "dense {n}-qubit matrix exceeds the {MAX_DENSE_QUBITS}-qubit limit"
        )));
    }
    Ok(())
}

/// Dense `(1/sqrt(n)) sum_r Z^(r-1) X I^(n-r)`, built column by column from the Pauli terms.
pub fn build_w_unitary(n: usize) -> Result<Matrix> {
    check_protocol_size(n)?;
    check_dense(n)?;
    let dim = 1usize << n;
    let coeff = 1.0 / (n as f64).sqrt();
    let mut u = Matrix::zeros(dim, dim);
    for col in 0..dim {
        for r in 0..n {
            let flip = 1usize << (n - 1 - r);
            // Z on every qubit before r: sign from the bits above position r.
            let higher = col >> (n - r);
            let sign = if higher.count_ones() % 2 == 1 {
                -1.0
            } else {
                1.0
            };
            u[(col ^ flip, col)] += Complex64::new(sign * coeff, 0.0);
        }
    }
    Ok(u)
}

/// Dense `(H (x) I) . C(X^(n-1))` with qubit 0 as the control.
pub fn build_ghz_unitary(n: usize) -> Result<Matrix> {
    check_protocol_size(n)?;
    check_dense(n)?;
    let dim = 1usize << n;
    let top = 1usize << (n - 1);
    let rest = top - 1;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = Matrix::zeros(dim, dim);
    for col in 0..dim {
        let fanned = if col & top != 0 { col ^ rest } else { col };
        let low = fanned & rest;
        let sign = if fanned & top != 0 { -h } else { h };
        u[(low, col)] += Complex64::new(h, 0.0);
        u[(low | top, col)] += Complex64::new(sign, 0.0);
    }
    Ok(u)
}

/// How the central system transforms its register before measuring it.
#[derive(Clone, Debug)]
pub enum CentralOperation {
    /// `sum_t c_t P_t` on the central register.
    PauliSum(Vec<(Complex64, PauliString)>),
    /// A gate sequence, first gate applied first.
    Gates(Vec<GateOp>),
}

impl CentralOperation {
    /// Applies the operation to a register whose leading qubits are the central ones.
    pub fn apply(&self, state: &mut Statevector) -> Result<()> {
        match self {
            CentralOperation::PauliSum(terms) => {
                *state = state.apply_pauli_sum(terms)?;
            }
            CentralOperation::Gates(gates) => {
                for g in gates {
                    state.apply_gate_in_place(g)?;
                }
            }
        }
        Ok(())
    }

    /// `U^T |s>` on `width` qubits, computed without touching the end register.
    pub fn transpose_image(&self, s: usize, width: usize) -> Result<Statevector> {
        let basis = crate::statevec::make_basis_state(width, s)?;
        match self {
            CentralOperation::PauliSum(terms) => {
                let transposed: Vec<(Complex64, PauliString)> = terms
                    .iter()
                    .map(|(c, p)| {
                        let y_count = p.iter().filter(|(_, q)| *q == Pauli::Y).count();
                        let sign = if y_count % 2 == 1 { -1.0 } else { 1.0 };
                        (c * sign, p.clone())
                    })
                    .collect();
                basis.apply_pauli_sum(&transposed)
            }
            CentralOperation::Gates(gates) => {
                let mut state = basis;
                for g in gates.iter().rev() {
                    state.apply_gate_in_place(&g.transpose())?;
                }
                Ok(state)
            }
        }
    }

    pub fn dense_matrix(&self, width: usize) -> Result<Matrix> {
        check_dense(width)?;
        let dim = 1usize << width;
        let mut u = Matrix::zeros(dim, dim);
        for col in 0..dim {
            let mut state = crate::statevec::make_basis_state(width, col)?;
            self.apply(&mut state)?;
            for (row, a) in state.amps().iter().enumerate() {
                u[(row, col)] = *a;
            }
        }
        Ok(u)
    }
}

/// A named single-qubit correction.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalUnitary {
    label: String,
    matrix: Matrix,
}

impl LocalUnitary {
    /// Operator product of a Pauli word read left to right: `"ZX"` is `Z . X` (X acts first).
    pub fn from_word(word: &str) -> Result<Self> {
        let mut matrix = Matrix::identity(2, 2);
        for ch in word.chars() {
            let p = match ch {
                'I' => Pauli::I,
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                other => return Err(argument(format!("unknown Pauli letter {other:?}"))),
            };
            matrix *= p.matrix();
        }
        let label = if word.is_empty() {
            "I".to_string()
        } else {
            word.to_string()
        };
        Ok(Self { label, matrix })
    }

    pub fn new(label: impl Into<String>, matrix: Matrix) -> Result<Self> {
        if matrix.shape() != (2, 2) || !crate::statevec::is_unitary(&matrix, UNITARY_TOL) {
            return Err(HubError::Validation(
                "recovery must be a single-qubit unitary".into(),
            ));
        }
        Ok(Self {
            label: label.into(),
            matrix,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn gate_on(&self, qubit: usize) -> GateOp {
        GateOp::unitary(vec![qubit], self.matrix.clone()).expect("recovery validated as unitary")
    }
}

fn table(words: &[&str]) -> Vec<LocalUnitary> {
    words
        .iter()
        .map(|w| LocalUnitary::from_word(w).expect("static Pauli words"))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    W,
    Ghz,
    Teleport,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProtocolKind::W => "w",
            ProtocolKind::Ghz => "ghz",
            ProtocolKind::Teleport => "teleport",
        })
    }
}

/// A one-way LOCC allocation protocol over `n` end nodes.
///
/// Joint register layout: central qubits first (`0..central_qubits`), then the `n` end qubits.
/// For W and GHZ the central register is the `n` Bell halves `c_i`. For teleportation it is the
/// `n` locally prepared target qubits followed by the `n` Bell halves.
#[derive(Clone, Debug)]
pub struct AllocationProtocol {
    kind: ProtocolKind,
    n: usize,
    central: CentralOperation,
    central_qubits: usize,
    recovery_table: Vec<Vec<LocalUnitary>>,
    target: Statevector,
}

impl AllocationProtocol {
    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn central(&self) -> &CentralOperation {
        &self.central
    }

    pub fn target(&self) -> &Statevector {
        &self.target
    }

    /// Number of measured central qubits, which is also the outcome width.
    pub fn central_qubits(&self) -> usize {
        self.central_qubits
    }

    /// Peak number of qubits the central site holds coherently before measuring.
    pub fn central_memory_qubits(&self) -> usize {
        self.central_qubits
    }

    pub fn end_memory_qubits(&self) -> usize {
        self.n
    }

    pub fn joint_qubits(&self) -> usize {
        self.central_qubits + self.n
    }

    pub fn end_qubit(&self, node: usize) -> usize {
        self.central_qubits + node
    }

    /// n = 2 W allocation lies outside the `N >= 3` family the construction is stated for.
    pub fn is_extension(&self) -> bool {
        self.kind == ProtocolKind::W && self.n == 2
    }

    /// Distinct messages node `node` can receive.
    pub fn message_count(&self, node: usize) -> usize {
        self.recovery_table[node].len()
    }

    pub fn recovery_table(&self) -> &[Vec<LocalUnitary>] {
        &self.recovery_table
    }

    fn outcome_bit(&self, s: usize, i: usize) -> usize {
        (s >> (self.central_qubits - 1 - i)) & 1
    }

    /// `alpha_i(s)` for an outcome given as its integer value (1-based message index).
    pub fn alpha_of(&self, node: usize, s: usize) -> usize {
        match self.kind {
            ProtocolKind::W => match node {
                0 | 1 => 1 + self.outcome_bit(s, node),
                k => {
                    let kappa = (1..k).map(|l| self.outcome_bit(s, l)).sum::<usize>() % 2;
                    1 + 2 * kappa + self.outcome_bit(s, k)
                }
            },
            ProtocolKind::Ghz => 1 + self.outcome_bit(s, node),
            ProtocolKind::Teleport => {
                let a = self.outcome_bit(s, node);
                let b = self.outcome_bit(s, self.n + node);
                1 + 2 * a + b
            }
        }
    }

    fn check_outcome(&self, s: &Outcome) -> Result<()> {
        if s.len() != self.central_qubits {
            return Err(argument(format!(
                "outcome has {} bits, protocol measures {}",
                s.len(),
                self.central_qubits
            )));
        }
        Ok(())
    }

    /// Message plan: `alpha_i(s)` for every end node.
    pub fn alphas(&self, s: &Outcome) -> Result<Vec<usize>> {
        self.check_outcome(s)?;
        let v = s.as_integer();
        Ok((0..self.n).map(|i| self.alpha_of(i, v)).collect())
    }

    pub fn recovery_for(&self, node: usize, alpha: usize) -> &LocalUnitary {
        &self.recovery_table[node][alpha - 1]
    }

    /// Recovery plan: the single-qubit unitary each end node applies after outcome `s`.
    pub fn recovery_plan(&self, s: &Outcome) -> Result<Vec<&LocalUnitary>> {
        let alphas = self.alphas(s)?;
        Ok(alphas
            .iter()
            .enumerate()
            .map(|(node, &a)| self.recovery_for(node, a))
            .collect())
    }

    /// Replaces one recovery-table entry. Used to build negative-control fixtures.
    pub fn with_recovery_override(
        mut self,
        node: usize,
        alpha: usize,
        unitary: LocalUnitary,
    ) -> Result<Self> {
        let slot = self
            .recovery_table
            .get_mut(node)
            .and_then(|t| t.get_mut(alpha.wrapping_sub(1)))
            .ok_or_else(|| argument(format!("no recovery entry for node {node}, alpha {alpha}")))?;
        *slot = unitary;
        Ok(self)
    }

    /// Dense central unitary on the central register.
    pub fn central_matrix(&self) -> Result<Matrix> {
        self.central.dense_matrix(self.central_qubits)
    }

    /// Shared Bell pairs (and, for teleportation, the locally prepared target) before any
    /// operation.
    pub fn initial_joint_state(&self) -> Result<Statevector> {
        match self.kind {
            ProtocolKind::W | ProtocolKind::Ghz => {
                make_bell_pairs(self.n, &PairLayout::central_first(self.n))
            }
            ProtocolKind::Teleport => {
                let pairs = make_bell_pairs(self.n, &PairLayout::central_first(self.n))?;
                Ok(self.target.tensor(&pairs))
            }
        }
    }
}

/// W allocation: central unitary from the Pauli-sum form, recoveries
/// `(XZ)^{s_1}`, `X^{s_2}`, and `Z^{kappa_k} X^{s_k}` with `kappa_k = s_2 + ... + s_{k-1} mod 2`.
pub fn build_w_protocol(n: usize) -> Result<AllocationProtocol> {
    check_protocol_size(n)?;
    let coeff = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let terms = w_pauli_terms(n).into_iter().map(|p| (coeff, p)).collect();
    let recovery_table = (0..n)
        .map(|node| match node {
            0 => table(&["I", "XZ"]),
            1 => table(&["I", "X"]),
            _ => table(&["I", "X", "Z", "ZX"]),
        })
        .collect();
    Ok(AllocationProtocol {
        kind: ProtocolKind::W,
        n,
        central: CentralOperation::PauliSum(terms),
        central_qubits: n,
        recovery_table,
        target: w_state(n)?,
    })
}

/// GHZ allocation: CNOT fan-out from the first central qubit, then H on it; recoveries
/// `Z^{s_1}` and `X^{s_k}`.
pub fn build_ghz_protocol(n: usize) -> Result<AllocationProtocol> {
    check_protocol_size(n)?;
    let mut gates: Vec<GateOp> = (1..n).map(|k| GateOp::cx(0, k)).collect();
    gates.push(GateOp::h(0));
    let recovery_table = (0..n)
        .map(|node| {
            if node == 0 {
                table(&["I", "Z"])
            } else {
                table(&["I", "X"])
            }
        })
        .collect();
    Ok(AllocationProtocol {
        kind: ProtocolKind::Ghz,
        n,
        central: CentralOperation::Gates(gates),
        central_qubits: n,
        recovery_table,
        target: ghz_state(n)?,
    })
}

/// Teleportation baseline: the central site prepares `target` on `n` fresh qubits `p_i` and
/// teleports `p_i` through Bell pair `(c_i, e_i)`. Outcome bits are `a_1..a_n` (from `p_i`)
/// followed by `b_1..b_n` (from `c_i`); node `i` applies `X^{b_i} Z^{a_i}`.
pub fn build_teleport_protocol(n: usize, target: Statevector) -> Result<AllocationProtocol> {
    if n == 0 {
        return Err(argument("teleportation needs at least one end node"));
    }
    if target.num_qubits() != n {
        return Err(argument(format!(
            "target has {} qubits but the hub has {n} end nodes",
            target.num_qubits()
        )));
    }
    let mut gates: Vec<GateOp> = (0..n).map(|i| GateOp::cx(i, n + i)).collect();
    gates.extend((0..n).map(GateOp::h));
    // alpha = 1 + 2a + b
    let recovery_table = (0..n).map(|_| table(&["I", "X", "Z", "XZ"])).collect();
    Ok(AllocationProtocol {
        kind: ProtocolKind::Teleport,
        n,
        central: CentralOperation::Gates(gates),
        central_qubits: 2 * n,
        recovery_table,
        target,
    })
}

/// Classical and quantum resources consumed by one protocol instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResourceReport {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub bits_per_node: Vec<u32>,
    pub total_bits: u32,
    pub central_memory_qubits: usize,
    pub end_memory_qubits: usize,
    /// Filled in by the verifier.
    pub min_fidelity_over_outcomes: Option<f64>,
    /// Largest `|p(s) - 2^-width|` seen by the verifier.
    pub max_probability_deviation: Option<f64>,
    pub outcomes_checked: usize,
    pub extension: bool,
}

/// `ceil(log2(m))` for `m >= 1`.
pub fn bits_for_messages(max_alpha: usize) -> u32 {
    if max_alpha <= 1 {
        0
    } else {
        usize::BITS - (max_alpha - 1).leading_zeros()
    }
}

/// Classical cost of the fixed protocol `p`: each node's bit count is `ceil(log2(max_s alpha_i(s)))`
/// over all `2^width` outcomes.
pub fn resource_report(p: &AllocationProtocol) -> ResourceReport {
    let mut max_alpha = vec![1usize; p.n];
    for s in 0..(1usize << p.central_qubits) {
        for (node, m) in max_alpha.iter_mut().enumerate() {
            *m = (*m).max(p.alpha_of(node, s));
        }
    }
    let bits_per_node: Vec<u32> = max_alpha.into_iter().map(bits_for_messages).collect();
    ResourceReport {
        protocol: p.kind,
        n: p.n,
        total_bits: bits_per_node.iter().sum(),
        bits_per_node,
        central_memory_qubits: p.central_memory_qubits(),
        end_memory_qubits: p.end_memory_qubits(),
        min_fidelity_over_outcomes: None,
        max_probability_deviation: None,
        outcomes_checked: 0,
        extension: p.is_extension(),
    }
}
