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

//! Gate-level realizations of the central unitaries, the LCU block-encoding of `W_N / sqrt(N)`,
//! and the `gatelist-v1` text format.

use std::fmt::Write as _;
use std::ops::Range;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::allocators::build_w_unitary;
use crate::error::{argument, HubError, Result};
use crate::statevec::{make_basis_state, Control, GateKind, GateOp, Matrix, Statevector};

/// Largest register [`circuit_to_matrix`] will expand densely.
pub const MAX_MATRIX_QUBITS: usize = 14;

/// An ordered list of gates on a fixed register.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    name: String,
    ops: Vec<GateOp>,
    ancillas: Vec<Range<usize>>,
}

impl Circuit {
    pub fn new(num_qubits: usize, name: impl Into<String>) -> Self {
        Self {
            num_qubits,
            name: name.into(),
            ops: Vec::new(),
            ancillas: Vec::new(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn ancillas(&self) -> &[Range<usize>] {
        &self.ancillas
    }

    pub fn push(&mut self, op: GateOp) -> Result<()> {
        op.validate_for(self.num_qubits)?;
        self.ops.push(op);
        Ok(())
    }

    pub fn extend(&mut self, ops: impl IntoIterator<Item = GateOp>) -> Result<()> {
        ops.into_iter().try_for_each(|op| self.push(op))
    }

    pub fn mark_ancillas(&mut self, range: Range<usize>) -> Result<()> {
        if range.end > self.num_qubits || range.start >= range.end {
            return Err(argument(format!("bad ancilla range {range:?}")));
        }
        self.ancillas.push(range);
        Ok(())
    }

    /// Reversed sequence of adjoint gates.
    pub fn adjoint(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            name: format!("{}^dagger", self.name),
            ops: self.ops.iter().rev().map(GateOp::adjoint).collect(),
            ancillas: self.ancillas.clone(),
        }
    }

    pub fn apply_to(&self, state: &mut Statevector) -> Result<()> {
        if state.num_qubits() != self.num_qubits {
            return Err(argument(format!(
                "circuit has {} qubits, state has {}",
                self.num_qubits,
                state.num_qubits()
            )));
        }
        self.ops
            .iter()
            .try_for_each(|op| state.apply_gate_in_place(op))
    }

    pub fn controlled_op_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| !op.controls().is_empty())
            .count()
    }
}

/// Dense unitary of `c`, gates applied in list order.
pub fn circuit_to_matrix(c: &Circuit) -> Result<Matrix> {
    if c.num_qubits > MAX_MATRIX_QUBITS {
        return Err(HubError::Resource(format!(
            "{} qubits exceeds the dense limit of {MAX_MATRIX_QUBITS}",
            c.num_qubits
        )));
    }
    let dim = 1usize << c.num_qubits;
    let mut out = Matrix::zeros(dim, dim);
    for col in 0..dim {
        let mut state = make_basis_state(c.num_qubits, col)?;
        c.apply_to(&mut state)?;
        for (row, a) in state.amps().iter().enumerate() {
            out[(row, col)] = *a;
        }
    }
    Ok(out)
}

/// `max |a - e^{i theta} b|` for the phase `theta = arg tr(b^dagger a)`.
pub fn phase_aligned_deviation(a: &Matrix, b: &Matrix) -> f64 {
    let overlap: Complex64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - phase * y).norm())
        .fold(0.0, f64::max)
}

/// Rotation angle `2 arccos(x)` of the `R(x) = Ry(2 arccos x) Z` gate.
fn split_angle(x: f64) -> f64 {
    2.0 * x.acos()
}

fn w_ops(qubits: &[usize]) -> Result<Vec<GateOp>> {
    let n = qubits.len();
    if n == 2 {
        return Ok(vec![GateOp::unitary(qubits.to_vec(), build_w_unitary(2)?)?]);
    }
    let head = qubits[0];
    let sub = w_ops(&qubits[1..])?;
    let mut ops: Vec<GateOp> = sub.iter().cloned().map(|g| g.controlled_by(head)).collect();
    ops.push(GateOp::ryz(
        head,
        split_angle(((n - 1) as f64 / n as f64).sqrt()),
    ));
    ops.extend(sub.into_iter().map(|g| g.anti_controlled_by(head)));
    Ok(ops)
}

/// `W_N` from `W_{N-1}` controlled on qubit 0, the rotation `A^N` on qubit 0, then `W_{N-1}`
/// anti-controlled on qubit 0. The recursion ends at the two-qubit block `W_2`.
pub fn w_circuit_recursive(n: usize) -> Result<Circuit> {
    if n < 2 {
        return Err(argument(format!("W circuit needs n >= 2, got {n}")));
    }
    let mut c = Circuit::new(n, format!("w{n}-recursive"));
    c.extend(w_ops(&(0..n).collect::<Vec<_>>())?)?;
    Ok(c)
}

/// Three-qubit W unitary as a ladder of doubly-controlled X gates and `R(x)` rotations.
pub fn w_circuit_n3_ladder() -> Circuit {
    let half = split_angle(0.5f64.sqrt());
    let two_thirds = split_angle((2.0f64 / 3.0).sqrt());
    let mut c = Circuit::new(3, "w3-ladder");
    c.extend([
        GateOp::x(2).controlled_by(0).controlled_by(1),
        GateOp::ryz(1, half).controlled_by(0),
        GateOp::x(2).controlled_by(0).anti_controlled_by(1),
        GateOp::ryz(0, two_thirds),
        GateOp::x(2).anti_controlled_by(0).controlled_by(1),
        GateOp::ryz(1, half).anti_controlled_by(0),
        GateOp::x(2).anti_controlled_by(0).anti_controlled_by(1),
    ])
    .expect("fixed three-qubit ladder");
    c
}

/// CNOT fan-out from qubit 0 followed by H on qubit 0.
pub fn ghz_circuit(n: usize) -> Result<Circuit> {
    if n < 2 {
        return Err(argument(format!("GHZ circuit needs n >= 2, got {n}")));
    }
    let mut c = Circuit::new(n, format!("ghz{n}"));
    c.extend((1..n).map(|k| GateOp::cx(0, k)))?;
    c.push(GateOp::h(0))?;
    Ok(c)
}

/// Three-way comparison of registers `a` and `b` (most significant bit first) into
/// `(greater, less)`: `a == b` leaves both flags, `a > b` flips `greater`, `a < b` flips `less`.
///
/// `b` is temporarily overwritten with `a XOR b` and restored, so no extra ancillas are used.
pub fn comparator_ops(a: &[usize], b: &[usize], greater: usize, less: usize) -> Vec<GateOp> {
    assert_eq!(a.len(), b.len(), "comparator registers differ in width");
    let xor: Vec<GateOp> = a.iter().zip(b).map(|(&x, &y)| GateOp::cx(x, y)).collect();
    let mut ops = xor.clone();
    for i in 0..a.len() {
        let equal_above: Vec<Control> = b[..i].iter().map(|&q| Control::off(q)).collect();
        ops.push(
            GateOp::x(greater)
                .with_controls(equal_above.iter().copied())
                .controlled_by(b[i])
                .controlled_by(a[i]),
        );
        ops.push(
            GateOp::x(less)
                .with_controls(equal_above)
                .controlled_by(b[i])
                .anti_controlled_by(a[i]),
        );
    }
    ops.extend(xor.into_iter().rev());
    ops
}

/// Comparator on `a = q0..q(n-1)`, `b = qn..q(2n-1)` and flags `q(2n)` (a > b), `q(2n+1)` (a < b).
pub fn comparator_circuit(n_bits: usize) -> Result<Circuit> {
    if n_bits == 0 {
        return Err(argument("comparator needs at least one bit"));
    }
    let a: Vec<usize> = (0..n_bits).collect();
    let b: Vec<usize> = (n_bits..2 * n_bits).collect();
    let mut c = Circuit::new(2 * n_bits + 2, format!("comparator{n_bits}"));
    c.extend(comparator_ops(&a, &b, 2 * n_bits, 2 * n_bits + 1))?;
    c.mark_ancillas(2 * n_bits..2 * n_bits + 2)?;
    Ok(c)
}

/// The flag-selected Pauli on one system qubit: flags `00` give X, `01` give I, `10` give Z.
///
/// Two two-qubit gates: X anti-controlled on `less`, then `Z.X` controlled on `greater`.
pub fn flag_select_ops(system: usize, greater: usize, less: usize) -> Vec<GateOp> {
    let zx = crate::allocators::LocalUnitary::from_word("ZX").expect("static word");
    vec![
        GateOp::x(system).anti_controlled_by(less),
        GateOp::unitary(vec![system], zx.matrix().clone())
            .expect("ZX is unitary")
            .controlled_by(greater),
    ]
}

/// `|k> -> |k + 1 mod 2^n>` on `register` (most significant bit first).
pub fn increment_ops(register: &[usize]) -> Vec<GateOp> {
    (0..register.len())
        .map(|i| {
            let lower = register[i + 1..].iter().map(|&q| Control::on(q));
            GateOp::x(register[i]).with_controls(lower)
        })
        .collect()
}

/// Prepares `sum_s sqrt(weights[s]) |s>` (weights normalized internally) from `|0...0>` with
/// multiplexed Ry rotations, one binary level per qubit.
pub fn real_state_preparation_ops(register: &[usize], weights: &[f64]) -> Result<Vec<GateOp>> {
    let n = register.len();
    if weights.len() != 1 << n {
        return Err(argument("weights must have 2^n entries"));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(argument("weights must be non-negative"));
    }
    let mass = |prefix: usize, len: usize| -> f64 {
        let span = 1usize << (n - len);
        weights[prefix * span..(prefix + 1) * span].iter().sum()
    };
    let mut ops = Vec::new();
    for level in 0..n {
        for prefix in 0..(1usize << level) {
            let parent = mass(prefix, level);
            if parent <= 0.0 {
                continue;
            }
            let p_one = mass((prefix << 1) | 1, level + 1) / parent;
            let theta = 2.0 * p_one.clamp(0.0, 1.0).sqrt().asin();
            if theta == 0.0 {
                continue;
            }
            let controls = (0..level).map(|j| Control {
                qubit: register[j],
                on_one: (prefix >> (level - 1 - j)) & 1 == 1,
            });
            ops.push(GateOp::ry(register[level], theta).with_controls(controls));
        }
    }
    Ok(ops)
}

/// `D_N`: `|0> -> (1/sqrt(N)) sum_{s<N} |s>` on a register of `ceil(log2 N)` qubits.
pub fn uniform_preparation_ops(register: &[usize], count: usize) -> Result<Vec<GateOp>> {
    if count == 0 || count > 1 << register.len() {
        return Err(argument(format!("cannot spread over {count} values")));
    }
    let weights: Vec<f64> = (0..1usize << register.len())
        .map(|s| if s < count { 1.0 } else { 0.0 })
        .collect();
    real_state_preparation_ops(register, &weights)
}

pub fn index_register_width(n_end: usize) -> usize {
    (usize::BITS - (n_end - 1).leading_zeros()) as usize
}

/// Evidence that a circuit block-encodes `W_N / sqrt(N)`.
#[derive(Clone, Debug, Serialize)]
pub struct BlockEncodingCertificate {
    pub n_system: usize,
    pub n_ancilla: usize,
    /// Spectral norm of the extracted block.
    pub subnormalization: f64,
    pub expected_subnormalization: f64,
    /// Largest entrywise deviation of the block from `W_N / sqrt(N)`.
    pub max_block_deviation: f64,
    /// Singular values of the block, descending.
    pub singular_values: Vec<f64>,
    /// Largest amplitude left on the counter or flag registers for any system input.
    pub ancilla_leakage: f64,
}

impl BlockEncodingCertificate {
    pub fn max_singular_value_error(&self) -> f64 {
        self.singular_values
            .iter()
            .map(|s| (s - self.expected_subnormalization).abs())
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_block_deviation < tol && self.max_singular_value_error() < tol
    }
}

/// Register layout of the LCU circuit: index, counter, flags, system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LcuLayout {
    pub index: Vec<usize>,
    pub counter: Vec<usize>,
    pub greater: usize,
    pub less: usize,
    pub system: Vec<usize>,
}

impl LcuLayout {
    pub fn new(n_end: usize) -> Self {
        let w = index_register_width(n_end);
        Self {
            index: (0..w).collect(),
            counter: (w..2 * w).collect(),
            greater: 2 * w,
            less: 2 * w + 1,
            system: (2 * w + 2..2 * w + 2 + n_end).collect(),
        }
    }

    pub fn ancilla_count(&self) -> usize {
        self.system[0]
    }

    pub fn num_qubits(&self) -> usize {
        self.ancilla_count() + self.system.len()
    }
}

/// `D_N`, then for each system qubit `k` the comparator/select/uncompare sandwich with the
/// counter stepped `|k> -> |k+1>`, the counter reset, and `D_N^dagger`.
pub fn lcu_circuit(n_end: usize) -> Result<Circuit> {
    if !(2..=6).contains(&n_end) {
        return Err(argument(format!(
            "block-encoding supports 2 <= n <= 6, got {n_end}"
        )));
    }
    let layout = LcuLayout::new(n_end);
    let mut c = Circuit::new(layout.num_qubits(), format!("w{n_end}-lcu"));
    let prepare = uniform_preparation_ops(&layout.index, n_end)?;
    let compare = comparator_ops(&layout.index, &layout.counter, layout.greater, layout.less);
    let uncompare: Vec<GateOp> = compare.iter().rev().map(GateOp::adjoint).collect();
    let step = increment_ops(&layout.counter);

    c.extend(prepare.iter().cloned())?;
    for k in 0..n_end {
        c.extend(compare.iter().cloned())?;
        c.extend(flag_select_ops(
            layout.system[k],
            layout.greater,
            layout.less,
        ))?;
        c.extend(uncompare.iter().cloned())?;
        if k + 1 < n_end {
            c.extend(step.iter().cloned())?;
        }
    }
    for _ in 0..n_end - 1 {
        c.extend(step.iter().rev().map(GateOp::adjoint))?;
    }
    c.extend(prepare.iter().rev().map(GateOp::adjoint))?;
    c.mark_ancillas(0..layout.ancilla_count())?;
    Ok(c)
}

/// Builds the LCU circuit and certifies its all-zero-ancilla block against `W_N / sqrt(N)`.
///
/// The block is read off column by column by simulating the circuit on `|0_anc>|j>`, so the
/// full unitary is never formed.
pub fn lcu_block_encoding(n_end: usize) -> Result<(Circuit, BlockEncodingCertificate)> {
    let circuit = lcu_circuit(n_end)?;
    let layout = LcuLayout::new(n_end);
    let sys_dim = 1usize << n_end;
    let mut block = Matrix::zeros(sys_dim, sys_dim);
    let mut leakage: f64 = 0.0;
    let index_bits = layout.index.len();
    for col in 0..sys_dim {
        let mut state = make_basis_state(circuit.num_qubits(), col)?;
        circuit.apply_to(&mut state)?;
        for (idx, a) in state.amps().iter().enumerate() {
            let ancilla = idx >> n_end;
            if ancilla == 0 {
                block[(idx, col)] = *a;
            }
            // Counter and flags are the low `index_bits + 2` bits of the ancilla value.
            let clean_mask = (1usize << (index_bits + 2)) - 1;
            if ancilla & clean_mask != 0 {
                leakage = leakage.max(a.norm());
            }
        }
    }
    let scale = Complex64::new(1.0 / (n_end as f64).sqrt(), 0.0);
    let expected = build_w_unitary(n_end)? * scale;
    let max_block_deviation = block
        .iter()
        .zip(expected.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let mut singular_values: Vec<f64> = block.clone().singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let certificate = BlockEncodingCertificate {
        n_system: n_end,
        n_ancilla: layout.ancilla_count(),
        subnormalization: singular_values[0],
        expected_subnormalization: scale.re,
        max_block_deviation,
        singular_values,
        ancilla_leakage: leakage,
    };
    Ok((circuit, certificate))
}

/// Supported text formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CircuitFormat {
    GatelistV1,
}

impl FromStr for CircuitFormat {
    type Err = HubError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gatelist-v1" => Ok(CircuitFormat::GatelistV1),
            other => Err(argument(format!("unsupported circuit format {other:?}"))),
        }
    }
}

fn base_name(kind: &GateKind) -> &'static str {
    match kind {
        GateKind::I => "i",
        GateKind::X => "x",
        GateKind::Y => "y",
        GateKind::Z => "z",
        GateKind::H => "h",
        GateKind::Ry(_) => "ry",
        GateKind::RyZ(_) => "ryz",
        GateKind::Unitary(_) => "unitary",
    }
}

fn params(kind: &GateKind) -> Vec<f64> {
    match kind {
        GateKind::Ry(t) | GateKind::RyZ(t) => vec![*t],
        GateKind::Unitary(m) => {
            let dim = m.nrows();
            (0..dim)
                .flat_map(|r| (0..dim).map(move |c| (r, c)))
                .flat_map(|(r, c)| [m[(r, c)].re, m[(r, c)].im])
                .collect()
        }
        _ => Vec::new(),
    }
}

/// Shortest decimal that parses back to the same `f64` (at most 17 significant digits).
fn fmt_param(x: f64) -> String {
    format!("{x:?}")
}

/// Serializes `c` as line-oriented text.
///
/// ```text
/// # gatelist-v1
/// qubits 3
/// name w3-ladder
/// ccx q0,q1,q2
/// cryz(1.5707963267948968) q0,q1
/// ```
///
/// Each control adds a prefix letter (`c` filled, `o` open) and its qubit is listed before the
/// targets, in the same order.
pub fn export_circuit(c: &Circuit, format: CircuitFormat) -> Result<String> {
    let CircuitFormat::GatelistV1 = format;
    let mut out = String::new();
    writeln!(out, "# gatelist-v1").unwrap();
    writeln!(out, "qubits {}", c.num_qubits).unwrap();
    writeln!(out, "name {}", c.name).unwrap();
    for r in &c.ancillas {
        writeln!(out, "ancilla {} {}", r.start, r.end).unwrap();
    }
    for op in &c.ops {
        let prefix: String = op
            .controls()
            .iter()
            .map(|c| if c.on_one { 'c' } else { 'o' })
            .collect();
        let p = params(op.kind());
        let p = if p.is_empty() {
            String::new()
        } else {
            format!(
                "({})",
                p.iter()
                    .map(|&x| fmt_param(x))
                    .collect::<Vec<_>>()
                    .join(",")
            )
        };
        let qubits: Vec<String> = op.qubits().map(|q| format!("q{q}")).collect();
        writeln!(
            out,
            "{prefix}{}{p} {}",
            base_name(op.kind()),
            qubits.join(",")
        )
        .unwrap();
    }
    Ok(out)
}

fn parse_error(line: usize, message: impl Into<String>) -> HubError {
    HubError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_op(line_no: usize, line: &str) -> Result<GateOp> {
    let (head, qubit_text) = line
        .split_once(char::is_whitespace)
        .ok_or_else(|| parse_error(line_no, "expected `gate qubits`"))?;
    let (name, params) = match head.split_once('(') {
        Some((name, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| parse_error(line_no, "unterminated parameter list"))?;
            let values = inner
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_error(line_no, format!("bad parameter {v:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            (name, values)
        }
        None => (head, Vec::new()),
    };
    let base_start = name.find(|ch| ch != 'c' && ch != 'o').unwrap_or(name.len());
    let (prefix, base) = name.split_at(base_start);
    let qubits = qubit_text
        .trim()
        .split(',')
        .map(|q| {
            q.trim()
                .strip_prefix('q')
                .and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| parse_error(line_no, format!("bad qubit {q:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if qubits.len() <= prefix.len() {
        return Err(parse_error(line_no, "gate has no target qubits"));
    }
    let (control_qubits, targets) = qubits.split_at(prefix.len());
    let expect_params = |count: usize| -> Result<()> {
        if params.len() != count {
            return Err(parse_error(
                line_no,
                format!("{base} takes {count} parameters, got {}", params.len()),
            ));
        }
        Ok(())
    };
    let kind = match base {
        "i" | "x" | "y" | "z" | "h" => {
            expect_params(0)?;
            match base {
                "i" => GateKind::I,
                "x" => GateKind::X,
                "y" => GateKind::Y,
                "z" => GateKind::Z,
                _ => GateKind::H,
            }
        }
        "ry" => {
            expect_params(1)?;
            GateKind::Ry(params[0])
        }
        "ryz" => {
            expect_params(1)?;
            GateKind::RyZ(params[0])
        }
        "unitary" => {
            let dim = 1usize << targets.len();
            expect_params(2 * dim * dim)?;
            let entries = params.chunks(2).map(|p| Complex64::new(p[0], p[1]));
            GateKind::Unitary(Matrix::from_row_iterator(dim, dim, entries))
        }
        other => return Err(parse_error(line_no, format!("unknown gate {other:?}"))),
    };
    let controls = prefix
        .chars()
        .zip(control_qubits)
        .map(|(ch, &qubit)| Control {
            qubit,
            on_one: ch == 'c',
        });
    let op =
        GateOp::new(kind, targets.to_vec()).map_err(|e| parse_error(line_no, e.to_string()))?;
    Ok(op.with_controls(controls))
}

/// Parses `gatelist-v1` text produced by [`export_circuit`].
pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut circuit: Option<Circuit> = None;
    let mut name = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("qubits ") {
            let n = rest
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_error(line_no, format!("bad qubit count: {e}")))?;
            if circuit.is_some() {
                return Err(parse_error(line_no, "duplicate `qubits` header"));
            }
            circuit = Some(Circuit::new(n, std::mem::take(&mut name)));
            continue;
        }
        if let Some(rest) = line.strip_prefix("name ") {
            match circuit.as_mut() {
                Some(c) => c.name = rest.trim().to_string(),
                None => name = rest.trim().to_string(),
            }
            continue;
        }
        let c = circuit
            .as_mut()
            .ok_or_else(|| parse_error(line_no, "`qubits` header must come before gates"))?;
        if let Some(rest) = line.strip_prefix("ancilla ") {
            let bounds: Vec<usize> = rest
                .split_whitespace()
                .map(|v| {
                    v.parse::<usize>()
                        .map_err(|e| parse_error(line_no, e.to_string()))
                })
                .collect::<Result<_>>()?;
            if bounds.len() != 2 {
                return Err(parse_error(line_no, "ancilla takes `start end`"));
            }
            c.mark_ancillas(bounds[0]..bounds[1])
                .map_err(|e| parse_error(line_no, e.to_string()))?;
            continue;
        }
        let op = parse_op(line_no, line)?;
        c.push(op)
            .map_err(|e| parse_error(line_no, e.to_string()))?;
    }
    circuit.ok_or_else(|| parse_error(0, "missing `qubits` header"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::{is_unitary, max_abs_diff, Pauli};

    #[test]
    fn empty_and_single_gate_matrices() {
        let c = Circuit::new(2, "empty");
        assert!(max_abs_diff(&circuit_to_matrix(&c).unwrap(), &Matrix::identity(4, 4)) < 1e-15);
        let mut h = Circuit::new(1, "h");
        h.push(GateOp::h(0)).unwrap();
        assert!(max_abs_diff(&circuit_to_matrix(&h).unwrap(), &GateKind::H.matrix()) < 1e-15);
        assert!(matches!(
            circuit_to_matrix(&Circuit::new(15, "big")),
            Err(HubError::Resource(_))
        ));
    }

    #[test]
    fn small_w_circuits() {
        let w2 = circuit_to_matrix(&w_circuit_recursive(2).unwrap()).unwrap();
        assert!(max_abs_diff(&w2, &build_w_unitary(2).unwrap()) < 1e-12);
        let w3 = circuit_to_matrix(&w_circuit_recursive(3).unwrap()).unwrap();
        assert!(phase_aligned_deviation(&w3, &build_w_unitary(3).unwrap()) < 1e-9);
        assert!(w_circuit_recursive(1).is_err());
    }

    #[test]
    fn ladder_shape_and_action() {
        let ladder = w_circuit_n3_ladder();
        assert_eq!(ladder.ops().len(), 7);
        assert_eq!(ladder.controlled_op_count(), 6);
        let rotations: Vec<f64> = ladder
            .ops()
            .iter()
            .filter_map(|op| match op.kind() {
                GateKind::RyZ(t) => Some(*t),
                _ => None,
            })
            .collect();
        assert_eq!(rotations.len(), 3);
        let mut state = make_basis_state(3, 0).unwrap();
        ladder.apply_to(&mut state).unwrap();
        let w3 = crate::allocators::w_state(3).unwrap();
        assert!(state.equal_up_to_global_phase(&w3, 1e-9).unwrap());
    }

    #[test]
    fn ghz_circuit_matches_product_form() {
        let m = circuit_to_matrix(&ghz_circuit(2).unwrap()).unwrap();
        let h_i = GateKind::H.matrix().kronecker(&Pauli::I.matrix());
        let cnot = GateOp::cx(0, 1).embedded_matrix(2).unwrap();
        assert!(max_abs_diff(&m, &(h_i * cnot)) < 1e-12);
        assert!(ghz_circuit(1).is_err());
    }

    #[test]
    fn comparator_examples() {
        let c = comparator_circuit(2).unwrap();
        // layout a(2) b(2) greater less
        let flags = |a: usize, b: usize| {
            let mut s = make_basis_state(6, (a << 4) | (b << 2)).unwrap();
            c.apply_to(&mut s).unwrap();
            let idx = s.amps().iter().position(|x| x.norm() > 0.5).unwrap();
            assert_eq!(idx >> 2, (a << 2) | b, "operands disturbed");
            idx & 0b11
        };
        assert_eq!(flags(1, 1), 0b00);
        assert_eq!(flags(0, 1), 0b01);
        assert_eq!(flags(3, 2), 0b10);
        assert!(comparator_circuit(0).is_err());
    }

    #[test]
    fn flag_select_truth_table() {
        // qubits: greater, less, system
        let ops = flag_select_ops(2, 0, 1);
        let mut c = Circuit::new(3, "q");
        c.extend(ops).unwrap();
        assert_eq!(c.ops().len(), 2);
        let m = circuit_to_matrix(&c).unwrap();
        let block = |flags: usize| m.view((flags * 2, flags * 2), (2, 2)).into_owned();
        assert!(max_abs_diff(&block(0b00), &Pauli::X.matrix()) < 1e-15);
        assert!(max_abs_diff(&block(0b01), &Pauli::I.matrix()) < 1e-15);
        assert!(max_abs_diff(&block(0b10), &Pauli::Z.matrix()) < 1e-15);
    }

    #[test]
    fn increment_wraps() {
        let reg = [0, 1, 2];
        let mut c = Circuit::new(3, "inc");
        c.extend(increment_ops(&reg)).unwrap();
        for k in 0..8 {
            let mut s = make_basis_state(3, k).unwrap();
            c.apply_to(&mut s).unwrap();
            assert!((s.amps()[(k + 1) % 8].re - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_preparation_amplitudes() {
        for count in 1..=8usize {
            let width = index_register_width(count.max(2));
            let reg: Vec<usize> = (0..width).collect();
            let mut c = Circuit::new(width, "d");
            c.extend(uniform_preparation_ops(&reg, count).unwrap())
                .unwrap();
            let mut s = make_basis_state(width, 0).unwrap();
            c.apply_to(&mut s).unwrap();
            for (i, a) in s.amps().iter().enumerate() {
                let want = if i < count {
                    1.0 / (count as f64).sqrt()
                } else {
                    0.0
                };
                assert!(
                    (a.re - want).abs() < 1e-12 && a.im.abs() < 1e-12,
                    "count {count} idx {i}"
                );
            }
        }
        assert!(uniform_preparation_ops(&[0], 3).is_err());
    }

    #[test]
    fn lcu_small_certificates() {
        let (c, cert) = lcu_block_encoding(2).unwrap();
        assert_eq!(cert.n_ancilla, 4);
        assert_eq!(c.num_qubits(), 6);
        assert!(cert.max_block_deviation < 1e-9);
        assert!(cert
            .singular_values
            .iter()
            .all(|s| (s - 0.5f64.sqrt()).abs() < 1e-9));
        assert!(cert.ancilla_leakage < 1e-9);
        let (_, cert3) = lcu_block_encoding(3).unwrap();
        assert!((cert3.subnormalization - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        assert!(cert3.passes(1e-9));
        assert!(lcu_block_encoding(1).is_err());
        assert!(lcu_block_encoding(7).is_err());
    }

    #[test]
    fn export_lines() {
        let mut c = Circuit::new(2, "demo");
        c.push(GateOp::h(0)).unwrap();
        c.push(GateOp::ry(1, std::f64::consts::FRAC_PI_2)).unwrap();
        c.push(GateOp::x(1).anti_controlled_by(0)).unwrap();
        let text = export_circuit(&c, CircuitFormat::GatelistV1).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "qubits 2");
        assert_eq!(lines[2], "name demo");
        assert_eq!(lines[3], "h q0");
        assert_eq!(lines[4], "ry(1.5707963267948966) q1");
        assert_eq!(lines[5], "ox q0,q1");
        assert_eq!(parse_circuit(&text).unwrap(), c);
        assert!("qasm".parse::<CircuitFormat>().is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_circuit("qubits 2\nfoo q0\n").unwrap_err();
        assert!(matches!(err, HubError::Parse { line: 2, .. }));
        assert!(matches!(
            parse_circuit("h q0\n"),
            Err(HubError::Parse { line: 1, .. })
        ));
        assert!(parse_circuit("qubits 1\nx q3\n").is_err());
        assert!(parse_circuit("qubits 1\nry q0\n").is_err());
        assert!(parse_circuit("").is_err());
    }

    #[test]
    fn circuits_are_unitary() {
        for c in [
            w_circuit_recursive(4).unwrap(),
            w_circuit_n3_ladder(),
            ghz_circuit(4).unwrap(),
            comparator_circuit(2).unwrap(),
        ] {
            assert!(
                is_unitary(&circuit_to_matrix(&c).unwrap(), 1e-9),
                "{}",
                c.name()
            );
        }
    }
}
