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

//! End-to-end execution of allocation protocols over the hub topology.
//!
//! The joint register puts the central qubits first, so for an outcome `s` the unnormalized end
//! state is the contiguous amplitude slice `[s * 2^n, (s + 1) * 2^n)` of the joint state after
//! the central operation. Dropping the collapsed central qubits is exact because the
//! post-measurement state is a product across the central/end cut.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::allocators::{
    build_ghz_protocol, build_teleport_protocol, build_w_protocol, ghz_state, resource_report,
    w_state, AllocationProtocol, Outcome, ProtocolKind, ResourceReport,
};
use crate::error::{argument, HubError, Result};
use crate::statevec::{make_bell_pairs, GateOp, PairLayout, Statevector, ZERO_PROBABILITY};

/// Largest joint register simulated directly (`2^24` amplitudes).
pub const MAX_JOINT_QUBITS: usize = 24;

/// Fidelity threshold for "exact" allocation.
pub const EXACTNESS_THRESHOLD: f64 = 1.0 - 1e-10;

/// Tolerance on `|p(s) - 2^-width|` for the uniform outcome law.
pub const UNIFORMITY_TOL: f64 = 1e-10;

/// Which qubits of the joint register play which role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HubTopology {
    pub n: usize,
    /// Locally prepared qubits at the central site (teleportation only).
    pub prepared_indices: Vec<usize>,
    /// Central Bell halves `c_i`.
    pub central_indices: Vec<usize>,
    /// End-node qubits `e_i`.
    pub end_indices: Vec<usize>,
}

impl HubTopology {
    pub fn new(
        n: usize,
        prepared_indices: Vec<usize>,
        central_indices: Vec<usize>,
        end_indices: Vec<usize>,
    ) -> Result<Self> {
        if central_indices.len() != n || end_indices.len() != n {
            return Err(argument(
                "topology needs exactly n central and n end indices",
            ));
        }
        if !prepared_indices.is_empty() && prepared_indices.len() != n {
            return Err(argument("prepared register must be empty or hold n qubits"));
        }
        let total = prepared_indices.len() + 2 * n;
        let mut seen = vec![false; total];
        for &q in prepared_indices
            .iter()
            .chain(&central_indices)
            .chain(&end_indices)
        {
            if q >= total || std::mem::replace(&mut seen[q], true) {
                return Err(argument(format!("indices do not partition 0..{total}")));
            }
        }
        Ok(Self {
            n,
            prepared_indices,
            central_indices,
            end_indices,
        })
    }

    pub fn for_protocol(p: &AllocationProtocol) -> Self {
        let n = p.n();
        let prepared = p.central_qubits() - n;
        Self {
            n,
            prepared_indices: (0..prepared).collect(),
            central_indices: (prepared..prepared + n).collect(),
            end_indices: (p.central_qubits()..p.central_qubits() + n).collect(),
        }
    }

    /// `(c_i, e_i)` pairs sharing a Bell state.
    pub fn bell_pairs(&self) -> Vec<(usize, usize)> {
        self.central_indices
            .iter()
            .copied()
            .zip(self.end_indices.iter().copied())
            .collect()
    }
}

/// Sender or receiver of a classical message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Central,
    End(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Message {
    pub from: Party,
    pub to: Party,
    pub alpha: usize,
    pub bit_width: u32,
}

/// Record of one protocol run for a single measurement outcome.
#[derive(Clone, Debug, Serialize)]
pub struct RunTrace {
    pub outcome: Outcome,
    pub probability: f64,
    pub messages: Vec<Message>,
    pub recovery_applied: Vec<String>,
    pub final_end_state: Statevector,
    pub fidelity_to_target: f64,
}

/// End-register state right after the central measurement, before any recovery.
#[derive(Clone, Debug)]
pub struct OutcomeBranch {
    pub outcome: Outcome,
    pub probability: f64,
    pub end_state: Statevector,
}

/// How [`verify_exactness_with`] enumerates outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMethod {
    /// Build the joint Bell state, apply the central operation, slice every outcome.
    JointSimulation,
    /// Take `U^T |s>` as the post-measurement state and `2^-width` as its probability.
    TransposeIdentity,
    /// Teleportation only: check every Bell outcome of every pair separately.
    PairFactorized,
}

fn message_widths(p: &AllocationProtocol) -> Vec<u32> {
    (0..p.n())
        .map(|i| crate::allocators::bits_for_messages(p.message_count(i)))
        .collect()
}

/// Joint register after the central operation, before measurement.
pub fn simulate_central(p: &AllocationProtocol) -> Result<Statevector> {
    if p.joint_qubits() > MAX_JOINT_QUBITS {
        return Err(HubError::Resource(format!(
            "joint register of {} qubits exceeds {MAX_JOINT_QUBITS}",
            p.joint_qubits()
        )));
    }
    let mut joint = p.initial_joint_state()?;
    p.central().apply(&mut joint)?;
    Ok(joint)
}

fn end_slice(joint: &Statevector, s: usize, n: usize) -> &[Complex64] {
    &joint.amps()[s << n..(s + 1) << n]
}

fn slice_probability(amps: &[Complex64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

/// Applies node-local recoveries for outcome `s` and scores the result against the target.
fn recover(
    p: &AllocationProtocol,
    s: usize,
    mut end: Statevector,
) -> Result<(Statevector, Vec<String>, f64)> {
    let mut labels = Vec::with_capacity(p.n());
    for node in 0..p.n() {
        let u = p.recovery_for(node, p.alpha_of(node, s));
        labels.push(u.label().to_string());
        if u.matrix() != &nalgebra::DMatrix::identity(2, 2) {
            end.apply_gate_in_place(&u.gate_on(node))?;
        }
    }
    let fidelity = end.fidelity(p.target())?;
    Ok((end, labels, fidelity))
}

fn build_trace(
    p: &AllocationProtocol,
    widths: &[u32],
    s: usize,
    probability: f64,
    end: Statevector,
) -> Result<RunTrace> {
    let (final_end_state, recovery_applied, fidelity_to_target) = recover(p, s, end)?;
    let messages = (0..p.n())
        .map(|i| Message {
            from: Party::Central,
            to: Party::End(i),
            alpha: p.alpha_of(i, s),
            bit_width: widths[i],
        })
        .collect();
    Ok(RunTrace {
        outcome: Outcome::from_integer(s, p.central_qubits()),
        probability,
        messages,
        recovery_applied,
        final_end_state,
        fidelity_to_target,
    })
}

/// Post-measurement end states for every nonzero-probability outcome, by joint simulation.
pub fn post_measurement_branches(p: &AllocationProtocol) -> Result<Vec<OutcomeBranch>> {
    let joint = simulate_central(p)?;
    let n = p.n();
    (0..1usize << p.central_qubits())
        .filter_map(|s| {
            let slice = end_slice(&joint, s, n);
            let probability = slice_probability(slice);
            (probability > ZERO_PROBABILITY).then(|| {
                Ok(OutcomeBranch {
                    outcome: Outcome::from_integer(s, p.central_qubits()),
                    probability,
                    end_state: Statevector::normalized(slice.to_vec())?,
                })
            })
        })
        .collect()
}

/// One trace per nonzero-probability outcome, ordered by outcome value.
pub fn run_all_outcomes(p: &AllocationProtocol) -> Result<Vec<RunTrace>> {
    let joint = simulate_central(p)?;
    let n = p.n();
    let widths = message_widths(p);
    (0..1usize << p.central_qubits())
        .into_par_iter()
        .filter_map(|s| {
            let slice = end_slice(&joint, s, n);
            let probability = slice_probability(slice);
            (probability > ZERO_PROBABILITY).then(|| {
                let end = Statevector::normalized(slice.to_vec())?;
                build_trace(p, &widths, s, probability, end)
            })
        })
        .collect()
}

/// Result of a sampled run.
#[derive(Clone, Debug, Serialize)]
pub struct SampledRun {
    pub shots: usize,
    pub seed: u64,
    pub traces: Vec<RunTrace>,
    /// Outcome bitstring to count.
    pub histogram: BTreeMap<String, u64>,
}

/// Draws `shots` outcomes from the Born distribution of the central measurement.
pub fn run_sampled(p: &AllocationProtocol, shots: usize, seed: u64) -> Result<SampledRun> {
    if shots == 0 {
        return Err(argument("shots must be at least 1"));
    }
    let joint = simulate_central(p)?;
    let n = p.n();
    let probs: Vec<f64> = (0..1usize << p.central_qubits())
        .map(|s| slice_probability(end_slice(&joint, s, n)))
        .collect();
    let dist = WeightedIndex::new(&probs)
        .map_err(|e| HubError::Validation(format!("outcome distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = message_widths(p);

    let mut cache: HashMap<usize, RunTrace> = HashMap::new();
    let mut histogram = BTreeMap::new();
    let mut traces = Vec::with_capacity(shots);
    for _ in 0..shots {
        let s = dist.sample(&mut rng);
        let trace = match cache.get(&s) {
            Some(t) => t.clone(),
            None => {
                let end = Statevector::normalized(end_slice(&joint, s, n).to_vec())?;
                let t = build_trace(p, &widths, s, probs[s], end)?;
                cache.insert(s, t.clone());
                t
            }
        };
        *histogram.entry(trace.outcome.to_string()).or_insert(0) += 1;
        traces.push(trace);
    }
    Ok(SampledRun {
        shots,
        seed,
        traces,
        histogram,
    })
}

/// Summary of one exhaustive check before it is folded into a [`ResourceReport`].
#[derive(Clone, Copy, Debug)]
struct Sweep {
    min_fidelity: f64,
    max_deviation: f64,
    outcomes: usize,
}

impl Sweep {
    fn merge(self, other: Sweep) -> Sweep {
        Sweep {
            min_fidelity: self.min_fidelity.min(other.min_fidelity),
            max_deviation: self.max_deviation.max(other.max_deviation),
            outcomes: self.outcomes + other.outcomes,
        }
    }

    fn empty() -> Sweep {
        Sweep {
            min_fidelity: 1.0,
            max_deviation: 0.0,
            outcomes: 0,
        }
    }
}

fn score_outcome(
    p: &AllocationProtocol,
    s: usize,
    probability: f64,
    end: Vec<Complex64>,
) -> Result<Sweep> {
    let expected = 0.5f64.powi(p.central_qubits() as i32);
    let deviation = (probability - expected).abs();
    if probability <= ZERO_PROBABILITY {
        return Ok(Sweep {
            min_fidelity: 1.0,
            max_deviation: deviation,
            outcomes: 1,
        });
    }
    let end = Statevector::normalized(end)?;
    let (_, _, fidelity) = recover(p, s, end)?;
    Ok(Sweep {
        min_fidelity: fidelity,
        max_deviation: deviation,
        outcomes: 1,
    })
}

fn sweep_joint(p: &AllocationProtocol) -> Result<Sweep> {
    let joint = simulate_central(p)?;
    let n = p.n();
    (0..1usize << p.central_qubits())
        .into_par_iter()
        .map(|s| {
            let slice = end_slice(&joint, s, n);
            score_outcome(p, s, slice_probability(slice), slice.to_vec())
        })
        .try_reduce(Sweep::empty, |a, b| Ok(a.merge(b)))
}

fn sweep_transpose(p: &AllocationProtocol) -> Result<Sweep> {
    let width = p.central_qubits();
    if p.kind() == ProtocolKind::Teleport || width != p.n() {
        return Err(argument(
            "the transpose identity applies to Bell-pair-only protocols",
        ));
    }
    let probability = 0.5f64.powi(width as i32);
    (0..1usize << width)
        .into_par_iter()
        .map(|s| {
            let image = p.central().transpose_image(s, width)?;
            score_outcome(p, s, probability, image.into_amps())
        })
        .try_reduce(Sweep::empty, |a, b| Ok(a.merge(b)))
}

/// Teleports qubit `node` of the target alone through one Bell pair for each of its four
/// outcomes, corrects, and compares with the target.
fn sweep_pairs(p: &AllocationProtocol) -> Result<Sweep> {
    if p.kind() != ProtocolKind::Teleport {
        return Err(argument(
            "pair-factorized checking only applies to teleportation",
        ));
    }
    let n = p.n();
    let target = p.target();
    let pair = make_bell_pairs(1, &PairLayout::central_first(1))?;
    let start = target.tensor(&pair);
    let (c, e) = (n, n + 1);
    let mut sweep = Sweep::empty();
    for node in 0..n {
        let mut state = start.clone();
        state.apply_gate_in_place(&GateOp::cx(node, c))?;
        state.apply_gate_in_place(&GateOp::h(node))?;
        for a in 0..2usize {
            for b in 0..2usize {
                // Keep amplitudes with (qubit node, c) = (a, b); e takes node's place.
                let mut end = vec![Complex64::new(0.0, 0.0); 1 << n];
                for (idx, amp) in state.amps().iter().enumerate() {
                    let bit = |q: usize| (idx >> (n + 1 - q)) & 1;
                    if bit(node) != a || bit(c) != b {
                        continue;
                    }
                    let mut out = 0usize;
                    for q in 0..n {
                        let v = if q == node { bit(e) } else { bit(q) };
                        out = (out << 1) | v;
                    }
                    end[out] += amp;
                }
                let probability = end.iter().map(|x| x.norm_sqr()).sum::<f64>();
                let deviation = (probability - 0.25).abs();
                let mut end = Statevector::normalized(end)?;
                let u = p.recovery_for(node, 1 + 2 * a + b);
                end.apply_gate_in_place(&u.gate_on(node))?;
                let fidelity = end.fidelity(target)?;
                sweep = sweep.merge(Sweep {
                    min_fidelity: fidelity,
                    max_deviation: deviation,
                    outcomes: 1,
                });
            }
        }
    }
    Ok(sweep)
}

/// Default enumeration strategy: joint simulation when the joint register fits, otherwise the
/// pair-factorized check for teleportation.
pub fn default_method(p: &AllocationProtocol) -> VerificationMethod {
    if p.joint_qubits() <= MAX_JOINT_QUBITS {
        VerificationMethod::JointSimulation
    } else if p.kind() == ProtocolKind::Teleport {
        VerificationMethod::PairFactorized
    } else {
        VerificationMethod::TransposeIdentity
    }
}

/// Runs every outcome and fills fidelity and uniformity into the protocol's resource report.
pub fn verify_exactness(p: &AllocationProtocol) -> Result<ResourceReport> {
    verify_exactness_with(p, default_method(p))
}

pub fn verify_exactness_with(
    p: &AllocationProtocol,
    method: VerificationMethod,
) -> Result<ResourceReport> {
    let sweep = match method {
        VerificationMethod::JointSimulation => sweep_joint(p)?,
        VerificationMethod::TransposeIdentity => sweep_transpose(p)?,
        VerificationMethod::PairFactorized => sweep_pairs(p)?,
    };
    let mut report = resource_report(p);
    report.min_fidelity_over_outcomes = Some(sweep.min_fidelity);
    report.max_probability_deviation = Some(sweep.max_deviation);
    report.outcomes_checked = sweep.outcomes;
    Ok(report)
}

/// Closed-form classical bits for each protocol family.
pub fn expected_total_bits(kind: ProtocolKind, n: usize) -> u32 {
    match kind {
        ProtocolKind::W => 2 * n as u32 - 2,
        ProtocolKind::Ghz => n as u32,
        ProtocolKind::Teleport => 2 * n as u32,
    }
}

/// Closed-form per-node bits: `[1, 1, 2, ..., 2]` for W, all 1 for GHZ, all 2 for teleportation.
pub fn expected_bits_per_node(kind: ProtocolKind, n: usize) -> Vec<u32> {
    (0..n)
        .map(|i| match kind {
            ProtocolKind::W => {
                if i < 2 {
                    1
                } else {
                    2
                }
            }
            ProtocolKind::Ghz => 1,
            ProtocolKind::Teleport => 2,
        })
        .collect()
}

pub fn expected_central_qubits(kind: ProtocolKind, n: usize) -> usize {
    match kind {
        ProtocolKind::W | ProtocolKind::Ghz => n,
        ProtocolKind::Teleport => 2 * n,
    }
}

/// True when a verified report matches its family's closed forms and is exact.
pub fn report_passes(report: &ResourceReport) -> bool {
    let kind = report.protocol;
    report.total_bits == expected_total_bits(kind, report.n)
        && report.bits_per_node == expected_bits_per_node(kind, report.n)
        && report.central_memory_qubits == expected_central_qubits(kind, report.n)
        && report
            .min_fidelity_over_outcomes
            .is_some_and(|f| f >= EXACTNESS_THRESHOLD)
        && report
            .max_probability_deviation
            .is_some_and(|d| d < UNIFORMITY_TOL)
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub expected_total_bits: u32,
    pub expected_central_qubits: usize,
    pub report: ResourceReport,
    pub matches_closed_form: bool,
}

/// Resource table: W, GHZ, and teleportation of each target state.
pub fn compare_resources(n: usize) -> Result<Vec<ComparisonRow>> {
    if !(2..=12).contains(&n) {
        return Err(argument(format!("compare supports 2 <= n <= 12, got {n}")));
    }
    let protocols = [
        ("W", build_w_protocol(n)?),
        ("GHZ", build_ghz_protocol(n)?),
        ("teleport(W)", build_teleport_protocol(n, w_state(n)?)?),
        ("teleport(GHZ)", build_teleport_protocol(n, ghz_state(n)?)?),
    ];
    protocols
        .into_iter()
        .map(|(label, p)| {
            let report = verify_exactness(&p)?;
            Ok(ComparisonRow {
                label: label.to_string(),
                expected_total_bits: expected_total_bits(p.kind(), n),
                expected_central_qubits: expected_central_qubits(p.kind(), n),
                matches_closed_form: report_passes(&report),
                report,
            })
        })
        .collect()
}
