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

use hubcast::statevec::{kron, make_basis_state, Control, GateOp, Matrix, Pauli, Statevector};
use num_complex::Complex64;
use proptest::prelude::*;

fn state(max_qubits: usize) -> impl Strategy<Value = Statevector> {
    (1..=max_qubits).prop_flat_map(|n| {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n)
            .prop_filter("nonzero", |v| {
                v.iter().any(|(r, i)| r.abs() + i.abs() > 1e-3)
            })
            .prop_map(|v| {
                Statevector::normalized(v.into_iter().map(|(r, i)| Complex64::new(r, i)).collect())
                    .unwrap()
            })
    })
}

fn gate(n: usize) -> impl Strategy<Value = GateOp> {
    let target = 0..n;
    let kind = 0..6u8;
    let angle = -6.3f64..6.3;
    let controls = prop::collection::vec((0..n, any::<bool>()), 0..n);
    (target, kind, angle, controls).prop_map(move |(t, k, theta, controls)| {
        let base = match k {
            0 => GateOp::h(t),
            1 => GateOp::x(t),
            2 => GateOp::y(t),
            3 => GateOp::z(t),
            4 => GateOp::ry(t, theta),
            _ => GateOp::ryz(t, theta),
        };
        let mut seen = vec![t];
        let controls: Vec<Control> = controls
            .into_iter()
            .filter(|(q, _)| {
                let fresh = !seen.contains(q);
                seen.push(*q);
                fresh
            })
            .map(|(qubit, on_one)| Control { qubit, on_one })
            .collect();
        base.with_controls(controls)
    })
}

fn projector(n: usize, qubits: &[usize], outcome: usize) -> Matrix {
    let one = Complex64::new(1.0, 0.0);
    (0..n).fold(Matrix::identity(1, 1), |acc, q| {
        let factor = match qubits.iter().position(|&m| m == q) {
            Some(pos) => {
                let bit = (outcome >> (qubits.len() - 1 - pos)) & 1;
                let mut p = Matrix::zeros(2, 2);
                p[(bit, bit)] = one;
                p
            }
            None => Matrix::identity(2, 2),
        };
        kron(&acc, &factor)
    })
}

proptest! {
    #[test]
    fn gates_preserve_norm(
        (psi, gates) in state(5).prop_flat_map(|psi| {
            let n = psi.num_qubits();
            (Just(psi), prop::collection::vec(gate(n), 1..8))
        })
    ) {
        let mut cur = psi;
        for g in &gates {
            cur = cur.apply_gate(g).unwrap();
            prop_assert!((cur.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn measurement_is_complete(psi in state(5), mask in 1u32..32) {
        let n = psi.num_qubits();
        let qubits: Vec<usize> = (0..n).filter(|q| mask >> q & 1 == 1).collect();
        prop_assume!(!qubits.is_empty());
        let branches = psi.measure_subset_all_outcomes(&qubits).unwrap();
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        for b in &branches {
            prop_assert!((b.state.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn born_matches_projector(psi in state(4), mask in 1u32..16) {
        let n = psi.num_qubits();
        let qubits: Vec<usize> = (0..n).filter(|q| mask >> q & 1 == 1).collect();
        prop_assume!(!qubits.is_empty());
        let branches = psi.measure_subset_all_outcomes(&qubits).unwrap();
        let v = nalgebra::DVector::from_column_slice(psi.amps());
        for s in 0..1usize << qubits.len() {
            let projected = projector(n, &qubits, s) * &v;
            let direct = projected.norm_squared();
            let reported = branches
                .iter()
                .find(|b| b.outcome.as_integer() == s)
                .map_or(0.0, |b| b.probability);
            prop_assert!((direct - reported).abs() < 1e-12, "s={} direct={} reported={}", s, direct, reported);
        }
    }

    #[test]
    fn partial_trace_of_product(a in state(2), b in state(3)) {
        let k = a.num_qubits();
        let joint = a.tensor(&b);
        let keep: Vec<usize> = (0..k).collect();
        let rho = joint.partial_trace_keep(&keep).unwrap();
        let va = nalgebra::DVector::from_column_slice(a.amps());
        let expected = &va * va.adjoint();
        prop_assert!(rho.max_deviation_from(&expected) < 1e-10);
    }
}

#[test]
fn pauli_string_examples() {
    let one = make_basis_state(1, 1).unwrap();
    let xz = one
        .apply_pauli_string(&[(0, Pauli::Z)])
        .unwrap()
        .apply_pauli_string(&[(0, Pauli::X)])
        .unwrap();
    assert!((xz.amps()[0].re + 1.0).abs() < 1e-15);
    let zero = make_basis_state(1, 0).unwrap();
    assert_eq!(zero.apply_pauli_string(&[(0, Pauli::Z)]).unwrap(), zero);
    assert!(zero
        .apply_pauli_string(&[(0, Pauli::X), (0, Pauli::Z)])
        .is_err());
}
