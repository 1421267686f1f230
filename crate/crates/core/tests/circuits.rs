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

use hubcast::allocators::{build_ghz_unitary, build_w_unitary};
use hubcast::circuits::{
    circuit_to_matrix, comparator_circuit, export_circuit, ghz_circuit, lcu_block_encoding,
    parse_circuit, phase_aligned_deviation, w_circuit_n3_ladder, w_circuit_recursive,
    CircuitFormat,
};
use hubcast::statevec::{make_basis_state, max_abs_diff};

#[test]
fn recursive_w_matches_dense_unitary() {
    for n in 2..=7 {
        let m = circuit_to_matrix(&w_circuit_recursive(n).unwrap()).unwrap();
        assert!(
            phase_aligned_deviation(&m, &build_w_unitary(n).unwrap()) < 1e-9,
            "n={n}"
        );
    }
}

#[test]
fn ghz_circuit_matches_dense_unitary() {
    for n in 2..=8 {
        let m = circuit_to_matrix(&ghz_circuit(n).unwrap()).unwrap();
        assert!(
            max_abs_diff(&m, &build_ghz_unitary(n).unwrap()) < 1e-12,
            "n={n}"
        );
    }
}

#[test]
fn file_round_trip_preserves_matrix() {
    let dir = tempfile::tempdir().unwrap();
    for c in [
        w_circuit_n3_ladder(),
        w_circuit_recursive(4).unwrap(),
        lcu_block_encoding(2).unwrap().0,
    ] {
        let path = dir.path().join(format!("{}.gates", c.name()));
        std::fs::write(
            &path,
            export_circuit(&c, CircuitFormat::GatelistV1).unwrap(),
        )
        .unwrap();
        let back = parse_circuit(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.ancillas(), c.ancillas());
        assert!(
            max_abs_diff(
                &circuit_to_matrix(&back).unwrap(),
                &circuit_to_matrix(&c).unwrap()
            ) == 0.0
        );
    }
}

#[test]
fn comparator_truth_table_three_bits() {
    let bits = 3;
    let c = comparator_circuit(bits).unwrap();
    let inverse = c.adjoint();
    let n = c.num_qubits();
    for a in 0..1usize << bits {
        for b in 0..1usize << bits {
            let input = (a << (bits + 2)) | (b << 2);
            let mut s = make_basis_state(n, input).unwrap();
            c.apply_to(&mut s).unwrap();
            let out = s
                .amps()
                .iter()
                .position(|x| (x.re - 1.0).abs() < 1e-12)
                .unwrap();
            let want = match a.cmp(&b) {
                std::cmp::Ordering::Greater => 0b10,
                std::cmp::Ordering::Less => 0b01,
                std::cmp::Ordering::Equal => 0b00,
            };
            assert_eq!(out, input | want, "a={a} b={b}");
            inverse.apply_to(&mut s).unwrap();
            assert!((s.amps()[input].re - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn block_encoding_n4() {
    let (_, cert) = lcu_block_encoding(4).unwrap();
    assert!((cert.subnormalization - 0.5).abs() < 1e-9);
    assert!(cert.passes(1e-9));
    assert!(cert.ancilla_leakage < 1e-9);
}
