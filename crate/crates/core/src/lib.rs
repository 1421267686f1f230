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

//! Simulation and verification of one-way LOCC protocols that allocate W and GHZ states
//! across the end nodes of a central-hub quantum network.
//!
//! The central system shares one Bell pair with each end node, applies a local unitary to its
//! halves, measures them in the computational basis, and broadcasts classical messages. Each end
//! node then applies a single-qubit recovery that depends only on the message it received.
//!
//! Modules:
//! * [`statevec`] - dense statevector engine (gates, measurement, partial trace).
//! * [`allocators`] - the W, GHZ and teleportation-baseline protocols as data.
//! * [`circuits`] - gate-level constructions, the LCU block-encoding, and the text exporter.
//! * [`hubsim`] - end-to-end execution over the hub topology and resource reports.
//! * [`cli`] - the `hubcast` command-line front end and report documents.

pub mod allocators;
pub mod circuits;
pub mod cli;
pub mod error;
pub mod hubsim;
pub mod statevec;

pub use error::{HubError, Result};
