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

//! `hubcast` command line: argument parsing, report documents and the exit-code contract.
//!
//! Exit codes: `0` every check passed, `1` a check failed, `2` bad usage.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::allocators::{
    build_ghz_protocol, build_ghz_unitary, build_w_protocol, build_w_unitary, AllocationProtocol,
    LocalUnitary,
};
use crate::circuits::{
    circuit_to_matrix, export_circuit, ghz_circuit, lcu_block_encoding, parse_circuit,
    phase_aligned_deviation, w_circuit_n3_ladder, w_circuit_recursive, Circuit, CircuitFormat,
};
use crate::error::{argument, HubError, Result};
use crate::hubsim::{
    compare_resources, expected_bits_per_node, expected_total_bits, report_passes, run_sampled,
    verify_exactness, EXACTNESS_THRESHOLD,
};
use crate::statevec::GateOp;

pub const SCHEMA_VERSION: &str = "hubcast-report/1";

/// Sampled runs list individual traces only up to this many shots.
pub const MAX_LISTED_TRACES: usize = 32;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const CIRCUIT_TOL: f64 = 1e-9;
const BLOCK_TOL: f64 = 1e-9;
const MAX_RECURSIVE_CHECK: usize = 10;
const MAX_DIRECT_EXPORT: usize = 8;

#[derive(Parser, Debug)]
#[command(
    name = "hubcast",
    version,
    about = "Hub allocation of W and GHZ states"
)]
struct Cli {
    /// Print the report document as JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StateArg {
    W,
    Ghz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Variant {
    Direct,
    Recursive,
    Ladder3,
    Ghz,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every measurement outcome of an allocation protocol.
    Verify {
        #[arg(long, value_enum)]
        state: StateArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Compose the identity recovery of this end node (1-based) with X; the check should fail.
        #[arg(long)]
        corrupt_node: Option<usize>,
    },
    /// Resource table for W, GHZ and the teleportation baseline.
    Compare {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample protocol runs from the measurement distribution.
    Run {
        #[arg(long, value_enum)]
        state: StateArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        shots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a gate-level circuit for the central unitary.
    Circuit {
        #[arg(long, value_enum)]
        state: StateArg,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        #[arg(long, default_value = "gatelist-v1", value_parser = parse_format)]
        format: CircuitFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and certify the LCU block-encoding of W_n / sqrt(n).
    Blockenc {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> std::result::Result<CircuitFormat, String> {
    s.parse().map_err(|e: HubError| e.to_string())
}

/// Self-describing output of one command.
#[derive(Clone, Debug, Serialize)]
pub struct ReportDocument {
    pub schema_version: String,
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    pub results: Value,
    pub timings_ms: BTreeMap<String, f64>,
}

impl ReportDocument {
    fn new(command: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            command: command.to_string(),
            parameters: BTreeMap::new(),
            results: Value::Null,
            timings_ms: BTreeMap::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(key.to_string(), json!(value));
        self
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings_ms
            .insert(phase.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Outcome of a command before rendering.
struct Outcome {
    doc: ReportDocument,
    text: String,
    passed: bool,
}

/// Caps the global rayon pool at `HUBCAST_THREADS` when set. Call once, before any work.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("HUBCAST_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        argument(format!(
            "HUBCAST_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    // Fails only if a pool already exists, which leaves that pool in place.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    match dispatch(&cli.command).and_then(|o| emit(&cli, o, stdout)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                HubError::Argument(_) | HubError::Resource(_) => EXIT_USAGE,
                _ => EXIT_CHECK_FAILED,
            }
        }
    }
}

fn emit(cli: &Cli, outcome: Outcome, stdout: &mut dyn Write) -> Result<i32> {
    if let Some(path) = report_path(&cli.command) {
        std::fs::write(path, outcome.doc.to_json()? + "\n")?;
    }
    if cli.json {
        writeln!(stdout, "{}", outcome.doc.to_json()?)?;
    } else {
        stdout.write_all(outcome.text.as_bytes())?;
    }
    Ok(if outcome.passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn report_path(cmd: &Command) -> Option<&PathBuf> {
    match cmd {
        Command::Verify { out, .. }
        | Command::Compare { out, .. }
        | Command::Run { out, .. }
        | Command::Blockenc { out, .. } => out.as_ref(),
        // The circuit command writes the gate list itself.
        Command::Circuit { .. } => None,
    }
}

fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Verify {
            state,
            n,
            corrupt_node,
            ..
        } => cmd_verify(*state, *n, *corrupt_node),
        Command::Compare { n, .. } => cmd_compare(*n),
        Command::Run {
            state,
            n,
            shots,
            seed,
            ..
        } => cmd_run(*state, *n, *shots, *seed),
        Command::Circuit {
            state,
            n,
            variant,
            format,
            out,
        } => cmd_circuit(*state, *n, *variant, *format, out.as_ref()),
        Command::Blockenc { n, .. } => cmd_blockenc(*n),
    }
}

fn state_name(state: StateArg) -> &'static str {
    match state {
        StateArg::W => "w",
        StateArg::Ghz => "ghz",
    }
}

fn check_n(n: usize) -> Result<()> {
    if !(2..=12).contains(&n) {
        return Err(argument(format!("--n must be between 2 and 12, got {n}")));
    }
    Ok(())
}

fn protocol(state: StateArg, n: usize) -> Result<AllocationProtocol> {
    check_n(n)?;
    match state {
        StateArg::W => build_w_protocol(n),
        StateArg::Ghz => build_ghz_protocol(n),
    }
}

fn corrupt(p: AllocationProtocol, node: usize) -> Result<AllocationProtocol> {
    if node == 0 || node > p.n() {
        return Err(argument(format!(
            "--corrupt-node must be in 1..={}, got {node}",
            p.n()
        )));
    }
    let bad = LocalUnitary::from_word("X")?;
    let original = p.recovery_for(node - 1, 1).matrix().clone();
    let replaced = LocalUnitary::new("X*", bad.matrix() * original)?;
    p.with_recovery_override(node - 1, 1, replaced)
}

fn fmt_fidelity(f: Option<f64>) -> String {
    f.map_or_else(|| "-".to_string(), |v| format!("{v:.12}"))
}

fn cmd_verify(state: StateArg, n: usize, corrupt_node: Option<usize>) -> Result<Outcome> {
    let mut doc = ReportDocument::new("verify");
    doc.param("state", state_name(state)).param("n", n);
    let mut p = protocol(state, n)?;
    if let Some(node) = corrupt_node {
        doc.param("corrupt_node", node);
        p = corrupt(p, node)?;
    }
    let report = doc.timed("verify", || verify_exactness(&p))?;
    let passed = report_passes(&report);
    let expected_bits = expected_total_bits(p.kind(), n);
    doc.results = json!({
        "report": report,
        "expected_total_bits": expected_bits,
        "expected_bits_per_node": expected_bits_per_node(p.kind(), n),
        "passed": passed,
    });
    let text = format!(
        "protocol        {}\nn               {n}\noutcomes        {}\nbits per node   {:?}\ntotal bits      {} (expected {expected_bits})\ncentral qubits  {}\nmin fidelity    {}\nmax |p - 2^-n|  {:.3e}\nresult          {}\n",
        p.kind(),
        report.outcomes_checked,
        report.bits_per_node,
        report.total_bits,
        report.central_memory_qubits,
        fmt_fidelity(report.min_fidelity_over_outcomes),
        report.max_probability_deviation.unwrap_or(f64::NAN),
        if passed { "PASS" } else { "FAIL" },
    );
    Ok(Outcome { doc, text, passed })
}

fn cmd_compare(n: usize) -> Result<Outcome> {
    let mut doc = ReportDocument::new("compare");
    doc.param("n", n);
    let rows = doc.timed("compare", || compare_resources(n))?;
    let passed = rows.iter().all(|r| r.matches_closed_form);
    let mut text = format!(
        "{:<14} {:>10} {:>15} {:>11} {:>16}  {}\n",
        "protocol", "bits", "central qubits", "end qubits", "min fidelity", "ok"
    );
    for r in &rows {
        text.push_str(&format!(
            "{:<14} {:>10} {:>15} {:>11} {:>16}  {}\n",
            r.label,
            r.report.total_bits,
            r.report.central_memory_qubits,
            r.report.end_memory_qubits,
            fmt_fidelity(r.report.min_fidelity_over_outcomes),
            if r.matches_closed_form { "yes" } else { "NO" },
        ));
    }
    doc.results = json!({ "rows": rows, "passed": passed });
    Ok(Outcome { doc, text, passed })
}

fn cmd_run(state: StateArg, n: usize, shots: usize, seed: u64) -> Result<Outcome> {
    let mut doc = ReportDocument::new("run");
    doc.param("state", state_name(state))
        .param("n", n)
        .param("shots", shots)
        .param("seed", seed);
    let p = protocol(state, n)?;
    let sampled = doc.timed("run", || run_sampled(&p, shots, seed))?;
    let passed = sampled
        .traces
        .iter()
        .all(|t| t.fidelity_to_target >= EXACTNESS_THRESHOLD);
    let listed = shots <= MAX_LISTED_TRACES;
    let mut text = String::new();
    if listed {
        for (i, t) in sampled.traces.iter().enumerate() {
            text.push_str(&format!(
                "shot {i}: s={} p={:.6} fidelity={:.12}\n",
                t.outcome, t.probability, t.fidelity_to_target
            ));
            for (m, recovery) in t.messages.iter().zip(&t.recovery_applied) {
                if let crate::hubsim::Party::End(node) = m.to {
                    text.push_str(&format!(
                        "  node {}: alpha={} ({} bit{}) recovery={recovery}\n",
                        node + 1,
                        m.alpha,
                        m.bit_width,
                        if m.bit_width == 1 { "" } else { "s" },
                    ));
                }
            }
        }
    }
    text.push_str("histogram\n");
    for (outcome, count) in &sampled.histogram {
        text.push_str(&format!("  {outcome} {count}\n"));
    }
    doc.results = json!({
        "shots": sampled.shots,
        "seed": sampled.seed,
        "histogram": sampled.histogram,
        "traces": if listed { json!(sampled.traces) } else { Value::Null },
        "all_exact": passed,
    });
    Ok(Outcome { doc, text, passed })
}

fn build_variant(
    state: StateArg,
    n: usize,
    variant: Variant,
) -> Result<(Circuit, crate::statevec::Matrix)> {
    check_n(n)?;
    match (state, variant) {
        (StateArg::W, Variant::Direct) | (StateArg::Ghz, Variant::Direct) => {
            if n > MAX_DIRECT_EXPORT {
                return Err(argument(format!(
                    "direct export supports n <= {MAX_DIRECT_EXPORT}"
                )));
            }
            let (m, name) = match state {
                StateArg::W => (build_w_unitary(n)?, format!("w{n}-direct")),
                StateArg::Ghz => (build_ghz_unitary(n)?, format!("ghz{n}-direct")),
            };
            let mut c = Circuit::new(n, name);
            c.push(GateOp::unitary((0..n).collect(), m.clone())?)?;
            Ok((c, m))
        }
        (StateArg::W, Variant::Recursive) => {
            if n > MAX_RECURSIVE_CHECK {
                return Err(argument(format!(
                    "recursive export supports n <= {MAX_RECURSIVE_CHECK}"
                )));
            }
            Ok((w_circuit_recursive(n)?, build_w_unitary(n)?))
        }
        (StateArg::W, Variant::Ladder3) => {
            if n != 3 {
                return Err(argument("ladder3 requires --n 3"));
            }
            Ok((w_circuit_n3_ladder(), build_w_unitary(3)?))
        }
        (StateArg::Ghz, Variant::Ghz) => Ok((ghz_circuit(n)?, build_ghz_unitary(n)?)),
        (s, v) => Err(argument(format!(
            "variant {v:?} does not apply to state {}",
            state_name(s)
        ))),
    }
}

fn cmd_circuit(
    state: StateArg,
    n: usize,
    variant: Option<Variant>,
    format: CircuitFormat,
    out: Option<&PathBuf>,
) -> Result<Outcome> {
    let variant = variant.unwrap_or(match state {
        StateArg::W => Variant::Recursive,
        StateArg::Ghz => Variant::Ghz,
    });
    let mut doc = ReportDocument::new("circuit");
    doc.param("state", state_name(state))
        .param("n", n)
        .param("variant", format!("{variant:?}").to_lowercase())
        .param("format", "gatelist-v1");
    let (circuit, reference) = build_variant(state, n, variant)?;
    let deviation = doc.timed("equivalence", || {
        circuit_to_matrix(&circuit).map(|m| phase_aligned_deviation(&m, &reference))
    })?;
    let text = export_circuit(&circuit, format)?;
    let round_trip = parse_circuit(&text)? == circuit;
    let passed = deviation < CIRCUIT_TOL && round_trip;
    if passed {
        if let Some(path) = out {
            std::fs::write(path, &text)?;
        }
    }
    doc.results = json!({
        "name": circuit.name(),
        "num_qubits": circuit.num_qubits(),
        "gate_count": circuit.ops().len(),
        "controlled_gate_count": circuit.controlled_op_count(),
        "max_deviation_up_to_phase": deviation,
        "round_trip": round_trip,
        "written_to": out.filter(|_| passed).map(|p| p.display().to_string()),
        "passed": passed,
    });
    let text = match (passed, out) {
        (true, None) => text,
        (true, Some(path)) => format!(
            "wrote {} ({} gates) to {}\n",
            circuit.name(),
            circuit.ops().len(),
            path.display()
        ),
        (false, _) => format!(
            "{} does not match its reference: deviation {deviation:.3e}, round trip {round_trip}\n",
            circuit.name()
        ),
    };
    Ok(Outcome { doc, text, passed })
}

fn cmd_blockenc(n: usize) -> Result<Outcome> {
    let mut doc = ReportDocument::new("blockenc");
    doc.param("n", n);
    let (circuit, cert) = doc.timed("certify", || lcu_block_encoding(n))?;
    let passed = cert.passes(BLOCK_TOL);
    let text = format!(
        "system qubits     {}\nancilla qubits    {}\ngates             {}\nsubnormalization  {:.12} (expected {:.12})\nblock deviation   {:.3e}\nsingular values   max error {:.3e}\nancilla leakage   {:.3e}\nresult            {}\n",
        cert.n_system,
        cert.n_ancilla,
        circuit.ops().len(),
        cert.subnormalization,
        cert.expected_subnormalization,
        cert.max_block_deviation,
        cert.max_singular_value_error(),
        cert.ancilla_leakage,
        if passed { "PASS" } else { "FAIL" },
    );
    doc.results =
        json!({ "certificate": cert, "gate_count": circuit.ops().len(), "passed": passed });
    Ok(Outcome { doc, text, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("hubcast").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn verify_small() {
        let (code, out, _) = call(&["verify", "--state", "ghz", "--n", "3"]);
        assert_eq!(code, 0);
        assert!(out.contains("total bits      3"));
    }

    #[test]
    fn usage_errors() {
        assert_eq!(call(&["verify", "--state", "w", "--n", "1"]).0, 2);
        assert_eq!(call(&["verify", "--state", "x", "--n", "3"]).0, 2);
        assert_eq!(
            call(&[
                "circuit",
                "--state",
                "ghz",
                "--n",
                "3",
                "--variant",
                "ladder3"
            ])
            .0,
            2
        );
        assert_eq!(
            call(&["circuit", "--state", "w", "--n", "3", "--format", "qasm"]).0,
            2
        );
        assert_eq!(
            call(&["verify", "--state", "w", "--n", "3", "--corrupt-node", "4"]).0,
            2
        );
    }

    #[test]
    fn corrupt_node_fails() {
        let (code, out, _) = call(&["verify", "--state", "w", "--n", "3", "--corrupt-node", "2"]);
        assert_eq!(code, 1);
        assert!(out.contains("FAIL"));
    }

    #[test]
    fn json_document_shape() {
        let (code, out, _) = call(&["--json", "blockenc", "--n", "2"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["command"], "blockenc");
        assert_eq!(v["results"]["passed"], true);
        assert!(v["timings_ms"]["certify"].is_number());
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(call(&["--help"]).0, 0);
    }
}
