//! Stages backed by the mini-Verilog engine.

use std::fmt::Write as _;

use super::{Outcome, Stage, StageOutcome, SynthOutcome, Testbench, TestbenchKind};
use crate::verilog_mini::{self, CostModel, GateKind, MiniModule};

pub(super) fn run_stage(stage: Stage, code: &str, tb: Option<&Testbench>, cost: &CostModel) -> Outcome {
    match stage {
        Stage::Compile => Outcome::Plain(match verilog_mini::parse_mini(code) {
            Ok(m) => StageOutcome { ok: true, diagnostics: format!("parsed module `{}`", m.name()) },
            Err(e) => StageOutcome { ok: false, diagnostics: format!("syntax error at {e}") },
        }),
        Stage::Simulate => Outcome::Plain(simulate(code, tb)),
        Stage::Synthesize => Outcome::Synth(synthesize(code, cost)),
    }
}

fn fail(msg: impl Into<String>) -> StageOutcome {
    StageOutcome { ok: false, diagnostics: msg.into() }
}

fn parsed(code: &str) -> Result<MiniModule, String> {
    verilog_mini::parse_mini(code).map_err(|e| format!("syntax error at {e}"))
}

fn simulate(code: &str, tb: Option<&Testbench>) -> StageOutcome {
    let m = match parsed(code) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let Some(tb) = tb else { return fail("no testbench supplied") };
    if tb.kind == TestbenchKind::VerilogSource {
        return fail("verilog_source testbenches need the external backend");
    }
    let table = match verilog_mini::VectorTable::parse(&tb.body) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    let result = match verilog_mini::simulate_vectors(&m, &table) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    if result.pass {
        return StageOutcome { ok: true, diagnostics: format!("PASS: {} cases", table.case_count()) };
    }
    let mut log = String::new();
    for i in result.failures() {
        let row = &result.rows[i];
        let fmt = |vals: &[u64]| {
            table.outputs.iter().zip(vals).map(|(p, v)| format!("{}={v:#x}", p.name)).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(log, "FAIL: case {i}: expected {} got {}", fmt(&table.rows[i].expected), fmt(&row.observed));
    }
    fail(log)
}

fn synthesize(code: &str, cost: &CostModel) -> SynthOutcome {
    let fail = |d: String| SynthOutcome { ok: false, ppa: None, diagnostics: d };
    let m = match parsed(code) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let n = match verilog_mini::elaborate(&m) {
        Ok(n) => n,
        Err(e) => return fail(e.to_string()),
    };
    let ppa = cost.estimate(&n);
    let diagnostics = format!(
        "gates: {} (xor2 {}, and2 {}, or2 {}, not {}); levels {}; delay_ns {} area_um2 {} power_w {}",
        n.gate_count(),
        n.count(GateKind::Xor2),
        n.count(GateKind::And2),
        n.count(GateKind::Or2),
        n.count(GateKind::Not),
        cost.critical_levels(&n),
        ppa.delay_ns,
        ppa.area_um2,
        ppa.power_w
    );
    SynthOutcome { ok: true, ppa: Some(ppa), diagnostics }
}
