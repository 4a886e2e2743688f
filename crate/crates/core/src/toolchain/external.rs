//! Adapter for Icarus Verilog, Yosys and OpenROAD.

use std::path::Path;
use std::time::{Duration, Instant};

use regex::Regex;

use super::sandbox::{self, CommandOutput};
use super::{ExternalTools, Outcome, ReportPatterns, Stage, StageOutcome, SynthOutcome, Testbench, TestbenchKind, ToolchainError};
use crate::verilog_mini::{PpaMetrics, VectorTable};

/// First output line containing any of `markers`.
pub fn scan_failure_markers<'a>(output: &'a str, markers: &[String]) -> Option<&'a str> {
    output.lines().find(|l| markers.iter().any(|m| !m.is_empty() && l.contains(m.as_str())))
}

/// Extracts delay, area and power from tool reports. Every metric must match
/// one of its patterns.
pub fn parse_ppa_report(text: &str, patterns: &ReportPatterns) -> Result<PpaMetrics, ToolchainError> {
    let find = |name: &str, pats: &[String]| -> Result<Option<f64>, ToolchainError> {
        for p in pats {
            let re = Regex::new(p).map_err(|e| ToolchainError::ReportParse { missing: format!("{name} (bad pattern: {e})") })?;
            if let Some(v) = re.captures(text).and_then(|c| c.get(1)).and_then(|m| m.as_str().parse::<f64>().ok()) {
                return Ok(Some(v));
            }
        }
        Ok(None)
    };
    let delay = find("delay_ns", &patterns.delay_ns)?;
    let area = find("area_um2", &patterns.area_um2)?;
    let power = find("power_w", &patterns.power_w)?;
    match (delay, area, power) {
        (Some(d), Some(a), Some(p)) => Ok(PpaMetrics::new(d, a, p)),
        _ => {
            let missing: Vec<&str> = [("delay_ns", delay), ("area_um2", area), ("power_w", power)]
                .iter()
                .filter(|(_, v)| v.is_none())
                .map(|(n, _)| *n)
                .collect();
            Err(ToolchainError::ReportParse { missing: missing.join(", ") })
        }
    }
}

fn top_module(code: &str) -> Option<String> {
    let re = Regex::new(r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)").expect("static regex");
    re.captures(code).map(|c| c[1].to_string())
}

/// Splits a template on whitespace and substitutes `{name}` placeholders.
/// A token that is exactly a list placeholder expands to several arguments.
fn expand(template: &str, vars: &[(&str, Vec<String>)]) -> Vec<String> {
    let mut argv = Vec::new();
    for tok in template.split_whitespace() {
        if let Some((_, vals)) = vars.iter().find(|(k, _)| tok == format!("{{{k}}}")) {
            argv.extend(vals.iter().cloned());
            continue;
        }
        let mut t = tok.to_string();
        for (k, vals) in vars {
            t = t.replace(&format!("{{{k}}}"), &vals.join(" "));
        }
        argv.push(t);
    }
    argv
}

struct Deadline(Instant, Duration, Stage);

impl Deadline {
    fn remaining(&self) -> Result<Duration, ToolchainError> {
        self.1
            .checked_sub(self.0.elapsed())
            .filter(|d| !d.is_zero())
            .ok_or(ToolchainError::Timeout { stage: self.2, seconds: self.1.as_secs_f64() })
    }
}

pub(super) fn run_stage(
    cfg: &ExternalTools,
    stage: Stage,
    code: &str,
    tb: Option<&Testbench>,
    limit: Duration,
    dir: &Path,
) -> Result<Outcome, ToolchainError> {
    let deadline = Deadline(Instant::now(), limit, stage);
    let write = |name: &str, text: &str| {
        std::fs::write(dir.join(name), text).map_err(|e| ToolchainError::Io(e.to_string()))
    };
    let exec = |argv: Vec<String>, envs: &[(&str, String)]| -> Result<CommandOutput, ToolchainError> {
        let mut out = sandbox::run(stage, &argv, dir, envs, deadline.remaining()?)?;
        if !out.success {
            let status = out.code.map_or("killed by signal".to_string(), |c| format!("exit status {c}"));
            out.output.push_str(&format!("\n`{}` failed: {status}", argv[0]));
        }
        Ok(out)
    };
    write("design.v", code)?;
    let compile = |files: Vec<String>| {
        exec(expand(&cfg.compile, &[("out", vec!["sim.out".into()]), ("files", files)]), &[])
    };

    match stage {
        Stage::Compile => {
            let out = compile(vec!["design.v".into()])?;
            Ok(Outcome::Plain(StageOutcome { ok: out.success, diagnostics: out.output }))
        }
        Stage::Simulate => {
            let Some(tb) = tb else {
                return Ok(Outcome::Plain(StageOutcome { ok: false, diagnostics: "no testbench supplied".into() }));
            };
            let tb_text = match tb.kind {
                TestbenchKind::VerilogSource => tb.body.clone(),
                TestbenchKind::VectorTable => {
                    let table = match VectorTable::parse(&tb.body) {
                        Ok(t) => t,
                        Err(e) => return Ok(Outcome::Plain(StageOutcome { ok: false, diagnostics: e.to_string() })),
                    };
                    let top = top_module(code).unwrap_or_default();
                    table.to_verilog_testbench(&top)
                }
            };
            write("tb.v", &tb_text)?;
            let built = compile(vec!["design.v".into(), "tb.v".into()])?;
            if !built.success {
                return Ok(Outcome::Plain(StageOutcome { ok: false, diagnostics: built.output }));
            }
            let out = exec(expand(&cfg.simulate, &[("out", vec!["sim.out".into()])]), &[])?;
            let marker = scan_failure_markers(&out.output, &cfg.failure_markers).map(str::to_string);
            let ok = out.success && marker.is_none();
            let mut diagnostics = out.output;
            if let Some(line) = marker {
                diagnostics.push_str(&format!("\nfailure marker found: {line}"));
            }
            Ok(Outcome::Plain(StageOutcome { ok, diagnostics }))
        }
        Stage::Synthesize => {
            let top = top_module(code).unwrap_or_default();
            let liberty = cfg.liberty.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            let script = cfg.synth_script.replace("{design}", "design.v").replace("{top}", &top).replace("{liberty}", &liberty);
            write("synth.ys", &script)?;
            let syn = exec(expand(&cfg.synthesize, &[("script", vec!["synth.ys".into()])]), &[])?;
            let mut log = syn.output;
            if !syn.success {
                return Ok(Outcome::Synth(SynthOutcome { ok: false, ppa: None, diagnostics: log }));
            }
            if let Some(flow) = &cfg.flow_script {
                let envs = [
                    ("CHIPFORGE_NETLIST", dir.join("netlist.v").display().to_string()),
                    ("CHIPFORGE_TOP", top.clone()),
                    ("CHIPFORGE_WORKDIR", dir.display().to_string()),
                ];
                let pr = exec(expand(&cfg.flow, &[("script", vec![flow.display().to_string()])]), &envs)?;
                log.push_str(&pr.output);
                if !pr.success {
                    return Ok(Outcome::Synth(SynthOutcome { ok: false, ppa: None, diagnostics: log }));
                }
            }
            let mut reports = log.clone();
            if let Ok(entries) = std::fs::read_dir(dir) {
                let mut rpts: Vec<_> = entries
                    .filter_map(Result::ok)
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x == "rpt"))
                    .collect();
                rpts.sort();
                for p in rpts {
                    reports.push_str(&std::fs::read_to_string(p).unwrap_or_default());
                }
            }
            let ppa = parse_ppa_report(&reports, &cfg.patterns)?;
            if !ppa.is_positive() {
                log.push_str(&format!("\nnon-positive metric in {ppa:?}"));
                return Ok(Outcome::Synth(SynthOutcome { ok: false, ppa: None, diagnostics: log }));
            }
            Ok(Outcome::Synth(SynthOutcome { ok: true, ppa: Some(ppa), diagnostics: log }))
        }
    }
}
