//! Staged evaluation: compile, then simulate against a testbench, then
//! synthesize and measure PPA. Stages run in order and stop at the first
//! failure. The mock backend uses [`crate::verilog_mini`]; the external one
//! drives Icarus Verilog, Yosys and OpenROAD.

mod mock;
#[cfg(feature = "native")]
mod external;
#[cfg(feature = "native")]
mod sandbox;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verilog_mini::{CostModel, PpaMetrics, VectorTable, VectorTableError};

#[cfg(feature = "native")]
pub use external::{parse_ppa_report, scan_failure_markers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Mock,
    External,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Self::Mock),
            "external" => Ok(Self::External),
            other => Err(format!("unknown backend `{other}` (expected mock or external)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestbenchKind {
    VectorTable,
    VerilogSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Testbench {
    pub kind: TestbenchKind,
    pub body: String,
}

impl Testbench {
    pub fn vector_table(table: &VectorTable) -> Self {
        Self { kind: TestbenchKind::VectorTable, body: table.to_text() }
    }

    pub fn verilog(body: impl Into<String>) -> Self {
        Self { kind: TestbenchKind::VerilogSource, body: body.into() }
    }

    /// Parsed table for `vector_table` testbenches.
    pub fn table(&self) -> Option<Result<VectorTable, VectorTableError>> {
        (self.kind == TestbenchKind::VectorTable).then(|| VectorTable::parse(&self.body))
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            TestbenchKind::VectorTable => VectorTable::parse(&self.body).map(drop).map_err(|e| e.to_string()),
            TestbenchKind::VerilogSource if self.body.trim().is_empty() => Err("empty Verilog testbench".into()),
            TestbenchKind::VerilogSource => Ok(()),
        }
    }

    /// Number of test cases; Verilog testbenches are counted by their
    /// `FAIL`-reporting checks.
    pub fn case_count(&self) -> Option<usize> {
        match self.kind {
            TestbenchKind::VectorTable => VectorTable::parse(&self.body).ok().map(|t| t.case_count()),
            TestbenchKind::VerilogSource => Some(self.body.matches("$display(\"FAIL").count()),
        }
    }
}

/// Wall-clock limit per stage, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageTimeouts {
    pub compile_s: f64,
    pub simulate_s: f64,
    pub synthesize_s: f64,
}

impl Default for StageTimeouts {
    fn default() -> Self {
        Self { compile_s: 10.0, simulate_s: 30.0, synthesize_s: 120.0 }
    }
}

impl StageTimeouts {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("compile", self.compile_s), ("simulate", self.simulate_s), ("synthesize", self.synthesize_s)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} timeout must be a positive number of seconds, got {v}"));
            }
        }
        Ok(())
    }

    fn get(&self, stage: Stage) -> Duration {
        let s = match stage {
            Stage::Compile => self.compile_s,
            Stage::Simulate => self.simulate_s,
            Stage::Synthesize => self.synthesize_s,
        };
        Duration::from_secs_f64(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub code: String,
    #[serde(default)]
    pub testbench: Option<Testbench>,
    #[serde(default)]
    pub reference_ppa: Option<PpaMetrics>,
    #[serde(default)]
    pub stage_timeouts: StageTimeouts,
    #[serde(default)]
    pub backend: Backend,
}

impl EvalRequest {
    pub fn new(code: impl Into<String>, testbench: Option<Testbench>) -> Self {
        Self {
            code: code.into(),
            testbench,
            reference_ppa: None,
            stage_timeouts: StageTimeouts::default(),
            backend: Backend::Mock,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Compile,
    Simulate,
    Synthesize,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Compile => "compile",
            Stage::Simulate => "simulate",
            Stage::Synthesize => "synthesize",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageReached {
    #[default]
    None,
    Compiled,
    Functional,
    Synthesized,
    PpaMeasured,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolchainError {
    #[error("tool `{tool}` is not available: {detail}")]
    ToolUnavailable { tool: String, detail: String },
    #[error("{stage} stage timed out after {seconds} s")]
    Timeout { stage: Stage, seconds: f64 },
    #[error("could not extract {missing} from the synthesis reports")]
    ReportParse { missing: String },
    #[error("workspace error: {0}")]
    Io(String),
}

/// Why a report stopped short of `ppa_measured`, when it was not a plain
/// negative result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Timeout,
    ToolUnavailable,
    ReportParse,
    Io,
}

impl ToolchainError {
    pub fn kind(&self) -> FailureKind {
        match self {
            Self::ToolUnavailable { .. } => FailureKind::ToolUnavailable,
            Self::Timeout { .. } => FailureKind::Timeout,
            Self::ReportParse { .. } => FailureKind::ReportParse,
            Self::Io(_) => FailureKind::Io,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageLogs {
    pub compile: String,
    pub simulate: String,
    pub synthesize: String,
}

impl StageLogs {
    pub fn get(&self, stage: Stage) -> &str {
        match stage {
            Stage::Compile => &self.compile,
            Stage::Simulate => &self.simulate,
            Stage::Synthesize => &self.synthesize,
        }
    }

    fn get_mut(&mut self, stage: Stage) -> &mut String {
        match stage {
            Stage::Compile => &mut self.compile,
            Stage::Simulate => &mut self.simulate,
            Stage::Synthesize => &mut self.synthesize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub compile_s: f64,
    pub simulate_s: f64,
    pub synthesize_s: f64,
}

impl StageTimings {
    fn get_mut(&mut self, stage: Stage) -> &mut f64 {
        match stage {
            Stage::Compile => &mut self.compile_s,
            Stage::Simulate => &mut self.simulate_s,
            Stage::Synthesize => &mut self.synthesize_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ToolchainReport {
    pub compile_ok: bool,
    pub func_ok: bool,
    pub syn_ok: bool,
    pub ppa: Option<PpaMetrics>,
    pub stage_reached: StageReached,
    pub diagnostics: StageLogs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureKind>,
    #[serde(skip)]
    pub timings: StageTimings,
    /// Scratch directories used by the stages (already removed).
    #[serde(skip)]
    pub workspaces: Vec<PathBuf>,
}

impl ToolchainReport {
    /// Stage flags nest (`ppa ⇒ syn ⇒ func ⇒ compile`) and agree with `stage_reached`.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.func_ok && !self.compile_ok {
            return Err("func_ok without compile_ok".into());
        }
        if self.syn_ok && !self.func_ok {
            return Err("syn_ok without func_ok".into());
        }
        if self.ppa.is_some() && !self.syn_ok {
            return Err("ppa without syn_ok".into());
        }
        if self.stage_reached != self.derived_stage() {
            return Err(format!("stage_reached {:?} disagrees with the flags", self.stage_reached));
        }
        Ok(())
    }

    fn derived_stage(&self) -> StageReached {
        match (self.compile_ok, self.func_ok, self.syn_ok, self.ppa.is_some()) {
            (true, true, true, true) => StageReached::PpaMeasured,
            (true, true, true, false) => StageReached::Synthesized,
            (true, true, false, _) => StageReached::Functional,
            (true, false, _, _) => StageReached::Compiled,
            _ => StageReached::None,
        }
    }

    /// JSON without timings or workspace paths.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub ok: bool,
    pub diagnostics: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutcome {
    pub ok: bool,
    pub ppa: Option<PpaMetrics>,
    pub diagnostics: String,
}

/// Command templates for the external backend. `{out}`, `{files}` and
/// `{script}` are substituted; `{files}` expands to several arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalTools {
    pub compile: String,
    pub simulate: String,
    pub synthesize: String,
    pub flow: String,
    /// Yosys script; `{design}` and `{top}` are substituted, `{liberty}` too when set.
    pub synth_script: String,
    pub liberty: Option<PathBuf>,
    /// OpenROAD script run after synthesis. It receives `CHIPFORGE_NETLIST`,
    /// `CHIPFORGE_TOP` and `CHIPFORGE_WORKDIR` in its environment.
    pub flow_script: Option<PathBuf>,
    pub failure_markers: Vec<String>,
    pub patterns: ReportPatterns,
}

impl Default for ExternalTools {
    fn default() -> Self {
        Self {
            compile: "iverilog -o {out} {files}".into(),
            simulate: "vvp {out}".into(),
            synthesize: "yosys -s {script}".into(),
            flow: "openroad -exit {script}".into(),
            synth_script: "read_verilog {design}\nsynth -top {top}\nstat\nwrite_verilog -noattr netlist.v\n".into(),
            liberty: None,
            flow_script: None,
            failure_markers: vec!["FAIL".into(), "Error".into(), "MISMATCH".into()],
            patterns: ReportPatterns::default(),
        }
    }
}

/// Regular expressions whose first capture group is the metric value. The
/// first pattern that matches anywhere in the combined reports wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportPatterns {
    pub delay_ns: Vec<String>,
    pub area_um2: Vec<String>,
    pub power_w: Vec<String>,
}

const NUM: &str = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)";

impl Default for ReportPatterns {
    fn default() -> Self {
        Self {
            delay_ns: vec![
                format!(r"(?m)^\s*delay_ns\s*[:=]\s*{NUM}"),
                format!(r"(?m)^\s*{NUM}\s+data arrival time"),
            ],
            area_um2: vec![
                format!(r"(?m)^\s*area_um2\s*[:=]\s*{NUM}"),
                format!(r"(?m)^\s*Design area\s+{NUM}\s+u\^2"),
                format!(r"(?m)Chip area for (?:top )?module\s+\S+:\s+{NUM}"),
            ],
            power_w: vec![
                format!(r"(?m)^\s*power_w\s*[:=]\s*{NUM}"),
                format!(r"(?m)^Total\s+\S+\s+\S+\s+\S+\s+{NUM}"),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolchainConfig {
    pub backend: Backend,
    pub timeouts: StageTimeouts,
    /// Worker count for batch evaluation; 0 = available parallelism.
    pub jobs: usize,
    pub cost_model: CostModel,
    pub external: ExternalTools,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Mock,
            timeouts: StageTimeouts::default(),
            jobs: 0,
            cost_model: CostModel::default(),
            external: ExternalTools::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Toolchain {
    pub config: ToolchainConfig,
}

impl Toolchain {
    pub fn new(config: ToolchainConfig) -> Self {
        Self { config }
    }

    pub fn check_compile(&self, code: &str, backend: Backend) -> Result<StageOutcome, ToolchainError> {
        self.run_stage(Stage::Compile, code, None, backend, self.config.timeouts.get(Stage::Compile)).map(|r| r.0).and_then(expect_plain)
    }

    pub fn run_testbench(&self, code: &str, tb: &Testbench, backend: Backend) -> Result<StageOutcome, ToolchainError> {
        self.run_stage(Stage::Simulate, code, Some(tb), backend, self.config.timeouts.get(Stage::Simulate))
            .map(|r| r.0)
            .and_then(expect_plain)
    }

    pub fn synthesize_and_ppa(&self, code: &str, backend: Backend) -> Result<SynthOutcome, ToolchainError> {
        match self.run_stage(Stage::Synthesize, code, None, backend, self.config.timeouts.get(Stage::Synthesize))?.0 {
            Outcome::Synth(s) => Ok(s),
            Outcome::Plain(_) => unreachable!("synthesis yields a synthesis outcome"),
        }
    }

    /// Runs the stages in order, stopping at the first failure. Never fails:
    /// tool and timeout problems are recorded in the report.
    pub fn evaluate(&self, req: &EvalRequest) -> ToolchainReport {
        if let Err(e) = req.stage_timeouts.validate() {
            let mut report = ToolchainReport::default();
            report.diagnostics.compile = e;
            return report;
        }
        drive(req.testbench.as_ref(), |report, stage| self.timed(report, stage, req))
    }

    /// Evaluates requests on `pool`; `out[i]` belongs to `reqs[i]`.
    pub fn evaluate_batch(&self, reqs: &[EvalRequest], pool: &crate::pool::WorkerPool) -> Vec<ToolchainReport> {
        pool.map(reqs, |_, r| self.evaluate(r))
    }

    fn timed(&self, report: &mut ToolchainReport, stage: Stage, req: &EvalRequest) -> Option<Outcome> {
        let tb = if stage == Stage::Simulate { req.testbench.as_ref() } else { None };
        let start = clock_now();
        let result = self.run_stage(stage, &req.code, tb, req.backend, req.stage_timeouts.get(stage));
        let secs = elapsed_secs(start);
        *report.timings.get_mut(stage) = secs;
        let log = report.diagnostics.get_mut(stage);
        match result {
            Ok((outcome, ws)) => {
                *log = match &outcome {
                    Outcome::Plain(o) => o.diagnostics.clone(),
                    Outcome::Synth(s) => s.diagnostics.clone(),
                };
                report.workspaces.extend(ws);
                Some(outcome)
            }
            Err(e) => {
                let marker = if matches!(e, ToolchainError::Timeout { .. }) { "TIMEOUT: " } else { "" };
                *log = format!("{marker}{e}");
                report.failure = Some(e.kind());
                None
            }
        }
    }

    /// One stage in a fresh scratch workspace.
    fn run_stage(
        &self,
        stage: Stage,
        code: &str,
        tb: Option<&Testbench>,
        backend: Backend,
        timeout: Duration,
    ) -> Result<(Outcome, Option<PathBuf>), ToolchainError> {
        match backend {
            Backend::Mock => self.run_mock(stage, code, tb, timeout),
            #[cfg(feature = "native")]
            Backend::External => {
                let ws = sandbox::Workspace::new()?;
                let out = external::run_stage(&self.config.external, stage, code, tb, timeout, ws.path())?;
                Ok((out, Some(ws.close()?)))
            }
            #[cfg(not(feature = "native"))]
            Backend::External => Err(ToolchainError::ToolUnavailable {
                tool: "external backend".into(),
                detail: "this build has no subprocess support".into(),
            }),
        }
    }

    #[cfg(feature = "native")]
    fn run_mock(&self, stage: Stage, code: &str, tb: Option<&Testbench>, timeout: Duration) -> Result<(Outcome, Option<PathBuf>), ToolchainError> {
        let ws = sandbox::Workspace::new()?;
        ws.write("design.v", code)?;
        let code = code.to_string();
        let tb = tb.cloned();
        let cost = self.config.cost_model;
        let out = sandbox::with_timeout(timeout, move || mock::run_stage(stage, &code, tb.as_ref(), &cost))
            .ok_or(ToolchainError::Timeout { stage, seconds: timeout.as_secs_f64() })?;
        Ok((out, Some(ws.close()?)))
    }

    #[cfg(not(feature = "native"))]
    fn run_mock(&self, stage: Stage, code: &str, tb: Option<&Testbench>, _timeout: Duration) -> Result<(Outcome, Option<PathBuf>), ToolchainError> {
        Ok((mock::run_stage(stage, code, tb, &self.config.cost_model), None))
    }
}

/// Mock evaluation without workspaces or timeouts.
pub fn evaluate_in_memory(code: &str, testbench: Option<&Testbench>, cost: &CostModel) -> ToolchainReport {
    drive(testbench, |report, stage| {
        let tb = if stage == Stage::Simulate { testbench } else { None };
        let out = mock::run_stage(stage, code, tb, cost);
        let log = match &out {
            Outcome::Plain(o) => o.diagnostics.clone(),
            Outcome::Synth(s) => s.diagnostics.clone(),
        };
        *report.diagnostics.get_mut(stage) = log;
        Some(out)
    })
}

/// Stage sequencing shared by every evaluator. `step` runs one stage and
/// records its logs; `None` means the stage errored.
fn drive(testbench: Option<&Testbench>, mut step: impl FnMut(&mut ToolchainReport, Stage) -> Option<Outcome>) -> ToolchainReport {
    let mut report = ToolchainReport::default();
    match step(&mut report, Stage::Compile) {
        Some(Outcome::Plain(o)) if o.ok => report.compile_ok = true,
        _ => return report,
    }
    report.stage_reached = StageReached::Compiled;

    if testbench.is_none() {
        report.diagnostics.simulate = "no testbench supplied; functional check cannot pass".into();
        return report;
    }
    match step(&mut report, Stage::Simulate) {
        Some(Outcome::Plain(o)) if o.ok => report.func_ok = true,
        _ => return report,
    }
    report.stage_reached = StageReached::Functional;

    if let Some(Outcome::Synth(s)) = step(&mut report, Stage::Synthesize) {
        if s.ok {
            report.syn_ok = true;
            report.stage_reached = StageReached::Synthesized;
            if let Some(ppa) = s.ppa.filter(PpaMetrics::is_positive) {
                report.ppa = Some(ppa);
                report.stage_reached = StageReached::PpaMeasured;
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
enum Outcome {
    Plain(StageOutcome),
    Synth(SynthOutcome),
}

fn expect_plain(o: Outcome) -> Result<StageOutcome, ToolchainError> {
    match o {
        Outcome::Plain(p) => Ok(p),
        Outcome::Synth(_) => unreachable!("compile and simulate yield plain outcomes"),
    }
}

#[cfg(feature = "native")]
fn clock_now() -> Option<std::time::Instant> {
    Some(std::time::Instant::now())
}

#[cfg(not(feature = "native"))]
fn clock_now() -> Option<std::time::Instant> {
    None
}

fn elapsed_secs(start: Option<std::time::Instant>) -> f64 {
    start.map_or(0.0, |s| s.elapsed().as_secs_f64())
}
