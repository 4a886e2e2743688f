//! Data pipeline: ingest raw Verilog, add reasoning for cold-start records,
//! pair validated testbenches and annotate reference PPA.
//!
//! Every stage reads and writes line-delimited JSON with the fields `id`,
//! `instruction`, `code`, `reasoning`, `testbench_kind`, `testbench`,
//! `ppa_ref` and `validation_level`, as far as the stage has filled them.

mod generator;

use std::collections::HashSet;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use generator::{
    GeneratorError, HttpGenerator, OfflineGenerator, ReasoningStub, ScriptedGenerator, TestbenchStub, TextGenerator,
};

use crate::pool::WorkerPool;
use crate::response_format::{self, render_response};
use crate::toolchain::{Backend, EvalRequest, FailureKind, Testbench, TestbenchKind, Toolchain};
use crate::verilog_mini::{PpaMetrics, VectorTable};

/// Model-written testbenches check behaviour on sampled cases only.
pub const VALIDATION_LEVEL: &str = "statistical";
pub const MIN_CASES: usize = 3;
pub const MAX_CASES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseRecord {
    pub id: String,
    pub instruction: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColdStartRecord {
    pub id: String,
    pub instruction: String,
    pub reasoning: String,
    pub code: String,
}

impl ColdStartRecord {
    /// The record as a templated response.
    pub fn render(&self) -> String {
        render_response(&self.reasoning, &format!("```verilog\n{}\n```", self.code))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestbenchRecord {
    pub id: String,
    pub instruction: String,
    pub code: String,
    pub testbench_kind: TestbenchKind,
    pub testbench: String,
    pub validation_level: String,
}

impl TestbenchRecord {
    pub fn testbench(&self) -> Testbench {
        Testbench { kind: self.testbench_kind, body: self.testbench.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlRecord {
    pub id: String,
    pub instruction: String,
    /// Reference implementation the PPA was measured on.
    pub code: String,
    pub testbench_kind: TestbenchKind,
    pub testbench: String,
    pub ppa_ref: PpaMetrics,
    pub validation_level: String,
}

impl RlRecord {
    pub fn testbench(&self) -> Testbench {
        Testbench { kind: self.testbench_kind, body: self.testbench.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Io,
    MissingInstruction,
    SyntaxError,
    Duplicate,
    GeneratorFailed,
    FormatInvalid,
    TestbenchInvalid,
    CaseCount,
    TestbenchFailed,
    /// Synthesis and physical design are incompatible with the code.
    SynthesisFailed,
    NonPositivePpa,
    Timeout,
    ToolUnavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// Record id, or the source path for ingest failures.
    pub id: String,
    pub stage: String,
    pub reason: Reason,
    pub detail: String,
}

/// Output of one pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageResult<T> {
    pub records: Vec<T>,
    pub rejections: Vec<Rejection>,
    /// Set when the generator became unavailable; `records` then holds the
    /// results that precede the failure.
    pub aborted: Option<String>,
}

fn reject(id: &str, stage: &str, reason: Reason, detail: impl Into<String>) -> Rejection {
    Rejection { id: id.to_string(), stage: stage.to_string(), reason, detail: detail.into() }
}

/// Line endings unified, trailing whitespace removed, outer blank lines dropped.
pub fn normalize_code(code: &str) -> String {
    let lines: Vec<&str> = code.lines().map(str::trim_end).collect();
    lines.join("\n").trim_matches('\n').to_string()
}

/// Content hash of the normalized code.
pub fn record_id(code: &str) -> String {
    let digest = Sha256::digest(normalize_code(code).as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Leading `//` comment lines, joined.
fn leading_comment(code: &str) -> Option<String> {
    let lines: Vec<&str> = code
        .lines()
        .map(str::trim)
        .skip_while(|l| l.is_empty())
        .take_while(|l| l.starts_with("//"))
        .map(|l| l.trim_start_matches('/').trim())
        .filter(|l| !l.is_empty())
        .collect();
    (!lines.is_empty()).then(|| lines.join(" "))
}

fn collect_sources(sources: &[PathBuf], out: &mut Vec<PathBuf>, errors: &mut Vec<Rejection>) {
    for src in sources {
        if src.is_dir() {
            match std::fs::read_dir(src) {
                Ok(entries) => {
                    let mut children: Vec<PathBuf> = entries.filter_map(Result::ok).map(|e| e.path()).collect();
                    children.sort();
                    let nested: Vec<PathBuf> = children
                        .into_iter()
                        .filter(|p| p.is_dir() || p.extension().is_some_and(|e| e == "v" || e == "sv"))
                        .collect();
                    collect_sources(&nested, out, errors);
                }
                Err(e) => errors.push(reject(&src.display().to_string(), "ingest", Reason::Io, e.to_string())),
            }
        } else {
            out.push(src.clone());
        }
    }
}

/// Reads Verilog files (directories are searched for `.v`/`.sv`), keeps those
/// that compile, and drops exact duplicates. Instructions come from a sidecar
/// `<name>.txt`, else the file's leading comment, else `instructions` if given.
pub fn ingest_corpus(
    sources: &[PathBuf],
    instructions: Option<&dyn TextGenerator>,
    toolchain: &Toolchain,
    backend: Backend,
    pool: &WorkerPool,
) -> StageResult<BaseRecord> {
    let mut files = Vec::new();
    let mut rejections = Vec::new();
    collect_sources(sources, &mut files, &mut rejections);

    let checked = pool.map(&files, |_, path| -> Result<BaseRecord, Rejection> {
        let name = path.display().to_string();
        let code = std::fs::read_to_string(path).map_err(|e| reject(&name, "ingest", Reason::Io, e.to_string()))?;
        let compiled = toolchain.check_compile(&code, backend).map_err(|e| {
            let reason = if e.kind() == FailureKind::Timeout { Reason::Timeout } else { Reason::ToolUnavailable };
            reject(&name, "ingest", reason, e.to_string())
        })?;
        if !compiled.ok {
            return Err(reject(&name, "ingest", Reason::SyntaxError, compiled.diagnostics));
        }
        let sidecar = std::fs::read_to_string(path.with_extension("txt")).ok().map(|s| s.trim().to_string());
        let instruction = match sidecar.filter(|s| !s.is_empty()).or_else(|| leading_comment(&code)) {
            Some(i) => i,
            None => match instructions {
                Some(g) => g
                    .generate(&format!("Describe what this Verilog module does as a design task.\n```verilog\n{code}\n```"))
                    .map_err(|e| reject(&name, "ingest", Reason::GeneratorFailed, e.to_string()))?,
                None => return Err(reject(&name, "ingest", Reason::MissingInstruction, "no sidecar .txt or leading comment")),
            },
        };
        Ok(BaseRecord { id: record_id(&code), instruction, code: normalize_code(&code) })
    });

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (path, r) in files.iter().zip(checked) {
        match r {
            Ok(rec) if !seen.insert(rec.id.clone()) => {
                rejections.push(reject(&path.display().to_string(), "ingest", Reason::Duplicate, format!("same code as {}", rec.id)));
            }
            Ok(rec) => records.push(rec),
            Err(rej) => rejections.push(rej),
        }
    }
    StageResult { records, rejections, aborted: None }
}

/// Prompt asking for the reasoning behind a design.
pub fn reasoning_prompt(r: &BaseRecord) -> String {
    format!(
        "Explain step by step how to design the following module.\nTask: {}\n```verilog\n{}\n```",
        r.instruction, r.code
    )
}

/// Prompt asking for a vector-table testbench.
pub fn testbench_prompt(r: &BaseRecord) -> String {
    format!(
        "Write a testbench with {MIN_CASES} to {MAX_CASES} cases as a vector table for this module.\nTask: {}\n```verilog\n{}\n```",
        r.instruction, r.code
    )
}

/// Keeps results in order up to the first generator outage.
fn settle<T>(stage: &str, ids: &[&str], results: Vec<Result<Result<T, Rejection>, GeneratorError>>) -> StageResult<T> {
    let mut out = StageResult { records: Vec::new(), rejections: Vec::new(), aborted: None };
    for (id, r) in ids.iter().zip(results) {
        match r {
            Ok(Ok(rec)) => out.records.push(rec),
            Ok(Err(rej)) => out.rejections.push(rej),
            Err(e) => {
                out.aborted = Some(format!("{stage} stopped at record {id}: {e}"));
                break;
            }
        }
    }
    out
}

/// Asks `gen` for a reasoning chain per record. A response that does not
/// render to a well-formed template is retried once, then dropped.
pub fn generate_cold_start(records: &[BaseRecord], gen: &dyn TextGenerator, pool: &WorkerPool) -> StageResult<ColdStartRecord> {
    let results = pool.map(records, |_, r| {
        let prompt = reasoning_prompt(r);
        let mut last = (Reason::FormatInvalid, String::new());
        for _ in 0..2 {
            let reasoning = match gen.generate(&prompt) {
                Ok(t) => t.trim().to_string(),
                Err(GeneratorError::Failed(e)) => {
                    last = (Reason::GeneratorFailed, e);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let rec = ColdStartRecord { id: r.id.clone(), instruction: r.instruction.clone(), reasoning, code: r.code.clone() };
            if response_format::parse_response(&rec.render()).format_ok {
                return Ok(Ok(rec));
            }
            last = (Reason::FormatInvalid, "rendered response fails the format check".into());
        }
        Ok(Err(reject(&r.id, "coldstart", last.0, last.1)))
    });
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    settle("coldstart", &ids, results)
}

/// Interprets generated text as a testbench: a vector table if it parses as
/// one, otherwise Verilog source (taken from a fenced block when present).
pub fn parse_generated_testbench(text: &str) -> Result<Testbench, String> {
    let body = response_format::find_code(text).unwrap_or_else(|| text.trim().to_string());
    match VectorTable::parse(&body) {
        Ok(t) => Ok(Testbench::vector_table(&t)),
        Err(_) if body.contains("module") => Ok(Testbench::verilog(body)),
        Err(e) => Err(format!("response is neither a vector table nor Verilog: {e}")),
    }
}

/// Generates a testbench per record and keeps the pairs whose code passes it.
pub fn pair_testbenches(
    records: &[BaseRecord],
    gen: &dyn TextGenerator,
    toolchain: &Toolchain,
    backend: Backend,
    pool: &WorkerPool,
) -> StageResult<TestbenchRecord> {
    let results = pool.map(records, |_, r| {
        let text = match gen.generate(&testbench_prompt(r)) {
            Ok(t) => t,
            Err(GeneratorError::Failed(e)) => return Ok(Err(reject(&r.id, "testbench", Reason::GeneratorFailed, e))),
            Err(e) => return Err(e),
        };
        let tb = match parse_generated_testbench(&text) {
            Ok(tb) => tb,
            Err(e) => return Ok(Err(reject(&r.id, "testbench", Reason::TestbenchInvalid, e))),
        };
        let cases = tb.case_count().unwrap_or(0);
        if !(MIN_CASES..=MAX_CASES).contains(&cases) {
            return Ok(Err(reject(&r.id, "testbench", Reason::CaseCount, format!("{cases} cases, need {MIN_CASES}..={MAX_CASES}"))));
        }
        let outcome = toolchain.run_testbench(&r.code, &tb, backend);
        Ok(match outcome {
            Ok(o) if o.ok => Ok(TestbenchRecord {
                id: r.id.clone(),
                instruction: r.instruction.clone(),
                code: r.code.clone(),
                testbench_kind: tb.kind,
                testbench: tb.body,
                validation_level: VALIDATION_LEVEL.into(),
            }),
            Ok(o) => Err(reject(&r.id, "testbench", Reason::TestbenchFailed, o.diagnostics)),
            Err(e) => Err(reject(&r.id, "testbench", reason_for(e.kind()), e.to_string())),
        })
    });
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    settle("testbench", &ids, results)
}

fn reason_for(kind: FailureKind) -> Reason {
    match kind {
        FailureKind::Timeout => Reason::Timeout,
        FailureKind::ToolUnavailable => Reason::ToolUnavailable,
        FailureKind::ReportParse | FailureKind::Io => Reason::SynthesisFailed,
    }
}

/// Runs each record through the full toolchain and keeps those with strictly
/// positive PPA.
pub fn annotate_ppa(records: &[TestbenchRecord], toolchain: &Toolchain, backend: Backend, pool: &WorkerPool) -> StageResult<RlRecord> {
    let results = pool.map(records, |_, r| -> Result<RlRecord, Rejection> {
        let mut req = EvalRequest::new(r.code.clone(), Some(r.testbench()));
        req.backend = backend;
        req.stage_timeouts = toolchain.config.timeouts;
        let report = toolchain.evaluate(&req);
        let fail = |reason: Reason, detail: String| reject(&r.id, "ppa", reason, detail);
        if let Some(kind) = report.failure {
            let log = [&report.diagnostics.compile, &report.diagnostics.simulate, &report.diagnostics.synthesize]
                .into_iter()
                .find(|l| l.starts_with("TIMEOUT") || !l.is_empty())
                .cloned()
                .unwrap_or_default();
            return Err(fail(reason_for(kind), log));
        }
        if !report.func_ok {
            return Err(fail(Reason::TestbenchFailed, report.diagnostics.simulate));
        }
        if !report.syn_ok {
            return Err(fail(
                Reason::SynthesisFailed,
                format!("incompatibility of synthesis and physical design: {}", report.diagnostics.synthesize),
            ));
        }
        let Some(ppa) = report.ppa.filter(PpaMetrics::is_positive) else {
            return Err(fail(Reason::NonPositivePpa, "incompatibility of synthesis and physical design: PPA not strictly positive".into()));
        };
        Ok(RlRecord {
            id: r.id.clone(),
            instruction: r.instruction.clone(),
            code: r.code.clone(),
            testbench_kind: r.testbench_kind,
            testbench: r.testbench.clone(),
            ppa_ref: ppa,
            validation_level: VALIDATION_LEVEL.into(),
        })
    });
    let mut out = StageResult { records: Vec::new(), rejections: Vec::new(), aborted: None };
    for r in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(rej) => out.rejections.push(rej),
        }
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_jsonl_to(&mut w, items)?;
    w.flush()
}

pub fn write_jsonl_to<T: Serialize>(w: &mut impl Write, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(v);
    }
    Ok(out)
}
