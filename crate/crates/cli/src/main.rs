//! `chipforge` command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use chipforge::config::{AppConfig, ConfigError};
use chipforge::dataset::{self, BaseRecord, Reason, Rejection, StageResult, TestbenchRecord};
use chipforge::grpo::{self, Task};
use chipforge::metrics::{self, BenchmarkTable, TIE_TOLERANCE};
use chipforge::pool::WorkerPool;
use chipforge::reward::score_response;
use chipforge::toolchain::{Backend, EvalRequest, FailureKind, Testbench, TestbenchKind, Toolchain, ToolchainReport};
use chipforge::verilog_mini::VectorTable;
use chipforge::PpaMetrics;

#[derive(Parser, Debug)]
#[command(name = "chipforge", version, about = "Hierarchical RTL rewards, toy GRPO training and benchmark analytics")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for training and stub generators.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Toolchain backend: mock or external.
    #[arg(long, global = true)]
    backend: Option<Backend>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score one templated response.
    Score(ScoreArgs),
    /// Evaluate a task file concurrently, one report per line.
    EvalBatch(EvalBatchArgs),
    /// Train the toy policy on a task suite.
    Train(TrainArgs),
    /// Dataset pipeline stages.
    #[command(subcommand)]
    Data(DataCommand),
    /// Benchmark analytics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    response: PathBuf,
    /// Vector table or Verilog testbench.
    #[arg(long)]
    testbench: Option<PathBuf>,
    /// Reference PPA as `delay,area,power`.
    #[arg(long, value_parser = parse_ppa)]
    ref_ppa: Option<PpaMetrics>,
}

#[derive(Args, Debug)]
struct EvalBatchArgs {
    /// JSONL with `code` and optional `id`, `testbench_kind`, `testbench`, `ppa_ref`.
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSONL task suite; the bundled demo suite when omitted.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Curve data: `step mean_reward mean_kl best_candidate_prob` per line.
    #[arg(long)]
    out_curves: PathBuf,
    /// Also write a gnuplot script for the curves.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
    /// Overrides `grpo.steps`.
    #[arg(long)]
    steps: Option<usize>,
    /// Overrides `grpo.beta` (KL coefficient).
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum DataCommand {
    /// Compile-check Verilog files into base records.
    Ingest {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        log: RejectionLog,
    },
    /// Add reasoning chains to base records.
    Coldstart {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        log: RejectionLog,
    },
    /// Generate and validate a testbench per base record.
    Testbench {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        log: RejectionLog,
    },
    /// Measure reference PPA for testbench records.
    Ppa {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        log: RejectionLog,
    },
}

#[derive(Args, Debug)]
struct RejectionLog {
    /// Rejection log (JSONL).
    #[arg(long)]
    rejections: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum MetricsCommand {
    /// pass@k for n samples with c correct.
    Passk {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        c: u64,
        #[arg(long)]
        k: u64,
    },
    /// Win/tie/loss of a model's best designs against the references.
    Wtl(TableArgs),
    /// EDAP reduction of a model's passing designs.
    EdapDrop(TableArgs),
}

#[derive(Args, Debug)]
struct TableArgs {
    /// Benchmark table (TSV); the bundled table when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value = "proposed")]
    model: String,
    #[arg(long, default_value_t = TIE_TOLERANCE)]
    tolerance: f64,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Unavailable(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Config(_) => 2,
            Self::Unavailable(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Config(m) | Self::Unavailable(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn parse_ppa(s: &str) -> Result<PpaMetrics, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [d, a, p] => Ok(PpaMetrics::new(d, a, p)),
        _ => Err("expected delay,area,power".into()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    dataset::read_jsonl(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Outcome {
    dataset::write_jsonl(path, items).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}

/// Merged settings: config file, environment, then command-line flags.
struct Context {
    config: AppConfig,
    backend: Backend,
    pool: WorkerPool,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, Failure> {
        let mut config = AppConfig::load(cli.config.as_deref())?;
        if let Some(s) = cli.seed {
            config.seed = Some(s);
        }
        if let Some(b) = cli.backend {
            config.toolchain.backend = b;
        }
        if let Some(j) = cli.jobs {
            config.toolchain.jobs = j;
        }
        config.grpo.seed = config.seed();
        let backend = config.toolchain.backend;
        let pool = WorkerPool::new(config.toolchain.jobs);
        Ok(Self { config, backend, pool })
    }

    fn toolchain(&self) -> Toolchain {
        Toolchain::new(self.config.toolchain.clone())
    }
}

/// Vector table when the text parses as one, Verilog otherwise.
fn load_testbench(path: &Path) -> Result<Testbench, Failure> {
    let body = read(path)?;
    Ok(match VectorTable::parse(&body) {
        Ok(_) => Testbench { kind: TestbenchKind::VectorTable, body },
        Err(e) if !body.contains("module") => return Err(usage(format!("{}: not a vector table or Verilog: {e}", path.display()))),
        Err(_) => Testbench::verilog(body),
    })
}

fn unavailable(reports: &[&ToolchainReport]) -> Outcome {
    match reports.iter().find(|r| r.failure == Some(FailureKind::ToolUnavailable)) {
        Some(r) => {
            let log = [&r.diagnostics.compile, &r.diagnostics.simulate, &r.diagnostics.synthesize]
                .into_iter()
                .find(|l| !l.is_empty())
                .cloned()
                .unwrap_or_default();
            Err(Failure::Unavailable(format!("toolchain unavailable: {log}")))
        }
        None => Ok(()),
    }
}

fn score(ctx: &Context, args: &ScoreArgs) -> Outcome {
    let raw = read(&args.response)?;
    let tb = args.testbench.as_deref().map(load_testbench).transpose()?;
    let scored = score_response(&raw, tb.as_ref(), args.ref_ppa.as_ref(), &ctx.toolchain(), ctx.backend, &ctx.config.reward);
    print(&format!("{}\n", serde_json::to_string_pretty(&scored.reward).expect("breakdown serializes")));
    unavailable(&[&scored.report])
}

#[derive(Debug, Deserialize)]
struct BatchTask {
    #[serde(default)]
    id: Option<String>,
    code: String,
    #[serde(default)]
    testbench_kind: Option<TestbenchKind>,
    #[serde(default)]
    testbench: Option<String>,
    #[serde(default)]
    ppa_ref: Option<PpaMetrics>,
}

#[derive(Serialize)]
struct BatchLine<'a> {
    id: &'a str,
    #[serde(flatten)]
    report: &'a ToolchainReport,
}

fn eval_batch(ctx: &Context, args: &EvalBatchArgs) -> Outcome {
    let tasks: Vec<BatchTask> = read_jsonl(&args.tasks)?;
    let reqs: Vec<EvalRequest> = tasks
        .iter()
        .map(|t| {
            let tb = t.testbench.as_ref().map(|body| Testbench { kind: t.testbench_kind.unwrap_or(TestbenchKind::VectorTable), body: body.clone() });
            let mut req = EvalRequest::new(t.code.clone(), tb);
            req.reference_ppa = t.ppa_ref;
            req.backend = ctx.backend;
            req.stage_timeouts = ctx.config.toolchain.timeouts;
            req
        })
        .collect();
    let reports = ctx.toolchain().evaluate_batch(&reqs, &ctx.pool);
    let ids: Vec<String> = tasks.iter().enumerate().map(|(i, t)| t.id.clone().unwrap_or_else(|| i.to_string())).collect();
    let lines: Vec<BatchLine> = ids.iter().zip(&reports).map(|(id, report)| BatchLine { id, report }).collect();
    write_jsonl(&args.out, &lines)?;
    let passed = reports.iter().filter(|r| r.ppa.is_some()).count();
    eprintln!("evaluated {} tasks, {passed} reached PPA", reports.len());
    unavailable(&reports.iter().collect::<Vec<_>>())
}

#[derive(Serialize)]
struct TrainSummary {
    steps: usize,
    tasks: Vec<TaskSummary>,
    first_window_reward: f64,
    last_window_reward: f64,
}

#[derive(Serialize)]
struct TaskSummary {
    id: String,
    best_candidate: usize,
    best_prob: f64,
    total_variation_from_reference: f64,
}

fn train(ctx: &Context, args: &TrainArgs) -> Outcome {
    let tasks: Vec<Task> = match &args.suite {
        Some(p) => read_jsonl(p)?,
        None => grpo::demo_suite(),
    };
    let mut cfg = ctx.config.grpo;
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(b) = args.beta {
        cfg.beta = b;
    }
    cfg.validate().map_err(Failure::Config)?;
    let tc = ctx.toolchain();
    if ctx.backend == Backend::External {
        if let Err(e) = tc.check_compile("module probe(input a, output y); assign y = a; endmodule", Backend::External) {
            if e.kind() == FailureKind::ToolUnavailable {
                return Err(Failure::Unavailable(e.to_string()));
            }
        }
    }
    let reward = grpo::toolchain_reward(&tc, ctx.backend, &ctx.config.reward);
    let result = grpo::train(&tasks, reward, &cfg, &ctx.pool).map_err(usage)?;

    let mut curves = String::from("# step mean_reward mean_kl best_candidate_prob\n");
    for p in &result.curve {
        curves.push_str(&format!("{} {:.6} {:.6e} {:.6}\n", p.step, p.mean_reward, p.mean_kl, p.best_candidate_prob));
    }
    write_file(&args.out_curves, &curves)?;
    if let Some(g) = &args.gnuplot {
        write_file(g, &grpo::gnuplot_script(&args.out_curves.display().to_string()))?;
    }
    let rewards: Vec<f64> = result.curve.iter().map(|p| p.mean_reward).collect();
    let probs = result.best_probs();
    let summary = TrainSummary {
        steps: cfg.steps,
        tasks: tasks
            .iter()
            .enumerate()
            .map(|(i, t)| TaskSummary {
                id: t.id.clone(),
                best_candidate: result.best[i],
                best_prob: probs[i],
                total_variation_from_reference: result.policy.total_variation(&result.reference, i),
            })
            .collect(),
        first_window_reward: grpo::window_mean(&rewards, 0.1, false),
        last_window_reward: grpo::window_mean(&rewards, 0.1, true),
    };
    print(&format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary serializes")));
    Ok(())
}

fn finish<T: Serialize>(out: &Path, log: &RejectionLog, stage: StageResult<T>) -> Outcome {
    write_jsonl(out, &stage.records)?;
    if let Some(p) = &log.rejections {
        write_jsonl(p, &stage.rejections)?;
    }
    for r in &stage.rejections {
        eprintln!("rejected {} ({:?}): {}", r.id, r.reason, r.detail.lines().next().unwrap_or(""));
    }
    eprintln!("kept {}, rejected {}", stage.records.len(), stage.rejections.len());
    if let Some(msg) = stage.aborted {
        return Err(Failure::Unavailable(format!("{msg}; partial results written to {}", out.display())));
    }
    if let Some(r) = stage.rejections.iter().find(|r: &&Rejection| r.reason == Reason::ToolUnavailable) {
        return Err(Failure::Unavailable(r.detail.clone()));
    }
    Ok(())
}

fn data(ctx: &Context, cmd: &DataCommand) -> Outcome {
    let tc = ctx.toolchain();
    let gen = &ctx.config.generator;
    match cmd {
        DataCommand::Ingest { sources, out, log } => {
            let instructions = gen.reasoning();
            let instructions = (gen.kind == chipforge::config::GeneratorKind::Http).then_some(instructions.as_ref());
            finish(out, log, dataset::ingest_corpus(sources, instructions, &tc, ctx.backend, &ctx.pool))
        }
        DataCommand::Coldstart { input, out, log } => {
            let recs: Vec<BaseRecord> = read_jsonl(input)?;
            finish(out, log, dataset::generate_cold_start(&recs, gen.reasoning().as_ref(), &ctx.pool))
        }
        DataCommand::Testbench { input, out, log } => {
            let recs: Vec<BaseRecord> = read_jsonl(input)?;
            let g = gen.testbench(ctx.config.seed());
            finish(out, log, dataset::pair_testbenches(&recs, g.as_ref(), &tc, ctx.backend, &ctx.pool))
        }
        DataCommand::Ppa { input, out, log } => {
            let recs: Vec<TestbenchRecord> = read_jsonl(input)?;
            finish(out, log, dataset::annotate_ppa(&recs, &tc, ctx.backend, &ctx.pool))
        }
    }
}

fn load_table(args: &TableArgs) -> Result<Vec<metrics::DesignResult>, Failure> {
    let table = match &args.table {
        Some(p) => BenchmarkTable::parse(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => BenchmarkTable::bundled(),
    };
    table.design_results(&args.model).map_err(usage)
}

fn metrics_cmd(cmd: &MetricsCommand) -> Outcome {
    match cmd {
        MetricsCommand::Passk { n, c, k } => {
            let p = metrics::pass_at_k(*n, *c, *k).map_err(usage)?;
            print(&format!("{p:.6}\n"));
        }
        MetricsCommand::Wtl(args) => {
            let wtl = metrics::win_tie_loss(&load_table(args)?, args.tolerance).map_err(usage)?;
            if args.json {
                print(&format!("{}\n", serde_json::to_string_pretty(&wtl).expect("outcome serializes")));
            } else {
                print(&metrics::format_wtl(&wtl));
            }
        }
        MetricsCommand::EdapDrop(args) => {
            let r = metrics::edap_drop_report(&load_table(args)?, args.tolerance).map_err(usage)?;
            if args.json {
                print(&format!("{}\n", serde_json::to_string_pretty(&r).expect("report serializes")));
            } else {
                print(&format!(
                    "edap_drop {:.3}%  (mean over {} passing designs)\n\
                     ratio_of_sums {:.3}%\ngeometric_mean {:.3}%\nwinners_mean {:.3}%  (mean over {} winning designs)\n",
                    r.arithmetic_mean, r.designs, r.ratio_of_sums, r.geometric_mean, r.winners_mean, r.winners
                ));
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    if let Command::Metrics(m) = &cli.command {
        return metrics_cmd(m);
    }
    let ctx = Context::new(cli)?;
    log::debug!("backend {:?}, {} workers", ctx.backend, ctx.pool.jobs());
    match &cli.command {
        Command::Score(a) => score(&ctx, a),
        Command::EvalBatch(a) => eval_batch(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Data(d) => data(&ctx, d),
        Command::Metrics(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
