//! Browser bindings: score a response, run the toy GRPO trainer, compute pass@k.
//!
//! Each export returns a JSON string; errors come back as thrown strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use chipforge::grpo::{self, GrpoConfig};
use chipforge::metrics;
use chipforge::pool::WorkerPool;
use chipforge::reward::{score_response, GatingMode, RewardConfig};
use chipforge::toolchain::{Backend, Testbench, TestbenchKind, Toolchain};
use chipforge::PpaMetrics;

#[derive(Serialize)]
struct Scored {
    format_ok: bool,
    code: Option<String>,
    stage_reached: String,
    ppa: Option<PpaMetrics>,
    ppa_score: Option<f64>,
    reward: chipforge::reward::RewardBreakdown,
    diagnostics: chipforge::toolchain::StageLogs,
}

fn parse_ref(text: &str) -> Result<Option<PpaMetrics>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    let v: Vec<f64> = text
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", x.trim())))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [d, a, p] => Ok(Some(PpaMetrics::new(d, a, p))),
        _ => Err("reference PPA must be delay,area,power".into()),
    }
}

/// Scores a templated response against a vector-table testbench.
pub fn score(response: &str, testbench: &str, reference: &str, gating_mode: &str) -> Result<String, String> {
    let config = RewardConfig { gating_mode: gating_mode.parse::<GatingMode>()?, ..Default::default() };
    let reference = parse_ref(reference)?;
    let tb = (!testbench.trim().is_empty()).then(|| Testbench { kind: TestbenchKind::VectorTable, body: testbench.to_string() });
    let s = score_response(response, tb.as_ref(), reference.as_ref(), &Toolchain::default(), Backend::Mock, &config);
    let out = Scored {
        format_ok: s.parsed.format_ok,
        code: s.parsed.code.clone(),
        stage_reached: format!("{:?}", s.report.stage_reached),
        ppa: s.report.ppa,
        ppa_score: s.report.ppa.and_then(|m| chipforge::reward::ppa_score(&m).ok()),
        reward: s.reward,
        diagnostics: s.report.diagnostics,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Trained {
    tasks: Vec<String>,
    best_probs: Vec<f64>,
    final_probs: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
    curve: Vec<grpo::CurvePoint>,
}

/// Trains on the bundled five-task suite.
pub fn train(steps: usize, beta: f64, seed: u64) -> Result<String, String> {
    let tasks = grpo::demo_suite();
    let cfg = GrpoConfig { steps, beta, seed, ..Default::default() };
    let tc = Toolchain::default();
    let rc = RewardConfig::default();
    let r = grpo::train(&tasks, grpo::toolchain_reward(&tc, Backend::Mock, &rc), &cfg, &WorkerPool::new(1))?;
    let out = Trained {
        tasks: tasks.iter().map(|t| t.id.clone()).collect(),
        best_probs: r.best_probs(),
        final_probs: (0..tasks.len()).map(|t| r.policy.probs(t)).collect(),
        rewards: r.rewards,
        curve: r.curve,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Candidate responses of the bundled suite, for the page's examples.
pub fn suite() -> Result<String, String> {
    serde_json::to_string(&grpo::demo_suite()).map_err(|e| e.to_string())
}

pub fn pass_at_k(n: u32, c: u32, k: u32) -> Result<String, String> {
    let p = metrics::pass_at_k(n.into(), c.into(), k.into()).map_err(|e| e.to_string())?;
    // the exact ratio is dropped once C(n, k) leaves u128
    let ratio = metrics::pass_at_k_ratio(n.into(), c.into(), k.into()).ok();
    Ok(serde_json::json!({
        "value": p,
        "numerator": ratio.map(|r| r.0.to_string()),
        "denominator": ratio.map(|r| r.1.to_string()),
    })
    .to_string())
}

#[wasm_bindgen(js_name = scoreResponse)]
pub fn score_response_js(response: &str, testbench: &str, reference: &str, gating_mode: &str) -> Result<String, JsValue> {
    score(response, testbench, reference, gating_mode).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = trainDemo)]
pub fn train_js(steps: usize, beta: f64, seed: u32) -> Result<String, JsValue> {
    train(steps, beta, seed.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = demoSuite)]
pub fn suite_js() -> Result<String, JsValue> {
    suite().map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = passAtK)]
pub fn pass_at_k_js(n: u32, c: u32, k: u32) -> Result<String, JsValue> {
    pass_at_k(n, c, k).map_err(|e| JsValue::from_str(&e))
}
