//! Five-component hierarchical reward.
//!
//! `R = w_format·R_format + w_comp·R_comp + w_func·R_func + w_syn·R_syn + w_ppa·R_ppa`
//! where each stage only counts when every stage below it succeeded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response_format::{self, FormatConfig, ParsedResponse};
use crate::toolchain::{Backend, EvalRequest, StageReached, Testbench, Toolchain, ToolchainReport};
use crate::verilog_mini::PpaMetrics;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("PPA metric {field} must be positive, got {value}")]
    NonPositiveMetric { field: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub w_format: f64,
    pub w_comp: f64,
    pub w_func: f64,
    pub w_syn: f64,
    pub w_ppa: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { w_format: 0.1, w_comp: 0.2, w_func: 1.0, w_syn: 0.1, w_ppa: 1.0 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("w_format", self.w_format),
            ("w_comp", self.w_comp),
            ("w_func", self.w_func),
            ("w_syn", self.w_syn),
            ("w_ppa", self.w_ppa),
        ];
        match all.iter().find(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            Some((name, w)) => Err(format!("reward weight {name} must be a non-negative number, got {w}")),
            None => Ok(()),
        }
    }
}

/// Which stages a failed format check blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatingMode {
    /// format → compile → functional → synthesis → PPA, each gating the next.
    #[default]
    ProseStrict,
    /// Format is scored on its own; the chain starts at compile.
    EquationOnly,
}

impl std::str::FromStr for GatingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prose_strict" => Ok(Self::ProseStrict),
            "equation_only" => Ok(Self::EquationOnly),
            other => Err(format!("unknown gating mode `{other}` (expected prose_strict or equation_only)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub gating_mode: GatingMode,
    /// Upper bound applied to `r_ppa`; none by default.
    pub ppa_cap: Option<f64>,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.weights.validate()?;
        match self.ppa_cap {
            Some(c) if !(c.is_finite() && c > 0.0) => Err(format!("reward.ppa_cap must be positive, got {c}")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: u8,
    pub r_comp: u8,
    pub r_func: u8,
    pub r_syn: u8,
    pub r_ppa: f64,
    pub total: f64,
    pub gating_mode: GatingMode,
    pub stage_reached: StageReached,
}

impl RewardBreakdown {
    /// Checks the gating implications and the weighted total.
    pub fn check_invariants(&self, weights: &RewardWeights) -> Result<(), String> {
        if self.r_comp == 0 && self.r_func != 0 {
            return Err("r_func without r_comp".into());
        }
        if self.r_func == 0 && self.r_syn != 0 {
            return Err("r_syn without r_func".into());
        }
        if self.r_syn == 0 && self.r_ppa != 0.0 {
            return Err("r_ppa without r_syn".into());
        }
        if self.gating_mode == GatingMode::ProseStrict && self.r_format == 0 && self.r_comp != 0 {
            return Err("r_comp without r_format under prose_strict".into());
        }
        if !(self.r_ppa >= 0.0) {
            return Err(format!("negative r_ppa {}", self.r_ppa));
        }
        let want = weighted_total(weights, self);
        if self.total != want {
            return Err(format!("total {} differs from weighted sum {want}", self.total));
        }
        Ok(())
    }
}

/// `1 / (power × area × delay)`.
pub fn ppa_score(m: &PpaMetrics) -> Result<f64, RewardError> {
    for (field, value) in [("delay_ns", m.delay_ns), ("area_um2", m.area_um2), ("power_w", m.power_w)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(RewardError::NonPositiveMetric { field, value });
        }
    }
    Ok(1.0 / (m.power_w * m.area_um2 * m.delay_ns))
}

/// `ppa_score(gen) / ppa_score(ref)`, or 0 without a usable reference.
pub fn ppa_reward(gen: &PpaMetrics, reference: Option<&PpaMetrics>) -> Result<f64, RewardError> {
    let g = ppa_score(gen)?;
    match reference.map(ppa_score) {
        Some(Ok(r)) if r.is_finite() && r > 0.0 => Ok(g / r),
        _ => Ok(0.0),
    }
}

pub fn hierarchical_reward(
    format_ok: bool,
    report: &ToolchainReport,
    reference: Option<&PpaMetrics>,
    weights: &RewardWeights,
    mode: GatingMode,
) -> RewardBreakdown {
    let config = RewardConfig { weights: *weights, gating_mode: mode, ppa_cap: None };
    hierarchical_reward_with(format_ok, report, reference, &config)
}

pub fn hierarchical_reward_with(
    format_ok: bool,
    report: &ToolchainReport,
    reference: Option<&PpaMetrics>,
    config: &RewardConfig,
) -> RewardBreakdown {
    let r_format = u8::from(format_ok);
    let comp = report.compile_ok && (format_ok || config.gating_mode == GatingMode::EquationOnly);
    let func = comp && report.func_ok;
    let syn = func && report.syn_ok;
    let mut r_ppa = match (&report.ppa, syn) {
        (Some(gen), true) => ppa_reward(gen, reference).unwrap_or(0.0),
        _ => 0.0,
    };
    if let Some(cap) = config.ppa_cap {
        r_ppa = r_ppa.min(cap);
    }
    let mut b = RewardBreakdown {
        r_format,
        r_comp: u8::from(comp),
        r_func: u8::from(func),
        r_syn: u8::from(syn),
        r_ppa,
        total: 0.0,
        gating_mode: config.gating_mode,
        stage_reached: report.stage_reached,
    };
    b.total = weighted_total(&config.weights, &b);
    b
}

/// Weighted sum with compensated (Neumaier) summation, so e.g. the default
/// weights on a perfect score give exactly 2.4.
fn weighted_total(w: &RewardWeights, b: &RewardBreakdown) -> f64 {
    let terms = [
        w.w_format * f64::from(b.r_format),
        w.w_comp * f64::from(b.r_comp),
        w.w_func * f64::from(b.r_func),
        w.w_syn * f64::from(b.r_syn),
        w.w_ppa * b.r_ppa,
    ];
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Everything produced while scoring one response.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredResponse {
    pub parsed: ParsedResponse,
    pub report: ToolchainReport,
    pub reward: RewardBreakdown,
}

/// Parses a templated response, runs its code through the toolchain and
/// applies the reward. Under `equation_only` code is taken from the raw text
/// when the template check fails.
pub fn score_response(
    raw: &str,
    testbench: Option<&Testbench>,
    reference: Option<&PpaMetrics>,
    toolchain: &Toolchain,
    backend: Backend,
    config: &RewardConfig,
) -> ScoredResponse {
    let format_config = FormatConfig {
        lenient_extraction: config.gating_mode == GatingMode::EquationOnly,
        ..FormatConfig::default()
    };
    let parsed = response_format::parse_response_with(raw, &format_config);
    let report = match &parsed.code {
        Some(code) => {
            let mut req = EvalRequest::new(code.clone(), testbench.cloned());
            req.reference_ppa = reference.copied();
            req.backend = backend;
            req.stage_timeouts = toolchain.config.timeouts;
            toolchain.evaluate(&req)
        }
        None => ToolchainReport::default(),
    };
    let reward = hierarchical_reward_with(parsed.format_ok, &report, reference, config);
    ScoredResponse { parsed, report, reward }
}
