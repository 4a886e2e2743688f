//! Application configuration: a TOML file with `CHIPFORGE_*` environment
//! overrides, validated as a whole on load.
//!
//! An override names a key path in upper case with `_` between segments,
//! e.g. `CHIPFORGE_REWARD_WEIGHTS_W_PPA=0.5` or `CHIPFORGE_TOOLCHAIN_TIMEOUTS_SIMULATE_S=60`.
//! Variables that name no key are ignored.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::dataset::{HttpGenerator, ReasoningStub, TestbenchStub, TextGenerator};
use crate::grpo::GrpoConfig;
use crate::reward::RewardConfig;
use crate::toolchain::ToolchainConfig;

pub const ENV_PREFIX: &str = "CHIPFORGE_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Deterministic local generators derived from the code itself.
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub http: HttpGenerator,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.kind == GeneratorKind::Http && self.http.endpoint.is_empty() {
            return Err("generator.http.endpoint must be set when generator.kind = \"http\"".into());
        }
        if !(self.http.timeout_s.is_finite() && self.http.timeout_s > 0.0) {
            return Err(format!("generator.http.timeout_s must be positive, got {}", self.http.timeout_s));
        }
        Ok(())
    }

    /// Generator for reasoning chains.
    pub fn reasoning(&self) -> Box<dyn TextGenerator> {
        match self.kind {
            GeneratorKind::Stub => Box::new(ReasoningStub),
            GeneratorKind::Http => Box::new(self.http.clone()),
        }
    }

    /// Generator for testbenches.
    pub fn testbench(&self, seed: u64) -> Box<dyn TextGenerator> {
        match self.kind {
            GeneratorKind::Stub => Box::new(TestbenchStub { seed }),
            GeneratorKind::Http => Box::new(self.http.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    /// Overrides `grpo.seed` and seeds the stub generators.
    pub seed: Option<u64>,
    pub reward: RewardConfig,
    pub grpo: GrpoConfig,
    pub toolchain: ToolchainConfig,
    pub generator: GeneratorConfig,
}

impl AppConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.grpo.seed)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_env(text, std::env::vars())
    }

    /// Loads `path` (or the defaults when `None`) and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Io { path: p.display().to_string(), source: e })?,
            None => String::new(),
        };
        Self::from_toml(&text)
    }

    pub fn from_toml_with_env(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let file: Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let file = serde_json::to_value(file).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let defaults = serde_json::to_value(Self::default()).expect("defaults serialize");
        let mut merged = defaults.clone();
        merge(&mut merged, file);
        let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (key, raw) in vars {
            let path = key[ENV_PREFIX.len()..].to_ascii_lowercase();
            if let Some(segments) = resolve(&defaults, &path) {
                let value = env_value(&raw, lookup(&defaults, &segments));
                set(&mut merged, &segments, value);
            }
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.reward.validate()?;
        self.grpo.validate()?;
        self.toolchain.timeouts.validate()?;
        let patterns = &self.toolchain.external.patterns;
        for p in patterns.delay_ns.iter().chain(&patterns.area_um2).chain(&patterns.power_w) {
            regex::Regex::new(p).map_err(|e| format!("toolchain.external.patterns: {e}"))?;
        }
        self.generator.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Splits an underscore-joined path against the key tree of `tree`.
fn resolve(tree: &serde_json::Value, path: &str) -> Option<Vec<String>> {
    let obj = tree.as_object()?;
    if let Some(v) = obj.get(path) {
        return (!v.is_object()).then(|| vec![path.to_string()]);
    }
    obj.iter().filter(|(_, v)| v.is_object()).find_map(|(k, v)| {
        let rest = path.strip_prefix(k.as_str())?.strip_prefix('_')?;
        let mut tail = resolve(v, rest)?;
        tail.insert(0, k.clone());
        Some(tail)
    })
}

fn lookup<'a>(tree: &'a serde_json::Value, segments: &[String]) -> Option<&'a serde_json::Value> {
    segments.iter().try_fold(tree, |t, s| t.get(s))
}

fn set(tree: &mut serde_json::Value, segments: &[String], value: serde_json::Value) {
    let mut t = tree;
    for s in segments {
        t = &mut t[s.as_str()];
    }
    *t = value;
}

/// Strings stay strings; everything else is read as a TOML value.
fn env_value(raw: &str, default: Option<&serde_json::Value>) -> serde_json::Value {
    if matches!(default, Some(serde_json::Value::String(_))) {
        return serde_json::Value::String(raw.to_string());
    }
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|t| serde_json::to_value(&t["v"]).ok())
        .unwrap_or_else(|| serde_json::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::GatingMode;
    use crate::toolchain::Backend;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = AppConfig::from_toml_with_env("", env(&[])).unwrap();
        assert_eq!(c, AppConfig::default());
        assert_eq!(c.seed(), 7);
    }

    #[test]
    fn file_values_are_applied() {
        let text = r#"
seed = 11
[reward]
gating_mode = "equation_only"
[reward.weights]
w_ppa = 0.5
[grpo]
group_size = 6
[toolchain]
backend = "external"
[toolchain.timeouts]
simulate_s = 5.0
"#;
        let c = AppConfig::from_toml_with_env(text, env(&[])).unwrap();
        assert_eq!(c.seed(), 11);
        assert_eq!(c.reward.gating_mode, GatingMode::EquationOnly);
        assert_eq!(c.reward.weights.w_ppa, 0.5);
        assert_eq!(c.reward.weights.w_func, 1.0);
        assert_eq!(c.grpo.group_size, 6);
        assert_eq!(c.toolchain.backend, Backend::External);
        assert_eq!(c.toolchain.timeouts.simulate_s, 5.0);
        assert_eq!(c.toolchain.timeouts.compile_s, 10.0);
    }

    #[test]
    fn environment_overrides_file() {
        let text = "[grpo]\nbeta = 0.5\n";
        let c = AppConfig::from_toml_with_env(
            text,
            env(&[
                ("CHIPFORGE_GRPO_BETA", "2"),
                ("CHIPFORGE_REWARD_WEIGHTS_W_PPA", "0.25"),
                ("CHIPFORGE_TOOLCHAIN_TIMEOUTS_SYNTHESIZE_S", "3.5"),
                ("CHIPFORGE_TOOLCHAIN_BACKEND", "external"),
                ("CHIPFORGE_SEED", "99"),
                ("CHIPFORGE_API_KEY", "secret"),
                ("OTHER_GRPO_BETA", "9"),
            ]),
        )
        .unwrap();
        assert_eq!(c.grpo.beta, 2.0);
        assert_eq!(c.reward.weights.w_ppa, 0.25);
        assert_eq!(c.toolchain.timeouts.synthesize_s, 3.5);
        assert_eq!(c.toolchain.backend, Backend::External);
        assert_eq!(c.seed(), 99);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (text, vars) in [
            ("[grpo]\ngroup_size = 1\n", vec![]),
            ("[reward.weights]\nw_func = -1.0\n", vec![]),
            ("", env(&[("CHIPFORGE_TOOLCHAIN_TIMEOUTS_COMPILE_S", "0")])),
            ("[generator]\nkind = \"http\"\n", vec![]),
            ("[toolchain.external.patterns]\ndelay_ns = [\"(\"]\n", vec![]),
        ] {
            assert!(matches!(AppConfig::from_toml_with_env(text, vars), Err(ConfigError::Invalid(_))), "{text}");
        }
        assert!(matches!(AppConfig::from_toml_with_env("[grpo", env(&[])), Err(ConfigError::Parse(_))));
        assert!(matches!(AppConfig::from_toml_with_env("[toolchain]\nbackend = \"fpga\"\n", env(&[])), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = AppConfig::default();
        c.seed = Some(3);
        c.grpo.steps = 42;
        let back = AppConfig::from_toml_with_env(&c.to_toml(), env(&[])).unwrap();
        assert_eq!(back, c);
    }
}
