//! Text generators: deterministic stubs and an HTTP chat-completions client.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::response_format::find_code;
use crate::verilog_mini::{self, Direction, VectorRow, VectorTable};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeneratorError {
    /// The service cannot be reached or is not configured; batches stop.
    #[error("generator unavailable: {0}")]
    Unavailable(String),
    /// This prompt could not be answered; only the record is affected.
    #[error("generation failed: {0}")]
    Failed(String),
}

pub trait TextGenerator: Sync {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError>;
}

/// Looks up canned responses: the first rule whose key occurs in the prompt wins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedGenerator {
    pub rules: Vec<(String, String)>,
    pub fallback: Option<String>,
}

impl ScriptedGenerator {
    /// Answers every prompt with `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        Self { rules: Vec::new(), fallback: Some(text.into()) }
    }

    pub fn with_rule(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push((key.into(), response.into()));
        self
    }
}

impl TextGenerator for ScriptedGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        self.rules
            .iter()
            .find(|(k, _)| prompt.contains(k.as_str()))
            .map(|(_, r)| r.clone())
            .or_else(|| self.fallback.clone())
            .ok_or_else(|| GeneratorError::Failed("no scripted response matches the prompt".into()))
    }
}

/// Always unavailable; models an unreachable service.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineGenerator;

impl TextGenerator for OfflineGenerator {
    fn generate(&self, _prompt: &str) -> Result<String, GeneratorError> {
        Err(GeneratorError::Unavailable("offline".into()))
    }
}

/// Writes a short reasoning chain from the structure of the code in the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReasoningStub;

impl TextGenerator for ReasoningStub {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        let code = find_code(prompt).ok_or_else(|| GeneratorError::Failed("prompt carries no code".into()))?;
        let m = verilog_mini::parse_mini(&code).map_err(|e| GeneratorError::Failed(e.to_string()))?;
        let ports = |d: Direction| {
            m.ports()
                .iter()
                .filter(|p| p.direction == d)
                .map(|p| if p.width == 1 { p.name.clone() } else { format!("{}[{}:0]", p.name, p.width - 1) })
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut steps = vec![
            format!("1. Module `{}` reads {} and drives {}.", m.name(), ports(Direction::Input), ports(Direction::Output)),
            "2. The behaviour is purely combinational, so continuous assignments suffice.".to_string(),
        ];
        for (i, a) in m.assigns().iter().enumerate() {
            let targets: Vec<&str> = a.target.iter().map(|t| t.name.as_str()).collect();
            steps.push(format!("{}. Drive {} from its inputs.", i + 3, targets.join(", ")));
        }
        steps.push(format!("{}. Keep shared subexpressions in wires to save area.", steps.len() + 1));
        Ok(steps.join("\n"))
    }
}

/// Produces a vector table by simulating the code found in the prompt:
/// exhaustive when the inputs span at most 16 vectors, otherwise 12 seeded
/// random vectors. Tables always hold between 3 and 20 rows.
#[derive(Debug, Clone, Copy, Default)]
pub struct TestbenchStub {
    pub seed: u64,
}

impl TextGenerator for TestbenchStub {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        let code = find_code(prompt).ok_or_else(|| GeneratorError::Failed("prompt carries no code".into()))?;
        let m = verilog_mini::parse_mini(&code).map_err(|e| GeneratorError::Failed(e.to_string()))?;
        let mut table = VectorTable::for_module(&m);
        let widths: Vec<u32> = table.inputs.iter().map(|p| p.width).collect();
        let bits: u32 = widths.iter().sum();
        let vectors: Vec<Vec<u64>> = if bits <= 4 {
            let all: Vec<Vec<u64>> = (0..1u64 << bits).map(|v| split(v, &widths)).collect();
            all.iter().cycle().take(all.len().max(3)).cloned().collect()
        } else {
            let digest = Sha256::digest(code.as_bytes());
            let salt = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt);
            (0..12).map(|_| widths.iter().map(|&w| rng.gen::<u64>() & mask(w)).collect()).collect()
        };
        for inputs in vectors {
            let expected = m.eval_ports(&inputs).map_err(|e| GeneratorError::Failed(e.to_string()))?;
            table.rows.push(VectorRow { inputs, expected });
        }
        Ok(table.to_text())
    }
}

fn mask(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1 << w) - 1
    }
}

fn split(mut v: u64, widths: &[u32]) -> Vec<u64> {
    widths
        .iter()
        .map(|&w| {
            let x = v & mask(w);
            v = if w >= 64 { 0 } else { v >> w };
            x
        })
        .collect()
}

/// Client for an OpenAI-style chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpGenerator {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub credential_env: String,
    pub timeout_s: f64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpGenerator {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            credential_env: "CHIPFORGE_API_KEY".into(),
            timeout_s: 60.0,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

impl HttpGenerator {
    fn call(&self, agent: &ureq::Agent, token: &str, prompt: &str) -> Result<String, ureq::Error> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let resp: serde_json::Value = agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {token}"))
            .send_json(body)?
            .into_json()?;
        Ok(resp["choices"][0]["message"]["content"].as_str().unwrap_or_default().to_string())
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        if self.endpoint.is_empty() {
            return Err(GeneratorError::Unavailable("no generator endpoint configured".into()));
        }
        let token = std::env::var(&self.credential_env)
            .map_err(|_| GeneratorError::Unavailable(format!("credential variable {} is not set", self.credential_env)))?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(self.timeout_s)).build();
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.backoff_ms << (attempt - 1)));
            }
            match self.call(&agent, &token, prompt) {
                Ok(text) if !text.is_empty() => return Ok(text),
                Ok(_) => last = "empty completion".into(),
                // client errors other than rate limiting will not improve on retry
                Err(ureq::Error::Status(code, _)) if (400..500).contains(&code) && code != 429 => {
                    return Err(GeneratorError::Failed(format!("HTTP {code}")));
                }
                Err(e) => last = e.to_string(),
            }
            log::warn!("generator attempt {} failed: {last}", attempt + 1);
        }
        Err(GeneratorError::Unavailable(format!("{} attempts failed: {last}", self.retries + 1)))
    }
}
