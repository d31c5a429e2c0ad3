//! Run configuration documents.
//!
//! ```toml
//! architecture = "mod-emlp"
//! seeds = [0, 1, 2]
//! total_steps = 100000
//! yaw_rate = 0.0          # deg/s
//!
//! [train]
//! batch_size = 256
//!
//! [env]
//! randomize = false
//! ```

use std::path::{Path, PathBuf};

use equivquad_core::dynamics::EnvConfig;
use equivquad_core::rl::{Architecture, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Parsed configuration document. `train` and `env` hold overrides on top
/// of the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub architecture: Architecture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<usize>,
    /// Heading command rate in deg/s.
    #[serde(default)]
    pub yaw_rate: f64,
    /// Steps between periodic checkpoints; defaults to ten evaluation intervals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_interval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub env: EnvConfig,
}

/// A configuration problem located in the source document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: usize,
    pub column: usize,
    pub key: Option<String>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let file = self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<config>".into());
        write!(f, "{file}:{}:{}: ", self.line, self.column)?;
        if let Some(k) = &self.key {
            write!(f, "`{k}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

/// Line of `key` inside `[section]` (or at top level when `section` is
/// empty). Falls back to the section header, then to line 1.
fn locate(text: &str, section: &str, key: &str) -> (usize, usize) {
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_start();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.split(']').next().unwrap_or("").trim().to_string();
            if current == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current != section {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim().trim_matches('"') == key {
                return (i + 1, raw.len() - line.len() + 1);
            }
        }
    }
    (header_line.unwrap_or(1), 1)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            line: 0,
            column: 0,
            key: None,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(&text).map_err(|e| ConfigError { path: Some(path.to_path_buf()), ..e })
    }

    /// Parses and validates a document.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
            let message = e.message().to_string();
            let key = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("missing field") || message.starts_with("unknown field"))
                .map(str::to_string);
            ConfigError { path: None, line, column, key, message }
        })?;
        cfg.validate().map_err(|(section, key, message)| {
            let (line, column) = locate(text, section, key);
            let key = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            ConfigError { path: None, line, column, key: Some(key), message }
        })?;
        Ok(cfg)
    }

    /// Checks every value; errors carry `(section, key, message)`.
    pub fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        fn check(ok: bool, section: &'static str, key: &'static str, msg: &str) -> Result<(), (&'static str, &'static str, String)> {
            if ok {
                Ok(())
            } else {
                Err((section, key, msg.to_string()))
            }
        }
        check(!(self.seed.is_some() && self.seeds.is_some()), "", "seeds", "give either `seed` or `seeds`, not both")?;
        if let Some(s) = &self.seeds {
            check(!s.is_empty(), "", "seeds", "must list at least one seed")?;
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            check(sorted.len() == s.len(), "", "seeds", "seeds must be distinct")?;
        }
        check(self.yaw_rate.is_finite(), "", "yaw_rate", "must be finite")?;
        check(self.checkpoint_interval != Some(0), "", "checkpoint_interval", "must be positive")?;

        let t = &self.train;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        for (key, v) in [
            ("actor_lr_max", t.actor_lr_max),
            ("actor_lr_min", t.actor_lr_min),
            ("critic_lr_max", t.critic_lr_max),
            ("critic_lr_min", t.critic_lr_min),
            ("max_grad_norm", t.max_grad_norm),
        ] {
            check(pos(v), "train", key, "must be positive")?;
        }
        for (key, v) in [
            ("explore_start", t.explore_start),
            ("explore_end", t.explore_end),
            ("target_noise", t.target_noise),
            ("noise_clip", t.noise_clip),
            ("lambda_t", t.lambda_t),
            ("lambda_s", t.lambda_s),
            ("sigma_s", t.sigma_s),
            ("lambda_m", t.lambda_m),
            ("weight_decay", t.weight_decay),
        ] {
            check(nonneg(v), "train", key, "must be non-negative")?;
        }
        check((0.0..=1.0).contains(&t.gamma), "train", "gamma", "must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&t.tau), "train", "tau", "must lie in [0, 1]")?;
        for (key, v) in [
            ("batch_size", t.batch_size),
            ("policy_delay", t.policy_delay),
            ("eval_interval", t.eval_interval),
            ("eval_episodes", t.eval_episodes),
        ] {
            check(v > 0, "train", key, "must be positive")?;
        }
        check(t.buffer_capacity >= t.batch_size, "train", "buffer_capacity", "must be at least batch_size")?;

        let e = &self.env;
        check(pos(e.dt), "env", "dt", "must be positive")?;
        check(pos(e.workspace_bound), "env", "workspace_bound", "must be positive")?;
        check(e.max_steps > 0, "env", "max_steps", "must be positive")?;
        check((0.0..1.0).contains(&e.randomization_range), "env", "randomization_range", "must lie in [0, 1)")?;
        let i = &e.init;
        for (key, v) in [
            ("position", i.position),
            ("velocity", i.velocity),
            ("angular_velocity", i.angular_velocity),
            ("attitude", i.attitude),
        ] {
            check(nonneg(v), "env.init", key, "must be non-negative")?;
        }
        self.train_config(self.seeds()[0]).validate().map_err(|err| ("train", "", err.to_string()))?;
        e.validate().map_err(|m| ("env", "", m))?;
        Ok(())
    }

    /// Seeds to run, in order.
    pub fn seeds(&self) -> Vec<u64> {
        match (&self.seeds, self.seed) {
            (Some(s), _) => s.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => vec![self.train.seed],
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            total_steps: self.total_steps.unwrap_or(self.train.total_steps),
            ..self.train.clone()
        }
    }

    pub fn yaw_rate_rad(&self) -> f64 {
        self.yaw_rate.to_radians()
    }

    pub fn checkpoint_interval(&self) -> usize {
        self.checkpoint_interval.unwrap_or(10 * self.train.eval_interval)
    }

    /// Fully resolved snapshot for a single seed, as written next to the run.
    pub fn snapshot(&self, seed: u64) -> String {
        let resolved = RunConfig {
            seed: Some(seed),
            seeds: None,
            total_steps: Some(self.train_config(seed).total_steps),
            train: self.train_config(seed),
            ..self.clone()
        };
        toml::to_string(&resolved).expect("configuration serialises")
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}
