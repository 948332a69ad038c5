//! The single experiment file that drives every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demogen::GeneratorConfig;
use crate::error::{Error, Result};
use crate::io::{read_input, sha256_hex};
use crate::kinematics::KinematicChain;
use crate::policy::PolicyConfig;
use crate::rollout::{RolloutConfig, SuccessRule};
use crate::stats::OutlierRule;
use crate::trajectory::{MtOptions, Provenance};

/// Environment variable that replaces `output_dir` when set.
pub const OUTPUT_ENV: &str = "FITTS_BENCH_OUT";

/// Speed smoothing used when per-frame noise is on.
pub const NOISY_SMOOTHING_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AnalysisConfig {
    pub outlier_rule: OutlierRule,
    pub success_rule: SuccessRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Global seed. Copied into the generator and policy blocks.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Read demonstrations from here instead of generating them.
    pub demo_dir: Option<PathBuf>,
    /// Also write every rollout as a demo-v1 file.
    pub dump_rollouts: bool,
    pub chain: KinematicChain,
    pub generator: GeneratorConfig,
    pub metrics: MtOptions,
    pub policy: PolicyConfig,
    pub rollout: RolloutConfig,
    pub analysis: AnalysisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            demo_dir: None,
            dump_rollouts: false,
            chain: KinematicChain::default(),
            generator: GeneratorConfig::default(),
            metrics: MtOptions::default(),
            policy: PolicyConfig::default(),
            rollout: RolloutConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

/// Parses a `--set` value as a TOML literal, falling back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` to a TOML tree, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file, applies overrides and the output-root variable.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let bytes = read_input(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        if let Some(dir) = std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()) {
            cfg.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    /// Propagates the global seed and the analysis success rule. Jittered
    /// frames get a 5-sample speed average unless smoothing was set explicitly.
    pub fn resolve(&mut self) {
        self.generator.seed = self.seed;
        self.policy.seed = self.seed;
        self.rollout.success_rule = self.analysis.success_rule;
        if self.generator.frame_noise_sigma_rad > 0.0 && self.metrics.smoothing_window == 1 {
            self.metrics.smoothing_window = NOISY_SMOOTHING_WINDOW;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.generator.validate()?;
        self.policy.validate()?;
        self.rollout.validate()?;
        if !(self.metrics.threshold_rad_s > 0.0) || self.metrics.smoothing_window == 0 {
            return Err(Error::validation("metrics", "threshold must be positive and smoothing at least 1"));
        }
        let warm = self.rollout.warm_start_frames();
        if warm < self.policy.history_len {
            return Err(Error::validation(
                "rollout.warm_start_s",
                format!("warm start covers {warm} frames but the policy needs {}", self.policy.history_len),
            ));
        }
        if (self.rollout.sample_rate_hz - self.generator.sample_rate_hz).abs() > 1e-9 {
            return Err(Error::validation("rollout.sample_rate_hz", "must equal the generator rate"));
        }
        Ok(())
    }

    /// Digest of everything that influences artifact content. The output
    /// location is left out so results do not depend on where they are written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let mut v = serde_json::to_value(&c).expect("config serializes");
        // the analysis block owns this switch
        v["rollout"]["success_rule"] = serde_json::to_value(self.analysis.success_rule).expect("enum");
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { config_hash: self.hash(), seed: self.seed }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}
