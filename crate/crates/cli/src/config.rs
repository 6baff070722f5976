//! Synthesis configuration file.
//!
//! ```toml
//! version = 1
//! quantize_levels = 16        # optional post-step
//!
//! [optimizer]
//! code_length = 40
//! filter_length = 480
//! restarts = 4
//!
//! [optimizer.scatter]
//! jitter = 0.2
//! ```
//!
//! Every key is optional except `version`; unknown keys are rejected.

use orthocode::optimizer::{DescentParams, OptimizerConfig, ScatterParams};
use orthocode::solver::{CrossTermMode, GainScale, DEFAULT_RIDGE};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub version: u32,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub quantize_levels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub code_length: usize,
    pub num_codes: usize,
    pub filter_length: usize,
    pub mainlobe_width: usize,
    /// Mainlobe level; defaults to the code length.
    pub gain: Option<f64>,
    pub restarts: usize,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub seed: u64,
    pub balance_tol: f64,
    pub sample_period: f64,
    pub ridge: f64,
    pub cross_terms: CrossTermMode,
    pub scatter: ScatterParams,
    pub descent: DescentParams,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::headline();
        Self {
            code_length: d.code_len,
            num_codes: d.num_codes,
            filter_length: d.filter_len,
            mainlobe_width: d.mainlobe_width,
            gain: None,
            restarts: d.restarts,
            max_iters: d.max_iters,
            convergence_tol: d.convergence_tol,
            seed: d.rng_seed,
            balance_tol: d.balance_tol,
            sample_period: d.sample_period,
            ridge: DEFAULT_RIDGE,
            cross_terms: d.cross_terms,
            scatter: d.scatter,
            descent: d.descent,
        }
    }
}

impl SynthConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SynthConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("synth config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        if let Some(q) = cfg.quantize_levels {
            if q < 2 {
                return Err(CliError::Config(format!("quantize_levels {q} must be at least 2")));
            }
        }
        Ok(cfg)
    }

    /// Resolved optimizer settings, validated.
    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        let o = &self.optimizer;
        let gain = match o.gain {
            Some(g) => GainScale::new(g)?,
            None => GainScale::code_energy(o.code_length),
        };
        let cfg = OptimizerConfig {
            code_len: o.code_length,
            num_codes: o.num_codes,
            filter_len: o.filter_length,
            mainlobe_width: o.mainlobe_width,
            gain,
            restarts: o.restarts,
            max_iters: o.max_iters,
            convergence_tol: o.convergence_tol,
            rng_seed: o.seed,
            balance_tol: o.balance_tol,
            sample_period: o.sample_period,
            ridge: o.ridge,
            cross_terms: o.cross_terms,
            scatter: o.scatter,
            descent: o.descent,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            optimizer: OptimizerSection::default(),
            quantize_levels: None,
        }
    }
}

/// Hex SHA-256 of the resolved optimizer settings.
pub fn config_hash(cfg: &OptimizerConfig) -> String {
    use sha2::{Digest, Sha256};
    let canonical = serde_json::to_string(cfg).expect("config serialises");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}
