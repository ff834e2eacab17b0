//! Experiment configuration file.
//!
//! The file is TOML with four sections. Every key is optional and unknown
//! keys are rejected:
//!
//! ```toml
//! [link]
//! family = "werner"      # or "dephased"
//! L0_km = 20.0
//! L_att_km = 20.0
//! eta_h = 0.1
//! F0 = 1.0
//!
//! [operations]
//! p_swap = 0.5
//! p_gate = 1.0
//! eta_meas = 1.0
//!
//! [memory]
//! kappa_per_s = 1.0
//! tau_s = 0.001
//! M_list = [1, 2, 3, 4, 5]
//!
//! [sweep]
//! N_buffer_min = 1
//! N_buffer_max = 30
//! trials = 100000
//! seed = 1
//! bins = 200
//! ```

use std::path::Path;

use repeater_core::protocol::SimConfig;
use repeater_core::{GenerationParams, MemoryQuality, OperationNoise, StateFamily};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub family: StateFamily,
    #[serde(rename = "L0_km")]
    pub link_length_km: f64,
    #[serde(rename = "L_att_km")]
    pub attenuation_length_km: f64,
    pub eta_h: f64,
    #[serde(rename = "F0")]
    pub raw_fidelity: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            family: StateFamily::Werner,
            link_length_km: 20.0,
            attenuation_length_km: 20.0,
            eta_h: 0.1,
            raw_fidelity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperationsSection {
    pub p_swap: f64,
    pub p_gate: f64,
    pub eta_meas: f64,
}

impl Default for OperationsSection {
    fn default() -> Self {
        Self {
            p_swap: 0.5,
            p_gate: 1.0,
            eta_meas: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemorySection {
    pub kappa_per_s: f64,
    pub tau_s: f64,
    #[serde(rename = "M_list")]
    pub memories: Vec<usize>,
}

impl Default for MemorySection {
    fn default() -> Self {
        Self {
            kappa_per_s: 1.0,
            tau_s: 1e-3,
            memories: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(rename = "N_buffer_min")]
    pub buffer_min: u64,
    #[serde(rename = "N_buffer_max")]
    pub buffer_max: u64,
    pub trials: u64,
    pub seed: u64,
    pub bins: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            buffer_min: 1,
            buffer_max: 30,
            trials: 100_000,
            seed: 1,
            bins: 200,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub link: LinkSection,
    pub operations: OperationsSection,
    pub memory: MemorySection,
    pub sweep: SweepSection,
}

/// 1-based line of the first `key = ...` assignment in `source`, or 1.
fn line_of(source: &str, key: &str) -> usize {
    source
        .lines()
        .position(|l| {
            l.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(1, |i| i + 1)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&source).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses and validates a configuration file's contents.
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate(source)?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    fn validate(&self, source: &str) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            line: line_of(source, key),
            message: format!("{key}: {message}"),
        };
        let sweep = &self.sweep;
        if sweep.buffer_min == 0 {
            return Err(invalid("N_buffer_min", "must be at least 1".into()));
        }
        if sweep.buffer_max < sweep.buffer_min {
            return Err(invalid(
                "N_buffer_max",
                format!("must not be below N_buffer_min = {}", sweep.buffer_min),
            ));
        }
        if sweep.trials == 0 {
            return Err(invalid("trials", "must be at least 1".into()));
        }
        if sweep.bins == 0 {
            return Err(invalid("bins", "must be at least 1".into()));
        }
        if self.memory.memories.is_empty() {
            return Err(invalid(
                "M_list",
                "must list at least one memory count".into(),
            ));
        }
        if self.memory.memories.contains(&0) {
            return Err(invalid("M_list", "memory counts must be positive".into()));
        }
        let ops = &self.operations;
        if let Err(e) = OperationNoise::new(ops.p_gate, ops.eta_meas) {
            let key = if (0.0..=1.0).contains(&ops.p_gate) {
                "eta_meas"
            } else {
                "p_gate"
            };
            return Err(invalid(key, e.to_string()));
        }
        if self.link.family == StateFamily::Dephased && (ops.p_gate != 1.0 || ops.eta_meas != 1.0) {
            let key = if ops.p_gate != 1.0 {
                "p_gate"
            } else {
                "eta_meas"
            };
            return Err(invalid(
                key,
                "dephased states support only perfect operations (p_gate = eta_meas = 1); \
                 no closed form exists for noisy operations on this family"
                    .into(),
            ));
        }
        if let Err(e) = MemoryQuality::new(self.memory.kappa_per_s, self.memory.tau_s) {
            let key = if self.memory.kappa_per_s >= 0.0 {
                "tau_s"
            } else {
                "kappa_per_s"
            };
            return Err(invalid(key, e.to_string()));
        }
        if let Err(e) = self.generation().validate() {
            let key = match &e {
                repeater_core::Error::Domain { name, .. } => *name,
                _ => "link",
            };
            return Err(invalid(key, e.to_string()));
        }
        Ok(())
    }

    pub fn generation(&self) -> GenerationParams {
        GenerationParams {
            link_length_km: self.link.link_length_km,
            attenuation_length_km: self.link.attenuation_length_km,
            hardware_efficiency: self.link.eta_h,
            raw_fidelity: self.link.raw_fidelity,
            swap_success: self.operations.p_swap,
        }
    }

    /// Simulator configuration for `memories` per end node, at the smallest
    /// buffer time of the sweep.
    pub fn sim_config(&self, memories: usize) -> SimConfig {
        SimConfig {
            family: self.link.family,
            generation: self.generation(),
            noise: OperationNoise::new(self.operations.p_gate, self.operations.eta_meas)
                .expect("validated on load"),
            quality: MemoryQuality::new(self.memory.kappa_per_s, self.memory.tau_s)
                .expect("validated on load"),
            memories,
            buffer_steps: self.sweep.buffer_min,
            trials: self.sweep.trials,
            seed: self.sweep.seed,
        }
    }
}
