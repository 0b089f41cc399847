//! Run configuration: TOML on disk, strict parsing (any unknown key is an
//! error, which catches typos in tradeoff-weight names before a long run).

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A scalar broadcast to every agent, or one explicit value per agent.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PerAgent {
    Scalar(f64),
    PerAgent(Vec<f64>),
}

impl PerAgent {
    pub fn resolve(&self, num_agents: usize) -> Result<Vec<f64>, ConfigError> {
        match self {
            PerAgent::Scalar(v) => Ok(vec![*v; num_agents]),
            PerAgent::PerAgent(vs) => {
                if vs.len() != num_agents {
                    return Err(ConfigError::Invalid(format!(
                        "per-agent list has {} entries, need {}",
                        vs.len(),
                        num_agents
                    )));
                }
                Ok(vs.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Number of application classes (A).
    pub num_app_classes: usize,
    /// Number of demand levels (D).
    pub num_demand_levels: usize,
    /// Number of channel levels (G).
    pub num_channel_levels: usize,
    /// AR(1) coefficient of the latent traffic process, in [0, 1).
    pub ar_coeff: f64,
    /// Innovation scale of the latent traffic process.
    pub innovation_scale: f64,
    /// Per-class drift terms; the class-conditional stationary mean is
    /// `drive / (1 - ar_coeff)`.
    pub class_drives: Vec<f64>,
    /// Class sampling probabilities; uniform when omitted.
    pub class_probs: Option<Vec<f64>>,
    /// Strictly increasing positive thresholds binning traffic rate into
    /// demand levels (length D-1).
    pub demand_thresholds: Vec<f64>,
    /// Row-stochastic channel transition matrix (G x G).
    pub channel_transition: Vec<Vec<f64>>,
    /// SNR in dB for each channel level.
    pub snr_table_db: Vec<f64>,
    /// SNR feature normalization: feature = (snr - offset) / scale.
    pub snr_offset_db: f64,
    pub snr_scale_db: f64,
    /// Traffic-rate feature divisor.
    pub rate_scale: f64,
    /// Observation window length W (most recent W steps).
    pub window: usize,
    /// Additive Gaussian observation noise scale, applied identically in
    /// training and inference.
    pub noise_scale: f64,
    /// App class is re-drawn and the traffic latent re-initialized from
    /// its class-stationary law every `segment_len` steps.
    pub segment_len: usize,
    /// Resource configuration lookup T[demand][channel]; the physical-layer
    /// agent's task label.
    pub resource_table: Vec<Vec<usize>>,
    /// Known application labels for trace ingestion, index = app class.
    pub app_labels: Vec<String>,
    /// Bytes-per-rate-unit divisor for trace ingestion. A power of two
    /// keeps export/ingest roundtrips bit-exact.
    pub trace_rate_divisor: f64,
    /// Seed salt for the channel stream only; varying it resamples the
    /// channel while keeping the traffic realization fixed.
    pub channel_stream_salt: u64,
    /// Seed for the synthesized channel when ingesting real traces.
    pub trace_channel_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_app_classes: 5,
            num_demand_levels: 4,
            num_channel_levels: 4,
            ar_coeff: 0.7,
            innovation_scale: 0.25,
            class_drives: vec![0.15, 0.3, 0.45, 0.6, 0.75],
            class_probs: None,
            demand_thresholds: vec![0.875, 1.5, 2.125],
            channel_transition: vec![
                vec![0.85, 0.15, 0.0, 0.0],
                vec![0.15, 0.7, 0.15, 0.0],
                vec![0.0, 0.15, 0.7, 0.15],
                vec![0.0, 0.0, 0.15, 0.85],
            ],
            snr_table_db: vec![-3.0, 2.0, 7.0, 12.0],
            snr_offset_db: 4.5,
            snr_scale_db: 7.5,
            rate_scale: 1.0,
            window: 8,
            noise_scale: 0.1,
            segment_len: 64,
            resource_table: vec![
                vec![0, 1, 2, 3],
                vec![1, 2, 3, 0],
                vec![2, 3, 0, 1],
                vec![3, 0, 1, 2],
            ],
            app_labels: vec![
                "live_streaming".into(),
                "video_conferencing".into(),
                "mobile_gaming".into(),
                "web_browsing".into(),
                "file_transfer".into(),
            ],
            trace_rate_divisor: 1_048_576.0,
            channel_stream_salt: 0,
            trace_channel_seed: 7,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = self.num_app_classes;
        let d = self.num_demand_levels;
        let g = self.num_channel_levels;
        if a == 0 || d == 0 || g == 0 {
            return Err(ConfigError::Invalid("A, D, G must all be positive".into()));
        }
        if !(0.0..1.0).contains(&self.ar_coeff) {
            return Err(ConfigError::Invalid(format!(
                "ar_coeff {} must lie in [0, 1)",
                self.ar_coeff
            )));
        }
        if self.innovation_scale < 0.0 {
            return Err(ConfigError::Invalid("innovation_scale must be >= 0".into()));
        }
        if self.class_drives.len() != a {
            return Err(ConfigError::Invalid(format!(
                "class_drives has {} entries, need A={}",
                self.class_drives.len(),
                a
            )));
        }
        if let Some(probs) = &self.class_probs {
            if probs.len() != a {
                return Err(ConfigError::Invalid(format!(
                    "class_probs has {} entries, need A={}",
                    probs.len(),
                    a
                )));
            }
            let sum: f64 = probs.iter().sum();
            if probs.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(ConfigError::Invalid(
                    "class_probs must be nonnegative and sum to 1".into(),
                ));
            }
        }
        if self.demand_thresholds.len() != d - 1 {
            return Err(ConfigError::Invalid(format!(
                "demand_thresholds has {} entries, need D-1={}",
                self.demand_thresholds.len(),
                d - 1
            )));
        }
        if !self.demand_thresholds.windows(2).all(|w| w[0] < w[1])
            || self.demand_thresholds.first().map_or(false, |t| *t <= 0.0)
        {
            return Err(ConfigError::Invalid(
                "demand_thresholds must be strictly increasing and positive".into(),
            ));
        }
        if self.channel_transition.len() != g {
            return Err(ConfigError::Invalid(format!(
                "channel_transition has {} rows, need G={}",
                self.channel_transition.len(),
                g
            )));
        }
        for (i, row) in self.channel_transition.iter().enumerate() {
            if row.len() != g {
                return Err(ConfigError::Invalid(format!(
                    "channel_transition row {i} has {} entries, need G={g}",
                    row.len()
                )));
            }
            if row.iter().any(|p| *p < 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "channel_transition row {i} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ConfigError::Invalid(format!(
                    "channel_transition row {i} sums to {sum}, must be 1 within 1e-9"
                )));
            }
        }
        if self.snr_table_db.len() != g {
            return Err(ConfigError::Invalid(format!(
                "snr_table_db has {} entries, need G={}",
                self.snr_table_db.len(),
                g
            )));
        }
        if self.snr_scale_db == 0.0 || self.rate_scale == 0.0 {
            return Err(ConfigError::Invalid(
                "snr_scale_db and rate_scale must be nonzero".into(),
            ));
        }
        if self.window == 0 || self.segment_len == 0 {
            return Err(ConfigError::Invalid("window and segment_len must be >= 1".into()));
        }
        if self.resource_table.len() != d {
            return Err(ConfigError::Invalid(format!(
                "resource_table has {} rows, need D={}",
                self.resource_table.len(),
                d
            )));
        }
        for (i, row) in self.resource_table.iter().enumerate() {
            if row.len() != g {
                return Err(ConfigError::Invalid(format!(
                    "resource_table row {i} has {} entries, need G={g}",
                    row.len()
                )));
            }
        }
        if self.app_labels.len() != a {
            return Err(ConfigError::Invalid(format!(
                "app_labels has {} entries, need A={}",
                self.app_labels.len(),
                a
            )));
        }
        if self.trace_rate_divisor <= 0.0 {
            return Err(ConfigError::Invalid("trace_rate_divisor must be > 0".into()));
        }
        Ok(())
    }

    /// Class sampling distribution (uniform default).
    pub fn class_distribution(&self) -> Vec<f64> {
        self.class_probs.clone().unwrap_or_else(|| {
            vec![1.0 / self.num_app_classes as f64; self.num_app_classes]
        })
    }

    /// Number of resource configurations = max table entry + 1.
    pub fn num_resource_configs(&self) -> usize {
        self.resource_table
            .iter()
            .flat_map(|row| row.iter())
            .max()
            .map_or(1, |m| m + 1)
    }

    /// Application-layer observation width: rate window plus app indicator.
    pub fn obs_dim_app(&self) -> usize {
        self.window + self.num_app_classes
    }

    /// Physical-layer observation width: SNR window.
    pub fn obs_dim_phy(&self) -> usize {
        self.window
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    /// Message dimension d_c; 0 disables communication entirely.
    pub message_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Learn a diagonal-Gaussian message prior instead of the fixed
    /// standard normal.
    pub learnable_prior: bool,
    /// Emit a distinct (mean, log-variance) head per receiver. With two
    /// agents this coincides with broadcast, which is the default.
    pub per_receiver_heads: bool,
    /// Quantize message payloads at inference time; 0 disables, otherwise
    /// one of 4, 8, 16 bits per component.
    pub quantize_bits: u8,
    /// Symmetric quantizer range [-B, B].
    pub quantize_range: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            message_dim: 4,
            encoder_hidden: vec![32, 32],
            policy_hidden: vec![64, 64],
            decoder_hidden: vec![64, 64],
            learnable_prior: false,
            per_receiver_heads: false,
            quantize_bits: 0,
            quantize_range: 4.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.quantize_bits != 0 && ![4, 8, 16].contains(&self.quantize_bits) {
            return Err(ConfigError::Invalid(format!(
                "quantize_bits {} must be 0 (off) or one of 4, 8, 16",
                self.quantize_bits
            )));
        }
        if self.quantize_range <= 0.0 {
            return Err(ConfigError::Invalid("quantize_range must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Task-relevance weight, scalar or per agent.
    pub lambda_t: PerAgent,
    /// Complexity (description-length) weight, scalar or per agent.
    pub lambda_c: PerAgent,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_t: PerAgent::Scalar(0.5),
            lambda_c: PerAgent::Scalar(0.01),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// "adam" or "sgd".
    pub optimizer: String,
    pub eval_interval: usize,
    pub holdout_fraction: f64,
    /// Sample count used by data generation.
    pub dataset_n: usize,
    /// Training aborts when any agent's total loss exceeds this (nats).
    pub abort_loss_threshold: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: 64,
            iterations: 10_000,
            learning_rate: 1e-3,
            optimizer: "adam".into(),
            eval_interval: 100,
            holdout_fraction: 0.25,
            dataset_n: 4096,
            abort_loss_threshold: 1e3,
        }
    }
}

impl TrainSection {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(ConfigError::Invalid("iterations must be >= 1".into()));
        }
        if !(self.optimizer == "adam" || self.optimizer == "sgd") {
            return Err(ConfigError::Invalid(format!(
                "optimizer {:?} must be \"adam\" or \"sgd\"",
                self.optimizer
            )));
        }
        if self.eval_interval == 0 {
            return Err(ConfigError::Invalid("eval_interval must be >= 1".into()));
        }
        if !(0.0 < self.holdout_fraction && self.holdout_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "holdout_fraction {} must lie in (0, 1)",
                self.holdout_fraction
            )));
        }
        if self.dataset_n == 0 {
            return Err(ConfigError::Invalid("dataset_n must be >= 1".into()));
        }
        Ok(())
    }
}

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agents: AgentConfig,
    pub loss: LossConfig,
    pub train: TrainSection,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate()?;
        self.agents.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_key_is_a_hard_error() {
        let text = "[loss]\nlambda_tt = 0.5\n";
        let err = RunConfig::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("lambda_tt"), "{err}");
    }

    #[test]
    fn bad_transition_row_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.env.channel_transition[0][0] = 0.5;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("sums to"), "{err}");
    }

    #[test]
    fn toml_roundtrip_preserves_config() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn per_agent_resolution() {
        assert_eq!(PerAgent::Scalar(0.5).resolve(2).unwrap(), vec![0.5, 0.5]);
        assert_eq!(
            PerAgent::PerAgent(vec![0.1, 0.2]).resolve(2).unwrap(),
            vec![0.1, 0.2]
        );
        assert!(PerAgent::PerAgent(vec![0.1]).resolve(2).is_err());
    }
}
