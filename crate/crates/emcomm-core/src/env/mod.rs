//! Synthetic cross-layer networking world.
//!
//! The shared environment factors into a class-conditioned AR(1) traffic
//! process (application layer) and an independent Markov channel chain
//! (physical layer). The application-layer agent observes a noisy window
//! of recent traffic rates plus an app indicator and must predict the
//! demand level; the physical-layer agent observes a noisy SNR window and
//! must predict a resource configuration that depends on *both* demand and
//! channel, so it genuinely needs the application-layer agent's message.
//!
//! The factored design keeps the joint state distribution enumerable, so
//! Bayes-optimal accuracies are computed exactly in [`oracle`].

mod oracle;
mod serialize;
mod trace;

pub use oracle::{bayes_oracle_accuracy, stationary_channel_distribution, stationary_demand_distribution};
pub use serialize::{read_dataset, write_dataset};
pub use trace::{export_trace_csv, ingest_trace_csv};

use crate::config::{ConfigError, EnvConfig};
use crate::rng::{standard_normal, SeedSplitter};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Application-layer agent id.
pub const APP_AGENT: usize = 1;
/// Physical-layer agent id.
pub const PHY_AGENT: usize = 2;
/// The world is a two-agent cross-layer scenario.
pub const NUM_AGENTS: usize = 2;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown agent id {0} (valid: 1..={NUM_AGENTS})")]
    UnknownAgent(usize),
    #[error("dataset must contain at least one sample")]
    EmptyDataset,
    #[error("holdout fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("dataset with {0} samples is too small to split")]
    SplitTooSmall(usize),
    #[error("dataset file {path}: {msg}")]
    DatasetFile { path: String, msg: String },
    #[error("trace {path}{}: {msg}", line.map(|l| format!(", line {l}")).unwrap_or_default())]
    Trace {
        path: String,
        line: Option<usize>,
        msg: String,
    },
    #[error("Bayes oracle needs an enumerable config: {0}")]
    NonEnumerable(String),
}

/// Latent shared environment state at one time step. Retained in datasets
/// for oracle checks only; agents never see it directly.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub app_class: usize,
    pub demand_level: usize,
    pub channel_level: usize,
    pub traffic_rate: f64,
    pub snr_db: f64,
    pub step_index: u64,
}

/// One agent's partial, noisy view of the world.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub agent_id: usize,
    pub features: Vec<f64>,
    pub noise_seed: u64,
}

/// Supervised target for one agent at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTarget {
    pub agent_id: usize,
    pub label: usize,
}

/// Aligned observation/target pair plus the hidden truth behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSample {
    pub observation: Observation,
    pub target: TaskTarget,
    pub global_truth: GlobalState,
}

/// Aligned multi-agent dataset: `samples[k][i]` is agent `k+1`'s sample at
/// step `i`, and all agents share the same underlying state at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Vec<EnvSample>>,
    pub n: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn agent(&self, agent_id: usize) -> &[EnvSample] {
        &self.samples[agent_id - 1]
    }

    pub fn num_agents(&self) -> usize {
        self.samples.len()
    }
}

/// Current state plus the recent-history windows observations draw from.
#[derive(Debug, Clone)]
pub struct StateWindow {
    pub state: GlobalState,
    /// Recent traffic rates, newest first, length = config window.
    pub rates: Vec<f64>,
    /// Recent SNR values (dB), newest first, length = config window.
    pub snrs: Vec<f64>,
}

/// Bins a traffic rate into a demand level using the configured
/// strictly-increasing thresholds.
pub fn demand_level_of(rate: f64, thresholds: &[f64]) -> usize {
    thresholds.iter().filter(|t| rate >= **t).count()
}

/// The generative process behind the world. All randomness flows through
/// named substreams of the run seed, so the channel can be resampled (via
/// `channel_stream_salt`) without disturbing the traffic realization.
#[derive(Debug, Clone)]
pub struct EnvProcess {
    config: EnvConfig,
    class_rng: ChaCha12Rng,
    traffic_rng: ChaCha12Rng,
    channel_rng: ChaCha12Rng,
    latent: f64,
    app_class: usize,
    channel: usize,
    rates: Vec<f64>,
    snrs: Vec<f64>,
    step: u64,
}

impl EnvProcess {
    pub fn new(config: &EnvConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let splitter = SeedSplitter::new(seed);
        let mut class_rng = splitter.stream("env/class");
        let mut traffic_rng = splitter.stream("env/traffic");
        let mut channel_rng =
            splitter.stream_indexed("env/channel", config.channel_stream_salt);

        let app_class = sample_categorical(&config.class_distribution(), &mut class_rng);
        let latent = sample_class_stationary(config, app_class, &mut traffic_rng);
        let channel = sample_categorical(
            &oracle::stationary_channel(&config.channel_transition),
            &mut channel_rng,
        );
        let rate = latent.max(0.0);
        let snr = config.snr_table_db[channel];
        Ok(Self {
            rates: vec![rate; config.window],
            snrs: vec![snr; config.window],
            config: config.clone(),
            class_rng,
            traffic_rng,
            channel_rng,
            latent,
            app_class,
            channel,
            step: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// The state at the current step.
    pub fn current(&self) -> GlobalState {
        let rate = self.latent.max(0.0);
        GlobalState {
            app_class: self.app_class,
            demand_level: demand_level_of(rate, &self.config.demand_thresholds),
            channel_level: self.channel,
            traffic_rate: rate,
            snr_db: self.config.snr_table_db[self.channel],
            step_index: self.step,
        }
    }

    /// Current state together with its observation windows.
    pub fn window(&self) -> StateWindow {
        StateWindow {
            state: self.current(),
            rates: self.rates.clone(),
            snrs: self.snrs.clone(),
        }
    }

    /// Advances the world one step and returns the new state. Successive
    /// calls realize the configured AR/Markov dynamics; app class and the
    /// traffic latent are re-drawn from the class-stationary law at
    /// segment boundaries, which keeps the marginal state distribution
    /// exactly stationary at every step.
    pub fn step(&mut self) -> GlobalState {
        self.step += 1;
        if self.step % self.config.segment_len as u64 == 0 {
            self.app_class =
                sample_categorical(&self.config.class_distribution(), &mut self.class_rng);
            self.latent = sample_class_stationary(&self.config, self.app_class, &mut self.traffic_rng);
        } else {
            let eps = standard_normal(&mut self.traffic_rng);
            self.latent = self.config.ar_coeff * self.latent
                + self.config.class_drives[self.app_class]
                + self.config.innovation_scale * eps;
        }
        let row = &self.config.channel_transition[self.channel];
        self.channel = sample_categorical(row, &mut self.channel_rng);

        let state = self.current();
        push_front(&mut self.rates, state.traffic_rate);
        push_front(&mut self.snrs, state.snr_db);
        state
    }
}

fn push_front(buf: &mut Vec<f64>, value: f64) {
    buf.rotate_right(1);
    buf[0] = value;
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws the traffic latent from its exact class-conditional stationary
/// law N(drive/(1-ar), innovation^2/(1-ar^2)).
fn sample_class_stationary(config: &EnvConfig, class: usize, rng: &mut ChaCha12Rng) -> f64 {
    let mean = config.class_drives[class] / (1.0 - config.ar_coeff);
    let sd = config.innovation_scale / (1.0 - config.ar_coeff * config.ar_coeff).sqrt();
    mean + sd * standard_normal(rng)
}

/// Builds one agent's noisy partial observation from the current window.
/// Agent 1 sees traffic variables only (rate window + app indicator);
/// agent 2 sees channel variables only (normalized SNR window).
pub fn observe(
    window: &StateWindow,
    agent_id: usize,
    noise_scale: f64,
    config: &EnvConfig,
    noise_seed: u64,
) -> Result<Observation, EnvError> {
    let mut features = match agent_id {
        APP_AGENT => {
            let mut f: Vec<f64> = window.rates.iter().map(|r| r / config.rate_scale).collect();
            let mut indicator = vec![0.0; config.num_app_classes];
            indicator[window.state.app_class] = 1.0;
            f.extend_from_slice(&indicator);
            f
        }
        PHY_AGENT => window
            .snrs
            .iter()
            .map(|s| (s - config.snr_offset_db) / config.snr_scale_db)
            .collect(),
        other => return Err(EnvError::UnknownAgent(other)),
    };
    if noise_scale != 0.0 {
        let mut rng = ChaCha12Rng::seed_from_u64(noise_seed);
        for f in &mut features {
            *f += noise_scale * standard_normal(&mut rng);
        }
    }
    Ok(Observation {
        agent_id,
        features,
        noise_seed,
    })
}

/// The supervised target for one agent. Agent 1 predicts the demand level
/// (solvable from traffic alone); agent 2 predicts the resource
/// configuration T[demand][channel], which requires both factors.
pub fn task_target(
    global: &GlobalState,
    agent_id: usize,
    config: &EnvConfig,
) -> Result<TaskTarget, EnvError> {
    let label = match agent_id {
        APP_AGENT => global.demand_level,
        PHY_AGENT => config.resource_table[global.demand_level][global.channel_level],
        other => return Err(EnvError::UnknownAgent(other)),
    };
    Ok(TaskTarget { agent_id, label })
}

/// Generates `n` aligned multi-agent samples. Bit-deterministic for a
/// fixed `(config, seed)` pair.
pub fn make_dataset(config: &EnvConfig, n: usize, seed: u64) -> Result<Dataset, EnvError> {
    if n == 0 {
        return Err(EnvError::EmptyDataset);
    }
    let mut process = EnvProcess::new(config, seed)?;
    let splitter = SeedSplitter::new(seed);
    let mut samples = vec![Vec::with_capacity(n); NUM_AGENTS];
    for i in 0..n {
        let window = process.window();
        for agent_id in 1..=NUM_AGENTS {
            let noise_seed = splitter.derive_u64("env/obs-noise", (agent_id as u64) << 48 | i as u64);
            let observation = observe(&window, agent_id, config.noise_scale, config, noise_seed)?;
            let target = task_target(&window.state, agent_id, config)?;
            samples[agent_id - 1].push(EnvSample {
                observation,
                target,
                global_truth: window.state.clone(),
            });
        }
        process.step();
    }
    Ok(Dataset { samples, n, seed })
}

/// Partitions a dataset into disjoint, exhaustive train/held-out parts,
/// preserving cross-agent alignment. Each part keeps temporal order.
pub fn split(dataset: &Dataset, holdout_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), EnvError> {
    if !(0.0 < holdout_fraction && holdout_fraction < 1.0) {
        return Err(EnvError::BadFraction(holdout_fraction));
    }
    if dataset.n < 2 {
        return Err(EnvError::SplitTooSmall(dataset.n));
    }
    let holdout_count = ((dataset.n as f64 * holdout_fraction).round() as usize)
        .clamp(1, dataset.n - 1);

    let mut indices: Vec<usize> = (0..dataset.n).collect();
    let mut rng = SeedSplitter::new(seed).stream("split");
    // Fisher-Yates with draws from the named stream.
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let mut holdout_idx: Vec<usize> = indices[..holdout_count].to_vec();
    let mut train_idx: Vec<usize> = indices[holdout_count..].to_vec();
    holdout_idx.sort_unstable();
    train_idx.sort_unstable();

    let take = |idx: &[usize]| -> Dataset {
        Dataset {
            samples: dataset
                .samples
                .iter()
                .map(|per_agent| idx.iter().map(|i| per_agent[*i].clone()).collect())
                .collect(),
            n: idx.len(),
            seed: dataset.seed,
        }
    };
    Ok((take(&train_idx), take(&holdout_idx)))
}
