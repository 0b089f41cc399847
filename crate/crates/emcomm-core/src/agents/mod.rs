//! Agent models: message encoders, decision policies, variational task
//! decoders, and message priors.
//!
//! Messages are diagonal Gaussians over R^d_c. The encoder maps an
//! observation to (mean, log-variance); sampling is reparameterized as
//! `mean + exp(log_variance / 2) * noise` so gradients flow through both
//! moments. A decision round is a two-phase barrier: all agents encode
//! and send, then all agents decide on what they received.

mod quantize;
mod wire;

pub use quantize::{dequantize, quantize, QuantizedPayload};
pub use wire::{deserialize_message, serialize_message};

use crate::config::AgentConfig;
use crate::env::Observation;
use crate::nn::{ForwardCache, Mlp, NnError};
use crate::rng::SeedSplitter;
use thiserror::Error;

/// Log-variance clamp window; prevents KL blow-up on one side and
/// degenerate variance collapse on the other.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 4.0;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("observation dimension {got} does not match agent {agent} encoder input {want}")]
    ObsDim { agent: usize, want: usize, got: usize },
    #[error("received messages invalid: {0}")]
    BadMessages(String),
    #[error("quantizer: {0}")]
    Quantize(String),
    #[error("wire: {0}")]
    Wire(String),
}

/// Diagonal-Gaussian message law for one sender.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageDistribution {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl MessageDistribution {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_variance: vec![0.0; dim],
        }
    }
}

/// A realized message between two agents. `payload` always holds the
/// values a receiver consumes; when quantization is active it is the
/// dequantized reconstruction and `quantized` carries the codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub receiver: usize,
    pub payload: Vec<f64>,
    pub quantized: Option<QuantizedPayload>,
}

/// Message prior r^c: fixed standard normal by default, optionally a
/// learnable diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Standard { dim: usize },
    Learnable { mean: Vec<f64>, log_variance: Vec<f64> },
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Standard { dim } => *dim,
            Prior::Learnable { mean, .. } => mean.len(),
        }
    }

    pub fn mean_at(&self, i: usize) -> f64 {
        match self {
            Prior::Standard { .. } => 0.0,
            Prior::Learnable { mean, .. } => mean[i],
        }
    }

    pub fn log_variance_at(&self, i: usize) -> f64 {
        match self {
            Prior::Standard { .. } => 0.0,
            Prior::Learnable { log_variance, .. } => log_variance[i],
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Prior::Standard { .. } => 0,
            Prior::Learnable { mean, .. } => 2 * mean.len(),
        }
    }
}

/// Categorical action distribution over an agent's action set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub logits: Vec<f64>,
}

impl ActionDistribution {
    pub fn probabilities(&self) -> Vec<f64> {
        crate::util::softmax(&self.logits)
    }

    pub fn argmax(&self) -> usize {
        crate::util::argmax(&self.logits)
    }
}

/// Static shape of one agent's models.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub agent_id: usize,
    pub num_agents: usize,
    pub obs_dim: usize,
    pub message_dim: usize,
    pub num_actions: usize,
    pub num_targets: usize,
    pub encoder_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub per_receiver_heads: bool,
}

impl AgentSpec {
    /// Number of (mean, log-variance) heads the encoder emits.
    pub fn encoder_heads(&self) -> usize {
        if self.per_receiver_heads {
            self.num_agents - 1
        } else {
            1
        }
    }

    pub fn encoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.obs_dim];
        dims.extend_from_slice(&self.encoder_hidden);
        dims.push(self.encoder_heads() * 2 * self.message_dim);
        dims
    }

    pub fn policy_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.obs_dim + (self.num_agents - 1) * self.message_dim];
        dims.extend_from_slice(&self.policy_hidden);
        dims.push(self.num_actions);
        dims
    }

    pub fn decoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![(self.num_agents - 1) * self.message_dim];
        dims.extend_from_slice(&self.decoder_hidden);
        dims.push(self.num_targets);
        dims
    }

    /// Sender ids this agent receives from, in the required order.
    pub fn expected_senders(&self) -> Vec<usize> {
        (1..=self.num_agents).filter(|j| *j != self.agent_id).collect()
    }
}

/// One agent's full parameter bundle: encoder (message law), policy,
/// variational task decoder, and message prior.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub spec: AgentSpec,
    pub encoder: Mlp,
    pub policy: Mlp,
    pub task_decoder: Mlp,
    pub prior: Prior,
}

impl AgentParams {
    /// Glorot-initialized models; each network draws from its own named
    /// stream of the run seed.
    pub fn init(spec: AgentSpec, config: &AgentConfig, splitter: &SeedSplitter) -> Result<Self, AgentError> {
        let id = spec.agent_id as u64;
        let encoder = Mlp::glorot(
            &spec.encoder_dims(),
            &mut splitter.stream_indexed("init/encoder", id),
        )?;
        let policy = Mlp::glorot(
            &spec.policy_dims(),
            &mut splitter.stream_indexed("init/policy", id),
        )?;
        let task_decoder = Mlp::glorot(
            &spec.decoder_dims(),
            &mut splitter.stream_indexed("init/decoder", id),
        )?;
        let prior = if config.learnable_prior {
            Prior::Learnable {
                mean: vec![0.0; spec.message_dim],
                log_variance: vec![0.0; spec.message_dim],
            }
        } else {
            Prior::Standard {
                dim: spec.message_dim,
            }
        };
        Ok(Self {
            spec,
            encoder,
            policy,
            task_decoder,
            prior,
        })
    }

    /// Total trainable parameter count (networks plus learnable prior).
    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.policy.param_count()
            + self.task_decoder.param_count()
            + self.prior.param_count()
    }

    /// Appends all trainable parameters: encoder, policy, decoder, then
    /// prior mean and log-variance when learnable.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.encoder.write_params(out);
        self.policy.write_params(out);
        self.task_decoder.write_params(out);
        if let Prior::Learnable { mean, log_variance } = &self.prior {
            out.extend_from_slice(mean);
            out.extend_from_slice(log_variance);
        }
    }

    /// Reads parameters back in [`AgentParams::write_params`] order.
    pub fn read_params(&mut self, buf: &[f64]) -> Result<usize, NnError> {
        let mut cursor = 0;
        cursor += self.encoder.read_params(&buf[cursor..])?;
        cursor += self.policy.read_params(&buf[cursor..])?;
        cursor += self.task_decoder.read_params(&buf[cursor..])?;
        if let Prior::Learnable { mean, log_variance } = &mut self.prior {
            let d = mean.len();
            if buf.len() < cursor + 2 * d {
                return Err(NnError::ParamCount {
                    want: cursor + 2 * d,
                    got: buf.len(),
                });
            }
            mean.copy_from_slice(&buf[cursor..cursor + d]);
            cursor += d;
            log_variance.copy_from_slice(&buf[cursor..cursor + d]);
            cursor += d;
        }
        Ok(cursor)
    }

    /// The weight bundle w = (psi, phi) the generalization bound reasons
    /// about: decision policy followed by message encoder. The task
    /// decoder and prior are auxiliary variational machinery and are
    /// excluded.
    pub fn write_bound_params(&self, out: &mut Vec<f64>) {
        self.policy.write_params(out);
        self.encoder.write_params(out);
    }

    /// Per-layer Glorot init variances for the bound-parameter vector, in
    /// [`AgentParams::write_bound_params`] order. A uniform(-a, a) init
    /// has variance a^2/3; biases initialize to zero and get a variance
    /// floor instead.
    pub fn bound_param_prior_variances(&self, bias_floor: f64) -> Vec<f64> {
        let mut vars = Vec::new();
        for net in [&self.policy, &self.encoder] {
            for layer in net.layers() {
                let a = Mlp::init_bound(layer.in_dim, layer.out_dim);
                let w_var = a * a / 3.0;
                vars.extend(std::iter::repeat(w_var).take(layer.weight.len()));
                vars.extend(std::iter::repeat(bias_floor).take(layer.bias.len()));
            }
        }
        vars
    }

    /// Zero-weight variant, useful for hand-checked values.
    pub fn zeros(spec: AgentSpec, learnable_prior: bool) -> Result<Self, AgentError> {
        let encoder = Mlp::zeros(&spec.encoder_dims())?;
        let policy = Mlp::zeros(&spec.policy_dims())?;
        let task_decoder = Mlp::zeros(&spec.decoder_dims())?;
        let prior = if learnable_prior {
            Prior::Learnable {
                mean: vec![0.0; spec.message_dim],
                log_variance: vec![0.0; spec.message_dim],
            }
        } else {
            Prior::Standard {
                dim: spec.message_dim,
            }
        };
        Ok(Self {
            spec,
            encoder,
            policy,
            task_decoder,
            prior,
        })
    }
}

/// Splits a raw encoder output into a head's (mean, clamped log-variance).
pub(crate) fn split_encoder_output(raw: &[f64], head: usize, d_c: usize) -> MessageDistribution {
    let base = head * 2 * d_c;
    MessageDistribution {
        mean: raw[base..base + d_c].to_vec(),
        log_variance: raw[base + d_c..base + 2 * d_c]
            .iter()
            .map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
            .collect(),
    }
}

/// Deterministic map from an observation to the agent's message law. The
/// default broadcast configuration emits one distribution for all
/// receivers.
pub fn encode(params: &AgentParams, obs: &Observation) -> Result<MessageDistribution, AgentError> {
    let (dist, _) = encode_with_cache(params, &obs.features)?;
    Ok(dist)
}

pub(crate) fn encode_with_cache(
    params: &AgentParams,
    features: &[f64],
) -> Result<(MessageDistribution, ForwardCache), AgentError> {
    if features.len() != params.spec.obs_dim {
        return Err(AgentError::ObsDim {
            agent: params.spec.agent_id,
            want: params.spec.obs_dim,
            got: features.len(),
        });
    }
    let (raw, cache) = params.encoder.forward(features)?;
    Ok((split_encoder_output(&raw, 0, params.spec.message_dim), cache))
}

/// Per-receiver variant; with broadcast heads every receiver sees the
/// same distribution.
pub fn encode_for_receiver(
    params: &AgentParams,
    obs: &Observation,
    receiver: usize,
) -> Result<MessageDistribution, AgentError> {
    if features_len_ok(params, obs) {
        let (raw, _) = params.encoder.forward(&obs.features)?;
        let head = head_index(&params.spec, receiver)?;
        Ok(split_encoder_output(&raw, head, params.spec.message_dim))
    } else {
        Err(AgentError::ObsDim {
            agent: params.spec.agent_id,
            want: params.spec.obs_dim,
            got: obs.features.len(),
        })
    }
}

fn features_len_ok(params: &AgentParams, obs: &Observation) -> bool {
    obs.features.len() == params.spec.obs_dim
}

pub(crate) fn head_index(spec: &AgentSpec, receiver: usize) -> Result<usize, AgentError> {
    let others = spec.expected_senders();
    let pos = others.iter().position(|j| *j == receiver).ok_or_else(|| {
        AgentError::BadMessages(format!(
            "agent {} has no receiver {}",
            spec.agent_id, receiver
        ))
    })?;
    Ok(if spec.per_receiver_heads { pos } else { 0 })
}

/// Reparameterized sample: payload = mean + exp(log_variance/2) * noise.
pub fn sample_message(
    dist: &MessageDistribution,
    noise: &[f64],
    sender: usize,
    receiver: usize,
) -> Message {
    debug_assert_eq!(noise.len(), dist.dim());
    let payload = dist
        .mean
        .iter()
        .zip(dist.log_variance.iter())
        .zip(noise.iter())
        .map(|((m, lv), n)| m + (lv / 2.0).exp() * n)
        .collect();
    Message {
        sender,
        receiver,
        payload,
        quantized: None,
    }
}

/// Mean message (the deterministic inference-time protocol).
pub fn mean_message(dist: &MessageDistribution, sender: usize, receiver: usize) -> Message {
    Message {
        sender,
        receiver,
        payload: dist.mean.clone(),
        quantized: None,
    }
}

/// Validates the receive contract: exactly one message from every other
/// agent, ordered by sender id, all addressed to this agent.
pub(crate) fn check_received(params: &AgentParams, received: &[Message]) -> Result<(), AgentError> {
    let expected = params.spec.expected_senders();
    if received.len() != expected.len() {
        return Err(AgentError::BadMessages(format!(
            "agent {} expected {} messages, got {}",
            params.spec.agent_id,
            expected.len(),
            received.len()
        )));
    }
    for (msg, want) in received.iter().zip(expected.iter()) {
        if msg.sender != *want {
            return Err(AgentError::BadMessages(format!(
                "agent {} expected sender {} at this position, got {} \
                 (messages must be ordered by sender id, one per sender)",
                params.spec.agent_id, want, msg.sender
            )));
        }
        if msg.receiver != params.spec.agent_id {
            return Err(AgentError::BadMessages(format!(
                "message from {} addressed to {}, not to agent {}",
                msg.sender, msg.receiver, params.spec.agent_id
            )));
        }
        if msg.payload.len() != params.spec.message_dim {
            return Err(AgentError::BadMessages(format!(
                "message from {} has dimension {}, agent {} expects {}",
                msg.sender,
                msg.payload.len(),
                params.spec.agent_id,
                params.spec.message_dim
            )));
        }
    }
    Ok(())
}

pub(crate) fn concat_policy_input(params: &AgentParams, features: &[f64], received: &[Message]) -> Vec<f64> {
    let mut input = Vec::with_capacity(params.spec.policy_dims()[0]);
    input.extend_from_slice(features);
    for msg in received {
        input.extend_from_slice(&msg.payload);
    }
    input
}

pub(crate) fn concat_decoder_input(params: &AgentParams, received: &[Message]) -> Vec<f64> {
    let mut input = Vec::with_capacity(params.spec.decoder_dims()[0]);
    for msg in received {
        input.extend_from_slice(&msg.payload);
    }
    input
}

/// Aggregates the local observation with received messages into action
/// logits.
pub fn decide(
    params: &AgentParams,
    obs: &Observation,
    received: &[Message],
) -> Result<ActionDistribution, AgentError> {
    if obs.features.len() != params.spec.obs_dim {
        return Err(AgentError::ObsDim {
            agent: params.spec.agent_id,
            want: params.spec.obs_dim,
            got: obs.features.len(),
        });
    }
    check_received(params, received)?;
    let input = concat_policy_input(params, &obs.features, received);
    let (logits, _) = params.policy.forward(&input)?;
    Ok(ActionDistribution { logits })
}

/// Variational posterior over the agent's task target given the received
/// payloads only.
pub fn decode_task(params: &AgentParams, received: &[Message]) -> Result<Vec<f64>, AgentError> {
    check_received(params, received)?;
    let input = concat_decoder_input(params, received);
    let (logits, _) = params.task_decoder.forward(&input)?;
    Ok(logits)
}
