//! The three loss terms and the joint multi-agent objective with exact
//! analytic gradients, including cross-agent paths through reparameterized
//! messages.

use super::DibError;
use crate::agents::{
    check_received, concat_decoder_input, encode_with_cache, mean_message, AgentParams, Message,
    MessageDistribution, Prior, LOG_VAR_MAX, LOG_VAR_MIN,
};
use crate::env::Observation;
use crate::nn::Gradients;
use crate::rng::standard_normal;
use crate::util::{log_softmax_at, softmax};
use rand_chacha::ChaCha12Rng;

/// Tradeoff weights for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambda {
    pub task_relevance: f64,
    pub complexity: f64,
}

/// The per-agent loss decomposition, batch-averaged, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub agent_id: usize,
    pub task_loss: f64,
    pub relevance: f64,
    pub complexity: f64,
    pub lambda_t: f64,
    pub lambda_c: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn all_finite(&self) -> bool {
        self.task_loss.is_finite()
            && self.relevance.is_finite()
            && self.complexity.is_finite()
            && self.total.is_finite()
    }
}

/// Gradients for one agent's full parameter bundle.
#[derive(Debug, Clone)]
pub struct AgentGradients {
    pub encoder: Gradients,
    pub policy: Gradients,
    pub task_decoder: Gradients,
    pub prior_mean: Vec<f64>,
    pub prior_log_variance: Vec<f64>,
}

impl AgentGradients {
    pub fn zeros_like(params: &AgentParams) -> Self {
        let prior_len = match &params.prior {
            Prior::Standard { .. } => 0,
            Prior::Learnable { mean, .. } => mean.len(),
        };
        Self {
            encoder: Gradients::zeros_like(&params.encoder),
            policy: Gradients::zeros_like(&params.policy),
            task_decoder: Gradients::zeros_like(&params.task_decoder),
            prior_mean: vec![0.0; prior_len],
            prior_log_variance: vec![0.0; prior_len],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.encoder.scale(factor);
        self.policy.scale(factor);
        self.task_decoder.scale(factor);
        for g in self.prior_mean.iter_mut().chain(self.prior_log_variance.iter_mut()) {
            *g *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite()
            && self.policy.all_finite()
            && self.task_decoder.all_finite()
            && self
                .prior_mean
                .iter()
                .chain(self.prior_log_variance.iter())
                .all(|g| g.is_finite())
    }

    /// Flat gradient vector in [`AgentParams::write_params`] order.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        self.encoder.write_params(out);
        self.policy.write_params(out);
        self.task_decoder.write_params(out);
        out.extend_from_slice(&self.prior_mean);
        out.extend_from_slice(&self.prior_log_variance);
    }
}

/// One aligned multi-agent training sample: `features[k]` and
/// `targets[k]` belong to agent `k + 1`.
#[derive(Debug, Clone)]
pub struct BatchSample {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
}

/// Message-sampling noise frozen for one loss evaluation so finite
/// differences see a deterministic function. Shape:
/// `values[sample][sender][(K-1) * d_c]`, one slice per receiver position
/// (broadcast senders use the first slice for every receiver).
#[derive(Debug, Clone)]
pub struct FrozenNoise {
    pub values: Vec<Vec<Vec<f64>>>,
}

impl FrozenNoise {
    pub fn draw(batch_len: usize, num_agents: usize, message_dim: usize, rng: &mut ChaCha12Rng) -> Self {
        let per_sender = (num_agents - 1) * message_dim;
        let values = (0..batch_len)
            .map(|_| {
                (0..num_agents)
                    .map(|_| (0..per_sender).map(|_| standard_normal(rng)).collect())
                    .collect()
            })
            .collect();
        Self { values }
    }

    pub fn zeros(batch_len: usize, num_agents: usize, message_dim: usize) -> Self {
        let per_sender = (num_agents - 1) * message_dim;
        Self {
            values: vec![vec![vec![0.0; per_sender]; num_agents]; batch_len],
        }
    }
}

/// KL divergence between diagonal Gaussians in nats:
/// sum_i 1/2 (sigma_i^2/sigma'_i^2 + (mu_i - mu'_i)^2/sigma'_i^2 - 1
///            + ln(sigma'_i^2/sigma_i^2)).
pub fn kl_gauss_diag(dist: &MessageDistribution, prior: &Prior) -> Result<f64, DibError> {
    if dist.dim() != prior.dim() {
        return Err(DibError::DimMismatch(format!(
            "distribution dim {} vs prior dim {}",
            dist.dim(),
            prior.dim()
        )));
    }
    let mut total = 0.0;
    for i in 0..dist.dim() {
        let lv = dist.log_variance[i];
        let mu = dist.mean[i];
        let plv = prior.log_variance_at(i);
        let pmu = prior.mean_at(i);
        let diff = mu - pmu;
        total += 0.5 * ((lv - plv).exp() + diff * diff * (-plv).exp() - 1.0 + plv - lv);
    }
    Ok(total)
}

/// Batch-mean KL of the encoded message law to the prior — the
/// description-length (complexity) side of the objective.
pub fn complexity_term(
    params: &AgentParams,
    batch: &[Observation],
    prior: &Prior,
) -> Result<f64, DibError> {
    if batch.is_empty() {
        return Err(DibError::EmptyBatch);
    }
    let mut total = 0.0;
    for obs in batch {
        let (dist, _) = encode_with_cache(params, &obs.features)?;
        total += kl_gauss_diag(&dist, prior)?;
    }
    Ok(total / batch.len() as f64)
}

/// Batch-mean log-likelihood of the true targets under the variational
/// decoder, given received payloads. Non-positive for categorical tasks.
pub fn relevance_term(
    params: &AgentParams,
    batch: &[(Vec<Message>, usize)],
) -> Result<f64, DibError> {
    if batch.is_empty() {
        return Err(DibError::EmptyBatch);
    }
    let mut total = 0.0;
    for (received, target) in batch {
        check_received(params, received)?;
        if *target >= params.spec.num_targets {
            return Err(DibError::Invalid(format!(
                "target {} out of range for agent {} with {} targets",
                target, params.spec.agent_id, params.spec.num_targets
            )));
        }
        let input = concat_decoder_input(params, received);
        let (logits, _) = params.task_decoder.forward(&input)?;
        total += log_softmax_at(&logits, *target);
    }
    Ok(total / batch.len() as f64)
}

struct SenderState {
    /// Raw encoder output and cache.
    cache: crate::nn::ForwardCache,
    raw: Vec<f64>,
    /// Per-head clamped distributions.
    dists: Vec<MessageDistribution>,
    /// Gradient accumulator on the raw encoder output.
    d_raw: Vec<f64>,
}

/// Runs one message round (encode -> reparameterized sample -> exchange ->
/// decide/decode) over an aligned batch and returns every agent's loss
/// breakdown together with exact gradients for all parameters, including
/// the cross-agent paths from a receiver's losses back through the
/// message into the sender's encoder.
pub fn joint_loss(
    system: &[AgentParams],
    batch: &[BatchSample],
    lambdas: &[Lambda],
    noise: &FrozenNoise,
) -> Result<(Vec<LossBreakdown>, Vec<AgentGradients>), DibError> {
    let k_agents = system.len();
    if k_agents == 0 {
        return Err(DibError::Invalid("system has no agents".into()));
    }
    if batch.is_empty() {
        return Err(DibError::EmptyBatch);
    }
    if lambdas.len() != k_agents {
        return Err(DibError::Invalid(format!(
            "{} lambda pairs for {k_agents} agents",
            lambdas.len()
        )));
    }
    if noise.values.len() != batch.len() {
        return Err(DibError::DimMismatch(format!(
            "noise for {} samples, batch has {}",
            noise.values.len(),
            batch.len()
        )));
    }
    for (k, params) in system.iter().enumerate() {
        if params.spec.agent_id != k + 1 || params.spec.num_agents != k_agents {
            return Err(DibError::Invalid(format!(
                "agent at position {k} has id {} / num_agents {}",
                params.spec.agent_id, params.spec.num_agents
            )));
        }
    }

    let mut totals: Vec<LossAccum> = vec![LossAccum::default(); k_agents];
    let mut grads: Vec<AgentGradients> = system.iter().map(AgentGradients::zeros_like).collect();

    for (sample, sample_noise) in batch.iter().zip(noise.values.iter()) {
        run_sample(system, sample, sample_noise, lambdas, &mut totals, &mut grads)?;
    }

    let scale = 1.0 / batch.len() as f64;
    for g in &mut grads {
        g.scale(scale);
    }
    let breakdowns = totals
        .iter()
        .enumerate()
        .map(|(k, acc)| {
            let task_loss = acc.task * scale;
            let relevance = acc.relevance * scale;
            let complexity = acc.complexity * scale;
            LossBreakdown {
                agent_id: k + 1,
                task_loss,
                relevance,
                complexity,
                lambda_t: lambdas[k].task_relevance,
                lambda_c: lambdas[k].complexity,
                total: task_loss - lambdas[k].task_relevance * relevance
                    + lambdas[k].complexity * complexity,
            }
        })
        .collect();
    Ok((breakdowns, grads))
}

#[derive(Debug, Clone, Copy, Default)]
struct LossAccum {
    task: f64,
    relevance: f64,
    complexity: f64,
}

fn run_sample(
    system: &[AgentParams],
    sample: &BatchSample,
    sample_noise: &[Vec<f64>],
    lambdas: &[Lambda],
    totals: &mut [LossAccum],
    grads: &mut [AgentGradients],
) -> Result<(), DibError> {
    let k_agents = system.len();
    if sample.features.len() != k_agents || sample.targets.len() != k_agents {
        return Err(DibError::DimMismatch(format!(
            "sample carries {} feature sets / {} targets for {k_agents} agents",
            sample.features.len(),
            sample.targets.len()
        )));
    }

    // Phase 1: every agent encodes and samples its outgoing payloads.
    let mut senders: Vec<SenderState> = Vec::with_capacity(k_agents);
    // payloads[sender][receiver-position] with positions ordered by
    // receiver id among the sender's others.
    let mut payloads: Vec<Vec<Vec<f64>>> = Vec::with_capacity(k_agents);
    for (k, params) in system.iter().enumerate() {
        let spec = &params.spec;
        let d_c = spec.message_dim;
        let (raw, cache) = params.encoder.forward(&sample.features[k]).map_err(|e| {
            DibError::DimMismatch(format!("agent {} encoder: {e}", spec.agent_id))
        })?;
        let heads = spec.encoder_heads();
        let dists: Vec<MessageDistribution> = (0..heads)
            .map(|h| crate::agents::split_encoder_output(&raw, h, d_c))
            .collect();
        if sample_noise[k].len() != (k_agents - 1) * d_c {
            return Err(DibError::DimMismatch(format!(
                "noise slice for agent {} has {} values, want {}",
                spec.agent_id,
                sample_noise[k].len(),
                (k_agents - 1) * d_c
            )));
        }
        let mut outgoing = Vec::with_capacity(k_agents - 1);
        for pos in 0..k_agents - 1 {
            let head = if spec.per_receiver_heads { pos } else { 0 };
            let noise_slice = if spec.per_receiver_heads {
                &sample_noise[k][pos * d_c..(pos + 1) * d_c]
            } else {
                &sample_noise[k][0..d_c]
            };
            let dist = &dists[head];
            let payload: Vec<f64> = (0..d_c)
                .map(|i| dist.mean[i] + (dist.log_variance[i] / 2.0).exp() * noise_slice[i])
                .collect();
            outgoing.push(payload);
        }
        let d_raw = vec![0.0; raw.len()];
        senders.push(SenderState {
            cache,
            raw,
            dists,
            d_raw,
        });
        payloads.push(outgoing);
    }

    // Payload gradient accumulators, same shape as payloads.
    let mut d_payloads: Vec<Vec<Vec<f64>>> = payloads
        .iter()
        .map(|per_recv| per_recv.iter().map(|p| vec![0.0; p.len()]).collect())
        .collect();

    // Phase 2: every agent decides and decodes on received payloads.
    for (j, params) in system.iter().enumerate() {
        let spec = &params.spec;
        let target = sample.targets[j];
        if target >= spec.num_targets {
            return Err(DibError::Invalid(format!(
                "target {target} out of range for agent {} with {} targets",
                spec.agent_id, spec.num_targets
            )));
        }
        // Received payload views ordered by sender id.
        let mut received: Vec<(usize, usize)> = Vec::new(); // (sender idx, position at sender)
        for (k, params_k) in system.iter().enumerate() {
            if k == j {
                continue;
            }
            let pos = params_k
                .spec
                .expected_senders()
                .iter()
                .position(|r| *r == spec.agent_id)
                .expect("receiver present in sender's list");
            received.push((k, pos));
        }

        // Policy input: features then payloads ordered by sender id.
        let mut policy_input = Vec::with_capacity(spec.policy_dims()[0]);
        policy_input.extend_from_slice(&sample.features[j]);
        for (k, pos) in &received {
            policy_input.extend_from_slice(&payloads[*k][*pos]);
        }
        let (action_logits, policy_cache) = params.policy.forward(&policy_input).map_err(|e| {
            DibError::DimMismatch(format!("agent {} policy: {e}", spec.agent_id))
        })?;
        let task = -log_softmax_at(&action_logits, target);
        totals[j].task += task;

        // d(task)/d(logits) = softmax - onehot.
        let mut d_action = softmax(&action_logits);
        d_action[target] -= 1.0;
        let (policy_grads, policy_input_grad) = params.policy.backward(&policy_cache, &d_action)?;
        grads[j].policy.accumulate(&policy_grads);
        let mut cursor = spec.obs_dim;
        for (k, pos) in &received {
            let d_c = system[*k].spec.message_dim;
            for i in 0..d_c {
                d_payloads[*k][*pos][i] += policy_input_grad[cursor + i];
            }
            cursor += d_c;
        }

        // Variational decoder on received payloads only.
        let mut decoder_input = Vec::with_capacity(spec.decoder_dims()[0]);
        for (k, pos) in &received {
            decoder_input.extend_from_slice(&payloads[*k][*pos]);
        }
        let (decoder_logits, decoder_cache) =
            params.task_decoder.forward(&decoder_input).map_err(|e| {
                DibError::DimMismatch(format!("agent {} decoder: {e}", spec.agent_id))
            })?;
        let relevance = log_softmax_at(&decoder_logits, target);
        totals[j].relevance += relevance;

        // total includes -lambda_t * relevance, so
        // d(total)/d(logits) = lambda_t * (softmax - onehot).
        let lambda_t = lambdas[j].task_relevance;
        let mut d_decoder = softmax(&decoder_logits);
        d_decoder[target] -= 1.0;
        for g in &mut d_decoder {
            *g *= lambda_t;
        }
        let (decoder_grads, decoder_input_grad) =
            params.task_decoder.backward(&decoder_cache, &d_decoder)?;
        // Decoder parameters appear in the objective only inside the
        // -lambda_t * relevance term, so a zero lambda_t freezes the
        // decoder (switched-off regularizer semantics).
        grads[j].task_decoder.accumulate(&decoder_grads);
        let mut cursor = 0;
        for (k, pos) in &received {
            let d_c = system[*k].spec.message_dim;
            for i in 0..d_c {
                d_payloads[*k][*pos][i] += decoder_input_grad[cursor + i];
            }
            cursor += d_c;
        }
    }

    // Phase 3: complexity terms and sender-side backpropagation.
    for (k, params) in system.iter().enumerate() {
        let spec = &params.spec;
        let d_c = spec.message_dim;
        let lambda_c = lambdas[k].complexity;
        let heads = spec.encoder_heads();
        let state = &mut senders[k];

        // Complexity: one KL per physical message head.
        let mut complexity = 0.0;
        for dist in &state.dists {
            complexity += kl_gauss_diag(dist, &params.prior)?;
        }
        totals[k].complexity += complexity;

        for pos in 0..k_agents - 1 {
            let head = if spec.per_receiver_heads { pos } else { 0 };
            let dist = &state.dists[head];
            let noise_slice = if spec.per_receiver_heads {
                &sample_noise[k][pos * d_c..(pos + 1) * d_c]
            } else {
                &sample_noise[k][0..d_c]
            };
            let base = head * 2 * d_c;
            for i in 0..d_c {
                let dp = d_payloads[k][pos][i];
                // payload = mean + exp(lv/2) * noise
                state.d_raw[base + i] += dp;
                state.d_raw[base + d_c + i] +=
                    dp * noise_slice[i] * 0.5 * (dist.log_variance[i] / 2.0).exp();
            }
        }

        // KL gradients (scaled by lambda_c) into mean/log-variance and,
        // if learnable, the prior.
        for (head, dist) in state.dists.iter().enumerate() {
            let base = head * 2 * d_c;
            for i in 0..d_c {
                let mu = dist.mean[i];
                let lv = dist.log_variance[i];
                let pmu = params.prior.mean_at(i);
                let plv = params.prior.log_variance_at(i);
                let inv_pvar = (-plv).exp();
                state.d_raw[base + i] += lambda_c * (mu - pmu) * inv_pvar;
                state.d_raw[base + d_c + i] += lambda_c * 0.5 * ((lv - plv).exp() - 1.0);
                if let Prior::Learnable { .. } = params.prior {
                    grads[k].prior_mean[i] += lambda_c * (pmu - mu) * inv_pvar;
                    grads[k].prior_log_variance[i] += lambda_c
                        * 0.5
                        * (1.0 - (lv - plv).exp() - (mu - pmu) * (mu - pmu) * inv_pvar);
                }
            }
        }

        // Clamp mask: raw log-variances outside the window carry no
        // gradient.
        for head in 0..heads {
            let base = head * 2 * d_c;
            for i in 0..d_c {
                let raw_lv = state.raw[base + d_c + i];
                if !(LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw_lv) {
                    state.d_raw[base + d_c + i] = 0.0;
                }
            }
        }

        let (encoder_grads, _) = params.encoder.backward(&state.cache, &state.d_raw)?;
        grads[k].encoder.accumulate(&encoder_grads);
    }
    Ok(())
}

/// Deterministic messages for evaluation: every sender transmits its
/// distribution mean to every receiver.
pub fn mean_messages_for(
    system: &[AgentParams],
    features: &[Vec<f64>],
) -> Result<Vec<Vec<Message>>, DibError> {
    let k_agents = system.len();
    let mut received: Vec<Vec<Message>> = vec![Vec::new(); k_agents];
    for (k, params) in system.iter().enumerate() {
        let raw_obs = Observation {
            agent_id: params.spec.agent_id,
            features: features[k].clone(),
            noise_seed: 0,
        };
        for receiver in params.spec.expected_senders() {
            let dist = crate::agents::encode_for_receiver(params, &raw_obs, receiver)?;
            received[receiver - 1].push(mean_message(&dist, params.spec.agent_id, receiver));
        }
    }
    for msgs in &mut received {
        msgs.sort_by_key(|m| m.sender);
    }
    Ok(received)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentSpec;
    use crate::config::AgentConfig;
    use crate::rng::SeedSplitter;

    fn spec(agent_id: usize, obs_dim: usize, d_c: usize, classes: usize) -> AgentSpec {
        AgentSpec {
            agent_id,
            num_agents: 2,
            obs_dim,
            message_dim: d_c,
            num_actions: classes,
            num_targets: classes,
            encoder_hidden: vec![6],
            policy_hidden: vec![6],
            decoder_hidden: vec![6],
            per_receiver_heads: false,
        }
    }

    fn small_system(seed: u64) -> Vec<AgentParams> {
        let splitter = SeedSplitter::new(seed);
        vec![
            AgentParams::init(spec(1, 3, 2, 4), &AgentConfig::default(), &splitter).unwrap(),
            AgentParams::init(spec(2, 2, 2, 4), &AgentConfig::default(), &splitter).unwrap(),
        ]
    }

    fn small_batch() -> Vec<BatchSample> {
        vec![
            BatchSample {
                features: vec![vec![0.5, -0.3, 1.0], vec![0.2, 0.8]],
                targets: vec![1, 2],
            },
            BatchSample {
                features: vec![vec![-1.0, 0.1, 0.4], vec![-0.6, 0.3]],
                targets: vec![0, 3],
            },
            BatchSample {
                features: vec![vec![0.9, 0.9, -0.2], vec![1.1, -0.4]],
                targets: vec![3, 0],
            },
        ]
    }

    #[test]
    fn kl_identical_distributions_is_zero() {
        let d = MessageDistribution::standard(3);
        let p = Prior::Standard { dim: 3 };
        assert_eq!(kl_gauss_diag(&d, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_unit_shift_is_half() {
        let d = MessageDistribution {
            mean: vec![1.0],
            log_variance: vec![0.0],
        };
        let p = Prior::Standard { dim: 1 };
        assert!((kl_gauss_diag(&d, &p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_variance_four_matches_closed_form_and_monte_carlo() {
        let d = MessageDistribution {
            mean: vec![0.0],
            log_variance: vec![4.0_f64.ln()],
        };
        let p = Prior::Standard { dim: 1 };
        let kl = kl_gauss_diag(&d, &p).unwrap();
        let closed = 0.5 * (4.0 - 1.0 - 4.0_f64.ln());
        assert!((kl - closed).abs() < 1e-12, "{kl} vs {closed}");

        // Monte Carlo oracle: E_p[ln p(x) - ln q(x)] under x ~ N(0, 4).
        let mut rng = SeedSplitter::new(55).stream("klmc");
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = 2.0 * standard_normal(&mut rng);
            // ln p - ln q for p = N(0,4), q = N(0,1).
            let v = -0.5 * (x * x / 4.0) - 0.5 * 4.0_f64.ln() + 0.5 * x * x;
            sum += v;
            sumsq += v * v;
        }
        let mc = sum / n as f64;
        let se = ((sumsq / n as f64 - mc * mc) / n as f64).sqrt();
        assert!(
            (mc - kl).abs() < 3.0 * se,
            "Monte Carlo {mc} vs closed form {kl}, 3se {}",
            3.0 * se
        );
    }

    #[test]
    fn kl_dimension_mismatch_errors() {
        let d = MessageDistribution::standard(2);
        let p = Prior::Standard { dim: 3 };
        assert!(matches!(kl_gauss_diag(&d, &p), Err(DibError::DimMismatch(_))));
    }

    #[test]
    fn complexity_of_zero_encoder_with_standard_prior_is_zero() {
        let params = AgentParams::zeros(spec(1, 3, 2, 4), false).unwrap();
        let batch: Vec<Observation> = (0..4)
            .map(|i| Observation {
                agent_id: 1,
                features: vec![i as f64, 0.5, -0.5],
                noise_seed: 0,
            })
            .collect();
        let c = complexity_term(&params, &batch, &params.prior.clone()).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn complexity_of_identical_batch_equals_single_sample() {
        let system = small_system(8);
        let obs = Observation {
            agent_id: 1,
            features: vec![0.4, -0.2, 0.9],
            noise_seed: 0,
        };
        let single = complexity_term(&system[0], &[obs.clone()], &system[0].prior.clone()).unwrap();
        let batch = complexity_term(
            &system[0],
            &[obs.clone(), obs.clone(), obs],
            &system[0].prior.clone(),
        )
        .unwrap();
        assert!((single - batch).abs() < 1e-12);
        assert!(single >= 0.0);
        assert!(complexity_term(&system[0], &[], &system[0].prior.clone()).is_err());
    }

    #[test]
    fn relevance_of_uniform_decoder_is_minus_ln4() {
        let params = AgentParams::zeros(spec(2, 2, 2, 4), false).unwrap();
        let received = vec![Message {
            sender: 1,
            receiver: 2,
            payload: vec![0.5, -0.5],
            quantized: None,
        }];
        let r = relevance_term(&params, &[(received, 2)]).unwrap();
        assert!((r + 4.0_f64.ln()).abs() < 1e-12, "{r}");
    }

    #[test]
    fn relevance_of_single_class_task_is_zero() {
        let params = AgentParams::zeros(spec(2, 2, 2, 1), false).unwrap();
        let received = vec![Message {
            sender: 1,
            receiver: 2,
            payload: vec![0.1, 0.1],
            quantized: None,
        }];
        let r = relevance_term(&params, &[(received, 0)]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn relevance_of_confident_decoder_approaches_zero() {
        let mut params = AgentParams::zeros(spec(2, 2, 2, 4), false).unwrap();
        // Huge bias on class 2 makes its softmax probability ~1.
        params.task_decoder.layers_mut().last_mut().unwrap().bias[2] = 50.0;
        let received = vec![Message {
            sender: 1,
            receiver: 2,
            payload: vec![0.0, 0.0],
            quantized: None,
        }];
        let r = relevance_term(&params, &[(received, 2)]).unwrap();
        assert!(r > -1e-12 && r <= 0.0, "{r}");
    }

    #[test]
    fn switched_off_regularizers_reduce_to_task_cross_entropy() {
        let system = small_system(3);
        let batch = small_batch();
        let lambdas = vec![
            Lambda { task_relevance: 0.0, complexity: 0.0 };
            2
        ];
        let noise = FrozenNoise::zeros(batch.len(), 2, 2);
        let (breakdowns, _) = joint_loss(&system, &batch, &lambdas, &noise).unwrap();
        for b in &breakdowns {
            assert!((b.total - b.task_loss).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weight_system_hits_the_hand_value() {
        // Uniform policy and decoder over 4 classes, zero KL:
        // total = ln4 - 1*(-ln4) + 1*0 = 2 ln4.
        let system = vec![
            AgentParams::zeros(spec(1, 3, 2, 4), false).unwrap(),
            AgentParams::zeros(spec(2, 2, 2, 4), false).unwrap(),
        ];
        let batch = small_batch();
        let lambdas = vec![
            Lambda { task_relevance: 1.0, complexity: 1.0 };
            2
        ];
        let noise = FrozenNoise::zeros(batch.len(), 2, 2);
        let (breakdowns, grads) = joint_loss(&system, &batch, &lambdas, &noise).unwrap();
        let want = 2.0 * 4.0_f64.ln();
        for b in &breakdowns {
            assert!((b.total - want).abs() < 1e-12, "{} vs {want}", b.total);
            assert!((b.complexity - 0.0).abs() < 1e-15);
        }
        for g in &grads {
            assert!(g.all_finite());
        }
    }

    #[test]
    fn full_loss_gradients_match_finite_differences() {
        // The derived oracle: central differences over every parameter of
        // every agent with frozen noise.
        let system = small_system(17);
        let batch = small_batch();
        let lambdas = vec![
            Lambda { task_relevance: 0.5, complexity: 0.3 },
            Lambda { task_relevance: 0.7, complexity: 0.05 },
        ];
        let mut rng = SeedSplitter::new(99).stream("noise");
        let noise = FrozenNoise::draw(batch.len(), 2, 2, &mut rng);

        let flatten = |system: &[AgentParams]| -> Vec<f64> {
            let mut flat = Vec::new();
            for params in system {
                params.encoder.write_params(&mut flat);
                params.policy.write_params(&mut flat);
                params.task_decoder.write_params(&mut flat);
            }
            flat
        };
        let unflatten = |template: &[AgentParams], flat: &[f64]| -> Vec<AgentParams> {
            let mut out = template.to_vec();
            let mut cursor = 0;
            for params in &mut out {
                cursor += params.encoder.read_params(&flat[cursor..]).unwrap();
                cursor += params.policy.read_params(&flat[cursor..]).unwrap();
                cursor += params.task_decoder.read_params(&flat[cursor..]).unwrap();
            }
            out
        };

        let loss_at = |flat: &[f64]| -> f64 {
            let sys = unflatten(&system, flat);
            let (b, _) = joint_loss(&sys, &batch, &lambdas, &noise).unwrap();
            b.iter().map(|x| x.total).sum()
        };

        let (_, grads) = joint_loss(&system, &batch, &lambdas, &noise).unwrap();
        let mut analytic = Vec::new();
        for g in &grads {
            g.encoder.write_params(&mut analytic);
            g.policy.write_params(&mut analytic);
            g.task_decoder.write_params(&mut analytic);
        }
        let flat = flatten(&system);
        let report = crate::nn::grad_check(loss_at, &analytic, &flat, 1e-5, 1e-4);
        assert!(
            report.pass,
            "joint loss gradient mismatch: max rel error {} at {}",
            report.max_rel_error, report.worst_index
        );
    }

    #[test]
    fn learnable_prior_gradients_match_finite_differences() {
        let splitter = SeedSplitter::new(23);
        let config = AgentConfig {
            learnable_prior: true,
            ..AgentConfig::default()
        };
        let system = vec![
            AgentParams::init(spec(1, 3, 2, 4), &config, &splitter).unwrap(),
            AgentParams::init(spec(2, 2, 2, 4), &config, &splitter).unwrap(),
        ];
        let batch = small_batch();
        let lambdas = vec![Lambda { task_relevance: 0.4, complexity: 0.6 }; 2];
        let mut rng = SeedSplitter::new(7).stream("noise");
        let noise = FrozenNoise::draw(batch.len(), 2, 2, &mut rng);

        let loss_with_prior = |agent: usize, mean: &[f64], lv: &[f64]| -> f64 {
            let mut sys = system.clone();
            sys[agent].prior = Prior::Learnable {
                mean: mean.to_vec(),
                log_variance: lv.to_vec(),
            };
            let (b, _) = joint_loss(&sys, &batch, &lambdas, &noise).unwrap();
            b.iter().map(|x| x.total).sum()
        };

        let (_, grads) = joint_loss(&system, &batch, &lambdas, &noise).unwrap();
        let h = 1e-6;
        for agent in 0..2 {
            let (mean, lv) = match &system[agent].prior {
                Prior::Learnable { mean, log_variance } => (mean.clone(), log_variance.clone()),
                _ => unreachable!(),
            };
            for i in 0..mean.len() {
                let mut m = mean.clone();
                m[i] += h;
                let plus = loss_with_prior(agent, &m, &lv);
                m[i] -= 2.0 * h;
                let minus = loss_with_prior(agent, &m, &lv);
                let numeric = (plus - minus) / (2.0 * h);
                let a = grads[agent].prior_mean[i];
                assert!(
                    (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6) < 1e-4,
                    "prior mean grad agent {agent} coord {i}: {a} vs {numeric}"
                );
                let mut l = lv.clone();
                l[i] += h;
                let plus = loss_with_prior(agent, &mean, &l);
                l[i] -= 2.0 * h;
                let minus = loss_with_prior(agent, &mean, &l);
                let numeric = (plus - minus) / (2.0 * h);
                let a = grads[agent].prior_log_variance[i];
                assert!(
                    (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6) < 1e-4,
                    "prior logvar grad agent {agent} coord {i}: {a} vs {numeric}"
                );
            }
        }
    }
}
