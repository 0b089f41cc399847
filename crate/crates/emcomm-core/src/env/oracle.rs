//! Exact Bayes oracles for the factored world, by enumeration.
//!
//! Demand and channel are independent, the demand marginal is a mixture of
//! Gaussian bin masses (closed form via the normal CDF), and the channel
//! marginal is the stationary vector of the configured chain. That makes
//! the physical-layer agent's Bayes-optimal accuracy — with and without
//! access to the demand level — an exact finite sum.

use super::EnvError;
use crate::config::EnvConfig;
use statrs::distribution::{ContinuousCDF, Normal};

/// Stationary distribution of the demand level under the configured
/// class-mixture AR(1) traffic process.
pub fn stationary_demand_distribution(config: &EnvConfig) -> Result<Vec<f64>, EnvError> {
    config.validate()?;
    let class_probs = config.class_distribution();
    let sd = config.innovation_scale / (1.0 - config.ar_coeff * config.ar_coeff).sqrt();
    let d = config.num_demand_levels;
    let mut probs = vec![0.0; d];
    for (class, weight) in class_probs.iter().enumerate() {
        let mean = config.class_drives[class] / (1.0 - config.ar_coeff);
        for level in 0..d {
            probs[level] += weight * gaussian_bin_mass(mean, sd, level, &config.demand_thresholds);
        }
    }
    Ok(probs)
}

/// Mass of demand bin `level` under N(mean, sd^2) on the latent rate.
/// All latent mass below the first threshold (including the clamp at zero)
/// lands in bin 0.
fn gaussian_bin_mass(mean: f64, sd: f64, level: usize, thresholds: &[f64]) -> f64 {
    let lower = if level == 0 {
        f64::NEG_INFINITY
    } else {
        thresholds[level - 1]
    };
    let upper = if level == thresholds.len() {
        f64::INFINITY
    } else {
        thresholds[level]
    };
    if sd == 0.0 {
        return if mean >= lower && mean < upper { 1.0 } else { 0.0 };
    }
    let normal = Normal::new(mean, sd).expect("positive sd");
    let hi = if upper.is_finite() { normal.cdf(upper) } else { 1.0 };
    let lo = if lower.is_finite() { normal.cdf(lower) } else { 0.0 };
    hi - lo
}

/// Stationary distribution of a row-stochastic chain by power iteration.
pub fn stationary_channel_distribution(config: &EnvConfig) -> Result<Vec<f64>, EnvError> {
    config.validate()?;
    Ok(stationary_channel(&config.channel_transition))
}

pub(super) fn stationary_channel(transition: &[Vec<f64>]) -> Vec<f64> {
    let g = transition.len();
    let mut pi = vec![1.0 / g as f64; g];
    for _ in 0..200_000 {
        let mut next = vec![0.0; g];
        for (i, p) in pi.iter().enumerate() {
            for (j, t) in transition[i].iter().enumerate() {
                next[j] += p * t;
            }
        }
        let delta: f64 = next
            .iter()
            .zip(pi.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        pi = next;
        if delta < 1e-14 {
            break;
        }
    }
    pi
}

/// Exact Bayes-optimal accuracy of the physical-layer agent's resource
/// task, computed by exhaustive enumeration of the joint generative
/// distribution. `with_communication` grants access to the demand level
/// (what a noiseless application-layer message can convey); without it,
/// only the channel level (revealed by a noiseless SNR observation) is
/// available and the demand must be integrated out.
pub fn bayes_oracle_accuracy(config: &EnvConfig, with_communication: bool) -> Result<f64, EnvError> {
    config.validate()?;
    if config.noise_scale != 0.0 {
        return Err(EnvError::NonEnumerable(format!(
            "noise_scale {} != 0; only the noiseless world is enumerable",
            config.noise_scale
        )));
    }
    let p_demand = stationary_demand_distribution(config)?;
    let p_channel = stationary_channel_distribution(config)?;
    let num_configs = config.num_resource_configs();

    if with_communication {
        // Both factors known: the table lookup is deterministic, so every
        // (demand, channel) cell is classified correctly.
        let mut acc = 0.0;
        for (d, pd) in p_demand.iter().enumerate() {
            for (g, pg) in p_channel.iter().enumerate() {
                let _ = config.resource_table[d][g];
                acc += pd * pg;
            }
        }
        Ok(acc)
    } else {
        // Channel known, demand integrated out: pick the likeliest label
        // per channel level.
        let mut acc = 0.0;
        for (g, pg) in p_channel.iter().enumerate() {
            let mut label_mass = vec![0.0; num_configs];
            for (d, pd) in p_demand.iter().enumerate() {
                label_mass[config.resource_table[d][g]] += pd;
            }
            let best = label_mass.iter().cloned().fold(0.0, f64::max);
            acc += pg * best;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless_default() -> EnvConfig {
        EnvConfig {
            noise_scale: 0.0,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn with_communication_and_deterministic_table_is_perfect() {
        let config = noiseless_default();
        let acc = bayes_oracle_accuracy(&config, true).unwrap();
        assert!((acc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_only_table_needs_no_communication() {
        let mut config = noiseless_default();
        // T[d][g] = g ignores demand entirely.
        config.resource_table = (0..4).map(|_| (0..4).collect()).collect();
        let acc = bayes_oracle_accuracy(&config, false).unwrap();
        assert!((acc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_table_makes_communication_valuable() {
        let config = noiseless_default();
        let no_comm = bayes_oracle_accuracy(&config, false).unwrap();
        let comm = bayes_oracle_accuracy(&config, true).unwrap();
        assert!(
            comm > no_comm,
            "communication must help: {comm} vs {no_comm}"
        );
        assert!(
            comm - no_comm > 0.2,
            "oracle gap {:.4} must exceed 0.2 so the environment genuinely \
             requires communication",
            comm - no_comm
        );
    }

    #[test]
    fn no_comm_accuracy_equals_demand_mode_for_row_distinct_table() {
        // With entries distinct within each column-slice in d, the best
        // no-communication guess per channel is the modal demand level.
        let config = noiseless_default();
        let p_demand = stationary_demand_distribution(&config).unwrap();
        let modal = p_demand.iter().cloned().fold(0.0, f64::max);
        let no_comm = bayes_oracle_accuracy(&config, false).unwrap();
        assert!((no_comm - modal).abs() < 1e-12);
    }

    #[test]
    fn uniform_independent_demand_gives_quarter_accuracy() {
        let mut config = noiseless_default();
        // Four identical classes whose stationary demand mass is uniform
        // by symmetry of the default thresholds.
        config.noise_scale = 0.0;
        let p = stationary_demand_distribution(&config).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        // Force exactly uniform demand to pin the 1/4 value.
        let uniform = vec![0.25; 4];
        let mut acc = 0.0;
        let p_channel = stationary_channel_distribution(&config).unwrap();
        for (g, pg) in p_channel.iter().enumerate() {
            let mut mass = vec![0.0; 4];
            for (d, pd) in uniform.iter().enumerate() {
                mass[config.resource_table[d][g]] += pd;
            }
            acc += pg * mass.iter().cloned().fold(0.0, f64::max);
        }
        assert!((acc - 0.25).abs() < 1e-12);
    }

    #[test]
    fn noisy_config_is_not_enumerable() {
        let config = EnvConfig::default();
        assert!(matches!(
            bayes_oracle_accuracy(&config, true),
            Err(EnvError::NonEnumerable(_))
        ));
    }

    #[test]
    fn demand_distribution_sums_to_one() {
        let p = stationary_demand_distribution(&EnvConfig::default()).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn default_channel_chain_is_uniform_stationary() {
        let p = stationary_channel_distribution(&EnvConfig::default()).unwrap();
        for v in &p {
            assert!((v - 0.25).abs() < 1e-9, "{p:?}");
        }
    }
}
