//! Brute-force information oracles on finite alphabets.
//!
//! These enumerate small discrete systems exactly and are the independent
//! check that the variational complexity upper bound and task-relevance
//! lower bound used in training really do bracket the true mutual
//! informations.

use super::DibError;

/// A joint probability table p(s, c) over finite alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    /// `table[s][c]`, entries nonnegative, summing to 1 within 1e-12.
    pub table: Vec<Vec<f64>>,
}

impl DiscreteJoint {
    pub fn validate(&self) -> Result<(), DibError> {
        if self.table.is_empty() || self.table[0].is_empty() {
            return Err(DibError::Invalid("joint table must be non-empty".into()));
        }
        let cols = self.table[0].len();
        let mut sum = 0.0;
        for row in &self.table {
            if row.len() != cols {
                return Err(DibError::Invalid("joint table must be rectangular".into()));
            }
            for p in row {
                if *p < 0.0 {
                    return Err(DibError::Invalid(format!("negative entry {p}")));
                }
                sum += p;
            }
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DibError::Invalid(format!(
                "joint table sums to {sum}, must be 1 within 1e-12"
            )));
        }
        Ok(())
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.table.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let cols = self.table[0].len();
        let mut m = vec![0.0; cols];
        for row in &self.table {
            for (c, p) in row.iter().enumerate() {
                m[c] += p;
            }
        }
        m
    }
}

/// Exact mutual information in nats:
/// sum p(s,c) ln[p(s,c) / (p(s) p(c))], with 0 ln 0 := 0.
pub fn exact_mi_discrete(joint: &DiscreteJoint) -> Result<f64, DibError> {
    joint.validate()?;
    let ps = joint.row_marginal();
    let pc = joint.col_marginal();
    let mut mi = 0.0;
    for (s, row) in joint.table.iter().enumerate() {
        for (c, p) in row.iter().enumerate() {
            if *p > 0.0 {
                mi += p * (p / (ps[s] * pc[c])).ln();
            }
        }
    }
    Ok(mi)
}

/// Outcome of checking both variational bounds on one finite system.
#[derive(Debug, Clone)]
pub struct BoundsCheck {
    /// Exact I(S; C).
    pub mi_observation_message: f64,
    /// E_s[KL(p(C|s) || prior)] — must be >= I(S; C).
    pub complexity_upper_bound: f64,
    /// Exact I(Y; C).
    pub mi_target_message: f64,
    /// E[ln decoder(y|c)], the raw training-signal expectation.
    pub relevance_expectation: f64,
    /// H(Y), the parameter-free constant restoring the true inequality.
    pub target_entropy: f64,
    /// relevance_expectation + H(Y) — must be <= I(Y; C).
    pub relevance_lower_bound: f64,
    pub upper_slack: f64,
    pub lower_slack: f64,
    pub upper_holds: bool,
    pub lower_holds: bool,
}

/// Verifies the complexity upper bound and the entropy-corrected
/// relevance lower bound on a fully enumerated system.
///
/// `encoder[s][c]` is the message law p(c|s), `prior[c]` any distribution
/// over messages, `decoder[c][y]` the variational posterior, and
/// `env_joint[s][y]` the environment's state/target joint.
pub fn verify_bounds_discrete(
    encoder: &[Vec<f64>],
    prior: &[f64],
    decoder: &[Vec<f64>],
    env_joint: &[Vec<f64>],
) -> Result<BoundsCheck, DibError> {
    let num_s = env_joint.len();
    if num_s == 0 || encoder.len() != num_s {
        return Err(DibError::Invalid(format!(
            "encoder has {} rows, env joint has {num_s}",
            encoder.len()
        )));
    }
    let num_y = env_joint[0].len();
    let num_c = prior.len();
    validate_conditional(encoder, num_c, "encoder")?;
    validate_conditional(decoder, num_y, "decoder")?;
    if decoder.len() != num_c {
        return Err(DibError::Invalid(format!(
            "decoder has {} rows, need one per message value ({num_c})",
            decoder.len()
        )));
    }
    validate_distribution(prior, "prior")?;
    let env = DiscreteJoint {
        table: env_joint.to_vec(),
    };
    env.validate()?;

    let p_s = env.row_marginal();
    let p_y = env.col_marginal();

    // p(s, c) = p(s) p(c|s).
    let joint_sc = DiscreteJoint {
        table: (0..num_s)
            .map(|s| (0..num_c).map(|c| p_s[s] * encoder[s][c]).collect())
            .collect(),
    };
    let mi_sc = exact_mi_discrete(&normalize(joint_sc))?;

    // p(y, c) = sum_s p(s, y) p(c|s).
    let mut table_yc = vec![vec![0.0; num_c]; num_y];
    for s in 0..num_s {
        for y in 0..num_y {
            let p_sy = env_joint[s][y];
            if p_sy == 0.0 {
                continue;
            }
            for c in 0..num_c {
                table_yc[y][c] += p_sy * encoder[s][c];
            }
        }
    }
    let joint_yc = DiscreteJoint { table: table_yc.clone() };
    let mi_yc = exact_mi_discrete(&normalize(joint_yc))?;

    // Theorem-style upper estimate: E_s KL(p(C|s) || prior).
    let mut upper = 0.0;
    for s in 0..num_s {
        for c in 0..num_c {
            let p = encoder[s][c];
            if p > 0.0 {
                if prior[c] <= 0.0 {
                    return Err(DibError::Invalid(format!(
                        "prior[{c}] = 0 where the encoder places mass; KL is infinite"
                    )));
                }
                upper += p_s[s] * p * (p / prior[c]).ln();
            }
        }
    }

    // Relevance expectation E_{y,c}[ln decoder(y|c)] and H(Y).
    let mut relevance = 0.0;
    for y in 0..num_y {
        for c in 0..num_c {
            let p = table_yc[y][c];
            if p > 0.0 {
                relevance += p * decoder[c][y].ln();
            }
        }
    }
    let entropy: f64 = -p_y.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    let lower = relevance + entropy;

    Ok(BoundsCheck {
        mi_observation_message: mi_sc,
        complexity_upper_bound: upper,
        mi_target_message: mi_yc,
        relevance_expectation: relevance,
        target_entropy: entropy,
        relevance_lower_bound: lower,
        upper_slack: upper - mi_sc,
        lower_slack: mi_yc - lower,
        upper_holds: upper - mi_sc >= -1e-9,
        lower_holds: mi_yc - lower >= -1e-9,
    })
}

fn normalize(mut joint: DiscreteJoint) -> DiscreteJoint {
    let total: f64 = joint.table.iter().flat_map(|r| r.iter()).sum();
    if total > 0.0 {
        for row in &mut joint.table {
            for p in row {
                *p /= total;
            }
        }
    }
    joint
}

fn validate_conditional(table: &[Vec<f64>], cols: usize, name: &str) -> Result<(), DibError> {
    for (i, row) in table.iter().enumerate() {
        if row.len() != cols {
            return Err(DibError::Invalid(format!(
                "{name} row {i} has {} entries, need {cols}",
                row.len()
            )));
        }
        if row.iter().any(|p| *p < 0.0) {
            return Err(DibError::Invalid(format!("{name} row {i} has a negative entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DibError::Invalid(format!(
                "{name} row {i} sums to {sum}, must be 1 within 1e-9"
            )));
        }
    }
    Ok(())
}

fn validate_distribution(probs: &[f64], name: &str) -> Result<(), DibError> {
    if probs.iter().any(|p| *p < 0.0) {
        return Err(DibError::Invalid(format!("{name} has a negative entry")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(DibError::Invalid(format!(
            "{name} sums to {sum}, must be 1 within 1e-9"
        )));
    }
    Ok(())
}

/// Random small systems for property checks; also used by the acceptance
/// suite.
pub fn random_system(
    rng: &mut rand_chacha::ChaCha12Rng,
    max_size: usize,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    use rand::Rng;
    let num_s = rng.gen_range(2..=max_size);
    let num_c = rng.gen_range(2..=max_size);
    let num_y = rng.gen_range(2..=max_size);
    let rand_dist = |rng: &mut rand_chacha::ChaCha12Rng, n: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    };
    let encoder: Vec<Vec<f64>> = (0..num_s).map(|_| rand_dist(rng, num_c)).collect();
    let prior = rand_dist(rng, num_c);
    let decoder: Vec<Vec<f64>> = (0..num_c).map(|_| rand_dist(rng, num_y)).collect();
    let mut env: Vec<Vec<f64>> = (0..num_s).map(|_| rand_dist(rng, num_y)).collect();
    let weights = rand_dist(rng, num_s);
    let mut total = 0.0;
    for (s, row) in env.iter_mut().enumerate() {
        for p in row.iter_mut() {
            *p *= weights[s];
            total += *p;
        }
    }
    for row in env.iter_mut() {
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    (encoder, prior, decoder, env)
}

/// True message marginal p(c) and true posterior p(y|c) for a system;
/// plugging these in makes both bounds tight.
pub fn optimal_prior_and_decoder(
    encoder: &[Vec<f64>],
    env_joint: &[Vec<f64>],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let num_s = env_joint.len();
    let num_y = env_joint[0].len();
    let num_c = encoder[0].len();
    let p_s: Vec<f64> = env_joint.iter().map(|row| row.iter().sum()).collect();
    let mut p_c = vec![0.0; num_c];
    for s in 0..num_s {
        for c in 0..num_c {
            p_c[c] += p_s[s] * encoder[s][c];
        }
    }
    let mut posterior = vec![vec![0.0; num_y]; num_c];
    for s in 0..num_s {
        for y in 0..num_y {
            for c in 0..num_c {
                posterior[c][y] += env_joint[s][y] * encoder[s][c];
            }
        }
    }
    for (c, row) in posterior.iter_mut().enumerate() {
        let total = p_c[c];
        if total > 0.0 {
            for p in row.iter_mut() {
                *p /= total;
            }
        }
    }
    (p_c, posterior)
}
