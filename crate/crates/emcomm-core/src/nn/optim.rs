//! First-order optimizers over flat parameter vectors.

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sgd,
    Adam,
}

/// Optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64, param_count: usize) -> Self {
        Self {
            algorithm: Algorithm::Sgd,
            learning_rate,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    /// Adam with the usual defaults (0.9 / 0.999 / 1e-8).
    pub fn adam(learning_rate: f64, param_count: usize) -> Self {
        Self {
            algorithm: Algorithm::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    pub fn param_count(&self) -> usize {
        self.first_moment.len()
    }
}

/// One optimizer step in place. Aborts on non-finite gradients instead of
/// letting a NaN spread silently through the parameters.
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: &mut [f64],
    grads: &[f64],
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.param_count() {
        return Err(NnError::ParamCount {
            want: state.param_count(),
            got: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(NnError::NonFinite { what: "gradient" });
    }
    state.step += 1;
    match state.algorithm {
        Algorithm::Sgd => {
            for (p, g) in params.iter_mut().zip(grads.iter()) {
                *p -= state.learning_rate * g;
            }
        }
        Algorithm::Adam => {
            let t = state.step as i32;
            let bias1 = 1.0 - state.beta1.powi(t);
            let bias2 = 1.0 - state.beta2.powi(t);
            for i in 0..params.len() {
                let g = grads[i];
                state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
                state.second_moment[i] =
                    state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
                let m_hat = state.first_moment[i] / bias1;
                let v_hat = state.second_moment[i] / bias2;
                params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_bumps_step() {
        let mut state = OptimizerState::adam(0.1, 3);
        let mut params = vec![1.0, -2.0, 0.5];
        optimizer_step(&mut state, &mut params, &[0.0; 3]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn sgd_one_step_arithmetic() {
        let mut state = OptimizerState::sgd(0.1, 1);
        let mut params = vec![1.0];
        optimizer_step(&mut state, &mut params, &[2.0]).unwrap();
        assert!((params[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // At t=1 with g=1 the bias-corrected update is lr / (1 + eps).
        let mut state = OptimizerState::adam(0.05, 4);
        let mut params = vec![0.0; 4];
        optimizer_step(&mut state, &mut params, &[1.0; 4]).unwrap();
        let expected = -0.05 / (1.0 + 1e-8);
        for p in &params {
            assert!((p - expected).abs() < 1e-12, "got {p}, want {expected}");
        }
    }

    #[test]
    fn non_finite_gradient_errors_loudly() {
        let mut state = OptimizerState::sgd(0.1, 2);
        let mut params = vec![0.0, 0.0];
        let err = optimizer_step(&mut state, &mut params, &[1.0, f64::NAN]);
        assert!(matches!(err, Err(NnError::NonFinite { .. })));
    }

    #[test]
    fn sgd_monotone_on_convex_quadratic() {
        // f(p) = 0.5 * sum(c_i p_i^2), curvature bound c_max = 4; any
        // lr < 2/c_max strictly decreases f each step.
        let curv = [1.0, 4.0, 2.5];
        let mut params = vec![3.0, -1.0, 2.0];
        let mut state = OptimizerState::sgd(0.2, 3);
        let f = |p: &[f64]| -> f64 {
            p.iter().zip(curv.iter()).map(|(x, c)| 0.5 * c * x * x).sum()
        };
        let mut last = f(&params);
        for _ in 0..50 {
            let grads: Vec<f64> = params.iter().zip(curv.iter()).map(|(x, c)| c * x).collect();
            optimizer_step(&mut state, &mut params, &grads).unwrap();
            let now = f(&params);
            assert!(now < last, "loss must strictly decrease: {now} !< {last}");
            last = now;
        }
    }
}
