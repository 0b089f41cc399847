//! Central finite-difference verification of analytic gradients.

/// Outcome of a gradient check over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares `analytic_grad` against central finite differences of `loss`
/// at `params`. The loss must be deterministic at fixed parameters (any
/// sampling noise frozen by the caller).
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-6)`; the
/// report carries the worst coordinate. `pass` is strict (`< tolerance`),
/// so a zero tolerance always fails.
pub fn grad_check<L>(
    loss: L,
    analytic_grad: &[f64],
    params: &[f64],
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    L: Fn(&[f64]) -> f64,
{
    assert_eq!(analytic_grad.len(), params.len(), "gradient/parameter shape");
    let mut scratch = params.to_vec();
    let mut max_rel = 0.0_f64;
    let mut worst = 0;
    for i in 0..params.len() {
        let original = scratch[i];
        scratch[i] = original + step;
        let plus = loss(&scratch);
        scratch[i] = original - step;
        let minus = loss(&scratch);
        scratch[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic_grad[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }
    GradCheckReport {
        max_rel_error: max_rel,
        worst_index: worst,
        tolerance,
        pass: max_rel < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mlp;

    #[test]
    fn quadratic_loss_on_linear_net_is_nearly_exact() {
        let mut net = Mlp::zeros(&[2, 1]).unwrap();
        net.layers_mut()[0].weight = vec![0.7, -1.3];
        net.layers_mut()[0].bias = vec![0.4];
        let input = [1.5, -0.5];

        let loss = |flat: &[f64]| -> f64 {
            let mut n = net.clone();
            n.read_params(flat).unwrap();
            let (out, _) = n.forward(&input).unwrap();
            0.5 * out[0] * out[0]
        };
        let mut flat = Vec::new();
        net.write_params(&mut flat);
        let (out, cache) = net.forward(&input).unwrap();
        let (grads, _) = net.backward(&cache, &[out[0]]).unwrap();
        let mut analytic = Vec::new();
        grads.write_params(&mut analytic);

        let report = grad_check(loss, &analytic, &flat, 1e-5, 1e-8);
        assert!(
            report.pass,
            "quadratic check should be near-exact, got {}",
            report.max_rel_error
        );
    }

    #[test]
    fn zero_tolerance_always_fails() {
        let loss = |p: &[f64]| p[0].sin();
        let analytic = [1.0_f64.cos() * 0.0 + 0.5_f64.cos()];
        let report = grad_check(loss, &analytic, &[0.5], 1e-5, 0.0);
        assert!(!report.pass);
    }
}
