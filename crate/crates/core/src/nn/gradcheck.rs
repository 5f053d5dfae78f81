use crate::{Error, Result};

/// Central-difference gradient check.
///
/// Returns `max_i |g_i - n_i| / max(1e-8, |g_i| + |n_i|)` where `g` is the
/// analytic gradient and `n` the numeric one.
pub fn grad_check<L, G>(loss_fn: L, grad_fn: G, params: &[f64], eps: f64) -> Result<f64>
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::invalid("eps", format!("{eps} not in [1e-6, 1e-3]")));
    }
    let analytic = grad_fn(params);
    crate::error::check_len("grad_check gradient", params.len(), analytic.len())?;

    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = loss_fn(&probe);
        probe[i] = orig - eps;
        let down = loss_fn(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteLoss(i));
        }
        let numeric = (up - down) / (2.0 * eps);
        let denom = (analytic[i].abs() + numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
