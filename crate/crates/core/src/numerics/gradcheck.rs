use crate::error::{Error, Result};

/// Compares an analytic gradient with central differences.
///
/// Returns `max_k |g_k - c_k| / max(1, |c_k|)` where
/// `c_k = (f(p + eps e_k) - f(p - eps e_k)) / (2 eps)`.
pub fn grad_check<F, G>(f: F, grad_f: G, p: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let analytic = grad_f(p);
    if analytic.len() != p.len() {
        return Err(Error::shape("grad_check", p.len(), analytic.len()));
    }
    let mut probe = p.to_vec();
    let mut worst = 0.0f64;
    for k in 0..p.len() {
        probe[k] = p[k] + eps;
        let plus = f(&probe);
        probe[k] = p[k] - eps;
        let minus = f(&probe);
        probe[k] = p[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite function value around coordinate {k}"
            )));
        }
        let central = (plus - minus) / (2.0 * eps);
        if !analytic[k].is_finite() {
            return Err(Error::Numeric(format!("non-finite analytic gradient at {k}")));
        }
        let err = (analytic[k] - central).abs() / central.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
