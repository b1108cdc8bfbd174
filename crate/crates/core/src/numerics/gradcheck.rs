use super::NumericsError;

/// Compares the analytic gradient returned by `f` at `theta` with central
/// differences of step `h` and returns the worst coordinate's relative error
/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(mut f: F, theta: &[f64], h: f64) -> Result<f64, NumericsError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if !(h > 0.0) {
        return Err(NumericsError::Check(format!("step must be positive, got {h}")));
    }
    let (value, analytic) = f(theta);
    if !value.is_finite() {
        return Err(NumericsError::Check("function value is not finite".into()));
    }
    if analytic.len() != theta.len() {
        return Err(NumericsError::Check(format!(
            "analytic gradient has {} entries for {} parameters",
            analytic.len(),
            theta.len()
        )));
    }
    let mut probe = theta.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let plus = f(&probe).0;
        probe[i] = theta[i] - h;
        let minus = f(&probe).0;
        probe[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumericsError::Check(format!(
                "function is not finite around coordinate {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
