use super::{Tensor, TensorError};

/// Central-difference gradient of a scalar function:
/// `(f(x + eps·e_i) − f(x − eps·e_i)) / (2·eps)` for every element `i`.
pub fn finite_diff_grad<F, E>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor, E>
where
    F: FnMut(&Tensor) -> Result<f64, E>,
    E: From<TensorError>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(
            TensorError::InvalidArgument(format!("eps must be positive, got {eps}")).into(),
        );
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(TensorError::NonFinite {
                op: "finite_diff_grad",
            }
            .into());
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(Tensor::from_vec(x.shape(), grad)?)
}

/// Largest elementwise `|a − b| / max(|a|, |b|, floor)`.
///
/// `floor` keeps the ratio meaningful where both gradients are ~0; below it
/// the measure degrades to absolute error scaled by `1/floor`.
pub fn max_relative_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
