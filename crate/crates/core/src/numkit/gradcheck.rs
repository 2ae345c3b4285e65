//! Central finite-difference gradient checker.

use crate::error::{Error, Result};
use crate::Scalar;

/// Largest relative discrepancy between `analytic` and central differences of `f`
/// at `point`: `max_k |g_k - fd_k| / max(1, |g_k|)`.
pub fn fd_gradcheck<T, F>(mut f: F, analytic: &[T], point: &[T], h: T) -> Result<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    if !(h > T::zero()) {
        return Err(Error::Config(format!("finite-difference step {h} must be positive")));
    }
    if analytic.len() != point.len() {
        return Err(Error::Shape(format!(
            "analytic gradient has {} entries for a {}-dimensional point",
            analytic.len(),
            point.len()
        )));
    }
    let mut x = point.to_vec();
    let two_h = h + h;
    let mut worst = T::zero();
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + h;
        let up = f(&x);
        x[k] = orig - h;
        let down = f(&x);
        x[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("function evaluation at coordinate {k}")));
        }
        let fd = (up - down) / two_h;
        let g = analytic[k];
        let err = (g - fd).abs() / T::one().max(g.abs());
        if !(err <= worst) {
            worst = err;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Activation, MlpParams};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_is_exact() {
        let e = fd_gradcheck(|x: &[f64]| x[0] * x[0], &[6.0], &[3.0], 1e-5).unwrap();
        assert!(e < 1e-8, "{e}");
    }

    fn tanh_layer_case(seed: u64, corrupt: f64) -> f64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let net = MlpParams::<f64>::new(&[3, 4], &[Activation::Tanh], &mut r).unwrap();
        let x: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, cache) = net.forward(&x).unwrap();
        let (g, _) = net.backward(&cache, Array2::ones((1, 4)).view()).unwrap();
        let mut analytic = g.flatten();
        analytic[0] += corrupt;
        fd_gradcheck(
            |p: &[f64]| {
                let mut n = net.clone();
                n.assign_flat(p).unwrap();
                n.predict(&x).unwrap().iter().sum()
            },
            &analytic,
            &net.flatten(),
            1e-5,
        )
        .unwrap()
    }

    #[test]
    fn tanh_layer_passes() {
        assert!(tanh_layer_case(11, 0.0) < 1e-4);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        assert!(tanh_layer_case(11, 0.1) > 1e-2);
    }

    #[test]
    fn non_finite_evaluation_is_error() {
        let r = fd_gradcheck(|x: &[f64]| (x[0] - 1.0).ln(), &[1.0], &[1.0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn non_positive_step_is_error() {
        assert!(matches!(
            fd_gradcheck(|x: &[f64]| x[0], &[1.0], &[0.0], 0.0),
            Err(Error::Config(_))
        ));
    }
}
