//! Central finite-difference gradient checking.
//!
//! The numeric side is deliberately independent of every analytic gradient
//! in this crate: it only ever evaluates a loss closure at perturbed
//! parameter vectors. Modules use it in tests, and the `gradcheck` CLI
//! subcommand runs the same comparisons as a standalone check.

/// Central finite differences of `f` at `params`: `(f(x+ε) - f(x-ε)) / 2ε`
/// per coordinate.
pub fn central_differences<F>(mut f: F, params: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut work = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + eps;
        let up = f(&work);
        work[i] = orig - eps;
        let down = f(&work);
        work[i] = orig;
        grads.push((up - down) / (2.0 * eps));
    }
    grads
}

/// Relative error between an analytic and a numeric gradient component:
/// `|a - n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Worst relative error over a gradient vector pair.
///
/// Panics if the two slices disagree in length; that is a harness bug, not
/// a numeric failure.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

/// Default perturbation for all finite-difference checks in the crate.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Default denominator floor; keeps zero-gradient coordinates from
/// producing spurious relative errors out of O(ε²) truncation noise.
pub const DEFAULT_FLOOR: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_recovered() {
        // f(x) = Σ i·x_i², df/dx_i = 2·i·x_i
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, &v)| i as f64 * v * v).sum();
        let params = [0.5, -1.25, 2.0, 0.0];
        let numeric = central_differences(f, &params, DEFAULT_EPS);
        let analytic: Vec<f64> = params
            .iter()
            .enumerate()
            .map(|(i, &v)| 2.0 * i as f64 * v)
            .collect();
        assert!(max_relative_error(&analytic, &numeric, DEFAULT_FLOOR) < 1e-8);
    }

    #[test]
    fn relative_error_floor_guards_zero_grads() {
        assert!(relative_error(0.0, 1e-12, 1e-6) < 1e-5);
    }
}
