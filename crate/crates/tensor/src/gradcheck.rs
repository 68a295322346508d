//! Central-difference gradient verification.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;
use crate::var::Var;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tol: f64,
    /// Check at most this many coordinates, chosen at random.
    pub max_coords: Option<usize>,
    /// Denominator floor for the relative error of near-zero gradients.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tol: 1e-3,
            max_coords: None,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GradCheckError {
    #[error("function value is not finite at the check point")]
    NonFiniteValue,
    #[error("gradient component {0} is not finite")]
    NonFiniteGradient(usize),
    #[error("function must return a single value, got shape {0:?}")]
    NotScalar(Vec<usize>),
}

/// Compares the analytic gradient of scalar `f` at `input` to central
/// differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn grad_check(
    f: impl Fn(&Var<f64>) -> Var<f64>,
    input: &Tensor<f64>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport, GradCheckError> {
    let x = Var::leaf(input.clone());
    let y = f(&x);
    if y.value().numel() != 1 {
        return Err(GradCheckError::NotScalar(y.shape().to_vec()));
    }
    if !y.value().all_finite() {
        return Err(GradCheckError::NonFiniteValue);
    }
    let analytic = y.backward().wrt(&x);
    if let Some(i) = analytic.data().iter().position(|v| !v.is_finite()) {
        return Err(GradCheckError::NonFiniteGradient(i));
    }
    let n = input.numel();
    let coords: Vec<usize> = match opts.max_coords {
        Some(k) if k < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut idx = sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    };
    let eval = |t: Tensor<f64>| f(&Var::constant(t)).value().item();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        checked: coords.len(),
        passed: true,
    };
    for &i in &coords {
        let mut plus = input.clone();
        plus.data_mut()[i] += opts.step;
        let mut minus = input.clone();
        minus.data_mut()[i] -= opts.step;
        let (fp, fm) = (eval(plus), eval(minus));
        if !fp.is_finite() || !fm.is_finite() {
            return Err(GradCheckError::NonFiniteValue);
        }
        let numeric = (fp - fm) / (2.0 * opts.step);
        let a = analytic.data()[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(opts.floor);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report.passed = report.max_rel_error <= opts.tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::from_f64(&[2], &[1.0, 2.0]);
        let r = grad_check(|v| v.mul(v).sum(), &x, GradCheckOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.max_abs_error < 1e-8);
        let g = Var::leaf(x.clone());
        let grads = g.mul(&g).sum().backward();
        assert_eq!(grads.wrt(&g).to_f64_vec(), vec![2.0, 4.0]);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::from_f64(&[3], &[0.1, -4.0, 2.0]);
        let r = grad_check(
            |v| v.mul_scalar(0.0).sum().add_scalar(3.0),
            &x,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed);
        assert_eq!(r.max_abs_error, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        // detach() hides the dependency from the analytic pass.
        let x = Tensor::from_f64(&[2], &[1.0, 2.0]);
        let r = grad_check(
            |v| v.mul(&v.detach()).sum(),
            &x,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn non_finite_is_an_error() {
        let x = Tensor::from_f64(&[1], &[-1.0]);
        let e = grad_check(|v| v.ln().sum(), &x, GradCheckOptions::default()).unwrap_err();
        assert_eq!(e, GradCheckError::NonFiniteValue);
    }
}
