//! Central finite-difference oracle for tape gradients.

use crate::error::Result;
use crate::gradcore::{Tape, Tensor, Var};
use crate::scalar::{Quad, Scalar};

/// Perturbation used for coordinate `x`: `1e-6·(1 + |x|)`.
pub fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

/// Relative error with denominator `max(1e-8, |analytic|, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Evaluates `f` at `x` on a fresh tape.
pub fn eval_scalar<T, F>(f: &F, x: &Tensor<T>) -> Result<f64>
where
    T: Scalar,
    F: for<'t> Fn(Var<'t, T>) -> Result<Var<'t, T>>,
{
    let tape = Tape::new();
    Ok(f(tape.var(x.clone()))?.item().as_f64())
}

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient<T, F>(f: &F, x: &Tensor<T>) -> Result<Vec<f64>>
where
    T: Scalar,
    F: for<'t> Fn(Var<'t, T>) -> Result<Var<'t, T>>,
{
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xi = x.data()[i].as_f64();
        let h = fd_step(xi);
        let mut plus = x.clone();
        plus.data_mut()[i] = T::of(xi + h);
        let mut minus = x.clone();
        minus.data_mut()[i] = T::of(xi - h);
        out.push((eval_scalar(f, &plus)? - eval_scalar(f, &minus)?) / (2.0 * h));
    }
    Ok(out)
}

pub fn analytic_gradient<T, F>(f: &F, x: &Tensor<T>) -> Result<Vec<f64>>
where
    T: Scalar,
    F: for<'t> Fn(Var<'t, T>) -> Result<Var<'t, T>>,
{
    let tape = Tape::new();
    let xv = tape.var(x.clone());
    let y = f(xv)?;
    Ok(tape.grad(y, &[xv])?[0].to_f64_vec())
}

/// Largest componentwise relative error between the tape gradient of `f`
/// at `x` and central differences.
pub fn fd_check<T, F>(f: F, x: &Tensor<T>) -> Result<f64>
where
    T: Scalar,
    F: for<'t> Fn(Var<'t, T>) -> Result<Var<'t, T>>,
{
    let a = analytic_gradient(&f, x)?;
    let n = numeric_gradient(&f, x)?;
    Ok(a.iter().zip(&n).map(|(&a, &n)| relative_error(a, n)).fold(0.0, f64::max))
}

/// A scalar function of one tensor that can be recorded at any precision.
pub trait ScalarFn {
    fn eval<'t, S: Scalar>(&self, x: Var<'t, S>) -> Result<Var<'t, S>>;
}

struct AtPrecision<'a, F>(&'a F);

impl<F: ScalarFn> AtPrecision<'_, F> {
    fn value<S: Scalar>(&self, x: &Tensor<S>) -> Result<S> {
        let tape = Tape::new();
        Ok(self.0.eval(tape.var(x.clone()))?.item())
    }
}

/// Like [`fd_check`] for an `f64` gradient, but the central differences are
/// evaluated in binary128 arithmetic so that cancellation noise in long
/// compositions does not dominate small gradient entries.
pub fn fd_check_extended<F: ScalarFn>(f: &F, x: &Tensor<f64>) -> Result<f64> {
    let tape = Tape::new();
    let xv = tape.var(x.clone());
    let y = f.eval(xv)?;
    let analytic = tape.grad(y, &[xv])?.remove(0);
    let hp = AtPrecision(f);
    let base: Tensor<Quad> = x.cast();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let h = Quad::of(fd_step(x.data()[i]));
        let mut plus = base.clone();
        plus.data_mut()[i] = base.data()[i] + h;
        let mut minus = base.clone();
        minus.data_mut()[i] = base.data()[i] - h;
        let numeric = (hp.value(&plus)? - hp.value(&minus)?) / (h * Quad::of(2.0));
        worst = worst.max(relative_error(analytic.data()[i], numeric.as_f64()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_norm_gradient_is_tight() {
        let x = Tensor::vector(vec![3.0f64, 4.0]);
        let g = analytic_gradient(&|v: Var<'_, f64>| Ok(v.l2_norm()), &x).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let err = fd_check(|v| Ok(v.l2_norm()), &x).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::vector(vec![1.0f64, -2.0, 0.5]);
        let err = fd_check(|v| Ok(v.scale(0.0).sum().add_scalar(4.0)), &x).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn cross_entropy_on_random_logits() {
        let x = Tensor::<f64>::from_f64(
            &[3, 4],
            &[0.3, -1.1, 0.8, 2.0, -0.4, 0.1, 0.9, -1.7, 1.3, 0.2, -0.6, 0.05],
        )
        .unwrap();
        let t = Tensor::from_f64(&[3, 4], &[0., 0., 1., 0., 1., 0., 0., 0., 0., 0., 0., 1.])
            .unwrap();
        let err = fd_check(|v| v.softmax_cross_entropy(&t), &x).unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    struct Curvy;

    impl ScalarFn for Curvy {
        fn eval<'t, S: Scalar>(&self, x: Var<'t, S>) -> Result<Var<'t, S>> {
            Ok(x.tanh().mul(x.sigmoid())?.sum())
        }
    }

    #[test]
    fn extended_precision_check() {
        let x = Tensor::vector(vec![0.3f64, -1.2, 2.5]);
        let err = fd_check_extended(&Curvy, &x).unwrap();
        assert!(err <= 1e-9, "{err}");
    }
}
