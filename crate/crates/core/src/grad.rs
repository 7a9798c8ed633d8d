//! The differentiation contract and a central-difference gradient checker.
//!
//! Every differentiable piece of the pipeline exposes a forward map and an
//! analytic vector-Jacobian product ("pullback"). There is no tape: each
//! module records whatever its pullback needs during the forward pass.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Floor on the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-8;

/// Default central-difference step for inputs normalized to order 1.
pub const DEFAULT_EPS: f64 = 1e-4;

/// A vector function together with its vector-Jacobian product.
///
/// `pullback(x, ct)` must be linear in `ct`.
pub trait DifferentiableOp: Sync {
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    fn pullback(&self, x: &[f64], cotangent: &[f64]) -> Vec<f64>;
}

/// Adapts a pair of closures into a [`DifferentiableOp`].
pub struct FnOp<F, B> {
    forward: F,
    pullback: B,
}

impl<F, B> FnOp<F, B>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
    B: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
{
    pub fn new(forward: F, pullback: B) -> Self {
        Self { forward, pullback }
    }
}

impl<F, B> DifferentiableOp for FnOp<F, B>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
    B: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
{
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (self.forward)(x)
    }

    fn pullback(&self, x: &[f64], cotangent: &[f64]) -> Vec<f64> {
        (self.pullback)(x, cotangent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Flattened input index with the largest relative error.
    pub worst_index: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the pullback of a scalar op (cotangent 1) against central
/// differences in every input coordinate.
pub fn gradcheck(op: &dyn DifferentiableOp, x: &[f64], eps: f64) -> Result<GradCheckReport> {
    let indices: Vec<usize> = (0..x.len()).collect();
    gradcheck_subset(op, x, eps, &indices)
}

/// [`gradcheck`] restricted to the listed input coordinates.
pub fn gradcheck_subset(
    op: &dyn DifferentiableOp,
    x: &[f64],
    eps: f64,
    indices: &[usize],
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("gradcheck step must be positive, got {eps}")));
    }
    let fx = op.forward(x);
    if fx.len() != 1 {
        return Err(Error::Dimension {
            what: "gradcheck output",
            expected: 1,
            actual: fx.len(),
        });
    }
    if !fx[0].is_finite() {
        return Err(Error::NonFinite { what: "f(x)", index: 0 });
    }
    let analytic = op.pullback(x, &[1.0]);
    if analytic.len() != x.len() {
        return Err(Error::Dimension {
            what: "gradient",
            expected: x.len(),
            actual: analytic.len(),
        });
    }
    if let Some(index) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { what: "gradient", index });
    }

    let numeric: Vec<(usize, f64)> = indices
        .par_iter()
        .map(|&i| {
            let mut xp = x.to_vec();
            xp[i] = x[i] + eps;
            let fp = op.forward(&xp)[0];
            xp[i] = x[i] - eps;
            let fm = op.forward(&xp)[0];
            (i, (fp - fm) / (2.0 * eps))
        })
        .collect();

    let mut report = GradCheckReport {
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst_index: indices.first().copied().unwrap_or(0),
    };
    for (i, n) in numeric {
        if !n.is_finite() {
            return Err(Error::NonFinite {
                what: "finite difference",
                index: i,
            });
        }
        let a = analytic[i];
        let abs = (a - n).abs();
        let rel = relative_error(a, n);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Largest deviation of `pullback(a*u + b*v)` from `a*pullback(u) + b*pullback(v)`.
pub fn pullback_linearity_error(
    op: &dyn DifferentiableOp,
    x: &[f64],
    u: &[f64],
    v: &[f64],
    a: f64,
    b: f64,
) -> f64 {
    let combined: Vec<f64> = u.iter().zip(v).map(|(p, q)| a * p + b * q).collect();
    let lhs = op.pullback(x, &combined);
    let pu = op.pullback(x, u);
    let pv = op.pullback(x, v);
    lhs.iter()
        .zip(pu.iter().zip(&pv))
        .map(|(l, (p, q))| (l - (a * p + b * q)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> impl DifferentiableOp {
        FnOp::new(
            |x: &[f64]| vec![x.iter().map(|v| v * v).sum()],
            |x: &[f64], ct: &[f64]| x.iter().map(|v| 2.0 * v * ct[0]).collect(),
        )
    }

    #[test]
    fn constant_function_has_zero_error() {
        let op = FnOp::new(|_: &[f64]| vec![4.2], |x: &[f64], _: &[f64]| vec![0.0; x.len()]);
        let r = gradcheck(&op, &[1.0, -2.0, 0.5], DEFAULT_EPS).unwrap();
        assert_eq!(r.max_abs_error, 0.0);
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn quadratic_central_difference_is_exact() {
        let r = gradcheck(&square(), &[3.0], 1e-4).unwrap();
        assert!(r.max_abs_error < 1e-6, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let op = FnOp::new(
            |x: &[f64]| vec![x[0] * x[0] + x[1]],
            |x: &[f64], ct: &[f64]| vec![2.0 * x[0] * ct[0], 2.0 * ct[0]],
        );
        let r = gradcheck(&op, &[1.0, 1.0], 1e-4).unwrap();
        assert_eq!(r.worst_index, 1);
        assert!((r.max_rel_error - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_names_index() {
        let op = FnOp::new(
            |x: &[f64]| vec![x[0]],
            |_: &[f64], _: &[f64]| vec![1.0, f64::NAN],
        );
        match gradcheck(&op, &[0.0, 0.0], 1e-4) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_value_is_an_error() {
        let op = FnOp::new(|_: &[f64]| vec![f64::INFINITY], |_: &[f64], _: &[f64]| vec![0.0]);
        assert!(matches!(gradcheck(&op, &[0.0], 1e-4), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(gradcheck(&square(), &[1.0], 0.0).is_err());
    }

    #[test]
    fn pullback_is_linear() {
        let op = square();
        let e = pullback_linearity_error(&op, &[1.0, 2.0], &[1.0], &[-3.0], 0.7, 2.5);
        assert!(e < 1e-14);
    }
}
