//! Levenberg–Marquardt for small nonlinear least-squares problems.

use serde::{Deserialize, Serialize};

use super::min_norm_lstsq;
use crate::matrix::{max_abs, DenseMatrix};
use crate::{Error, Real};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LmOptions<T> {
    pub max_iterations: usize,
    /// Converged once `‖r(x)‖∞` drops to this value.
    pub residual_tolerance: T,
    pub initial_damping: T,
    pub damping_growth: T,
    pub damping_shrink: T,
    /// Relative forward-difference step for the Jacobian.
    pub fd_step: T,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            residual_tolerance: T::lit(1e-13).max(T::epsilon() * T::lit(64.0)),
            initial_damping: T::lit(1e-3),
            damping_growth: T::lit(10.0),
            damping_shrink: T::lit(0.3),
            fd_step: T::lit(1e-7).max(T::epsilon().sqrt()),
        }
    }
}

impl<T: Real> LmOptions<T> {
    fn validate(&self) -> Result<(), Error> {
        let positive = [self.residual_tolerance, self.initial_damping, self.fd_step];
        if self.max_iterations == 0
            || positive.iter().any(|v| !(*v > T::zero()))
            || !(self.damping_growth > T::one())
            || !(self.damping_shrink > T::zero() && self.damping_shrink < T::one())
        {
            return Err(Error::InvalidInput("invalid Levenberg-Marquardt options".into()));
        }
        Ok(())
    }
}

/// Minimizes `‖r(x)‖²` starting from `x0`; succeeds once `‖r(x)‖∞ ≤ residual_tolerance`.
///
/// The Jacobian is approximated by forward differences. Each step solves the damped
/// system `[J; √λ D] δ = [−r; 0]` in the least-squares sense, with `D` the column norms
/// of `J` (Marquardt scaling).
pub fn levenberg_marquardt<T, F>(residual: F, x0: &[T], opts: &LmOptions<T>) -> Result<Vec<T>, Error>
where
    T: Real,
    F: Fn(&[T]) -> Vec<T>,
{
    opts.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite initial guess".into()));
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = residual(&x);
    let mut cost = sq_norm(&r);
    let mut lambda = opts.initial_damping;
    let lambda_cap = T::lit(1e16);

    for _ in 0..opts.max_iterations {
        if max_abs(&r) <= opts.residual_tolerance {
            return Ok(x);
        }
        if !cost.is_finite() {
            break;
        }
        let m = r.len();
        let mut jac = DenseMatrix::zeros(m, n);
        for j in 0..n {
            let h = opts.fd_step * x[j].abs().max(T::one());
            let mut xp = x.clone();
            xp[j] += h;
            let rp = residual(&xp);
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let colnorm: Vec<T> = (0..n)
            .map(|j| (0..m).map(|i| jac[(i, j)] * jac[(i, j)]).sum::<T>().sqrt().max(T::epsilon()))
            .collect();

        let mut improved = false;
        while lambda < lambda_cap {
            let mut aug = DenseMatrix::zeros(m + n, n);
            for i in 0..m {
                aug.row_mut(i).copy_from_slice(jac.row(i));
            }
            let sl = lambda.sqrt();
            for j in 0..n {
                aug[(m + j, j)] = sl * colnorm[j];
            }
            let mut rhs: Vec<T> = r.iter().map(|v| -*v).collect();
            rhs.extend(std::iter::repeat(T::zero()).take(n));
            let delta = min_norm_lstsq(&aug, &rhs, T::epsilon())?;
            let xn: Vec<T> = x.iter().zip(&delta).map(|(a, b)| *a + *b).collect();
            let rn = residual(&xn);
            let cn = sq_norm(&rn);
            if cn.is_finite() && cn < cost {
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda * opts.damping_shrink).max(T::lit(1e-15));
                improved = true;
                break;
            }
            lambda *= opts.damping_growth;
        }
        if !improved {
            break;
        }
    }

    if max_abs(&r) <= opts.residual_tolerance {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        best: x.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
        residual_norm: max_abs(&r).to_f64().unwrap_or(f64::NAN),
    })
}

fn sq_norm<T: Real>(r: &[T]) -> T {
    r.iter().map(|v| *v * *v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_scalar() {
        let x = levenberg_marquardt(|x: &[f64]| vec![x[0] - 2.0], &[0.0], &LmOptions::default()).unwrap();
        assert!((x[0] - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn circle_line_intersection() {
        let f = |x: &[f64]| vec![x[0] * x[0] + x[1] * x[1] - 1.0, x[0] - x[1]];
        let x = levenberg_marquardt(f, &[1.0, 0.0], &LmOptions::default()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((x[0].abs() - s).abs() <= 1e-12 && (x[1] - x[0]).abs() <= 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        // x² + 1 has no real root.
        let opts = LmOptions { max_iterations: 50, ..LmOptions::default() };
        match levenberg_marquardt(|x: &[f64]| vec![x[0] * x[0] + 1.0], &[3.0], &opts) {
            Err(Error::NonConvergence { best, residual_norm }) => {
                assert_eq!(best.len(), 1);
                assert!(residual_norm >= 1.0 - 1e-9);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_options() {
        let opts = LmOptions { max_iterations: 0, ..LmOptions::default() };
        assert!(levenberg_marquardt(|x: &[f64]| vec![x[0]], &[1.0], &opts).is_err());
        assert!(levenberg_marquardt(|x: &[f64]| vec![x[0]], &[f64::NAN], &LmOptions::default()).is_err());
    }
}
