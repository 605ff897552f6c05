//! Least squares and singular values.
//!
//! Minimum-norm solves use a complete orthogonal decomposition: column-pivoted
//! Householder QR `A P = Q R` reveals the rank `r` (diagonal of `R` against
//! `rank_tol · |R₀₀|`), then an RZ reduction `[R₁₁ R₁₂] Z = [T 0]` removes the
//! trapezoidal block so that `x = P Z [T⁻¹ (Qᵀb)₁; 0]`.
//!
//! Singular values come from one-sided Jacobi on the triangular factor.

use crate::matrix::{dot, DenseMatrix};
use crate::{Error, Real};

/// Returns the `x` of smallest Euclidean norm among the minimizers of `‖A x − b‖`.
pub fn min_norm_lstsq<T: Real>(a: &DenseMatrix<T>, b: &[T], rank_tol: T) -> Result<Vec<T>, Error> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidInput("empty least-squares system".into()));
    }
    if b.len() != a.rows() {
        return Err(Error::InvalidInput(format!(
            "right-hand side has length {} for a {}x{} system",
            b.len(),
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite least-squares input".into()));
    }

    let n = a.cols();
    let qr = PivotedQr::new(a.clone());
    let r00 = qr.qr[(0, 0)].abs();
    let rank = (0..qr.k).take_while(|&i| r00 > T::zero() && qr.qr[(i, i)].abs() > rank_tol * r00).count();
    let mut x = vec![T::zero(); n];
    if rank == 0 {
        return Ok(x);
    }
    let mut c = b.to_vec();
    qr.apply_qt(&mut c);

    // Upper trapezoid [R11 R12], rank x n.
    let mut rt = DenseMatrix::from_fn(rank, n, |i, j| if j >= i { qr.qr[(i, j)] } else { T::zero() });
    let rz = rz_reduce(&mut rt);
    // Solve T w = c[..rank] (back substitution).
    let mut w = vec![T::zero(); n];
    for i in (0..rank).rev() {
        let mut s = c[i];
        for j in i + 1..rank {
            s -= rt[(i, j)] * w[j];
        }
        w[i] = s / rt[(i, i)];
    }
    rz.apply(&mut w);
    for (i, &p) in qr.perm.iter().enumerate() {
        x[p] = w[i];
    }
    Ok(x)
}

/// Householder reflections of an RZ factorization, acting on coordinates
/// `{k} ∪ {rank..n}` (stored with the reflected tail).
struct RzFactor<T> {
    rank: usize,
    /// Per row k: (τ, v over the tail columns rank..n); v_k = 1 implicitly.
    refl: Vec<(T, Vec<T>)>,
}

impl<T: Real> RzFactor<T> {
    /// `w ← Z w` where `[R11 R12] Z = [T 0]`.
    fn apply(&self, w: &mut [T]) {
        for k in 0..self.rank {
            let (tau, v) = &self.refl[k];
            if *tau == T::zero() {
                continue;
            }
            let s = *tau * (w[k] + dot(&w[self.rank..], v));
            w[k] -= s;
            for (t, vi) in w[self.rank..].iter_mut().zip(v) {
                *t -= s * *vi;
            }
        }
    }
}

/// Reduces the upper trapezoid `r` (rank × n) to `[T 0]` in place; returns the reflections.
fn rz_reduce<T: Real>(r: &mut DenseMatrix<T>) -> RzFactor<T> {
    let (rank, n) = (r.rows(), r.cols());
    let mut refl = vec![(T::zero(), Vec::new()); rank];
    if n == rank {
        return RzFactor { rank, refl };
    }
    for k in (0..rank).rev() {
        let alpha = r[(k, k)];
        let tail: Vec<T> = r.row(k)[rank..].to_vec();
        let xnorm_sq: T = tail.iter().map(|v| *v * *v).sum();
        if xnorm_sq == T::zero() {
            refl[k] = (T::zero(), vec![T::zero(); n - rank]);
            continue;
        }
        let norm = (alpha * alpha + xnorm_sq).sqrt();
        let beta = if alpha >= T::zero() { -norm } else { norm };
        let scale = T::one() / (alpha - beta);
        let v: Vec<T> = tail.iter().map(|t| *t * scale).collect();
        let tau = (beta - alpha) / beta;
        // Rows 0..=k: row ← row − τ (row·v) vᵀ on coordinates {k} ∪ tail.
        for i in 0..=k {
            let row = r.row_mut(i);
            let s = tau * (row[k] + dot(&row[rank..], &v));
            row[k] -= s;
            for (t, vi) in row[rank..].iter_mut().zip(&v) {
                *t -= s * *vi;
            }
        }
        r[(k, k)] = beta;
        r.row_mut(k)[rank..].iter_mut().for_each(|t| *t = T::zero());
        refl[k] = (tau, v);
    }
    RzFactor { rank, refl }
}

/// Numerical rank with the same relative threshold used by [`min_norm_lstsq`].
pub fn numerical_rank<T: Real>(a: &DenseMatrix<T>, rank_tol: T) -> usize {
    let m = if a.rows() >= a.cols() { a.clone() } else { a.transpose() };
    let qr = PivotedQr::new(m);
    let sv = singular_values_square(&qr.r_square());
    let smax = sv.iter().copied().fold(T::zero(), T::max);
    sv.iter().filter(|&&s| s > rank_tol * smax).count()
}

/// Singular values of an arbitrary matrix, descending.
pub fn singular_values<T: Real>(a: &DenseMatrix<T>) -> Vec<T> {
    let m = if a.rows() >= a.cols() { a.clone() } else { a.transpose() };
    let qr = PivotedQr::new(m);
    let mut sv = singular_values_square(&qr.r_square());
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// Householder QR with column pivoting of a tall (or square) matrix.
struct PivotedQr<T> {
    /// Householder vectors below the diagonal, `R` on and above it.
    qr: DenseMatrix<T>,
    /// Householder scalars `τ_k` with `H_k = I − τ_k v vᵀ`, `v_k = 1`.
    tau: Vec<T>,
    perm: Vec<usize>,
    k: usize,
}

impl<T: Real> PivotedQr<T> {
    fn new(mut a: DenseMatrix<T>) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let k = n.min(m);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![T::zero(); k];
        let mut norms = vec![T::zero(); n];

        for step in 0..k {
            // Recompute the trailing norms exactly; cheap relative to the update and
            // avoids the cancellation of downdating.
            norms[step..].iter_mut().for_each(|v| *v = T::zero());
            for i in step..m {
                for (nj, &aij) in norms[step..].iter_mut().zip(&a.row(i)[step..]) {
                    *nj += aij * aij;
                }
            }
            let piv = (step..n)
                .max_by(|&x, &y| norms[x].partial_cmp(&norms[y]).unwrap())
                .unwrap();
            if piv != step {
                for i in 0..m {
                    let row = a.row_mut(i);
                    row.swap(step, piv);
                }
                perm.swap(step, piv);
                norms.swap(step, piv);
            }

            let alpha = a[(step, step)];
            let xnorm_sq = col_norm_sq(&a, step, step + 1);
            if xnorm_sq == T::zero() {
                tau[step] = T::zero();
                continue;
            }
            let norm = (alpha * alpha + xnorm_sq).sqrt();
            let beta = if alpha >= T::zero() { -norm } else { norm };
            let scale = T::one() / (alpha - beta);
            for i in step + 1..m {
                a[(i, step)] *= scale;
            }
            tau[step] = (beta - alpha) / beta;
            a[(step, step)] = beta;

            // Apply H to the trailing columns: A ← A − τ v (vᵀ A).
            let t = tau[step];
            let mut w = a.row(step)[step + 1..].to_vec();
            for i in step + 1..m {
                let vi = a[(i, step)];
                if vi == T::zero() {
                    continue;
                }
                for (wj, &aij) in w.iter_mut().zip(&a.row(i)[step + 1..]) {
                    *wj += vi * aij;
                }
            }
            for wj in &mut w {
                *wj *= t;
            }
            for (aj, &wj) in a.row_mut(step)[step + 1..].iter_mut().zip(&w) {
                *aj -= wj;
            }
            for i in step + 1..m {
                let vi = a[(i, step)];
                if vi == T::zero() {
                    continue;
                }
                for (aij, &wj) in a.row_mut(i)[step + 1..].iter_mut().zip(&w) {
                    *aij -= vi * wj;
                }
            }
        }
        Self { qr: a, tau, perm, k }
    }

    fn r_square(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.k, self.k, |i, j| if j >= i { self.qr[(i, j)] } else { T::zero() })
    }

    /// `b ← Qᵀ b`
    fn apply_qt(&self, b: &mut [T]) {
        for step in 0..self.k {
            self.reflect(step, b);
        }
    }

    fn reflect(&self, step: usize, b: &mut [T]) {
        let t = self.tau[step];
        if t == T::zero() {
            return;
        }
        let m = self.qr.rows();
        let mut s = b[step];
        for i in step + 1..m {
            s += self.qr[(i, step)] * b[i];
        }
        s *= t;
        b[step] -= s;
        for i in step + 1..m {
            b[i] -= s * self.qr[(i, step)];
        }
    }
}

fn col_norm_sq<T: Real>(a: &DenseMatrix<T>, j: usize, from: usize) -> T {
    (from..a.rows()).map(|i| a[(i, j)] * a[(i, j)]).sum()
}

fn singular_values_square<T: Real>(r: &DenseMatrix<T>) -> Vec<T> {
    let mut cols: Vec<Vec<T>> = (0..r.rows()).map(|i| r.row(i).to_vec()).collect();
    jacobi_sweeps(&mut cols);
    cols.iter().map(|w| dot(w, w).sqrt()).collect()
}

/// Cyclic one-sided Jacobi orthogonalization of `cols`.
fn jacobi_sweeps<T: Real>(cols: &mut [Vec<T>]) {
    let n = cols.len();
    if n < 2 {
        return;
    }
    let len = cols[0].len();
    let tol = T::epsilon() * T::from_usize_lossy(len.max(1)).sqrt();
    let mut norms: Vec<T> = cols.iter().map(|c| dot(c, c)).collect();
    let total: T = norms.iter().copied().sum();
    // Columns that are negligible relative to the whole matrix cannot affect the
    // thresholded result; skipping them saves most of the work for rank-deficient input.
    let negligible = total * T::epsilon() * T::epsilon();

    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let (a, b) = (norms[i], norms[j]);
                if a <= negligible || b <= negligible {
                    continue;
                }
                let (ci, cj) = pair_mut(cols, i, j);
                let g = dot(ci, cj);
                if g.abs() <= tol * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (g + g);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
                    let (xi, yi) = (*x, *y);
                    *x = cs * xi - sn * yi;
                    *y = sn * xi + cs * yi;
                }
                norms[i] = a - t * g;
                norms[j] = b + t * g;
            }
        }
        // Refresh the tracked norms to stop drift from the incremental updates.
        for (nrm, c) in norms.iter_mut().zip(cols.iter()) {
            *nrm = dot(c, c);
        }
        if !rotated {
            break;
        }
    }
}

fn pair_mut<T>(v: &mut [Vec<T>], i: usize, j: usize) -> (&mut Vec<T>, &mut Vec<T>) {
    debug_assert!(i < j);
    let (lo, hi) = v.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}
