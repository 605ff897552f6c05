//! Eigenvalues of dense real matrices.
//!
//! General matrices: diagonal balancing, Householder reduction to upper Hessenberg form,
//! then the Francis double-shift QR iteration (eigenvalues only). Symmetric matrices:
//! cyclic two-sided Jacobi.

use serde::{Deserialize, Serialize};

use crate::matrix::DenseMatrix;
use crate::{Error, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Complex<T> {
    pub re: T,
    pub im: T,
}

impl<T: Real> Complex<T> {
    pub fn new(re: T, im: T) -> Self {
        Self { re, im }
    }

    pub fn norm(&self) -> T {
        self.re.hypot(self.im)
    }
}

pub fn eig_general<T: Real>(a: &DenseMatrix<T>) -> Result<Vec<Complex<T>>, Error> {
    if !a.is_square() {
        return Err(Error::InvalidInput(format!("eigenvalues need a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    if !a.is_finite() {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = Hess::from_matrix(a);
    h.balance();
    h.reduce_to_hessenberg();
    h.hqr()
}

/// 1-based square work array; keeps the QR iteration close to its textbook indexing.
struct Hess<T> {
    n: usize,
    stride: usize,
    buf: Vec<T>,
}

impl<T: Real> Hess<T> {
    fn from_matrix(a: &DenseMatrix<T>) -> Self {
        let n = a.rows();
        let stride = n + 1;
        let mut buf = vec![T::zero(); stride * stride];
        for i in 0..n {
            for j in 0..n {
                buf[(i + 1) * stride + j + 1] = a[(i, j)];
            }
        }
        Self { n, stride, buf }
    }

    #[inline(always)]
    fn at(&self, i: usize, j: usize) -> T {
        self.buf[i * self.stride + j]
    }

    #[inline(always)]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.buf[i * self.stride + j]
    }

    fn balance(&mut self) {
        let radix = T::lit(2.0);
        let sqrdx = radix * radix;
        let n = self.n;
        let mut done = false;
        while !done {
            done = true;
            for i in 1..=n {
                let mut r = T::zero();
                let mut c = T::zero();
                for j in 1..=n {
                    if j != i {
                        c += self.at(j, i).abs();
                        r += self.at(i, j).abs();
                    }
                }
                if c != T::zero() && r != T::zero() {
                    let mut g = r / radix;
                    let mut f = T::one();
                    let s = c + r;
                    while c < g {
                        f *= radix;
                        c *= sqrdx;
                    }
                    g = r * radix;
                    while c > g {
                        f /= radix;
                        c /= sqrdx;
                    }
                    if (c + r) / f < T::lit(0.95) * s {
                        done = false;
                        let g = T::one() / f;
                        for j in 1..=n {
                            *self.at_mut(i, j) *= g;
                        }
                        for j in 1..=n {
                            *self.at_mut(j, i) *= f;
                        }
                    }
                }
            }
        }
    }

    fn reduce_to_hessenberg(&mut self) {
        let n = self.n;
        if n < 3 {
            return;
        }
        let mut v = vec![T::zero(); n + 1];
        let mut w = vec![T::zero(); n + 1];
        for k in 1..=n - 2 {
            // Householder vector for column k, rows k+1..n.
            let scale: T = (k + 1..=n).map(|i| self.at(i, k).abs()).sum();
            if scale == T::zero() {
                continue;
            }
            let mut h = T::zero();
            for i in k + 1..=n {
                v[i] = self.at(i, k) / scale;
                h += v[i] * v[i];
            }
            let g = if v[k + 1] > T::zero() { -h.sqrt() } else { h.sqrt() };
            h -= v[k + 1] * g;
            v[k + 1] -= g;
            if h == T::zero() {
                continue;
            }
            // Left: A ← (I − v vᵀ/h) A on rows k+1..n, columns k..n.
            for j in k..=n {
                w[j] = T::zero();
            }
            for i in k + 1..=n {
                let vi = v[i];
                let row = i * self.stride;
                for j in k..=n {
                    w[j] += vi * self.buf[row + j];
                }
            }
            for j in k..=n {
                w[j] /= h;
            }
            for i in k + 1..=n {
                let vi = v[i];
                let row = i * self.stride;
                for j in k..=n {
                    self.buf[row + j] -= vi * w[j];
                }
            }
            // Right: A ← A (I − v vᵀ/h) on all rows, columns k+1..n.
            for i in 1..=n {
                let row = i * self.stride;
                let mut s = T::zero();
                for j in k + 1..=n {
                    s += self.buf[row + j] * v[j];
                }
                let s = s / h;
                for j in k + 1..=n {
                    self.buf[row + j] -= s * v[j];
                }
            }
            *self.at_mut(k + 1, k) = g * scale;
            for i in k + 2..=n {
                *self.at_mut(i, k) = T::zero();
            }
        }
    }

    fn hqr(&mut self) -> Result<Vec<Complex<T>>, Error> {
        let n = self.n;
        let mut wr = vec![T::zero(); n + 1];
        let mut wi = vec![T::zero(); n + 1];
        let mut anorm = T::zero();
        for i in 1..=n {
            for j in i.saturating_sub(1).max(1)..=n {
                anorm += self.at(i, j).abs();
            }
        }
        let half = T::lit(0.5);
        let mut nn = n;
        let mut t = T::zero();
        let (mut p, mut q, mut r);
        let (mut x, mut y, mut z, mut w);
        while nn >= 1 {
            let mut its = 0;
            let mut l;
            loop {
                l = nn;
                while l >= 2 {
                    let mut s = self.at(l - 1, l - 1).abs() + self.at(l, l).abs();
                    if s == T::zero() {
                        s = anorm;
                    }
                    if self.at(l, l - 1).abs() + s == s {
                        *self.at_mut(l, l - 1) = T::zero();
                        break;
                    }
                    l -= 1;
                }
                x = self.at(nn, nn);
                if l == nn {
                    wr[nn] = x + t;
                    wi[nn] = T::zero();
                    nn -= 1;
                } else {
                    y = self.at(nn - 1, nn - 1);
                    w = self.at(nn, nn - 1) * self.at(nn - 1, nn);
                    if l == nn - 1 {
                        p = half * (y - x);
                        q = p * p + w;
                        z = q.abs().sqrt();
                        x += t;
                        if q >= T::zero() {
                            z = p + if p >= T::zero() { z.abs() } else { -z.abs() };
                            wr[nn - 1] = x + z;
                            wr[nn] = x + z;
                            if z != T::zero() {
                                wr[nn] = x - w / z;
                            }
                            wi[nn - 1] = T::zero();
                            wi[nn] = T::zero();
                        } else {
                            wr[nn - 1] = x + p;
                            wr[nn] = x + p;
                            wi[nn - 1] = -z;
                            wi[nn] = z;
                        }
                        nn -= 2;
                    } else {
                        if its == 60 {
                            return Err(Error::NonConvergence {
                                best: Vec::new(),
                                residual_norm: self.at(nn, nn - 1).abs().to_f64().unwrap_or(f64::NAN),
                            });
                        }
                        if its > 0 && its % 10 == 0 {
                            // Exceptional shift.
                            t += x;
                            for i in 1..=nn {
                                *self.at_mut(i, i) -= x;
                            }
                            let s = self.at(nn, nn - 1).abs() + self.at(nn - 1, nn - 2).abs();
                            x = T::lit(0.75) * s;
                            y = x;
                            w = T::lit(-0.4375) * s * s;
                        }
                        its += 1;
                        let mut m = nn - 2;
                        loop {
                            z = self.at(m, m);
                            r = x - z;
                            let s = y - z;
                            p = (r * s - w) / self.at(m + 1, m) + self.at(m, m + 1);
                            q = self.at(m + 1, m + 1) - z - r - s;
                            r = self.at(m + 2, m + 1);
                            let s = p.abs() + q.abs() + r.abs();
                            p /= s;
                            q /= s;
                            r /= s;
                            if m == l {
                                break;
                            }
                            let u = self.at(m, m - 1).abs() * (q.abs() + r.abs());
                            let v = p.abs() * (self.at(m - 1, m - 1).abs() + z.abs() + self.at(m + 1, m + 1).abs());
                            if u + v == v {
                                break;
                            }
                            m -= 1;
                        }
                        for i in m + 2..=nn {
                            *self.at_mut(i, i - 2) = T::zero();
                            if i != m + 2 {
                                *self.at_mut(i, i - 3) = T::zero();
                            }
                        }
                        let mut k = m;
                        while k + 1 <= nn {
                            if k != m {
                                p = self.at(k, k - 1);
                                q = self.at(k + 1, k - 1);
                                r = T::zero();
                                if k != nn - 1 {
                                    r = self.at(k + 2, k - 1);
                                }
                                x = p.abs() + q.abs() + r.abs();
                                if x != T::zero() {
                                    p /= x;
                                    q /= x;
                                    r /= x;
                                }
                            }
                            let mag = (p * p + q * q + r * r).sqrt();
                            let s = if p >= T::zero() { mag } else { -mag };
                            if s != T::zero() {
                                if k == m {
                                    if l != m {
                                        *self.at_mut(k, k - 1) = -self.at(k, k - 1);
                                    }
                                } else {
                                    *self.at_mut(k, k - 1) = -s * x;
                                }
                                p += s;
                                x = p / s;
                                y = q / s;
                                z = r / s;
                                q /= p;
                                r /= p;
                                let st = self.stride;
                                for j in k..=nn {
                                    let mut pp = self.buf[k * st + j] + q * self.buf[(k + 1) * st + j];
                                    if k != nn - 1 {
                                        pp += r * self.buf[(k + 2) * st + j];
                                        self.buf[(k + 2) * st + j] -= pp * z;
                                    }
                                    self.buf[(k + 1) * st + j] -= pp * y;
                                    self.buf[k * st + j] -= pp * x;
                                }
                                let mmin = if nn < k + 3 { nn } else { k + 3 };
                                for i in l..=mmin {
                                    let row = i * st;
                                    let mut pp = x * self.buf[row + k] + y * self.buf[row + k + 1];
                                    if k != nn - 1 {
                                        pp += z * self.buf[row + k + 2];
                                        self.buf[row + k + 2] -= pp * r;
                                    }
                                    self.buf[row + k + 1] -= pp * q;
                                    self.buf[row + k] -= pp;
                                }
                            }
                            k += 1;
                        }
                    }
                }
                if nn == 0 || l + 1 >= nn {
                    break;
                }
            }
        }
        Ok((1..=n).map(|i| Complex::new(wr[i], wi[i])).collect())
    }
}

/// Eigenvalues of a symmetric matrix (ascending), by cyclic Jacobi rotations.
pub fn sym_eigenvalues<T: Real>(a: &DenseMatrix<T>) -> Result<Vec<T>, Error> {
    if !a.is_square() {
        return Err(Error::InvalidInput("eigenvalues need a square matrix".into()));
    }
    let n = a.rows();
    let mut m = a.symmetrized();
    let scale = m.max_abs();
    for _sweep in 0..100 {
        let off: T = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| m[(i, j)] * m[(i, j)]).sum();
        if off.sqrt() <= T::epsilon() * scale * T::lit(1e-2) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(ev)
}
