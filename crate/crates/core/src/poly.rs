//! Monomial and orthonormal (Koornwinder–Dubiner) bases on the reference simplices.
//!
//! Reference simplices are the unit right simplices: segment [0,1], triangle
//! (0,0),(1,0),(0,1), tetrahedron (0,0,0),(1,0,0),(0,1,0),(0,0,1).
//!
//! Both bases are ordered by total degree, then lexicographically with the power of
//! `x` ascending inside a degree. In 2-D the monomial with 1-based index
//! `k = j(j+1)/2 + i + 1` is `x^i y^(j−i)`.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::matrix::DenseMatrix;
use crate::{Error, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Monomial,
    Orthonormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub dim: usize,
    pub degree: usize,
    pub kind: BasisKind,
}

impl BasisSpec {
    pub fn new(dim: usize, degree: usize, kind: BasisKind) -> Result<Self, Error> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(Self { dim, degree, kind })
    }

    pub fn size(&self) -> usize {
        basis_size(self.degree, self.dim)
    }
}

/// Number of polynomials of total degree ≤ `p` in `d` variables, `binom(p+d, d)`.
pub fn basis_size(p: usize, d: usize) -> usize {
    (1..=d).fold(1, |acc, k| acc * (p + k) / k)
}

/// 1-based index of `x^i y^(j−i)` in the graded 2-D monomial ordering.
pub fn monomial_index(i: usize, j: usize) -> Result<usize, Error> {
    if i > j {
        return Err(Error::InvalidInput(format!("monomial exponent i={i} exceeds total degree j={j}")));
    }
    Ok(j * (j + 1) / 2 + i + 1)
}

/// Inverse of [`monomial_index`].
pub fn monomial_from_index(k: usize) -> Result<(usize, usize), Error> {
    if k == 0 {
        return Err(Error::InvalidInput("monomial indices start at 1".into()));
    }
    let mut j = 0;
    while (j + 1) * (j + 2) / 2 < k {
        j += 1;
    }
    Ok((k - 1 - j * (j + 1) / 2, j))
}

/// Exponent tuples of the graded ordering (unused trailing entries are zero).
///
/// Inside a degree: `x` power ascending, then `y` power ascending (3-D).
pub fn exponents(p: usize, d: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(basis_size(p, d));
    for n in 0..=p {
        match d {
            1 => out.push([n, 0, 0]),
            2 => out.extend((0..=n).map(|a| [a, n - a, 0])),
            _ => {
                for a in 0..=n {
                    for b in 0..=n - a {
                        out.push([a, b, n - a - b]);
                    }
                }
            }
        }
    }
    out
}

/// Total degree of each basis function, in basis order.
pub fn degrees(p: usize, d: usize) -> Vec<usize> {
    exponents(p, d).iter().map(|e| e[0] + e[1] + e[2]).collect()
}

/// Value plus gradient, for forward-mode differentiation of the basis recurrences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T> {
    pub v: T,
    pub g: [T; 3],
}

impl<T: Real> Jet<T> {
    pub fn constant(v: T) -> Self {
        Self { v, g: [T::zero(); 3] }
    }

    pub fn variable(v: T, k: usize) -> Self {
        let mut g = [T::zero(); 3];
        g[k] = T::one();
        Self { v, g }
    }
}

impl<T: Real> Add for Jet<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, g: [self.g[0] + o.g[0], self.g[1] + o.g[1], self.g[2] + o.g[2]] }
    }
}

impl<T: Real> Sub for Jet<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, g: [self.g[0] - o.g[0], self.g[1] - o.g[1], self.g[2] - o.g[2]] }
    }
}

impl<T: Real> Mul for Jet<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            g: [
                self.g[0] * o.v + self.v * o.g[0],
                self.g[1] * o.v + self.v * o.g[1],
                self.g[2] * o.v + self.v * o.g[2],
            ],
        }
    }
}

/// Arithmetic shared by plain scalars and jets, so one recurrence serves both.
pub trait Ring<T>: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn cst(v: T) -> Self;
    fn scale(self, s: T) -> Self;
}

impl<T: Real> Ring<T> for T {
    fn cst(v: T) -> Self {
        v
    }
    fn scale(self, s: T) -> Self {
        self * s
    }
}

impl<T: Real> Ring<T> for Jet<T> {
    fn cst(v: T) -> Self {
        Jet::constant(v)
    }
    fn scale(self, s: T) -> Self {
        Self { v: self.v * s, g: [self.g[0] * s, self.g[1] * s, self.g[2] * s] }
    }
}

/// Homogenized Jacobi polynomials `H_n(X, v) = v^n P_n^(α,0)(X/v)` for n = 0..=nmax.
fn jacobi_homogeneous<T: Real, R: Ring<T>>(alpha: usize, nmax: usize, x: R, v: R) -> Vec<R> {
    let mut h = Vec::with_capacity(nmax + 1);
    h.push(R::cst(T::one()));
    if nmax == 0 {
        return h;
    }
    let a = T::from_usize_lossy(alpha);
    let two = T::lit(2.0);
    h.push((x.scale(a + two) + v.scale(a)).scale(T::lit(0.5)));
    let v2 = v * v;
    for n in 1..nmax {
        let nf = T::from_usize_lossy(n);
        let c0 = two * (nf + T::one()) * (nf + a + T::one()) * (two * nf + a);
        let c1 = two * nf + a + T::one();
        let cx = c1 * (two * nf + a + two) * (two * nf + a);
        let cv = c1 * a * a;
        let c2 = two * (nf + a) * nf * (two * nf + a + two);
        let next = (x * h[n]).scale(cx) + (v * h[n]).scale(cv) - (v2 * h[n - 1]).scale(c2);
        h.push(next.scale(T::one() / c0));
    }
    h
}

/// Orthonormal basis at one point, generic over scalar/jet evaluation.
///
/// `coords` holds the Cartesian reference coordinates (as `R`); entries past `dim` are
/// ignored.
pub fn orthonormal_at<T: Real, R: Ring<T>>(dim: usize, p: usize, coords: [R; 3]) -> Vec<R> {
    let one = R::cst(T::one());
    let two = T::lit(2.0);
    match dim {
        1 => {
            let r = coords[0].scale(two) - one;
            let h = jacobi_homogeneous(0, p, r, one);
            (0..=p).map(|n| h[n].scale(T::from_usize_lossy(2 * n + 1).sqrt())).collect()
        }
        2 => {
            let (x, y) = (coords[0], coords[1]);
            let t = one - y;
            let at = x.scale(two) - t;
            let s = y.scale(two) - one;
            let hx = jacobi_homogeneous(0, p, at, t);
            let mut out = Vec::with_capacity(basis_size(p, 2));
            let py: Vec<Vec<R>> = (0..=p).map(|i| jacobi_homogeneous(2 * i + 1, p - i, s, one)).collect();
            for e in exponents(p, 2) {
                let (i, j) = (e[0], e[1]);
                let nrm2 = T::lit(2.0) * T::from_usize_lossy((2 * i + 1) * (i + j + 1));
                out.push((hx[i] * py[i][j]).scale(nrm2.sqrt()));
            }
            out
        }
        _ => {
            let (x, y, z) = (coords[0], coords[1], coords[2]);
            let w = one - y - z;
            let aw = x.scale(two) - w;
            let v = one - z;
            let bv = y.scale(two) - v;
            let c = z.scale(two) - one;
            let hx = jacobi_homogeneous(0, p, aw, w);
            let hy: Vec<Vec<R>> = (0..=p).map(|i| jacobi_homogeneous(2 * i + 1, p - i, bv, v)).collect();
            let hz: Vec<Vec<R>> = (0..=p).map(|ij| jacobi_homogeneous(2 * ij + 2, p - ij, c, one)).collect();
            let mut out = Vec::with_capacity(basis_size(p, 3));
            for e in exponents(p, 3) {
                let (i, j, k) = (e[0], e[1], e[2]);
                let nrm2 = T::from_usize_lossy((2 * i + 1) * (2 * i + 2 * j + 2) * (2 * i + 2 * j + 2 * k + 3));
                out.push((hx[i] * hy[i][j] * hz[i + j][k]).scale(nrm2.sqrt()));
            }
            out
        }
    }
}

pub fn monomials_at<T: Real, R: Ring<T>>(dim: usize, p: usize, coords: [R; 3]) -> Vec<R> {
    let one = R::cst(T::one());
    let powers: Vec<Vec<R>> = (0..dim)
        .map(|k| {
            let mut pw = vec![one];
            for n in 0..p {
                pw.push(pw[n] * coords[k]);
            }
            pw
        })
        .collect();
    exponents(p, dim)
        .iter()
        .map(|e| (0..dim).fold(one, |acc, k| acc * powers[k][e[k]]))
        .collect()
}

/// Basis values and gradients at a Cartesian point.
pub fn eval_point<T: Real>(spec: &BasisSpec, point: &[T; 3]) -> Vec<Jet<T>> {
    let c = [Jet::variable(point[0], 0), Jet::variable(point[1], 1), Jet::variable(point[2], 2)];
    match spec.kind {
        BasisKind::Monomial => monomials_at(spec.dim, spec.degree, c),
        BasisKind::Orthonormal => orthonormal_at(spec.dim, spec.degree, c),
    }
}

/// Basis values only.
pub fn eval_values<T: Real>(spec: &BasisSpec, point: &[T; 3]) -> Vec<T> {
    match spec.kind {
        BasisKind::Monomial => monomials_at(spec.dim, spec.degree, *point),
        BasisKind::Orthonormal => orthonormal_at(spec.dim, spec.degree, *point),
    }
}

/// Points in up to three dimensions (unused coordinates are zero).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet<T> {
    dim: usize,
    points: Vec<[T; 3]>,
}

impl<T: Real> NodeSet<T> {
    /// Nodes of the closed reference simplex; rejects points outside it or duplicates.
    pub fn reference(dim: usize, points: Vec<[T; 3]>) -> Result<Self, Error> {
        let set = Self::new(dim, points)?;
        let tol = T::lit(1e-13).max(T::epsilon() * T::lit(16.0));
        for (i, x) in set.points.iter().enumerate() {
            let bary = barycentric(dim, x);
            if bary.iter().any(|&l| l < -tol || l > T::one() + tol) {
                return Err(Error::InvalidInput(format!("node {i} lies outside the reference simplex")));
            }
        }
        Ok(set)
    }

    /// Arbitrary distinct points.
    pub fn new(dim: usize, points: Vec<[T; 3]>) -> Result<Self, Error> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite node coordinate".into()));
        }
        let tol = T::lit(1e-13).max(T::epsilon() * T::lit(16.0));
        for i in 0..points.len() {
            for j in 0..i {
                let d = (0..dim).map(|k| (points[i][k] - points[j][k]).abs()).fold(T::zero(), T::max);
                if d <= tol {
                    return Err(Error::InvalidInput(format!("nodes {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [T; 3] {
        self.points[i]
    }
}

/// Barycentric coordinates `(1 − Σx, x_1, …, x_d)`.
pub fn barycentric<T: Real>(dim: usize, x: &[T; 3]) -> Vec<T> {
    let mut b = Vec::with_capacity(dim + 1);
    b.push(T::one() - x[..dim].iter().copied().sum::<T>());
    b.extend_from_slice(&x[..dim]);
    b
}

// Serialized as a list of `dim`-length coordinate lists.
impl<T: Real> Serialize for NodeSet<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[T]> = self.points.iter().map(|p| &p[..self.dim]).collect();
        rows.serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for NodeSet<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let rows = Vec::<Vec<T>>::deserialize(deserializer)?;
        let dim = rows.first().map_or(1, Vec::len);
        let mut pts = Vec::with_capacity(rows.len());
        for r in &rows {
            if r.len() != dim {
                return Err(D::Error::custom("ragged node coordinates"));
            }
            let mut p = [T::zero(); 3];
            p[..dim].copy_from_slice(r);
            pts.push(p);
        }
        NodeSet::new(dim, pts).map_err(D::Error::custom)
    }
}

/// Basis values `v[(node, k)]` and derivative matrices `dv[dir][(node, k)]`.
#[derive(Clone, Debug)]
pub struct VandermondeSet<T> {
    pub spec: BasisSpec,
    pub v: DenseMatrix<T>,
    pub dv: Vec<DenseMatrix<T>>,
}

pub fn eval_basis<T: Real>(nodes: &NodeSet<T>, spec: &BasisSpec) -> Result<VandermondeSet<T>, Error> {
    if nodes.dim() != spec.dim {
        return Err(Error::InvalidInput(format!(
            "node dimension {} does not match basis dimension {}",
            nodes.dim(),
            spec.dim
        )));
    }
    let (n, m) = (nodes.len(), spec.size());
    let mut v = DenseMatrix::zeros(n, m);
    let mut dv = vec![DenseMatrix::zeros(n, m); spec.dim];
    for (i, x) in nodes.points().iter().enumerate() {
        for (k, j) in eval_point(spec, x).into_iter().enumerate() {
            v[(i, k)] = j.v;
            for (dir, d) in dv.iter_mut().enumerate() {
                d[(i, k)] = j.g[dir];
            }
        }
    }
    Ok(VandermondeSet { spec: *spec, v, dv })
}
