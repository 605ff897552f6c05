//! Reference-simplex geometry: facets, normals, measures and exact monomial integrals.
//!
//! Vertex 0 is the origin and vertex k is `e_k`. Facet `f` is opposite vertex `f`, i.e.
//! the set where barycentric `λ_f` vanishes. Facet-local coordinates of a point are the
//! barycentrics of the facet's vertices after the first (ascending vertex order).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::poly::barycentric;
use crate::{Error, Real};

pub fn reference_measure<T: Real>(d: usize) -> T {
    T::one() / T::from_usize_lossy(factorial(d))
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Outward unit normal of facet `f`.
pub fn facet_normal<T: Real>(d: usize, f: usize) -> [T; 3] {
    let mut n = [T::zero(); 3];
    if f == 0 {
        let c = T::one() / T::from_usize_lossy(d).sqrt();
        n[..d].iter_mut().for_each(|v| *v = c);
    } else {
        n[f - 1] = -T::one();
    }
    n
}

/// (d−1)-dimensional measure of facet `f` (1 for the end points of a segment).
pub fn facet_measure<T: Real>(d: usize, f: usize) -> T {
    let base = T::one() / T::from_usize_lossy(factorial(d - 1));
    if f == 0 {
        base * T::from_usize_lossy(d).sqrt()
    } else {
        base
    }
}

/// Vertex ids of facet `f`, ascending.
pub fn facet_vertices(d: usize, f: usize) -> Vec<usize> {
    (0..=d).filter(|&v| v != f).collect()
}

pub fn vertex<T: Real>(k: usize) -> [T; 3] {
    let mut v = [T::zero(); 3];
    if k > 0 {
        v[k - 1] = T::one();
    }
    v
}

/// Indices of the points lying on facet `f` (|λ_f| ≤ tol), ascending.
pub fn facet_nodes<T: Real>(d: usize, points: &[[T; 3]], f: usize, tol: T) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, x)| barycentric(d, x)[f].abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Coordinates of `x` in the reference (d−1)-simplex of facet `f`.
pub fn facet_local_coords<T: Real>(d: usize, f: usize, x: &[T; 3]) -> [T; 3] {
    let b = barycentric(d, x);
    let verts = facet_vertices(d, f);
    let mut out = [T::zero(); 3];
    for (j, &v) in verts.iter().enumerate().skip(1) {
        out[j - 1] = b[v];
    }
    out
}

/// `∫ x^a y^b z^c` over the reference simplex: `a! b! c! / (a+b+c+d)!`.
pub fn monomial_integral<T: Real>(e: &[usize; 3], d: usize) -> T {
    let n: usize = e[..d].iter().sum();
    // Ratio of factorials built as a product of small rationals to stay in range.
    let mut num: Vec<usize> = e[..d].iter().flat_map(|&k| 1..=k).collect();
    let mut den: Vec<usize> = (1..=n + d).collect();
    num.sort_unstable();
    den.sort_unstable();
    let mut v = T::one();
    let len = num.len().max(den.len());
    for i in 0..len {
        if let Some(&a) = num.get(i) {
            v *= T::from_usize_lossy(a);
        }
        if let Some(&b) = den.get(i) {
            v /= T::from_usize_lossy(b);
        }
    }
    v
}

/// `x = origin + J ξ` from the reference simplex onto a physical one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AffineMap<T> {
    pub dim: usize,
    pub origin: [T; 3],
    /// `jac[a][r] = ∂x_a/∂ξ_r`
    pub jac: [[T; 3]; 3],
}

impl<T: Real> AffineMap<T> {
    pub fn identity(dim: usize) -> Self {
        let mut jac = [[T::zero(); 3]; 3];
        for (k, row) in jac.iter_mut().enumerate().take(dim) {
            row[k] = T::one();
        }
        Self { dim, origin: [T::zero(); 3], jac }
    }

    /// Map sending reference vertex k to `verts[k]`.
    pub fn from_vertices(dim: usize, verts: &[[T; 3]]) -> Result<Self, Error> {
        if verts.len() != dim + 1 {
            return Err(Error::InvalidInput(format!("a {dim}-simplex needs {} vertices", dim + 1)));
        }
        let mut jac = [[T::zero(); 3]; 3];
        for r in 0..dim {
            for a in 0..dim {
                jac[a][r] = verts[r + 1][a] - verts[0][a];
            }
        }
        Ok(Self { dim, origin: verts[0], jac })
    }

    pub fn det(&self) -> T {
        let j = &self.jac;
        match self.dim {
            1 => j[0][0],
            2 => j[0][0] * j[1][1] - j[0][1] * j[1][0],
            _ => {
                j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                    + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
            }
        }
    }

    /// `inv[r][a] = ∂ξ_r/∂x_a`
    pub fn inverse_jacobian(&self) -> [[T; 3]; 3] {
        let j = &self.jac;
        let det = self.det();
        let mut inv = [[T::zero(); 3]; 3];
        match self.dim {
            1 => inv[0][0] = T::one() / det,
            2 => {
                inv[0][0] = j[1][1] / det;
                inv[0][1] = -j[0][1] / det;
                inv[1][0] = -j[1][0] / det;
                inv[1][1] = j[0][0] / det;
            }
            _ => {
                for r in 0..3 {
                    for a in 0..3 {
                        // Cofactor of jac[a][r].
                        let (a1, a2) = ((a + 1) % 3, (a + 2) % 3);
                        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
                        inv[r][a] = (j[a1][r1] * j[a2][r2] - j[a1][r2] * j[a2][r1]) / det;
                    }
                }
            }
        }
        inv
    }

    pub fn apply(&self, xi: &[T; 3]) -> [T; 3] {
        let mut x = self.origin;
        for a in 0..self.dim {
            for r in 0..self.dim {
                x[a] += self.jac[a][r] * xi[r];
            }
        }
        x
    }

    /// Outward unit normal and measure of the image of reference facet `f`
    /// (`n dA = det J · J⁻ᵀ N dA_ref`).
    pub fn facet_geometry(&self, f: usize) -> ([T; 3], T) {
        let nref = facet_normal::<T>(self.dim, f);
        let inv = self.inverse_jacobian();
        let mut n = [T::zero(); 3];
        for a in 0..self.dim {
            for r in 0..self.dim {
                n[a] += inv[r][a] * nref[r];
            }
        }
        let len = n[..self.dim].iter().map(|v| *v * *v).sum::<T>().sqrt();
        n[..self.dim].iter_mut().for_each(|v| *v /= len);
        (n, facet_measure::<T>(self.dim, f) * self.det().abs() * len)
    }
}

/// Sparse polynomial in up to three variables, keyed by exponent tuple.
#[derive(Clone, Debug, Default)]
pub struct Polynomial<T> {
    pub terms: BTreeMap<[usize; 3], T>,
}

impl<T: Real> Polynomial<T> {
    pub fn constant(c: T) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert([0, 0, 0], c);
        Self { terms }
    }

    pub fn monomial(e: [usize; 3]) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(e, T::one());
        Self { terms }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut terms = BTreeMap::new();
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &o.terms {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                *terms.entry(e).or_insert_with(T::zero) += ca * cb;
            }
        }
        Self { terms }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (e, &c) in &o.terms {
            *terms.entry(*e).or_insert_with(T::zero) += c;
        }
        Self { terms }
    }

    pub fn derivative(&self, dir: usize) -> Self {
        let mut terms = BTreeMap::new();
        for (e, &c) in &self.terms {
            if e[dir] > 0 {
                let mut f = *e;
                f[dir] -= 1;
                *terms.entry(f).or_insert_with(T::zero) += c * T::from_usize_lossy(e[dir]);
            }
        }
        Self { terms }
    }

    /// `∫` over the image of the reference simplex under `map`, exactly (up to rounding).
    pub fn integrate(&self, map: &AffineMap<T>) -> T {
        let d = map.dim;
        // x_a as a polynomial in ξ.
        let coords: Vec<Polynomial<T>> = (0..d)
            .map(|a| {
                let mut p = Polynomial::constant(map.origin[a]);
                for r in 0..d {
                    let mut e = [0; 3];
                    e[r] = 1;
                    p = p.add(&Polynomial { terms: BTreeMap::from([(e, map.jac[a][r])]) });
                }
                p
            })
            .collect();
        let mut total = T::zero();
        for (e, &c) in &self.terms {
            let mut pulled = Polynomial::constant(c);
            for a in 0..d {
                for _ in 0..e[a] {
                    pulled = pulled.mul(&coords[a]);
                }
            }
            for (k, &ck) in &pulled.terms {
                total += ck * monomial_integral::<T>(k, d);
            }
        }
        total * map.det().abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measures_and_normals() {
        assert!((reference_measure::<f64>(2) - 0.5).abs() < 1e-16);
        assert!((reference_measure::<f64>(3) - 1.0 / 6.0).abs() < 1e-16);
        assert!((facet_measure::<f64>(2, 0) - 2f64.sqrt()).abs() < 1e-15);
        assert!((facet_measure::<f64>(3, 0) - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(facet_measure::<f64>(3, 2), 0.5);
        assert_eq!(facet_normal::<f64>(2, 1), [-1.0, 0.0, 0.0]);
    }

    /// Σ_f |f| n_f = 0 for any closed polytope.
    #[test]
    fn normals_close_up() {
        for d in 1..=3 {
            let mut s = [0.0f64; 3];
            for f in 0..=d {
                let n = facet_normal::<f64>(d, f);
                let a = facet_measure::<f64>(d, f);
                for k in 0..3 {
                    s[k] += a * n[k];
                }
            }
            assert!(s.iter().all(|v| v.abs() < 1e-15), "d={d}: {s:?}");
        }
    }

    #[test]
    fn factorial_integrals() {
        assert!((monomial_integral::<f64>(&[1, 1, 0], 2) - 1.0 / 24.0).abs() < 1e-16);
        assert!((monomial_integral::<f64>(&[0, 0, 0], 3) - 1.0 / 6.0).abs() < 1e-16);
        assert!((monomial_integral::<f64>(&[2, 0, 0], 1) - 1.0 / 3.0).abs() < 1e-16);
        // ∫ x y z over the tet = 1/720.
        assert!((monomial_integral::<f64>(&[1, 1, 1], 3) - 1.0 / 720.0).abs() < 1e-18);
    }

    #[test]
    fn affine_integration() {
        // Triangle (1,1),(3,1),(1,2): area 1, centroid (5/3, 4/3).
        let map = AffineMap::<f64>::from_vertices(2, &[[1.0, 1.0, 0.0], [3.0, 1.0, 0.0], [1.0, 2.0, 0.0]]).unwrap();
        assert!((map.det() - 2.0).abs() < 1e-15);
        let one = Polynomial::<f64>::constant(1.0);
        assert!((one.integrate(&map) - 1.0).abs() < 1e-14);
        let x = Polynomial::<f64>::monomial([1, 0, 0]);
        assert!((x.integrate(&map) - 5.0 / 3.0).abs() < 1e-14);
        // ∫ x² over it: vertices-based formula |T|/6 (Σ x_i² + Σ_{i<j} x_i x_j) = (1+9+1+3+1+3)/6.
        assert!((x.mul(&x).integrate(&map) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn inverse_jacobian_and_facets() {
        let map = AffineMap::<f64>::from_vertices(
            3,
            &[[0.1, 0.0, 0.2], [1.2, 0.1, 0.0], [0.0, 0.9, 0.3], [0.2, 0.1, 1.1]],
        )
        .unwrap();
        let inv = map.inverse_jacobian();
        for a in 0..3 {
            for b in 0..3 {
                let s: f64 = (0..3).map(|r| map.jac[a][r] * inv[r][b]).sum();
                assert!((s - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let mut total = [0.0; 3];
        for f in 0..4 {
            let (n, area) = map.facet_geometry(f);
            for k in 0..3 {
                total[k] += n[k] * area;
            }
        }
        assert!(total.iter().all(|v| v.abs() < 1e-14));
        // Facet 1 maps onto the face through vertices 0, 2, 3.
        let (n, _) = map.facet_geometry(1);
        let v = [[0.1, 0.0, 0.2], [0.0, 0.9, 0.3], [0.2, 0.1, 1.1]];
        for k in 1..3 {
            let t: f64 = (0..3).map(|a| (v[k][a] - v[0][a]) * n[a]).sum();
            assert!(t.abs() < 1e-14);
        }
        let to_v1: f64 = (0..3).map(|a| ([1.2, 0.1, 0.0][a] - v[0][a]) * n[a]).sum();
        assert!(to_v1 < 0.0, "normal must point away from the opposite vertex");
    }

    #[test]
    fn facet_membership() {
        let pts = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.0, 0.3, 0.0], [0.2, 0.2, 0.0]];
        assert_eq!(facet_nodes(2, &pts, 0, 1e-13), vec![1]);
        assert_eq!(facet_nodes(2, &pts, 1, 1e-13), vec![0, 2]);
        assert_eq!(facet_nodes(2, &pts, 2, 1e-13), vec![0]);
        // Facet 1 (x = 0) runs from vertex 0 to vertex 2; local coordinate is λ_2 = y.
        assert_eq!(facet_local_coords(2, 1, &[0.0, 0.3, 0.0])[0], 0.3);
    }
}
