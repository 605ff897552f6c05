//! Global diagonal-norm operators assembled from element operators by scatter-add.

use serde::Serialize;

use crate::matrix::DenseMatrix;
use crate::mesh::GlobalNodeMap;
use crate::operators::ElementOperators;
use crate::poly::exponents;
use crate::{Error, Real};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Sums triplets `(row, col, element, value)` in sorted `(row, col, element)` order, so
    /// the result does not depend on the order in which they were produced.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, usize, T)>) -> Result<Self, Error> {
        if let Some(bad) = t.iter().find(|x| x.0 >= n || x.1 >= n) {
            return Err(Error::InvalidInput(format!("global id ({}, {}) out of range {n}", bad.0, bad.1)));
        }
        t.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<T> = Vec::new();
        let mut last = None;
        for (r, c, _, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self { n, row_ptr, cols, vals })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        for r in 0..self.n {
            let mut s = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[r] = s;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[(r, self.cols[k])] += self.vals[k];
            }
        }
        d
    }

    /// `a·self + b·other`, same deterministic ordering.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self, Error> {
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for (which, m, s) in [(0, self, a), (1, other, b)] {
            for r in 0..m.n {
                for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                    t.push((r, m.cols[k], which, s * m.vals[k]));
                }
            }
        }
        Self::from_triplets(self.n.max(other.n), t)
    }

    /// Rows scaled by `diag`.
    pub fn scale_rows(&self, diag: &[T]) -> Self {
        let mut out = self.clone();
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.vals[k] *= diag[r];
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.vals.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Max row sum of `|self + selfᵀ − target|` (target may be absent, i.e. zero).
    pub fn symmetric_part_deviation(&self, target: Option<&Self>) -> T {
        let mut t = Vec::new();
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                t.push((r, self.cols[k], 0, self.vals[k]));
                t.push((self.cols[k], r, 1, self.vals[k]));
            }
        }
        if let Some(e) = target {
            for r in 0..e.n {
                for k in e.row_ptr[r]..e.row_ptr[r + 1] {
                    t.push((r, e.cols[k], 2, -e.vals[k]));
                }
            }
        }
        let sum = Self::from_triplets(self.n, t).expect("indices already validated");
        sum.norm_inf()
    }

    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.vals[k].abs()).sum::<T>())
            .fold(T::zero(), |a, b| a.max(b))
    }
}

#[derive(Clone, Debug)]
pub struct GlobalOperators<T> {
    pub n_global: usize,
    pub m: Vec<T>,
    pub q: Vec<CsrMatrix<T>>,
    pub e: Vec<CsrMatrix<T>>,
    pub coords: Vec<[T; 2]>,
    pub periodic: bool,
}

impl<T: Real> GlobalOperators<T> {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `D_dir u = M⁻¹ Q_dir u`
    pub fn apply_d(&self, dir: usize, u: &[T]) -> Vec<T> {
        let mut y = self.q[dir].matvec(u);
        y.iter_mut().zip(&self.m).for_each(|(v, w)| *v /= *w);
        y
    }
}

/// Scatter-adds per-element diagonal norms and matrices by global id.
pub fn assemble_matrices<T: Real>(
    numbering: &GlobalNodeMap<T>,
    m_el: &[&[T]],
    mats: &[&[DenseMatrix<T>]],
) -> Result<(Vec<T>, Vec<CsrMatrix<T>>), Error> {
    let n = numbering.n_global;
    if m_el.len() != numbering.ids.len() || mats.len() != numbering.ids.len() {
        return Err(Error::InvalidInput("element count does not match the numbering".into()));
    }
    let mut mt: Vec<(usize, usize, T)> = Vec::new();
    for (l, (ids, w)) in numbering.ids.iter().zip(m_el).enumerate() {
        for (i, &g) in ids.iter().enumerate() {
            if g >= n {
                return Err(Error::InvalidInput(format!("global id {g} out of range {n}")));
            }
            mt.push((g, l, w[i]));
        }
    }
    mt.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut m = vec![T::zero(); n];
    for (g, _, w) in mt {
        m[g] += w;
    }
    let dim = mats.first().map_or(0, |v| v.len());
    let mut out = Vec::with_capacity(dim);
    for dir in 0..dim {
        let mut t = Vec::new();
        for (l, ids) in numbering.ids.iter().enumerate() {
            let a = &mats[l][dir];
            for (i, &gi) in ids.iter().enumerate() {
                for (j, &gj) in ids.iter().enumerate() {
                    let v = a[(i, j)];
                    if v != T::zero() {
                        t.push((gi, gj, l, v));
                    }
                }
            }
        }
        out.push(CsrMatrix::from_triplets(n, t)?);
    }
    Ok((m, out))
}

pub fn assemble_global<T: Real>(
    numbering: &GlobalNodeMap<T>,
    elements: &[ElementOperators<T>],
) -> Result<GlobalOperators<T>, Error> {
    let ms: Vec<&[T]> = elements.iter().map(|e| e.m.as_slice()).collect();
    let qs: Vec<&[DenseMatrix<T>]> = elements.iter().map(|e| e.q.as_slice()).collect();
    let es: Vec<&[DenseMatrix<T>]> = elements.iter().map(|e| e.e.as_slice()).collect();
    let (m, q) = assemble_matrices(numbering, &ms, &qs)?;
    let (_, e) = assemble_matrices(numbering, &ms, &es)?;
    Ok(GlobalOperators { n_global: numbering.n_global, m, q, e, coords: numbering.coords.clone(), periodic: numbering.periodic })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GlobalReport {
    /// `max |D_x p − p′|` over monomials of degree ≤ p (non-periodic meshes only).
    pub accuracy: Option<f64>,
    /// `max |D 1|`
    pub constants: f64,
    /// `‖Q + Qᵀ − E‖∞ / ‖Q‖∞`, with `E = 0` on a periodic mesh.
    pub antisymmetry: f64,
    pub total_mass: f64,
    pub min_mass: f64,
}

impl GlobalReport {
    pub fn failures(&self) -> Vec<String> {
        let mut f = Vec::new();
        if let Some(a) = self.accuracy {
            if !(a <= 1e-9) {
                f.push(format!("accuracy {a:e} > 1e-9"));
            }
        }
        if !(self.constants <= 1e-11) {
            f.push(format!("D·1 = {:e} > 1e-11", self.constants));
        }
        if !(self.antisymmetry <= 1e-10) {
            f.push(format!("antisymmetry {:e} > 1e-10", self.antisymmetry));
        }
        if !((self.total_mass - 1.0).abs() <= 1e-12) {
            f.push(format!("total mass {} != 1", self.total_mass));
        }
        if !(self.min_mass > 0.0) {
            f.push(format!("non-positive mass {:e}", self.min_mass));
        }
        f
    }
}

pub fn verify_global<T: Real>(ops: &GlobalOperators<T>, p: usize) -> GlobalReport {
    let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let dim = ops.dim();
    let ones = vec![T::one(); ops.n_global];
    let mut constants = T::zero();
    let mut anti = T::zero();
    for dir in 0..dim {
        constants = constants.max(crate::matrix::max_abs(&ops.apply_d(dir, &ones)));
        let target = if ops.periodic { None } else { Some(&ops.e[dir]) };
        let scale = ops.q[dir].norm_inf().max(T::min_positive_value());
        anti = anti.max(ops.q[dir].symmetric_part_deviation(target) / scale);
    }
    let accuracy = (!ops.periodic).then(|| {
        let mut worst = T::zero();
        for ex in exponents(p, dim) {
            let val = |x: &[T; 2], e: [usize; 3]| {
                (0..dim).fold(T::one(), |acc, k| acc * x[k].powi(e[k] as i32))
            };
            let u: Vec<T> = ops.coords.iter().map(|x| val(x, ex)).collect();
            for dir in 0..dim {
                let du = ops.apply_d(dir, &u);
                for (g, x) in ops.coords.iter().enumerate() {
                    let exact = if ex[dir] == 0 {
                        T::zero()
                    } else {
                        let mut e2 = ex;
                        e2[dir] -= 1;
                        T::from_usize_lossy(ex[dir]) * val(x, e2)
                    };
                    worst = worst.max((du[g] - exact).abs());
                }
            }
        }
        f(worst)
    });
    GlobalReport {
        accuracy,
        constants: f(constants),
        antisymmetry: f(anti),
        total_mass: f(ops.m.iter().copied().sum()),
        min_mass: f(ops.m.iter().fold(T::infinity(), |a, &b| a.min(b))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubature::golden_rule;
    use crate::linalg::eig_general;
    use crate::mesh::{build_global_numbering, build_mesh, map_reference_nodes};
    use crate::operators::build_operators;

    fn setup(p: usize, n: usize, periodic: bool) -> (Vec<ElementOperators<f64>>, GlobalNodeMap<f64>, GlobalOperators<f64>) {
        let r = build_operators(&golden_rule::<f64>(p, 2, None).unwrap()).unwrap();
        let m = build_mesh::<f64>(n).unwrap();
        let els = map_reference_nodes(&m, &r).unwrap();
        let g = build_global_numbering(&m, &els, periodic).unwrap();
        let ops = assemble_global(&g, &els).unwrap();
        (els, g, ops)
    }

    #[test]
    fn triplet_sum_is_ordered() {
        let t = vec![(1, 0, 2, 1.0), (0, 1, 0, 2.0), (1, 0, 1, 1e-17), (1, 0, 0, -1.0)];
        let a = CsrMatrix::from_triplets(2, t.clone()).unwrap();
        let mut rev = t;
        rev.reverse();
        let b = CsrMatrix::from_triplets(2, rev).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.nnz(), 2);
        assert!(CsrMatrix::from_triplets(2, vec![(2, 0, 0, 1.0)]).is_err());
    }

    #[test]
    fn single_element_is_identity_scatter() {
        let r = build_operators(&golden_rule::<f64>(2, 2, None).unwrap()).unwrap();
        let n = r.len();
        let g = GlobalNodeMap { ids: vec![(0..n).collect()], coords: vec![[0.0; 2]; n], n_global: n, periodic: false };
        let ops = assemble_global(&g, std::slice::from_ref(&r)).unwrap();
        assert_eq!(ops.m, r.m);
        for dir in 0..2 {
            assert_eq!(ops.q[dir].to_dense(), r.q[dir]);
        }
    }

    #[test]
    fn shared_node_mass_is_summed() {
        let (els, g, ops) = setup(1, 2, false);
        // Vertex (1,0) of the mesh: shared by elements 0, 1 and 2 (cells (0,0) and (1,0)).
        let mut expect = 0.0;
        let target = g.ids[0][1];
        for (l, ids) in g.ids.iter().enumerate() {
            for (i, &id) in ids.iter().enumerate() {
                if id == target {
                    expect += els[l].m[i];
                }
            }
        }
        assert_eq!(ops.m[target], expect);
        assert!((ops.m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn element_order_does_not_matter() {
        let (els, g, ops) = setup(2, 2, true);
        let perm: Vec<usize> = (0..els.len()).rev().collect();
        let g2 = GlobalNodeMap { ids: perm.iter().map(|&k| g.ids[k].clone()).collect(), ..g.clone() };
        let els2: Vec<_> = perm.iter().map(|&k| els[k].clone()).collect();
        let ops2 = assemble_global(&g2, &els2).unwrap();
        // Relabelling elements reorders the per-entry sums, so allow rounding.
        for dir in 0..2 {
            let a = ops.q[dir].to_dense();
            let b = ops2.q[dir].to_dense();
            assert!(a.sub(&b).max_abs() <= 1e-15);
        }
    }

    #[test]
    fn non_periodic_accuracy() {
        let (_, _, ops) = setup(2, 4, false);
        let rep = verify_global(&ops, 2);
        assert!(rep.failures().is_empty(), "{rep:?}");
        assert!(rep.accuracy.unwrap() <= 1e-9);
    }

    #[test]
    fn periodic_cancellation() {
        for p in 1..=4 {
            let (_, _, ops) = setup(p, 3, true);
            let rep = verify_global(&ops, p);
            assert!(rep.failures().is_empty(), "p={p}: {rep:?}");
            assert!(rep.accuracy.is_none());
        }
    }

    #[test]
    fn periodic_spectrum_imaginary() {
        let (_, _, ops) = setup(2, 4, true);
        let a = ops.q[0].combine(1.0, &ops.q[1], 1.0).unwrap().to_dense();
        let ev = eig_general(&a).unwrap();
        let rad = ev.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let re = ev.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
        assert!(re <= 1e-10 * rad, "{re} vs {rad}");
    }
}
