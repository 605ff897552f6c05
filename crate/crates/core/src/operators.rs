//! Element SBP operators `D = M⁻¹Q`, `Q = S + E/2`, built from a cubature rule, and their
//! verification against exact integrals.

use serde::{Deserialize, Serialize};

use crate::cubature::CubatureRule;
use crate::linalg::min_norm_lstsq;
use crate::matrix::{dot, DenseMatrix};
use crate::poly::{
    basis_size, degrees, eval_basis, eval_values, exponents, orthonormal_at, BasisKind, BasisSpec, NodeSet,
};
use crate::simplex::{facet_local_coords, facet_nodes, factorial, AffineMap, Polynomial};
use crate::{Error, Real};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Facet<T> {
    /// Reference facet id (opposite reference vertex `index`).
    pub index: usize,
    /// Element-local ids of the nodes on this facet, ascending.
    pub nodes: Vec<usize>,
    pub normal: [T; 3],
    pub measure: T,
    /// Exact mass matrix of the degree-p nodal basis on the facet nodes.
    pub mass: DenseMatrix<T>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConstructionInfo {
    pub cubature_branch: usize,
    pub cubature_residual: f64,
    /// `‖A q − b‖∞` of the skew-part system, per direction.
    pub skew_system_residual: Vec<f64>,
    pub skew_unknowns: usize,
    pub skew_equations: usize,
}

#[derive(Clone, Debug)]
pub struct ElementOperators<T> {
    pub p: usize,
    pub dim: usize,
    /// Node coordinates (physical once mapped).
    pub nodes: NodeSet<T>,
    /// Reference coordinates of the same nodes.
    pub ref_nodes: NodeSet<T>,
    pub map: AffineMap<T>,
    pub m: Vec<T>,
    pub q: Vec<DenseMatrix<T>>,
    pub s: Vec<DenseMatrix<T>>,
    pub e: Vec<DenseMatrix<T>>,
    pub facets: Vec<Facet<T>>,
    pub info: ConstructionInfo,
}

impl<T: Real> ElementOperators<T> {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// `D_dir = M⁻¹ Q_dir`
    pub fn d(&self, dir: usize) -> DenseMatrix<T> {
        let inv: Vec<T> = self.m.iter().map(|w| T::one() / *w).collect();
        self.q[dir].scale_rows(&inv)
    }

    /// Operators of the affine image of the reference element.
    ///
    /// `Q` and `S` follow from the constant-Jacobian chain rule; `E` is rebuilt from the
    /// physical facet geometry, which coincides with the chain-rule image of `E_ref`.
    pub fn mapped(&self, map: &AffineMap<T>) -> Result<Self, Error> {
        if map.dim != self.dim {
            return Err(Error::InvalidInput("map dimension does not match the element".into()));
        }
        let det = map.det();
        if !(det > T::zero()) {
            return Err(Error::InvertedElement { element: 0, det: det.to_f64().unwrap_or(f64::NAN) });
        }
        if self.map != AffineMap::identity(self.dim) {
            return Err(Error::InvalidInput("only reference operators can be mapped".into()));
        }
        let inv = map.inverse_jacobian();
        let n = self.len();
        let facets = build_facets(&self.ref_nodes, self.p, map)?;
        let mut q = Vec::with_capacity(self.dim);
        let mut s = Vec::with_capacity(self.dim);
        let mut e = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            let mut sa = DenseMatrix::zeros(n, n);
            for r in 0..self.dim {
                sa.axpy(det * inv[r][a], &self.s[r]);
            }
            let ea = build_boundary_operator(n, &facets, a);
            let mut qa = sa.clone();
            qa.axpy(T::lit(0.5), &ea);
            q.push(qa);
            s.push(sa);
            e.push(ea);
        }
        let pts = self.ref_nodes.points().iter().map(|x| map.apply(x)).collect();
        Ok(Self {
            p: self.p,
            dim: self.dim,
            nodes: NodeSet::new(self.dim, pts)?,
            ref_nodes: self.ref_nodes.clone(),
            map: *map,
            m: self.m.iter().map(|w| *w * det).collect(),
            q,
            s,
            e,
            facets,
            info: self.info.clone(),
        })
    }

    /// Chain-rule image of the reference boundary operators, `det J Σ_r (J⁻¹)_{r a} E_r`.
    /// Used to cross-check [`Self::mapped`].
    pub fn chain_rule_e(&self, reference: &Self) -> Vec<DenseMatrix<T>> {
        let det = self.map.det();
        let inv = self.map.inverse_jacobian();
        (0..self.dim)
            .map(|a| {
                let mut ea = DenseMatrix::zeros(self.len(), self.len());
                for r in 0..self.dim {
                    ea.axpy(det * inv[r][a], &reference.e[r]);
                }
                ea
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, Error> {
        let dirs = |v: &[DenseMatrix<T>], k: usize| v.get(k).map(|m| m.to_rows());
        let file = OperatorFile {
            p: self.p,
            d: self.dim,
            nodes: self.nodes.clone(),
            m: self.m.clone(),
            qx: dirs(&self.q, 0).unwrap_or_default(),
            qy: dirs(&self.q, 1),
            qz: dirs(&self.q, 2),
            ex: dirs(&self.e, 0).unwrap_or_default(),
            ey: dirs(&self.e, 1),
            ez: dirs(&self.e, 2),
            faces: self.facets.clone(),
            metadata: self.info.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

#[derive(Serialize)]
#[serde(bound = "T: Real")]
struct OperatorFile<T> {
    p: usize,
    d: usize,
    nodes: NodeSet<T>,
    #[serde(rename = "M")]
    m: Vec<T>,
    #[serde(rename = "Qx")]
    qx: Vec<Vec<T>>,
    #[serde(rename = "Qy", skip_serializing_if = "Option::is_none")]
    qy: Option<Vec<Vec<T>>>,
    #[serde(rename = "Qz", skip_serializing_if = "Option::is_none")]
    qz: Option<Vec<Vec<T>>>,
    #[serde(rename = "Ex")]
    ex: Vec<Vec<T>>,
    #[serde(rename = "Ey", skip_serializing_if = "Option::is_none")]
    ey: Option<Vec<Vec<T>>>,
    #[serde(rename = "Ez", skip_serializing_if = "Option::is_none")]
    ez: Option<Vec<Vec<T>>>,
    faces: Vec<Facet<T>>,
    metadata: ConstructionInfo,
}

/// Diagonal of `M`: the cubature weights in node order.
pub fn build_norm<T: Real>(rule: &CubatureRule<T>) -> Result<Vec<T>, Error> {
    for (i, &w) in rule.weights().iter().enumerate() {
        if !(w > T::zero()) {
            return Err(Error::NegativeWeight { index: i, value: w.to_f64().unwrap_or(f64::NAN) });
        }
    }
    Ok(rule.weights().to_vec())
}

/// Facet descriptors of the image of the reference element under `map`.
pub fn build_facets<T: Real>(ref_nodes: &NodeSet<T>, p: usize, map: &AffineMap<T>) -> Result<Vec<Facet<T>>, Error> {
    let d = ref_nodes.dim();
    let want = basis_size(p, d - 1);
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
    let ref_measure = T::one() / T::from_usize_lossy(factorial(d - 1));
    let spec = BasisSpec { dim: d - 1, degree: p, kind: BasisKind::Orthonormal };
    let mut facets = Vec::with_capacity(d + 1);
    for f in 0..=d {
        let ids = facet_nodes(d, ref_nodes.points(), f, tol);
        if ids.len() != want {
            return Err(Error::InvalidInput(format!("facet {f} has {} nodes, expected {want}", ids.len())));
        }
        let mut v = DenseMatrix::zeros(want, want);
        for (row, &i) in ids.iter().enumerate() {
            let local = facet_local_coords(d, f, &ref_nodes.point(i));
            v.row_mut(row).copy_from_slice(&eval_values(&spec, &local));
        }
        let vvt = v.matmul(&v.transpose());
        let inv = vvt
            .inverse()
            .ok_or_else(|| Error::SingularInterpolation(format!("facet {f} nodes are not unisolvent for degree {p}")))?;
        let (normal, measure) = map.facet_geometry(f);
        let mass = inv.scaled(measure / ref_measure).symmetrized();
        facets.push(Facet { index: f, nodes: ids, normal, measure, mass });
    }
    Ok(facets)
}

/// `E_dir = Σ_f n_dir^f R_fᵀ B_f R_f`
pub fn build_boundary_operator<T: Real>(n: usize, facets: &[Facet<T>], dir: usize) -> DenseMatrix<T> {
    let mut e = DenseMatrix::zeros(n, n);
    for f in facets {
        let nd = f.normal[dir];
        if nd == T::zero() {
            continue;
        }
        for (a, &i) in f.nodes.iter().enumerate() {
            for (b, &j) in f.nodes.iter().enumerate() {
                e[(i, j)] += nd * f.mass[(a, b)];
            }
        }
    }
    e
}

pub struct SkewPart<T> {
    pub s: DenseMatrix<T>,
    pub residual: T,
    pub unknowns: usize,
    pub equations: usize,
}

/// Index of the strictly-lower entry `(i, j)`, `i > j`, in the unknown vector.
#[inline]
pub fn skew_index(i: usize, j: usize) -> usize {
    i * (i - 1) / 2 + j
}

/// Antisymmetric `S` with `M⁻¹(S + E/2) P = P'` for the basis values `P` and their
/// derivatives `P'`: the minimum-norm least-squares solution of `A q = b`, where `q`
/// holds the strictly-lower triangle of `S`.
pub fn build_skew_part<T: Real>(
    p: &DenseMatrix<T>,
    dp: &DenseMatrix<T>,
    m: &[T],
    e: &DenseMatrix<T>,
) -> Result<SkewPart<T>, Error> {
    let (n, nb) = (p.rows(), p.cols());
    if m.len() != n || e.rows() != n || dp.rows() != n || dp.cols() != nb {
        return Err(Error::InvalidInput("skew-part inputs have inconsistent shapes".into()));
    }
    // b = M P' − E P / 2
    let ep = e.matmul(p);
    let half = T::lit(0.5);
    let b = DenseMatrix::from_fn(n, nb, |i, k| m[i] * dp[(i, k)] - half * ep[(i, k)]);
    let unknowns = n * (n - 1) / 2;
    let equations = n * nb;
    let mut a = DenseMatrix::zeros(equations, unknowns);
    for i in 0..n {
        for k in 0..nb {
            let row = i * nb + k;
            for j in 0..n {
                if j < i {
                    a[(row, skew_index(i, j))] += p[(j, k)];
                } else if j > i {
                    a[(row, skew_index(j, i))] -= p[(j, k)];
                }
            }
        }
    }
    let rhs: Vec<T> = (0..n).flat_map(|i| (0..nb).map(move |k| (i, k))).map(|(i, k)| b[(i, k)]).collect();
    let q = min_norm_lstsq(&a, &rhs, T::lit(1e-12).max(T::epsilon() * T::lit(64.0)))?;
    let residual = a.matvec(&q).iter().zip(&rhs).map(|(x, y)| (*x - *y).abs()).fold(T::zero(), T::max);
    let scale = T::one() + rhs.iter().fold(T::zero(), |mx, v| mx.max(v.abs()));
    if !(residual <= T::tolerance() * scale) {
        return Err(Error::InconsistentSystem { residual: residual.to_f64().unwrap_or(f64::NAN) });
    }
    let mut s = DenseMatrix::zeros(n, n);
    for i in 1..n {
        for j in 0..i {
            let v = q[skew_index(i, j)];
            s[(i, j)] = v;
            s[(j, i)] = -v;
        }
    }
    Ok(SkewPart { s, residual, unknowns, equations })
}

/// Reference-element operators from a certified cubature rule.
pub fn build_operators<T: Real>(rule: &CubatureRule<T>) -> Result<ElementOperators<T>, Error> {
    let (p, d) = (rule.degree, rule.dim);
    let m = build_norm(rule)?;
    let nodes = rule.nodes().clone();
    let n = nodes.len();
    let map = AffineMap::identity(d);
    let facets = build_facets(&nodes, p, &map)?;
    let vs = eval_basis(&nodes, &BasisSpec::new(d, p, BasisKind::Orthonormal)?)?;
    let mut info = ConstructionInfo {
        cubature_branch: rule.branch,
        cubature_residual: rule.residual,
        ..ConstructionInfo::default()
    };
    let (mut q, mut s, mut e) = (Vec::new(), Vec::new(), Vec::new());
    for dir in 0..d {
        let ed = build_boundary_operator(n, &facets, dir);
        let sk = build_skew_part(&vs.v, &vs.dv[dir], &m, &ed)?;
        info.skew_system_residual.push(sk.residual.to_f64().unwrap_or(f64::NAN));
        info.skew_unknowns = sk.unknowns;
        info.skew_equations = sk.equations;
        let mut qd = sk.s.clone();
        qd.axpy(T::lit(0.5), &ed);
        q.push(qd);
        s.push(sk.s);
        e.push(ed);
    }
    Ok(ElementOperators { p, dim: d, ref_nodes: nodes.clone(), nodes, map, m, q, s, e, facets, info })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Tolerances {
    pub accuracy: f64,
    /// Relative to `‖S‖∞`.
    pub antisymmetry: f64,
    pub e_symmetry: f64,
    pub surface_moments: f64,
    pub compatibility: f64,
    pub cubature: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { accuracy: 1e-10, antisymmetry: 1e-12, e_symmetry: 1e-12, surface_moments: 1e-10, compatibility: 1e-10, cubature: 1e-12 }
    }
}

impl Tolerances {
    /// Thresholds for mapped (physical) elements.
    pub fn mapped() -> Self {
        Self { accuracy: 1e-9, antisymmetry: 1e-12, e_symmetry: 1e-12, surface_moments: 1e-9, compatibility: 1e-9, cubature: 1e-12 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SbpVerificationReport {
    pub p: usize,
    pub dim: usize,
    pub nodes: usize,
    /// `max_k ‖D p_k − p_k'‖∞`, per direction.
    pub accuracy: Vec<f64>,
    /// `max_dir ‖S + Sᵀ‖∞ / ‖S‖∞` with `S = Q − E/2`.
    pub antisymmetry: f64,
    /// `max_dir ‖Q + Qᵀ − E‖∞ / ‖Q‖∞`
    pub decomposition: f64,
    pub e_symmetry: f64,
    /// `|p_kᵀ E p_m − ∮ P_k P_m n dΓ|` over pairs of degree ≤ p.
    pub surface_moments: f64,
    /// Largest degree (searched up to 2p) for which all surface moments pass.
    pub tau: usize,
    pub compatibility: f64,
    pub min_weight: f64,
    /// Moment error of `diag(M)` as a cubature of degree 2p−1.
    pub cubature: f64,
}

impl SbpVerificationReport {
    /// Named residuals above their thresholds.
    pub fn failures(&self, tol: &Tolerances) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, v: f64, t: f64| {
            if !(v <= t) {
                out.push(format!("{name} = {v:e} > {t:e}"));
            }
        };
        for (k, a) in self.accuracy.iter().enumerate() {
            check(&format!("accuracy[{}]", ["x", "y", "z"][k]), *a, tol.accuracy);
        }
        check("antisymmetry", self.antisymmetry, tol.antisymmetry);
        check("decomposition", self.decomposition, tol.antisymmetry);
        check("e_symmetry", self.e_symmetry, tol.e_symmetry);
        check("surface_moments", self.surface_moments, tol.surface_moments);
        check("compatibility", self.compatibility, tol.compatibility);
        check("cubature", self.cubature, tol.cubature);
        if !(self.min_weight > 0.0) {
            out.push(format!("min_weight = {:e} is not positive", self.min_weight));
        }
        if self.tau < self.p {
            out.push(format!("tau = {} < p = {}", self.tau, self.p));
        }
        out
    }
}

/// Monomial values and derivatives at the (physical) nodes, plus the monomials as
/// polynomials for exact integration.
struct MonomialData<T> {
    deg: Vec<usize>,
    v: DenseMatrix<T>,
    dv: Vec<DenseMatrix<T>>,
    polys: Vec<Polynomial<T>>,
}

fn monomial_data<T: Real>(ops: &ElementOperators<T>, q: usize) -> MonomialData<T> {
    let spec = BasisSpec { dim: ops.dim, degree: q, kind: BasisKind::Monomial };
    let vs = eval_basis(&ops.nodes, &spec).expect("dimension matches");
    MonomialData {
        deg: degrees(q, ops.dim),
        v: vs.v,
        dv: vs.dv,
        polys: exponents(q, ops.dim).into_iter().map(Polynomial::monomial).collect(),
    }
}

fn f64_of<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Checks every SBP property in the monomial basis, independently of the orthonormal
/// basis used to construct the operators.
pub fn verify_sbp<T: Real>(ops: &ElementOperators<T>) -> SbpVerificationReport {
    let (p, d, n) = (ops.p, ops.dim, ops.len());
    let mono = monomial_data(ops, 2 * p);
    let nb = basis_size(p, d);
    let half = T::lit(0.5);

    let mut accuracy = Vec::with_capacity(d);
    let (mut antisym, mut decomp, mut esym) = (T::zero(), T::zero(), T::zero());
    for dir in 0..d {
        let dmat = ops.d(dir);
        let mut acc = T::zero();
        for k in 0..nb {
            let col = mono.v.column(k);
            let dc = dmat.matvec(&col);
            for i in 0..n {
                acc = acc.max((dc[i] - mono.dv[dir][(i, k)]).abs());
            }
        }
        accuracy.push(f64_of(acc));
        let mut s = ops.q[dir].clone();
        s.axpy(-half, &ops.e[dir]);
        let snorm = s.norm_inf().max(T::min_positive_value());
        antisym = antisym.max(s.add(&s.transpose()).norm_inf() / snorm);
        let qn = ops.q[dir].norm_inf().max(T::min_positive_value());
        decomp = decomp.max(ops.q[dir].add(&ops.q[dir].transpose()).sub(&ops.e[dir]).norm_inf() / qn);
        esym = esym.max(ops.e[dir].sub(&ops.e[dir].transpose()).max_abs());
    }

    // Surface moments by degree, against ∮ P_k P_m n dΓ = ∫ ∂(P_k P_m).
    let tol_sm = T::lit(1e-10);
    let mut by_degree = vec![T::zero(); 2 * p + 1];
    let nq = mono.deg.len();
    for k in 0..nq {
        for mm in 0..=k {
            let t = mono.deg[k].max(mono.deg[mm]);
            let prod = mono.polys[k].mul(&mono.polys[mm]);
            let (ck, cm) = (mono.v.column(k), mono.v.column(mm));
            for dir in 0..d {
                let exact = prod.derivative(dir).integrate(&ops.map);
                let disc = ops.e[dir].bilinear(&ck, &cm);
                by_degree[t] = by_degree[t].max((disc - exact).abs());
            }
        }
    }
    let surface = by_degree[..=p].iter().copied().fold(T::zero(), T::max);
    let mut tau = 0;
    let mut running = T::zero();
    for (t, v) in by_degree.iter().enumerate() {
        running = running.max(*v);
        if running <= tol_sm {
            tau = t;
        } else {
            break;
        }
    }

    // Compatibility: p_mᵀ M p_k' + p_kᵀ M p_m' − p_mᵀ E p_k.
    let mut compat = T::zero();
    for k in 0..nb {
        for mm in 0..=k {
            let (ck, cm) = (mono.v.column(k), mono.v.column(mm));
            for dir in 0..d {
                let mut lhs = T::zero();
                for i in 0..n {
                    lhs += ops.m[i] * (cm[i] * mono.dv[dir][(i, k)] + ck[i] * mono.dv[dir][(i, mm)]);
                }
                compat = compat.max((lhs - ops.e[dir].bilinear(&cm, &ck)).abs());
            }
        }
    }

    // diag(M) as a cubature of degree 2p − 1.
    let mut cub = T::zero();
    for k in 0..basis_size(2 * p - 1, d) {
        let exact = mono.polys[k].integrate(&ops.map);
        let disc: T = (0..n).map(|i| ops.m[i] * mono.v[(i, k)]).sum();
        cub = cub.max((disc - exact).abs());
    }

    SbpVerificationReport {
        p,
        dim: d,
        nodes: n,
        accuracy,
        antisymmetry: f64_of(antisym),
        decomposition: f64_of(decomp),
        e_symmetry: f64_of(esym),
        surface_moments: f64_of(surface),
        tau,
        compatibility: f64_of(compat),
        min_weight: f64_of(ops.m.iter().copied().fold(T::infinity(), T::min)),
        cubature: f64_of(cub),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilinearReport {
    /// `|p_kᵀ Q p_m − ∫ P_k ∂P_m|` for deg P_k, deg P_m ≤ p.
    pub q_form: f64,
    /// `|p_kᵀ S p_m − (∫ P_k ∂P_m − ½∮ P_k P_m n)|` for the same pairs.
    pub s_form: f64,
    /// Informational: Q-form residual over deg P_m ≤ p, deg P_k + deg P_m ≤ 2p.
    pub q_form_wide: f64,
}

impl BilinearReport {
    pub fn max(&self) -> f64 {
        self.q_form.max(self.s_form)
    }
}

/// Bilinear-form accuracy of `Q` and `S` against exact integrals.
pub fn bilinear_accuracy_check<T: Real>(ops: &ElementOperators<T>) -> BilinearReport {
    let (p, d) = (ops.p, ops.dim);
    let mono = monomial_data(ops, 2 * p);
    let half = T::lit(0.5);
    let (mut qf, mut sf, mut wide) = (T::zero(), T::zero(), T::zero());
    for k in 0..mono.deg.len() {
        for mm in 0..mono.deg.len() {
            let (dk, dm) = (mono.deg[k], mono.deg[mm]);
            if dm > p || dk + dm > 2 * p {
                continue;
            }
            let (ck, cm) = (mono.v.column(k), mono.v.column(mm));
            for dir in 0..d {
                let vol = mono.polys[k].mul(&mono.polys[mm].derivative(dir)).integrate(&ops.map);
                let disc_q = ops.q[dir].bilinear(&ck, &cm);
                let r = (disc_q - vol).abs();
                wide = wide.max(r);
                if dk <= p {
                    qf = qf.max(r);
                    let surf = mono.polys[k].mul(&mono.polys[mm]).derivative(dir).integrate(&ops.map);
                    let mut s = ops.q[dir].clone();
                    s.axpy(-half, &ops.e[dir]);
                    sf = sf.max((s.bilinear(&ck, &cm) - (vol - half * surf)).abs());
                }
            }
        }
    }
    BilinearReport { q_form: f64_of(qf), s_form: f64_of(sf), q_form_wide: f64_of(wide) }
}

/// Diagonal-mass spectral-element operator on the same nodes.
#[derive(Clone, Debug)]
pub struct SeOperator<T> {
    /// Orthonormal basis indices (graded order, up to degree p+2) spanning the cardinal basis.
    pub selected: Vec<usize>,
    /// Reference-direction derivative matrices `Ψ_r Ψ⁻¹`.
    pub d_ref: Vec<DenseMatrix<T>>,
}

impl<T: Real> SeOperator<T> {
    /// Physical derivative matrices on the element of `ops` (chain rule).
    pub fn d(&self, ops: &ElementOperators<T>) -> Vec<DenseMatrix<T>> {
        let inv = ops.map.inverse_jacobian();
        (0..ops.dim)
            .map(|a| {
                let n = self.d_ref[0].rows();
                let mut da = DenseMatrix::zeros(n, n);
                for r in 0..ops.dim {
                    da.axpy(inv[r][a], &self.d_ref[r]);
                }
                da
            })
            .collect()
    }

    /// `Q_se = M D_se` per physical direction.
    pub fn q(&self, ops: &ElementOperators<T>) -> Vec<DenseMatrix<T>> {
        self.d(ops).iter().map(|d| d.scale_rows(&ops.m)).collect()
    }
}

/// Cardinal-basis derivative operator. All orthonormal polynomials of degree ≤ p are
/// kept; the remaining `n − basis_size(p)` functions are picked greedily from degrees
/// p+1 and p+2 (graded order) by largest residual after orthogonal projection, which
/// keeps the nodal evaluation matrix well conditioned.
pub fn build_se_operator<T: Real>(ref_nodes: &NodeSet<T>, p: usize) -> Result<SeOperator<T>, Error> {
    let d = ref_nodes.dim();
    let n = ref_nodes.len();
    let forced = basis_size(p, d);
    if n < forced {
        return Err(Error::SingularInterpolation(format!("{n} nodes cannot carry a degree-{p} basis")));
    }
    let spec = BasisSpec::new(d, p + 2, BasisKind::Orthonormal)?;
    let vs = eval_basis(ref_nodes, &spec)?;
    let ncand = spec.size();
    let cols: Vec<Vec<T>> = (0..ncand).map(|k| vs.v.column(k)).collect();
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut selected = Vec::new();
    let project = |c: &[T], basis: &[Vec<T>]| -> Vec<T> {
        let mut r = c.to_vec();
        for _ in 0..2 {
            for b in basis {
                let s = dot(&r, b);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= s * *y);
            }
        }
        r
    };
    let scale = T::from_usize_lossy(n).sqrt();
    let tiny = T::lit(1e-10).max(T::epsilon() * T::lit(1e4)) * scale;
    let add = |k: usize, basis: &mut Vec<Vec<T>>, selected: &mut Vec<usize>| -> Result<(), Error> {
        let r = project(&cols[k], basis);
        let nr = dot(&r, &r).sqrt();
        if nr <= tiny {
            return Err(Error::SingularInterpolation(format!("basis function {k} is dependent on the nodes")));
        }
        basis.push(r.iter().map(|x| *x / nr).collect());
        selected.push(k);
        Ok(())
    };
    for k in 0..forced {
        add(k, &mut basis, &mut selected)?;
    }
    while selected.len() < n {
        let mut best: Option<(usize, T)> = None;
        for k in forced..ncand {
            if selected.contains(&k) {
                continue;
            }
            let r = project(&cols[k], &basis);
            let nr = dot(&r, &r).sqrt();
            if best.map_or(true, |(_, b)| nr > b) {
                best = Some((k, nr));
            }
        }
        let (k, _) = best.ok_or_else(|| Error::SingularInterpolation("ran out of candidate functions".into()))?;
        add(k, &mut basis, &mut selected)?;
    }
    let psi = vs.v.select(&(0..n).collect::<Vec<_>>(), &selected);
    let psi_inv = psi.inverse().ok_or_else(|| Error::SingularInterpolation("cardinal basis matrix is singular".into()))?;
    let d_ref = (0..d).map(|r| vs.dv[r].select(&(0..n).collect::<Vec<_>>(), &selected).matmul(&psi_inv)).collect();
    Ok(SeOperator { selected, d_ref })
}

/// Orthonormal-basis values at arbitrary reference points (used to evaluate cardinal
/// functions away from the nodes).
pub fn orthonormal_values<T: Real>(dim: usize, p: usize, x: &[T; 3]) -> Vec<T> {
    orthonormal_at::<T, T>(dim, p, *x)
}
