//! Constant-coefficient advection `u_t + β·∇u = 0` on the periodic mesh: continuous
//! (assembled) and discontinuous (SAT-coupled) SBP discretizations, the diagonal-mass
//! spectral-element comparison, RK4 and the stability/accuracy diagnostics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_global, assemble_matrices, CsrMatrix};
use crate::linalg::{eig_general, Complex};
use crate::matrix::DenseMatrix;
use crate::mesh::{build_global_numbering, build_mesh, map_reference_nodes, match_facets};
use crate::operators::{build_se_operator, ElementOperators};
use crate::{Error, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Assembled global SBP operator.
    Csbp,
    /// Element SBP operators coupled by upwind SATs.
    Dsbp,
    /// Assembled diagonal-mass spectral-element operator on the SBP nodes.
    Se,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Csbp => "csbp",
            Scheme::Dsbp => "dsbp",
            Scheme::Se => "se",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "csbp" => Ok(Scheme::Csbp),
            "dsbp" => Ok(Scheme::Dsbp),
            "se" => Ok(Scheme::Se),
            _ => Err(Error::InvalidInput(format!("unknown scheme {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdvectionConfig {
    pub scheme: Scheme,
    pub p: usize,
    pub n: usize,
    pub beta: [f64; 2],
    pub sigma: f64,
    pub cfl: f64,
    pub t_final: f64,
}

impl Default for AdvectionConfig {
    fn default() -> Self {
        Self { scheme: Scheme::Csbp, p: 1, n: 8, beta: [1.0, 1.0], sigma: 1.0, cfl: 0.5, t_final: 1.0 }
    }
}

impl AdvectionConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(1..=4).contains(&self.p) {
            return Err(Error::UnsupportedDegree { p: self.p });
        }
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("N must be at least 2, got {}", self.n)));
        }
        if !(self.cfl > 0.0) || !self.cfl.is_finite() {
            return Err(Error::InvalidInput(format!("CFL must be positive, got {}", self.cfl)));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidInput(format!("final time must be positive, got {}", self.t_final)));
        }
        if !self.beta.iter().all(|b| b.is_finite()) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput("velocity and penalty must be finite".into()));
        }
        Ok(())
    }
}

/// `1 − (4r² − 1)⁵` inside the disc of radius 1/2 about the centre, 1 outside.
pub fn initial_condition<T: Real>(x: T, y: T) -> T {
    let half = T::lit(0.5);
    let r2 = (x - half) * (x - half) + (y - half) * (y - half);
    if r2 <= T::lit(0.25) {
        T::one() - (T::lit(4.0) * r2 - T::one()).powi(5)
    } else {
        T::one()
    }
}

/// `∫ U₀²` over the unit square, `1 + 7π/66`.
pub fn initial_energy_exact<T: Real>() -> T {
    T::one() + T::lit(7.0) * T::PI() / T::lit(66.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FacetFlow {
    Inflow,
    Outflow,
    Characteristic,
}

pub const CHARACTERISTIC_TOL: f64 = 1e-13;

/// Which part of `β_x E_x + β_y E_y` a facet with outward normal `n` belongs to.
pub fn decompose_face_e<T: Real>(beta: [T; 2], normal: &[T; 3]) -> FacetFlow {
    let bn = beta[0] * normal[0] + beta[1] * normal[1];
    if bn.abs() <= T::lit(CHARACTERISTIC_TOL) {
        FacetFlow::Characteristic
    } else if bn < T::zero() {
        FacetFlow::Inflow
    } else {
        FacetFlow::Outflow
    }
}

/// `(E₊, E₋)` of one element, assembled facet by facet.
pub fn split_boundary_operator<T: Real>(ops: &ElementOperators<T>, beta: [T; 2]) -> (DenseMatrix<T>, DenseMatrix<T>) {
    let n = ops.len();
    let mut plus = DenseMatrix::zeros(n, n);
    let mut minus = DenseMatrix::zeros(n, n);
    for f in &ops.facets {
        let bn = beta[0] * f.normal[0] + beta[1] * f.normal[1];
        let target = match decompose_face_e(beta, &f.normal) {
            FacetFlow::Inflow => &mut minus,
            FacetFlow::Outflow => &mut plus,
            FacetFlow::Characteristic => continue,
        };
        for (a, &i) in f.nodes.iter().enumerate() {
            for (b, &j) in f.nodes.iter().enumerate() {
                target[(i, j)] += bn * f.mass[(a, b)];
            }
        }
    }
    (plus, minus)
}

/// SAT on one inflow facet: `du[nodes] += C (u[nodes] − u_nb[neighbor])`.
#[derive(Clone, Debug)]
struct Sat<T> {
    nodes: Vec<usize>,
    /// Global offsets of the neighbour's matching nodes; `None` is homogeneous inflow data.
    neighbor: Option<Vec<usize>>,
    /// `σ (β·n) M⁻¹ B_f`, restricted to the facet rows.
    c: DenseMatrix<T>,
}

#[derive(Clone, Debug)]
struct DsbpElement<T> {
    offset: usize,
    /// `β_x D_x + β_y D_y`
    a: DenseMatrix<T>,
    sats: Vec<Sat<T>>,
}

/// Element operators coupled through upwind SATs.
#[derive(Clone, Debug)]
pub struct Dsbp<T> {
    elements: Vec<DsbpElement<T>>,
    m: Vec<T>,
}

impl<T: Real> Dsbp<T> {
    /// `pairs` lists interior facets; every other facet takes homogeneous inflow data.
    pub fn new(
        elements: &[ElementOperators<T>],
        pairs: &[crate::mesh::FacetPair],
        beta: [T; 2],
        sigma: T,
    ) -> Result<Self, Error> {
        let mut offsets = Vec::with_capacity(elements.len());
        let mut total = 0;
        for el in elements {
            offsets.push(total);
            total += el.len();
        }
        // neighbours[element][facet] = matching global offsets, in that facet's node order
        let mut neighbours: Vec<Vec<Option<Vec<usize>>>> = elements.iter().map(|e| vec![None; e.facets.len()]).collect();
        for pr in pairs {
            let (l, fl) = pr.left;
            let (r, fr) = pr.right;
            if pr.left_nodes.len() != pr.right_nodes.len() {
                return Err(Error::FacetMismatch(format!("elements {l} and {r}: facet node counts differ")));
            }
            let lf = &elements[l].facets[fl];
            let rf = &elements[r].facets[fr];
            let lmap: Vec<usize> = lf
                .nodes
                .iter()
                .map(|i| pr.left_nodes.iter().position(|x| x == i).map(|k| offsets[r] + pr.right_nodes[k]))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::FacetMismatch(format!("element {l} facet {fl} node list")))?;
            let rmap: Vec<usize> = rf
                .nodes
                .iter()
                .map(|j| pr.right_nodes.iter().position(|x| x == j).map(|k| offsets[l] + pr.left_nodes[k]))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::FacetMismatch(format!("element {r} facet {fr} node list")))?;
            neighbours[l][fl] = Some(lmap);
            neighbours[r][fr] = Some(rmap);
        }
        let mut out = Vec::with_capacity(elements.len());
        let mut m = Vec::with_capacity(total);
        for (k, el) in elements.iter().enumerate() {
            m.extend_from_slice(&el.m);
            let mut a = el.d(0).scaled(beta[0]);
            a.axpy(beta[1], &el.d(1));
            let mut sats = Vec::new();
            for (fi, f) in el.facets.iter().enumerate() {
                if decompose_face_e(beta, &f.normal) != FacetFlow::Inflow {
                    continue;
                }
                let bn = beta[0] * f.normal[0] + beta[1] * f.normal[1];
                let nf = f.nodes.len();
                let c = DenseMatrix::from_fn(nf, nf, |i, j| sigma * bn * f.mass[(i, j)] / el.m[f.nodes[i]]);
                sats.push(Sat { nodes: f.nodes.clone(), neighbor: neighbours[k][fi].take(), c });
            }
            out.push(DsbpElement { offset: offsets[k], a, sats });
        }
        Ok(Self { elements: out, m })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn norm(&self) -> &[T] {
        &self.m
    }

    pub fn rhs(&self, u: &[T], du: &mut [T]) {
        let mut jump = Vec::new();
        for el in &self.elements {
            let n = el.a.rows();
            let ue = &u[el.offset..el.offset + n];
            for i in 0..n {
                let row = el.a.row(i);
                let mut s = T::zero();
                for j in 0..n {
                    s += row[j] * ue[j];
                }
                du[el.offset + i] = -s;
            }
            for sat in &el.sats {
                jump.clear();
                match &sat.neighbor {
                    Some(nb) => jump.extend(sat.nodes.iter().zip(nb).map(|(&i, &g)| ue[i] - u[g])),
                    None => jump.extend(sat.nodes.iter().map(|&i| ue[i])),
                }
                for (a, &i) in sat.nodes.iter().enumerate() {
                    let row = sat.c.row(a);
                    let mut s = T::zero();
                    for b in 0..jump.len() {
                        s += row[b] * jump[b];
                    }
                    du[el.offset + i] += s;
                }
            }
        }
    }
}

enum Spatial<T> {
    /// `M⁻¹ (β_x Q_x + β_y Q_y)` and the unscaled `Q_x + Q_y`.
    Global { a: CsrMatrix<T>, q_sum: CsrMatrix<T> },
    Dsbp(Dsbp<T>),
}

/// A complete semi-discretization on the `N × N` periodic mesh.
pub struct Advection<T> {
    pub scheme: Scheme,
    pub p: usize,
    pub n: usize,
    pub beta: [T; 2],
    pub sigma: T,
    /// Diagonal norm of the state vector.
    pub m: Vec<T>,
    /// Node coordinates of each state entry.
    pub coords: Vec<[T; 2]>,
    /// Minimum node distance on the reference triangle.
    pub dr: T,
    spatial: Spatial<T>,
}

impl<T: Real> Advection<T> {
    pub fn new(reference: &ElementOperators<T>, scheme: Scheme, n: usize, beta: [T; 2], sigma: T) -> Result<Self, Error> {
        if reference.dim != 2 {
            return Err(Error::UnsupportedDimension(reference.dim));
        }
        let mesh = build_mesh::<T>(n)?;
        let elements = map_reference_nodes(&mesh, reference)?;
        let dr = min_node_distance(reference);
        let (m, coords, spatial) = match scheme {
            Scheme::Csbp | Scheme::Se => {
                let numbering = build_global_numbering(&mesh, &elements, true)?;
                let (m, q) = if scheme == Scheme::Csbp {
                    let g = assemble_global(&numbering, &elements)?;
                    (g.m, g.q)
                } else {
                    let se = build_se_operator(&reference.ref_nodes, reference.p)?;
                    let qs: Vec<Vec<DenseMatrix<T>>> = elements.iter().map(|e| se.q(e)).collect();
                    let ms: Vec<&[T]> = elements.iter().map(|e| e.m.as_slice()).collect();
                    let qr: Vec<&[DenseMatrix<T>]> = qs.iter().map(|v| v.as_slice()).collect();
                    assemble_matrices(&numbering, &ms, &qr)?
                };
                let inv: Vec<T> = m.iter().map(|w| T::one() / *w).collect();
                let a = q[0].combine(beta[0], &q[1], beta[1])?.scale_rows(&inv);
                let q_sum = q[0].combine(T::one(), &q[1], T::one())?;
                (m, numbering.coords, Spatial::Global { a, q_sum })
            }
            Scheme::Dsbp => {
                let pairs = match_facets(&mesh, &elements, true)?;
                let d = Dsbp::new(&elements, &pairs, beta, sigma)?;
                let coords = elements.iter().flat_map(|e| e.nodes.points().iter().map(|x| [x[0], x[1]])).collect();
                (d.m.clone(), coords, Spatial::Dsbp(d))
            }
        };
        Ok(Self { scheme, p: reference.p, n, beta, sigma, m, coords, dr, spatial })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn rhs(&self, u: &[T], du: &mut [T]) {
        match &self.spatial {
            Spatial::Global { a, .. } => {
                a.matvec_into(u, du);
                du.iter_mut().for_each(|v| *v = -*v);
            }
            Spatial::Dsbp(d) => d.rhs(u, du),
        }
    }

    pub fn initial_state(&self) -> Vec<T> {
        self.coords.iter().map(|x| initial_condition(x[0], x[1])).collect()
    }

    /// `Δt = CFL Δr / (√2 N)`
    pub fn time_step(&self, cfl: T) -> T {
        cfl * self.dr / (T::lit(2.0).sqrt() * T::from_usize_lossy(self.n))
    }

    pub fn energy(&self, u: &[T]) -> T {
        u.iter().zip(&self.m).map(|(v, w)| *w * *v * *v).sum()
    }

    /// Dense `Q_x + Q_y` of an assembled scheme (`None` for D-SBP).
    pub fn global_q_sum(&self) -> Option<&CsrMatrix<T>> {
        match &self.spatial {
            Spatial::Global { q_sum, .. } => Some(q_sum),
            Spatial::Dsbp(_) => None,
        }
    }

    /// March `u0` to `t_final` with RK4 at the given CFL number.
    pub fn run(&self, cfl: T, t_final: T) -> Result<Vec<T>, Error> {
        rk4_integrate(|u, du| self.rhs(u, du), &self.initial_state(), self.time_step(cfl), t_final, |_, _, _| true)
            .map(|(u, _)| u)
    }
}

pub fn min_node_distance<T: Real>(ops: &ElementOperators<T>) -> T {
    let pts = ops.ref_nodes.points();
    let mut best = T::infinity();
    for i in 0..pts.len() {
        for j in 0..i {
            let d = (0..ops.dim).map(|k| (pts[i][k] - pts[j][k]).powi(2)).sum::<T>().sqrt();
            best = best.min(d);
        }
    }
    best
}

/// One classical RK4 step of size `dt`, in place.
pub fn rk4_step<T: Real, F: FnMut(&[T], &mut [T])>(rhs: &mut F, u: &mut [T], dt: T, work: &mut [Vec<T>; 5]) {
    let n = u.len();
    let half = T::lit(0.5);
    let [k1, k2, k3, k4, tmp] = work;
    for v in [&mut *k1, &mut *k2, &mut *k3, &mut *k4, &mut *tmp] {
        v.resize(n, T::zero());
    }
    rhs(u, k1);
    for i in 0..n {
        tmp[i] = u[i] + half * dt * k1[i];
    }
    rhs(tmp, k2);
    for i in 0..n {
        tmp[i] = u[i] + half * dt * k2[i];
    }
    rhs(tmp, k3);
    for i in 0..n {
        tmp[i] = u[i] + dt * k3[i];
    }
    rhs(tmp, k4);
    let sixth = dt / T::lit(6.0);
    for i in 0..n {
        u[i] += sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
    }
}

/// Integrates to exactly `t_final`; the last step is shortened to land on it.
/// `observe(step, t, u)` runs after every step and may stop the march by returning
/// `false`. Returns the state and the time reached.
pub fn rk4_integrate<T, F, O>(mut rhs: F, u0: &[T], dt: T, t_final: T, mut observe: O) -> Result<(Vec<T>, T), Error>
where
    T: Real,
    F: FnMut(&[T], &mut [T]),
    O: FnMut(usize, T, &[T]) -> bool,
{
    if !(dt > T::zero()) {
        return Err(Error::InvalidInput("time step must be positive".into()));
    }
    let mut u = u0.to_vec();
    let mut work: [Vec<T>; 5] = Default::default();
    let mut t = T::zero();
    let mut step = 0;
    let slack = dt * T::lit(1e-10);
    while t < t_final - slack {
        let mut h = dt;
        if t + h > t_final - slack {
            h = t_final - t;
        }
        rk4_step(&mut rhs, &mut u, h, &mut work);
        step += 1;
        t = if t_final - (t + h) <= slack { t_final } else { t + h };
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { time: t.to_f64().unwrap_or(f64::NAN) });
        }
        if !observe(step, t, &u) {
            break;
        }
    }
    Ok((u, t))
}

/// `(‖u − u0‖_M / ‖U₀‖_{L²}, uᵀMu − u0ᵀMu0)`
pub fn l2_error_and_energy<T: Real>(u: &[T], u0: &[T], m: &[T]) -> Result<(T, T), Error> {
    if u.len() != u0.len() || u.len() != m.len() {
        return Err(Error::InvalidInput("state and norm sizes differ".into()));
    }
    let mut err = T::zero();
    let mut de = T::zero();
    for ((&a, &b), &w) in u.iter().zip(u0).zip(m) {
        err += w * (a - b) * (a - b);
        de += w * (a * a - b * b);
    }
    Ok((err.sqrt() / initial_energy_exact::<T>().sqrt(), de))
}

#[derive(Clone, Debug, Serialize)]
pub struct CflResult {
    pub cfl_max: f64,
    /// No tested CFL in the bracket was stable; `cfl_max` is the lower bound.
    pub flagged: bool,
    pub evaluations: usize,
}

/// One period at `cfl` is stable if the final norm does not exceed the initial one.
pub fn is_stable<T: Real>(prob: &Advection<T>, cfl: T, t_final: T) -> bool {
    let u0 = prob.initial_state();
    let e0 = prob.energy(&u0);
    let cap = e0 * T::lit(1e3);
    let run = rk4_integrate(
        |u, du| prob.rhs(u, du),
        &u0,
        prob.time_step(cfl),
        t_final,
        |step, _, u| step % 16 != 0 || prob.energy(u) <= cap,
    );
    match run {
        Ok((u, t)) => t >= t_final && prob.energy(&u) <= e0,
        Err(_) => false,
    }
}

/// Golden-section search for the largest stable CFL number in `[lo, hi]`, stopping
/// when the bracket is narrower than `width`.
pub fn cfl_search<T: Real>(prob: &Advection<T>, lo: f64, hi: f64, width: f64, t_final: T) -> CflResult {
    let stable = |c: f64| is_stable(prob, T::lit(c), t_final);
    let score = |c: f64, ok: bool| if ok { c } else { 0.0 };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut best: Option<f64> = None;
    let mut evals = 0;
    let mut probe = |c: f64, best: &mut Option<f64>| {
        evals += 1;
        let ok = stable(c);
        if ok && best.map_or(true, |x| c > x) {
            *best = Some(c);
        }
        score(c, ok)
    };
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = probe(c, &mut best);
    let mut fd = probe(d, &mut best);
    while b - a > width {
        if fc < fd {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = probe(d, &mut best);
        } else {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = probe(c, &mut best);
        }
    }
    match best {
        Some(x) => CflResult { cfl_max: x, flagged: false, evaluations: evals },
        None => {
            let ok = probe(lo, &mut best) > 0.0;
            CflResult { cfl_max: lo, flagged: !ok, evaluations: evals }
        }
    }
}

pub const MAX_DENSE_EIGEN: usize = 4000;

/// Eigenvalues of a (small) assembled operator.
pub fn spectrum<T: Real>(q: &CsrMatrix<T>) -> Result<Vec<Complex<T>>, Error> {
    if q.n > MAX_DENSE_EIGEN {
        return Err(Error::InvalidInput(format!("{} unknowns exceed the dense eigensolver cap {MAX_DENSE_EIGEN}", q.n)));
    }
    eig_general(&q.to_dense())
}

/// `(max |Re λ|, max Re λ, max |λ|)`
pub fn spectrum_summary<T: Real>(ev: &[Complex<T>]) -> (f64, f64, f64) {
    let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let mut abs_re = 0.0f64;
    let mut max_re = f64::NEG_INFINITY;
    let mut rad = 0.0f64;
    for z in ev {
        abs_re = abs_re.max(f(z.re).abs());
        max_re = max_re.max(f(z.re));
        rad = rad.max(f(z.norm()));
    }
    (abs_re, max_re, rad)
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_slope(h: &[f64], e: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConvergenceRow {
    pub scheme: Scheme,
    pub p: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    pub normalized_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    #[serde(rename = "delta_E")]
    pub delta_e: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpectrumRow {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CflRow {
    pub scheme: Scheme,
    pub p: usize,
    pub cfl_max: f64,
}

/// Error after marching the bump to `t_final` (one period returns it to its start).
pub fn convergence_point<T: Real>(prob: &Advection<T>, cfl: T, t_final: T) -> Result<ConvergenceRow, Error> {
    let u0 = prob.initial_state();
    let u = prob.run(cfl, t_final)?;
    let (err, _) = l2_error_and_energy(&u, &u0, &prob.m)?;
    Ok(ConvergenceRow {
        scheme: prob.scheme,
        p: prob.p,
        n: prob.n,
        h: 1.0 / prob.n as f64,
        normalized_error: err.to_f64().unwrap_or(f64::NAN),
    })
}

/// `ΔE(t)` sampled every `every` steps (and at the final time).
pub fn energy_history<T: Real>(prob: &Advection<T>, cfl: T, t_final: T, every: usize) -> Result<Vec<EnergyRow>, Error> {
    let u0 = prob.initial_state();
    let e0 = prob.energy(&u0);
    let mut rows = vec![EnergyRow { t: 0.0, delta_e: 0.0 }];
    let every = every.max(1);
    let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let (u, t) = rk4_integrate(
        |u, du| prob.rhs(u, du),
        &u0,
        prob.time_step(cfl),
        t_final,
        |step, t, u| {
            if step % every == 0 {
                rows.push(EnergyRow { t: f(t), delta_e: f(prob.energy(u) - e0) });
            }
            true
        },
    )?;
    if rows.last().map_or(true, |r| r.t < f(t)) {
        rows.push(EnergyRow { t: f(t), delta_e: f(prob.energy(&u) - e0) });
    }
    Ok(rows)
}
