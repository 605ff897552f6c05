//! Doubly periodic, sinusoidally perturbed triangular mesh of the unit square, global
//! node numbering and geometric facet matching.

use std::collections::HashMap;

use serde::Serialize;

use crate::operators::ElementOperators;
use crate::simplex::AffineMap;
use crate::{Error, Real};

#[derive(Clone, Debug)]
pub struct PeriodicTriMesh<T> {
    pub n: usize,
    /// Vertex `(i, j)` is stored at `j (N+1) + i`.
    pub vertices: Vec<[T; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub maps: Vec<AffineMap<T>>,
}

impl<T: Real> PeriodicTriMesh<T> {
    pub fn h(&self) -> T {
        T::one() / T::from_usize_lossy(self.n)
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertex_id(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn dets(&self) -> Vec<T> {
        self.maps.iter().map(|m| m.det()).collect()
    }
}

pub fn mesh_vertex<T: Real>(n: usize, i: usize, j: usize) -> [T; 3] {
    let nn = T::from_usize_lossy(n);
    let two_pi = T::PI() + T::PI();
    let ti = two_pi * T::from_usize_lossy(i) / nn;
    let tj = two_pi * T::from_usize_lossy(j) / nn;
    let bump = ti.sin() * tj.sin() / T::lit(40.0);
    [T::from_usize_lossy(i) / nn + bump, T::from_usize_lossy(j) / nn + bump, T::zero()]
}

/// Each cell is split along the diagonal from vertex `(i+1, j)` to `(i, j+1)`; the lower
/// triangle of cell `(i, j)` is element `2 (j N + i)`, the upper one the next.
pub fn build_mesh<T: Real>(n: usize) -> Result<PeriodicTriMesh<T>, Error> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("mesh needs N >= 2, got {n}")));
    }
    let mut vertices: Vec<[T; 3]> = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(mesh_vertex(n, i, j));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
            triangles.push([id(i + 1, j + 1), id(i, j + 1), id(i + 1, j)]);
        }
    }
    let mut maps = Vec::with_capacity(triangles.len());
    for (k, t) in triangles.iter().enumerate() {
        let map = AffineMap::from_vertices(2, &[vertices[t[0]], vertices[t[1]], vertices[t[2]]])?;
        let det = map.det();
        if !(det > T::zero()) {
            return Err(Error::InvertedElement { element: k, det: det.to_f64().unwrap_or(f64::NAN) });
        }
        maps.push(map);
    }
    Ok(PeriodicTriMesh { n, vertices, triangles, maps })
}

/// Physical operators on every element, from the reference operators.
pub fn map_reference_nodes<T: Real>(
    mesh: &PeriodicTriMesh<T>,
    reference: &ElementOperators<T>,
) -> Result<Vec<ElementOperators<T>>, Error> {
    if reference.dim != 2 {
        return Err(Error::UnsupportedDimension(reference.dim));
    }
    mesh.maps
        .iter()
        .enumerate()
        .map(|(k, map)| {
            reference.mapped(map).map_err(|e| match e {
                Error::InvertedElement { det, .. } => Error::InvertedElement { element: k, det },
                other => other,
            })
        })
        .collect()
}

/// Groups points that coincide (optionally modulo the unit lattice) within `tol`.
/// Coordinates are rounded to a grid of spacing `tol`; a lookup probes the
/// neighbouring cells so that rounding across a cell edge cannot split a class.
struct PointClusters<T> {
    tol: T,
    periodic: bool,
    cells: HashMap<(i64, i64), Vec<usize>>,
    reps: Vec<[T; 2]>,
    keys: Vec<(i64, i64)>,
}

impl<T: Real> PointClusters<T> {
    fn new(tol: T, periodic: bool) -> Self {
        Self { tol, periodic, cells: HashMap::new(), reps: Vec::new(), keys: Vec::new() }
    }

    fn wrap(&self, v: T) -> T {
        if !self.periodic {
            return v;
        }
        let w = v - v.floor();
        if w >= T::one() - self.tol {
            w - T::one()
        } else {
            w
        }
    }

    fn key(&self, x: &[T; 2]) -> (i64, i64) {
        let q = |v: T| (v / self.tol).round().to_i64().unwrap_or(i64::MAX);
        (q(x[0]), q(x[1]))
    }

    fn find(&self, x: &[T; 2]) -> Option<usize> {
        let (kx, ky) = self.key(x);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.cells.get(&(kx + dx, ky + dy)) {
                    for &c in ids {
                        let r = self.reps[c];
                        if (r[0] - x[0]).abs() <= self.tol && (r[1] - x[1]).abs() <= self.tol {
                            return Some(c);
                        }
                    }
                }
            }
        }
        None
    }

    /// Cluster id of `x`, creating a new cluster when nothing matches.
    fn insert(&mut self, x: &[T; 3]) -> usize {
        let w = [self.wrap(x[0]), self.wrap(x[1])];
        if let Some(c) = self.find(&w) {
            return c;
        }
        let c = self.reps.len();
        let k = self.key(&w);
        self.reps.push(w);
        self.keys.push(k);
        self.cells.entry(k).or_default().push(c);
        c
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GlobalNodeMap<T> {
    /// `ids[element][local node]`
    pub ids: Vec<Vec<usize>>,
    /// Representative coordinates per global id (wrapped into `[0,1)²` when periodic).
    pub coords: Vec<[T; 2]>,
    pub n_global: usize,
    pub periodic: bool,
}

pub fn match_tolerance<T: Real>(h: T) -> T {
    T::lit(1e-10) * h
}

/// Ids are assigned in lexicographic order of the quantized (wrapped) coordinates.
pub fn build_global_numbering<T: Real>(
    mesh: &PeriodicTriMesh<T>,
    elements: &[ElementOperators<T>],
    periodic: bool,
) -> Result<GlobalNodeMap<T>, Error> {
    if elements.len() != mesh.len() {
        return Err(Error::InvalidInput(format!("{} element operators for {} triangles", elements.len(), mesh.len())));
    }
    let mut clusters = PointClusters::new(match_tolerance(mesh.h()), periodic);
    let raw: Vec<Vec<usize>> =
        elements.iter().map(|el| el.nodes.points().iter().map(|x| clusters.insert(x)).collect()).collect();
    let mut order: Vec<usize> = (0..clusters.reps.len()).collect();
    order.sort_by_key(|&c| clusters.keys[c]);
    let mut relabel = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let ids = raw.into_iter().map(|v| v.into_iter().map(|c| relabel[c]).collect()).collect();
    let coords = order.iter().map(|&c| clusters.reps[c]).collect();
    let numbering = GlobalNodeMap { ids, coords, n_global: order.len(), periodic };
    check_shared_facets(mesh, elements, &numbering)?;
    Ok(numbering)
}

/// Two elements meeting at a facet must agree on its node ids.
fn check_shared_facets<T: Real>(
    mesh: &PeriodicTriMesh<T>,
    elements: &[ElementOperators<T>],
    numbering: &GlobalNodeMap<T>,
) -> Result<(), Error> {
    for pair in match_facets(mesh, elements, numbering.periodic)? {
        for (&a, &b) in pair.left_nodes.iter().zip(&pair.right_nodes) {
            let ia = numbering.ids[pair.left.0][a];
            let ib = numbering.ids[pair.right.0][b];
            if ia != ib {
                return Err(Error::FacetMismatch(format!(
                    "elements {} and {} disagree on a shared node ({ia} vs {ib})",
                    pair.left.0, pair.right.0
                )));
            }
        }
    }
    Ok(())
}

/// An interior facet seen from both sides. `left_nodes[k]` and `right_nodes[k]` are
/// element-local ids of the same physical node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FacetPair {
    /// `(element, local facet)`
    pub left: (usize, usize),
    pub right: (usize, usize),
    pub left_nodes: Vec<usize>,
    pub right_nodes: Vec<usize>,
}

/// Pairs element facets by their (wrapped) midpoints and matches facet nodes by
/// position. Unpaired facets are domain boundary facets (non-periodic case only).
pub fn match_facets<T: Real>(
    mesh: &PeriodicTriMesh<T>,
    elements: &[ElementOperators<T>],
    periodic: bool,
) -> Result<Vec<FacetPair>, Error> {
    let tol = match_tolerance(mesh.h());
    let mut clusters = PointClusters::new(tol, periodic);
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for (e, tri) in mesh.triangles.iter().enumerate() {
        for f in 0..3 {
            let (a, b) = (mesh.vertices[tri[(f + 1) % 3]], mesh.vertices[tri[(f + 2) % 3]]);
            let mid = [(a[0] + b[0]) * T::lit(0.5), (a[1] + b[1]) * T::lit(0.5), T::zero()];
            let c = clusters.insert(&mid);
            if c == groups.len() {
                groups.push(Vec::new());
            }
            groups[c].push((e, f));
        }
    }
    let lattice_delta = |u: T| if periodic { u - u.round() } else { u };
    let mut pairs = Vec::new();
    for g in groups {
        match g.len() {
            1 if !periodic => {}
            2 => {
                let (l, r) = (g[0], g[1]);
                let fl = facet_of(&elements[l.0], l.1)?;
                let fr = facet_of(&elements[r.0], r.1)?;
                if fl.nodes.len() != fr.nodes.len() {
                    return Err(Error::FacetMismatch(format!("elements {} and {} have different facet sizes", l.0, r.0)));
                }
                let mut right_nodes = Vec::with_capacity(fl.nodes.len());
                for &i in &fl.nodes {
                    let x = elements[l.0].nodes.point(i);
                    let hit = fr.nodes.iter().copied().find(|&j| {
                        let y = elements[r.0].nodes.point(j);
                        lattice_delta(x[0] - y[0]).abs() <= tol && lattice_delta(x[1] - y[1]).abs() <= tol
                    });
                    match hit {
                        Some(j) => right_nodes.push(j),
                        None => {
                            return Err(Error::FacetMismatch(format!(
                                "node {i} of element {} has no partner on element {}",
                                l.0, r.0
                            )))
                        }
                    }
                }
                pairs.push(FacetPair { left: l, right: r, left_nodes: fl.nodes.clone(), right_nodes });
            }
            k => {
                return Err(Error::FacetMismatch(format!("{k} element facets share the midpoint of element {} facet {}", g[0].0, g[0].1)))
            }
        }
    }
    Ok(pairs)
}

fn facet_of<T: Real>(el: &ElementOperators<T>, f: usize) -> Result<&crate::operators::Facet<T>, Error> {
    el.facets
        .iter()
        .find(|x| x.index == f)
        .ok_or_else(|| Error::FacetMismatch(format!("element has no facet {f}")))
}

#[derive(Serialize)]
struct MeshDump<'a, T> {
    #[serde(rename = "N")]
    n: usize,
    vertices: Vec<[T; 2]>,
    triangles: &'a [[usize; 3]],
    #[serde(skip_serializing_if = "Option::is_none")]
    global_ids: Option<&'a [Vec<usize>]>,
}

pub fn mesh_json<T: Real>(mesh: &PeriodicTriMesh<T>, numbering: Option<&GlobalNodeMap<T>>) -> Result<String, Error> {
    let dump = MeshDump {
        n: mesh.n,
        vertices: mesh.vertices.iter().map(|v| [v[0], v[1]]).collect(),
        triangles: &mesh.triangles,
        global_ids: numbering.map(|g| g.ids.as_slice()),
    };
    Ok(serde_json::to_string(&dump)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubature::golden_rule;
    use crate::operators::{build_operators, verify_sbp, Tolerances};
    use proptest::prelude::*;

    fn reference(p: usize) -> ElementOperators<f64> {
        build_operators(&golden_rule::<f64>(p, 2, None).unwrap()).unwrap()
    }

    #[test]
    fn vertex_formula() {
        let m = build_mesh::<f64>(4).unwrap();
        assert_eq!(m.vertices[m.vertex_id(0, 0)], [0.0, 0.0, 0.0]);
        let v = m.vertices[m.vertex_id(1, 1)];
        assert!((v[0] - 0.275).abs() < 1e-15 && (v[1] - 0.275).abs() < 1e-15);
        assert_eq!(build_mesh::<f64>(2).unwrap().len(), 8);
        assert!(build_mesh::<f64>(1).is_err());
    }

    #[test]
    fn diagonal_and_orientation() {
        let m = build_mesh::<f64>(3).unwrap();
        // Lower and upper triangles of cell (1, 2) share the edge (i+1, j) - (i, j+1).
        let (lo, up) = (m.triangles[2 * (2 * 3 + 1)], m.triangles[2 * (2 * 3 + 1) + 1]);
        let diag = [m.vertex_id(2, 2), m.vertex_id(1, 3)];
        for t in [lo, up] {
            assert!(diag.iter().all(|v| t.contains(v)));
        }
        assert!(m.dets().iter().all(|d| *d > 0.0));
    }

    #[test]
    fn areas_sum_to_one() {
        for n in [2, 5, 12] {
            let m = build_mesh::<f64>(n).unwrap();
            let area: f64 = m.dets().iter().map(|d| 0.5 * d).sum();
            assert!((area - 1.0).abs() < 1e-12, "N={n}: {area}");
        }
    }

    #[test]
    fn global_counts_linear() {
        let m = build_mesh::<f64>(2).unwrap();
        let els = map_reference_nodes(&m, &reference(1)).unwrap();
        assert_eq!(build_global_numbering(&m, &els, true).unwrap().n_global, 4);
        assert_eq!(build_global_numbering(&m, &els, false).unwrap().n_global, 9);
    }

    #[test]
    fn global_counts_by_entity() {
        // vertices + interior facet nodes per edge + interior nodes per element
        for (p, per_edge, interior) in [(2, 1, 1), (3, 2, 3), (4, 3, 6)] {
            let n = 3;
            let m = build_mesh::<f64>(n).unwrap();
            let els = map_reference_nodes(&m, &reference(p)).unwrap();
            let g = build_global_numbering(&m, &els, true).unwrap();
            assert_eq!(g.n_global, n * n + 3 * n * n * per_edge + 2 * n * n * interior, "p={p}");
            let g = build_global_numbering(&m, &els, false).unwrap();
            let edges = 3 * n * n + 2 * n;
            assert_eq!(g.n_global, (n + 1) * (n + 1) + edges * per_edge + 2 * n * n * interior, "p={p}");
        }
    }

    #[test]
    fn diagonal_nodes_shared_p2() {
        let m = build_mesh::<f64>(2).unwrap();
        let els = map_reference_nodes(&m, &reference(2)).unwrap();
        let g = build_global_numbering(&m, &els, false).unwrap();
        // Element 0 facet 0 is the diagonal of cell (0,0); element 1 facet 0 likewise.
        let a: Vec<usize> = els[0].facets[0].nodes.iter().map(|&i| g.ids[0][i]).collect();
        let mut b: Vec<usize> = els[1].facets[0].nodes.iter().map(|&i| g.ids[1][i]).collect();
        let mut a2 = a.clone();
        a2.sort();
        b.sort();
        assert_eq!(a.len(), 3);
        assert_eq!(a2, b);
    }

    #[test]
    fn facets_pair_with_opposite_normals() {
        let m = build_mesh::<f64>(4).unwrap();
        let els = map_reference_nodes(&m, &reference(3)).unwrap();
        let pairs = match_facets(&m, &els, true).unwrap();
        assert_eq!(pairs.len(), 3 * 16);
        let mut count = vec![0; m.len()];
        for p in &pairs {
            count[p.left.0] += 1;
            count[p.right.0] += 1;
            let nl = els[p.left.0].facets[p.left.1].normal;
            let nr = els[p.right.0].facets[p.right.1].normal;
            assert!((nl[0] + nr[0]).abs() < 1e-12 && (nl[1] + nr[1]).abs() < 1e-12);
            let ml = els[p.left.0].facets[p.left.1].measure;
            let mr = els[p.right.0].facets[p.right.1].measure;
            assert!((ml - mr).abs() < 1e-14);
        }
        assert!(count.iter().all(|&c| c == 3));
        let open = match_facets(&m, &els, false).unwrap();
        assert_eq!(open.len(), 3 * 16 - 8);
    }

    #[test]
    fn mapped_elements_stay_sbp() {
        let m = build_mesh::<f64>(3).unwrap();
        let els = map_reference_nodes(&m, &reference(2)).unwrap();
        for (k, el) in els.iter().enumerate() {
            let f = verify_sbp(el).failures(&Tolerances::mapped());
            assert!(f.is_empty(), "element {k}: {f:?}");
        }
    }

    #[test]
    fn dump_has_keys() {
        let m = build_mesh::<f64>(2).unwrap();
        let els = map_reference_nodes(&m, &reference(1)).unwrap();
        let g = build_global_numbering(&m, &els, true).unwrap();
        let v: serde_json::Value = serde_json::from_str(&mesh_json(&m, Some(&g)).unwrap()).unwrap();
        assert_eq!(v["N"], 2);
        assert_eq!(v["triangles"].as_array().unwrap().len(), 8);
        assert_eq!(v["global_ids"].as_array().unwrap().len(), 8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn numbering_partition_is_permutation_stable(seed in 0u64..1000, n in 2usize..5) {
            let m = build_mesh::<f64>(n).unwrap();
            let els = map_reference_nodes(&m, &reference(2)).unwrap();
            let g = build_global_numbering(&m, &els, true).unwrap();
            // Reverse-rotate the element list and renumber.
            let shift = (seed as usize) % m.len();
            let perm: Vec<usize> = (0..m.len()).map(|k| (k + shift) % m.len()).rev().collect();
            let m2 = PeriodicTriMesh {
                n,
                vertices: m.vertices.clone(),
                triangles: perm.iter().map(|&k| m.triangles[k]).collect(),
                maps: perm.iter().map(|&k| m.maps[k]).collect(),
            };
            let els2: Vec<_> = perm.iter().map(|&k| els[k].clone()).collect();
            let g2 = build_global_numbering(&m2, &els2, true).unwrap();
            prop_assert_eq!(g.n_global, g2.n_global);
            let mut a2b = vec![usize::MAX; g.n_global];
            for (pos, &k) in perm.iter().enumerate() {
                for (i, &id) in g.ids[k].iter().enumerate() {
                    let other = g2.ids[pos][i];
                    prop_assert!(a2b[id] == usize::MAX || a2b[id] == other);
                    a2b[id] = other;
                }
            }
        }
    }
}
