//! Conforming planar triangulations with tagged boundary edges.
//!
//! A [`TriMesh`] caches everything the P1 machinery needs per cell (area and
//! the constant gradients of the three hat functions) and per node (lumped
//! area mass and boundary mass), so energy evaluations never recompute
//! geometry.

mod build;
mod io;

pub use build::{
    build_disk_mesh, build_graded_half_disk_mesh, build_half_disk_mesh, build_rectangle_mesh,
};
pub use io::{read_mesh, write_mesh};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;

pub const TAG_CIRCLE: &str = "circle";
pub const TAG_ARC: &str = "arc";
pub const TAG_TRACE: &str = "trace";
pub const TAG_WALL: &str = "wall";

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub tag: String,
    /// Outward unit normal.
    pub normal: [f64; 2],
    pub length: f64,
    /// Cell owning this edge.
    pub cell: usize,
}

/// Which boundary edges an integral runs over.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum BoundarySelection {
    #[default]
    All,
    Tag(String),
}

impl BoundarySelection {
    pub fn tag(tag: &str) -> Self {
        BoundarySelection::Tag(tag.to_string())
    }

    pub fn contains(&self, edge: &BoundaryEdge) -> bool {
        match self {
            BoundarySelection::All => true,
            BoundarySelection::Tag(t) => edge.tag == *t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    refinement: u32,
    areas: Vec<f64>,
    basis_gradients: Vec<[[f64; 2]; 3]>,
    lumped_mass: Vec<f64>,
    boundary_mass: Vec<f64>,
    on_boundary: Vec<bool>,
    area: f64,
    perimeter: f64,
    h_max: f64,
}

fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

impl TriMesh {
    /// Validates the triangulation and derives oriented boundary edges.
    ///
    /// `boundary` lists every boundary edge once (either vertex order) with
    /// its tag; it must coincide with the set of edges owned by exactly one
    /// cell.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        boundary: Vec<(usize, usize, String)>,
        refinement: u32,
    ) -> Result<Self> {
        let nv = vertices.len();
        if cells.is_empty() {
            return Err(Error::InvalidMesh("no cells".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::NonFinite {
                    node: i,
                    value: if v[0].is_finite() { v[1] } else { v[0] },
                });
            }
        }

        let mut areas = Vec::with_capacity(cells.len());
        let mut basis_gradients = Vec::with_capacity(cells.len());
        let mut lumped_mass = vec![0.0; nv];
        let mut h_max: f64 = 0.0;
        // directed edge (a, b) -> owning cell
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * cells.len());

        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&i| i >= nv) {
                return Err(Error::InvalidMesh(format!("cell {c} references a missing vertex")));
            }
            let [p, q, r] = cell.map(|i| vertices[i]);
            let area = signed_area(p, q, r);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} has non-positive signed area {area:e}"
                )));
            }
            // ∇φ_k = rot90(opposite edge) / (2|T|)
            let grads = [(q, r), (r, p), (p, q)].map(|(s, t)| {
                [(s[1] - t[1]) / (2.0 * area), (t[0] - s[0]) / (2.0 * area)]
            });
            areas.push(area);
            basis_gradients.push(grads);
            for &i in cell {
                lumped_mass[i] += area / 3.0;
            }
            for k in 0..3 {
                let (a, b) = (cell[k], cell[(k + 1) % 3]);
                h_max = h_max.max(dist(vertices[a], vertices[b]));
                if directed.insert((a, b), c).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({a}, {b}) used twice with the same orientation"
                    )));
                }
            }
        }

        let mut owned_once: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        for (&(a, b), &c) in &directed {
            if !directed.contains_key(&(b, a)) {
                owned_once.insert((a.min(b), a.max(b)), (a, b, c));
            }
        }
        if owned_once.len() != boundary.len() {
            return Err(Error::InvalidMesh(format!(
                "{} topological boundary edges but {} tagged edges",
                owned_once.len(),
                boundary.len()
            )));
        }

        let mut boundary_edges = Vec::with_capacity(boundary.len());
        let mut boundary_mass = vec![0.0; nv];
        let mut on_boundary = vec![false; nv];
        let mut out_degree = vec![0usize; nv];
        let mut in_degree = vec![0usize; nv];
        for (x, y, tag) in boundary {
            let key = (x.min(y), x.max(y));
            let &(a, b, cell) = owned_once.get(&key).ok_or_else(|| {
                Error::InvalidMesh(format!("tagged edge ({x}, {y}) is not a boundary edge"))
            })?;
            let (pa, pb) = (vertices[a], vertices[b]);
            let length = dist(pa, pb);
            let normal = [(pb[1] - pa[1]) / length, (pa[0] - pb[0]) / length];
            boundary_mass[a] += 0.5 * length;
            boundary_mass[b] += 0.5 * length;
            on_boundary[a] = true;
            on_boundary[b] = true;
            out_degree[a] += 1;
            in_degree[b] += 1;
            boundary_edges.push(BoundaryEdge {
                a,
                b,
                tag,
                normal,
                length,
                cell,
            });
        }
        if (0..nv).any(|i| out_degree[i] != in_degree[i] || out_degree[i] > 1) {
            return Err(Error::InvalidMesh("boundary edges do not form closed loops".into()));
        }

        let area = pairwise_sum(&areas);
        let perimeter = pairwise_sum(&boundary_edges.iter().map(|e| e.length).collect::<Vec<_>>());
        Ok(Self {
            vertices,
            cells,
            boundary_edges,
            refinement,
            areas,
            basis_gradients,
            lumped_mass,
            boundary_mass,
            on_boundary,
            area,
            perimeter,
            h_max,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn refinement(&self) -> u32 {
        self.refinement
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_areas(&self) -> &[f64] {
        &self.areas
    }

    /// Constant gradients of the three hat functions on each cell.
    pub fn basis_gradients(&self) -> &[[[f64; 2]; 3]] {
        &self.basis_gradients
    }

    /// ∫_Ω φ_i for every node.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    /// ∫_{∂Ω} φ_i for every node (zero off the boundary).
    pub fn boundary_mass(&self) -> &[f64] {
        &self.boundary_mass
    }

    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.on_boundary[i]
    }

    /// Discrete area |Ω|_h.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Discrete boundary length |∂Ω|_h.
    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// Length of the selected boundary part.
    pub fn boundary_measure(&self, sel: &BoundarySelection) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| sel.contains(e))
            .map(|e| e.length)
            .sum()
    }

    /// Maximum edge length.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn centroid(&self, cell: usize) -> [f64; 2] {
        let [p, q, r] = self.cells[cell].map(|i| self.vertices[i]);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Largest edge among cells with a vertex inside the closed ball B(center, radius).
    pub fn local_h(&self, center: [f64; 2], radius: f64) -> f64 {
        let mut h: f64 = 0.0;
        for cell in &self.cells {
            if cell.iter().any(|&i| dist(self.vertices[i], center) <= radius) {
                for k in 0..3 {
                    h = h.max(dist(self.vertices[cell[k]], self.vertices[cell[(k + 1) % 3]]));
                }
            }
        }
        h
    }

    /// Whether `point` lies on a boundary edge carrying `tag` (within `tol`).
    pub fn point_on_boundary(&self, point: [f64; 2], sel: &BoundarySelection, tol: f64) -> bool {
        self.boundary_edges.iter().filter(|e| sel.contains(e)).any(|e| {
            let (pa, pb) = (self.vertices[e.a], self.vertices[e.b]);
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = (((point[0] - pa[0]) * d[0] + (point[1] - pa[1]) * d[1]) / len2).clamp(0.0, 1.0);
            dist(point, [pa[0] + t * d[0], pa[1] + t * d[1]]) <= tol
        })
    }

    /// Nodal interpolation of a pointwise function.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.vertices.iter().map(|&x| f(x)).collect()
    }
}

/// Edgewise trapezoid rule over the whole boundary for nodal integrand values.
pub fn boundary_quadrature(mesh: &TriMesh, values: &[f64]) -> Result<f64> {
    boundary_quadrature_on(mesh, values, &BoundarySelection::All)
}

/// Edgewise trapezoid rule over the selected boundary part.
///
/// Exact for integrands that are linear along every edge.
pub fn boundary_quadrature_on(
    mesh: &TriMesh,
    values: &[f64],
    sel: &BoundarySelection,
) -> Result<f64> {
    if values.len() != mesh.n_vertices() {
        return Err(Error::MeshMismatch);
    }
    let mut terms = Vec::with_capacity(mesh.boundary_edges.len());
    for e in mesh.boundary_edges.iter().filter(|e| sel.contains(e)) {
        for i in [e.a, e.b] {
            if !values[i].is_finite() {
                return Err(Error::NonFinite {
                    node: i,
                    value: values[i],
                });
            }
        }
        terms.push(0.5 * e.length * (values[e.a] + values[e.b]));
    }
    Ok(pairwise_sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn inscribed_area(m: usize) -> f64 {
        0.5 * m as f64 * (2.0 * PI / m as f64).sin()
    }

    fn inscribed_perimeter(m: usize) -> f64 {
        2.0 * m as f64 * (PI / m as f64).sin()
    }

    #[test]
    fn disk_area_and_perimeter_match_inscribed_polygon() {
        for level in 0..=5 {
            let mesh = build_disk_mesh(level);
            let m = mesh.boundary_edges().len();
            assert!((mesh.area() - inscribed_area(m)).abs() < 1e-12);
            assert!((mesh.perimeter() - inscribed_perimeter(m)).abs() < 1e-12);
        }
        assert!((build_disk_mesh(0).area() - PI).abs() < 0.1 * PI);
        assert!((build_disk_mesh(4).area() - PI).abs() < 1e-3 * PI);
    }

    #[test]
    fn disk_geometry_converges_at_second_order() {
        let errs: Vec<(f64, f64)> = (1..=5)
            .map(|l| {
                let m = build_disk_mesh(l);
                ((m.area() - PI).abs(), (m.perimeter() - 2.0 * PI).abs())
            })
            .collect();
        for w in errs.windows(2) {
            let ra = w[0].0 / w[1].0;
            let rp = w[0].1 / w[1].1;
            assert!((3.5..=4.5).contains(&ra), "area ratio {ra}");
            assert!((3.5..=4.5).contains(&rp), "perimeter ratio {rp}");
        }
    }

    #[test]
    fn disk_mesh_h_halves() {
        let h: Vec<f64> = (0..5).map(|l| build_disk_mesh(l).h_max()).collect();
        for w in h.windows(2) {
            let r = w[0] / w[1];
            assert!((1.8..=2.2).contains(&r), "h ratio {r}");
        }
    }

    #[test]
    fn half_disk_measures() {
        let mesh = build_half_disk_mesh(4);
        let flat = mesh.boundary_measure(&BoundarySelection::tag(TAG_TRACE));
        let arc = mesh.boundary_measure(&BoundarySelection::tag(TAG_ARC));
        assert!((flat - 2.0).abs() < 1e-12);
        let m = mesh
            .boundary_edges()
            .iter()
            .filter(|e| e.tag == TAG_ARC)
            .count();
        let oracle = 2.0 * m as f64 * (PI / (2 * m) as f64).sin();
        assert!((arc - oracle).abs() < 1e-12);
        assert!((arc - PI).abs() < 1e-3);
        assert!((mesh.area() - PI / 2.0).abs() < 1e-3);
        for e in mesh.boundary_edges().iter().filter(|e| e.tag == TAG_TRACE) {
            assert!((e.normal[0]).abs() < 1e-14 && (e.normal[1] + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_normals_point_outward_on_disk() {
        let mesh = build_disk_mesh(3);
        for e in mesh.boundary_edges() {
            let pa = mesh.vertices()[e.a];
            let pb = mesh.vertices()[e.b];
            let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
            let r = mid[0].hypot(mid[1]);
            let dot = (e.normal[0] * mid[0] + e.normal[1] * mid[1]) / r;
            assert!(dot > 0.999);
        }
    }

    #[test]
    fn boundary_quadrature_on_disk() {
        let mesh = build_disk_mesh(4);
        let ones = vec![1.0; mesh.n_vertices()];
        assert!((boundary_quadrature(&mesh, &ones).unwrap() - mesh.perimeter()).abs() < 1e-13);
        let x1 = mesh.interpolate(|x| x[0]);
        assert!(boundary_quadrature(&mesh, &x1).unwrap().abs() < 1e-13);
        // ∫ cos²θ dθ = π, error O(h²)
        let errs: Vec<f64> = (2..=5)
            .map(|l| {
                let m = build_disk_mesh(l);
                let f = m.interpolate(|x| x[0] * x[0]);
                (boundary_quadrature(&m, &f).unwrap() - PI).abs()
            })
            .collect();
        assert!(errs[3] < 1e-3);
        assert!(errs[2] / errs[3] > 3.5);
    }

    #[test]
    fn boundary_quadrature_reports_bad_node() {
        let mesh = build_disk_mesh(1);
        let mut f = vec![0.0; mesh.n_vertices()];
        let node = mesh.boundary_edges()[3].a;
        f[node] = f64::NAN;
        match boundary_quadrature(&mesh, &f) {
            Err(Error::NonFinite { node: k, .. }) => assert_eq!(k, node),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_inverted_cell() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let err = TriMesh::new(v, vec![[0, 2, 1]], vec![], 0).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn rejects_incomplete_boundary() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let b = vec![(0, 1, TAG_WALL.to_string()), (1, 2, TAG_WALL.to_string())];
        assert!(TriMesh::new(v, vec![[0, 1, 2]], b, 0).is_err());
    }

    #[test]
    fn graded_half_disk_resolves_small_radius() {
        let mesh = build_graded_half_disk_mesh(3, 1e-3);
        assert!(mesh.local_h([0.0, 0.0], 1e-3) <= 1e-3 / 4.0);
        assert!((mesh.boundary_measure(&BoundarySelection::tag(TAG_TRACE)) - 2.0).abs() < 1e-12);
        assert!((mesh.area() - PI / 2.0).abs() < 1e-2);
    }
}
