//! The discrete p-energy `E(u) = ∫_Ω |∇u|^p - p ∫_{∂Ω} u` on P1 functions.
//!
//! Gradients are constant per cell, so the volume term is exact; the
//! boundary term uses the edgewise trapezoid rule, which is exact for P1
//! traces.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{boundary_quadrature, TriMesh};
use crate::quadrature::pairwise_sum;

pub const DEFAULT_DELTA: f64 = 1e-12;

/// Nodal values of a piecewise-linear function on a mesh.
#[derive(Clone)]
pub struct MeshFunction {
    mesh: Arc<TriMesh>,
    values: Vec<f64>,
}

impl std::fmt::Debug for MeshFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeshFunction")
            .field("nodes", &self.values.len())
            .field("sup_norm", &self.sup_norm())
            .finish()
    }
}

impl MeshFunction {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::MeshMismatch);
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { node, value });
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<TriMesh>) -> Self {
        let n = mesh.n_vertices();
        Self {
            mesh,
            values: vec![0.0; n],
        }
    }

    pub fn constant(mesh: Arc<TriMesh>, c: f64) -> Self {
        let n = mesh.n_vertices();
        Self {
            mesh,
            values: vec![c; n],
        }
    }

    pub fn from_fn(mesh: Arc<TriMesh>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = mesh.interpolate(f);
        Self { mesh, values }
    }

    pub(crate) fn from_parts_unchecked(mesh: Arc<TriMesh>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), mesh.n_vertices());
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_mesh(&self, other: &MeshFunction) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    pub fn cell_gradient(&self, cell: usize) -> [f64; 2] {
        let ids = self.mesh.cells()[cell];
        let g = &self.mesh.basis_gradients()[cell];
        // Σ∇φ_k = 0, so differences keep constants exactly gradient-free
        let u0 = self.values[ids[0]];
        let (d1, d2) = (self.values[ids[1]] - u0, self.values[ids[2]] - u0);
        [d1 * g[1][0] + d2 * g[2][0], d1 * g[1][1] + d2 * g[2][1]]
    }

    /// ∫_Ω u (exact for P1).
    pub fn integral(&self) -> f64 {
        let m = self.mesh.lumped_mass();
        pairwise_sum(&self.values.iter().zip(m).map(|(u, m)| u * m).collect::<Vec<_>>())
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.mesh.area()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self::from_parts_unchecked(self.mesh.clone(), self.values.iter().map(|v| t * v).collect())
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &MeshFunction) -> Result<Self> {
        if !self.same_mesh(other) {
            return Err(Error::MeshMismatch);
        }
        Ok(Self::from_parts_unchecked(
            self.mesh.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + t * b)
                .collect(),
        ))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts_unchecked(self.mesh.clone(), self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Exponent and gradient regularization for the p-energy.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyConfig {
    pub p: f64,
    pub delta: f64,
}

impl EnergyConfig {
    pub fn new(p: f64) -> Result<Self> {
        Self::with_delta(p, DEFAULT_DELTA)
    }

    pub fn with_delta(p: f64, delta: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::param("p", p, "exponent must satisfy p > 1"));
        }
        if !(delta >= 0.0 && delta <= 1e-6) {
            return Err(Error::param("delta", delta, "regularization must lie in [0, 1e-6]"));
        }
        Ok(Self { p, delta })
    }

    /// Scalar factor of the flux `|∇u|^{p-2} ∇u` at gradient magnitude `s`.
    ///
    /// Below `delta` (only for p < 2) the factor becomes
    /// `(s² + delta²)^{(p-2)/2}`.
    pub fn flux_factor(&self, s: f64) -> f64 {
        if self.p < 2.0 && s < self.delta {
            (s * s + self.delta * self.delta).powf(0.5 * (self.p - 2.0))
        } else if s == 0.0 {
            0.0
        } else {
            s.powf(self.p - 2.0)
        }
    }
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// `∫_Ω |∇u|^p` as a pairwise sum over cells.
pub fn gradient_energy(u: &MeshFunction, p: f64) -> f64 {
    let areas = u.mesh.cell_areas();
    let terms: Vec<f64> = (0..u.mesh.n_cells())
        .map(|c| {
            let s = norm2(u.cell_gradient(c));
            if s == 0.0 {
                0.0
            } else {
                areas[c] * s.powf(p)
            }
        })
        .collect();
    pairwise_sum(&terms)
}

/// Discrete energy; unregularized.
pub fn energy(u: &MeshFunction, cfg: &EnergyConfig) -> f64 {
    let boundary = boundary_quadrature(&u.mesh, &u.values)
        .expect("MeshFunction values are finite by construction");
    gradient_energy(u, cfg.p) - cfg.p * boundary
}

/// Per-cell flux `|∇u|^{p-2} ∇u` (regularized as in [`EnergyConfig::flux_factor`]).
pub fn cell_fluxes(u: &MeshFunction, cfg: &EnergyConfig) -> Vec<[f64; 2]> {
    (0..u.mesh.n_cells())
        .map(|c| {
            let g = u.cell_gradient(c);
            let f = cfg.flux_factor(norm2(g));
            [f * g[0], f * g[1]]
        })
        .collect()
}

/// Nodal vector `A_i = ∫_Ω σ · ∇φ_i` for per-cell vectors σ.
pub(crate) fn flux_action(mesh: &TriMesh, fluxes: &[[f64; 2]]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_vertices()];
    for (c, (ids, grads)) in mesh.cells().iter().zip(mesh.basis_gradients()).enumerate() {
        let area = mesh.cell_areas()[c];
        let s = fluxes[c];
        for k in 0..3 {
            out[ids[k]] += area * (s[0] * grads[k][0] + s[1] * grads[k][1]);
        }
    }
    out
}

/// Partial derivatives of [`energy`] with respect to the nodal values.
pub fn energy_gradient(u: &MeshFunction, cfg: &EnergyConfig) -> MeshFunction {
    let action = flux_action(&u.mesh, &cell_fluxes(u, cfg));
    let bm = u.mesh.boundary_mass();
    let values = action
        .iter()
        .zip(bm)
        .map(|(a, b)| cfg.p * (a - b))
        .collect();
    MeshFunction::from_parts_unchecked(u.mesh.clone(), values)
}

/// Removes the area mean: `u - (∫_Ω u)/|Ω|`.
pub fn mean_zero_project(u: &MeshFunction) -> MeshFunction {
    let mut out = u.clone();
    // second pass removes the rounding left by the first
    for _ in 0..2 {
        let c = out.mean();
        out.values.iter_mut().for_each(|v| *v -= c);
    }
    out
}

/// `(Σ_T |T| |∇u|^q)^{1/q}`.
pub fn dirichlet_norm(u: &MeshFunction, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::param("q", q, "norm exponent must be >= 1"));
    }
    Ok(gradient_energy(u, q).powf(1.0 / q))
}
