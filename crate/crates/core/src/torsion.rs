//! The trace function: the mean-zero minimizer of the p-energy.
//!
//! Its first variation gives, for every test function φ,
//! `∫ |∇w|^{p-2}∇w·∇φ - ∫_{∂Ω} φ = -(|∂Ω|/|Ω|) ∫ φ`, i.e. the p-Laplacian
//! of `w` equals `|∂Ω|/|Ω|` inside with unit outward flux on the boundary.
//!
//! The minimizer is found by projected gradient descent with Armijo
//! backtracking. The descent direction is the gradient measured in a metric:
//! either the lumped mass (plain diagonal scaling) or the stiffness matrix
//! weighted by the current `p|∇u|^{p-2}` (a Sobolev gradient), which keeps the
//! iteration count independent of the mesh size.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::energy::{cell_fluxes, energy, energy_gradient, flux_action, mean_zero_project, EnergyConfig, MeshFunction};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::quadrature::pairwise_sum;
use crate::radial::{RadialGrid, RadialProfile};
use crate::sparse::{pcg, StiffnessPattern};

pub const ARMIJO_C1: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const MAX_HALVINGS: usize = 80;
/// Relative floor on |∇u| when forming the weighted metric.
const METRIC_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescentMetric {
    LumpedMass,
    WeightedStiffness,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Stop when the projected gradient norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub metric: DescentMetric,
    /// Starting iterate (projected to mean zero); zero when absent.
    pub start: Option<MeshFunction>,
}

impl SolveOptions {
    /// Default tolerance `1e-8 · |∂Ω|_h`.
    pub fn for_mesh(mesh: &TriMesh) -> Self {
        Self::with_tol(1e-8 * mesh.perimeter())
    }

    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            max_iter: DEFAULT_MAX_ITER,
            metric: DescentMetric::WeightedStiffness,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub step: f64,
    pub energy: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub w: MeshFunction,
    pub p: f64,
    pub iterations: usize,
    /// Total conjugate-gradient iterations spent applying the metric.
    pub inner_iterations: usize,
    pub projected_gradient_norm: f64,
    pub tol: f64,
    pub energy: f64,
    /// Largest weak-form defect over interior hat functions.
    pub interior_residual: f64,
    /// Largest relative deviation of the weak nodal flux from `∫_{∂Ω} φ_i`.
    pub boundary_flux_deviation: f64,
    /// Largest `|σ_T·n - 1|` over boundary edges (cellwise flux; diagnostic).
    pub pointwise_flux_deviation: f64,
    /// Σ over boundary nodes of the weak flux; equals |∂Ω|_h at the minimizer.
    pub boundary_flux: f64,
    pub boundary_measure: f64,
    pub energy_history: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("iteration cap reached with projected gradient norm {:.3e}", .0.projected_gradient_norm)]
    IterationCap(Box<SolveReport>),
    #[error("line search failed at iteration {}", .0.iterations)]
    LineSearch(Box<SolveReport>),
    #[error("non-finite energy at iteration {iteration}")]
    NonFiniteEnergy {
        iteration: usize,
        trace: Vec<StepRecord>,
    },
    #[error(transparent)]
    Invalid(#[from] Error),
}

/// `r = g - m (Σ g)/(Σ m)`: the gradient with its Lagrange-multiplier part removed.
fn project_dual(g: &[f64], mass: &[f64]) -> Vec<f64> {
    let c = pairwise_sum(g) / pairwise_sum(mass);
    g.iter().zip(mass).map(|(g, m)| g - c * m).collect()
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve with default options and the given tolerance.
pub fn solve_trace_function(
    mesh: &Arc<TriMesh>,
    cfg: &EnergyConfig,
    tol: f64,
) -> std::result::Result<SolveReport, SolveError> {
    solve_with(mesh, cfg, &SolveOptions::with_tol(tol))
}

pub fn solve_with(
    mesh: &Arc<TriMesh>,
    cfg: &EnergyConfig,
    opts: &SolveOptions,
) -> std::result::Result<SolveReport, SolveError> {
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", opts.tol, "tolerance must be positive").into());
    }
    let mass = mesh.lumped_mass();
    let mut u = match &opts.start {
        Some(s) if !Arc::ptr_eq(s.mesh(), mesh) => return Err(Error::MeshMismatch.into()),
        Some(s) => mean_zero_project(s),
        None => MeshFunction::zeros(mesh.clone()),
    };
    let pattern = match opts.metric {
        DescentMetric::WeightedStiffness => Some(StiffnessPattern::new(mesh)),
        DescentMetric::LumpedMass => None,
    };

    let mut e = energy(&u, cfg);
    let mut history = vec![e];
    let mut trace: Vec<StepRecord> = Vec::new();
    let mut g = energy_gradient(&u, cfg).into_values();
    let mut r = project_dual(&g, mass);
    let mut rnorm = euclid(&r);
    let mut z_guess = vec![0.0; mesh.n_vertices()];
    let mut t_prev: f64 = 1.0;
    let mut iterations = 0;
    let mut inner_iterations = 0;

    while rnorm > opts.tol {
        if iterations >= opts.max_iter {
            let rep = finish(u, cfg, (iterations, inner_iterations), rnorm, opts.tol, history);
            return Err(SolveError::IterationCap(Box::new(rep)));
        }
        let mut d: Vec<f64> = match &pattern {
            Some(pat) => {
                let weights = metric_weights(&u, cfg);
                let k = pat.assemble(&weights);
                let rel = (0.1 * opts.tol / rnorm).clamp(1e-12, 1e-3);
                let out = pcg(&k, &r, &mut z_guess, rel, 20 * mesh.n_vertices() + 100);
                inner_iterations += out.iterations;
                if out.relative_residual.is_finite() {
                    z_guess.iter().map(|z| -z).collect()
                } else {
                    z_guess.iter_mut().for_each(|z| *z = 0.0);
                    vec![0.0; r.len()]
                }
            }
            None => r.iter().zip(mass).map(|(r, m)| -r / m).collect(),
        };
        remove_mean(&mut d, mass);
        let mut slope: f64 = g.iter().zip(&d).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            // metric solve broke down: plain lumped-mass gradient step
            d = r.iter().zip(mass).map(|(r, m)| -r / m).collect();
            remove_mean(&mut d, mass);
            slope = g.iter().zip(&d).map(|(g, d)| g * d).sum();
        }

        let mut t = match opts.metric {
            DescentMetric::WeightedStiffness => 1.0,
            DescentMetric::LumpedMass => (2.0 * t_prev).min(1.0),
        };
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = MeshFunction::from_parts_unchecked(
                mesh.clone(),
                u.values().iter().zip(&d).map(|(u, d)| u + t * d).collect(),
            );
            let et = energy(&trial, cfg);
            if !et.is_finite() {
                trace.push(StepRecord {
                    iteration: iterations,
                    step: t,
                    energy: et,
                    gradient_norm: rnorm,
                });
                return Err(SolveError::NonFiniteEnergy {
                    iteration: iterations,
                    trace,
                });
            }
            if et <= e + ARMIJO_C1 * t * slope {
                accepted = Some((trial, et));
                break;
            }
            // Convexity along the line gives E(t) - E(0) <= t E'(t), so a
            // small enough directional derivative certifies the Armijo
            // condition even when the energy difference is lost to rounding.
            let gt = energy_gradient(&trial, cfg);
            let dt: f64 = gt.values().iter().zip(&d).map(|(g, d)| g * d).sum();
            if dt <= ARMIJO_C1 * slope {
                accepted = Some((trial, et));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, et)) = accepted else {
            let rep = finish(u, cfg, (iterations, inner_iterations), rnorm, opts.tol, history);
            return Err(SolveError::LineSearch(Box::new(rep)));
        };
        u = mean_zero_project(&trial);
        e = et;
        t_prev = t;
        iterations += 1;
        g = energy_gradient(&u, cfg).into_values();
        r = project_dual(&g, mass);
        rnorm = euclid(&r);
        history.push(e);
        trace.push(StepRecord {
            iteration: iterations,
            step: t,
            energy: e,
            gradient_norm: rnorm,
        });
        if trace.len() > 32 {
            trace.remove(0);
        }
    }
    Ok(finish(u, cfg, (iterations, inner_iterations), rnorm, opts.tol, history))
}

fn remove_mean(d: &mut [f64], mass: &[f64]) {
    let c = pairwise_sum(&d.iter().zip(mass).map(|(d, m)| d * m).collect::<Vec<_>>()) / pairwise_sum(mass);
    d.iter_mut().for_each(|v| *v -= c);
}

fn metric_weights(u: &MeshFunction, cfg: &EnergyConfig) -> Vec<f64> {
    let grads: Vec<f64> = (0..u.mesh().n_cells())
        .map(|c| {
            let g = u.cell_gradient(c);
            g[0].hypot(g[1])
        })
        .collect();
    let max = grads.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 || cfg.p == 2.0 {
        return vec![cfg.p; grads.len()];
    }
    let floor = METRIC_FLOOR * max;
    grads.iter().map(|&s| cfg.p * s.max(floor).powf(cfg.p - 2.0)).collect()
}

fn finish(
    w: MeshFunction,
    cfg: &EnergyConfig,
    (iterations, inner_iterations): (usize, usize),
    rnorm: f64,
    tol: f64,
    energy_history: Vec<f64>,
) -> SolveReport {
    let mesh = w.mesh().clone();
    let defects = nodal_defects(&w, cfg);
    let bm = mesh.boundary_mass();
    let mut interior_residual: f64 = 0.0;
    let mut boundary_flux_deviation: f64 = 0.0;
    for (i, d) in defects.iter().enumerate() {
        if mesh.is_boundary_node(i) {
            boundary_flux_deviation = boundary_flux_deviation.max((d / bm[i]).abs());
        } else {
            interior_residual = interior_residual.max(d.abs());
        }
    }
    SolveReport {
        p: cfg.p,
        iterations,
        inner_iterations,
        projected_gradient_norm: rnorm,
        tol,
        energy: energy(&w, cfg),
        interior_residual,
        boundary_flux_deviation,
        pointwise_flux_deviation: pointwise_flux_deviation(&w, cfg),
        boundary_flux: weak_boundary_flux(&w, cfg),
        boundary_measure: mesh.perimeter(),
        energy_history,
        w,
    }
}

/// Per-node defect `∫ σ·∇φ_i - ∫_{∂Ω} φ_i + (|∂Ω|/|Ω|) ∫ φ_i` with σ = |∇w|^{p-2}∇w.
pub fn nodal_defects(w: &MeshFunction, cfg: &EnergyConfig) -> Vec<f64> {
    let mesh = w.mesh();
    let lambda = mesh.perimeter() / mesh.area();
    let action = flux_action(mesh, &cell_fluxes(w, cfg));
    action
        .iter()
        .zip(mesh.boundary_mass())
        .zip(mesh.lumped_mass())
        .map(|((a, b), m)| a - b + lambda * m)
        .collect()
}

/// Largest weak-form defect over all hat functions (each with sup norm 1).
///
/// Zero exactly at the discrete minimizer; certifies both the interior
/// equation and the unit boundary flux in weak form.
pub fn variational_residual(w: &MeshFunction, cfg: &EnergyConfig) -> f64 {
    nodal_defects(w, cfg).iter().fold(0.0, |m, d| m.max(d.abs()))
}

/// Weak boundary flux `Σ_{i∈∂Ω} (∫ σ·∇φ_i + λ ∫ φ_i)`, i.e. ∫_{∂Ω} σ·n by Green's formula.
pub fn weak_boundary_flux(w: &MeshFunction, cfg: &EnergyConfig) -> f64 {
    let mesh = w.mesh();
    let lambda = mesh.perimeter() / mesh.area();
    let action = flux_action(mesh, &cell_fluxes(w, cfg));
    let terms: Vec<f64> = (0..mesh.n_vertices())
        .filter(|&i| mesh.is_boundary_node(i))
        .map(|i| action[i] + lambda * mesh.lumped_mass()[i])
        .collect();
    pairwise_sum(&terms)
}

/// Edgewise `∫_{∂Ω} σ_T·n` using the owning cell's constant flux.
pub fn cellwise_boundary_flux(w: &MeshFunction, cfg: &EnergyConfig) -> f64 {
    let fluxes = cell_fluxes(w, cfg);
    let terms: Vec<f64> = w
        .mesh()
        .boundary_edges()
        .iter()
        .map(|e| {
            let s = fluxes[e.cell];
            e.length * (s[0] * e.normal[0] + s[1] * e.normal[1])
        })
        .collect();
    pairwise_sum(&terms)
}

fn pointwise_flux_deviation(w: &MeshFunction, cfg: &EnergyConfig) -> f64 {
    let fluxes = cell_fluxes(w, cfg);
    w.mesh().boundary_edges().iter().fold(0.0, |m, e| {
        let s = fluxes[e.cell];
        m.max((s[0] * e.normal[0] + s[1] * e.normal[1] - 1.0).abs())
    })
}

/// Closed-form trace function on the ball of radius `radius` in ℝ^n:
/// `w'(r) = (r/R)^{1/(p-1)}`, shifted to mean zero over the ball.
pub fn radial_trace_function(n: usize, p: f64, radius: f64, grid: &RadialGrid) -> Result<RadialProfile> {
    if !(p > 1.0 && p < n as f64) {
        return Err(Error::param("p", p, "exponent must satisfy 1 < p < n"));
    }
    if !(radius > 0.0) {
        return Err(Error::param("radius", radius, "radius must be positive"));
    }
    let q = 1.0 / (p - 1.0);
    let nf = n as f64;
    let shift = radius * nf / ((q + 1.0) * (nf + q + 1.0));
    let derivatives = grid.nodes().iter().map(|&r| (r / radius).powf(q)).collect();
    let values = grid
        .nodes()
        .iter()
        .map(|&r| radius * (r / radius).powf(q + 1.0) / (q + 1.0) - shift)
        .collect();
    Ok(RadialProfile {
        grid: grid.clone(),
        values,
        derivatives,
    })
}

/// Relative L² distance between the cellwise |∇w_h| and `(r/R)^{1/(p-1)}`
/// evaluated at cell centroids.
pub fn radial_gradient_error(w: &MeshFunction, p: f64, radius: f64) -> f64 {
    let mesh = w.mesh();
    let q = 1.0 / (p - 1.0);
    let mut num = Vec::with_capacity(mesh.n_cells());
    let mut den = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let a = mesh.cell_areas()[c];
        let x = mesh.centroid(c);
        let exact = (x[0].hypot(x[1]) / radius).powf(q);
        let g = w.cell_gradient(c);
        num.push(a * (g[0].hypot(g[1]) - exact).powi(2));
        den.push(a * exact * exact);
    }
    (pairwise_sum(&num) / pairwise_sum(&den)).sqrt()
}
