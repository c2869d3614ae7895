//! Truncated-logarithm test functions concentrated at a boundary point and
//! the sharpness experiment built on them.
//!
//! `u_r(x) = 1` for `|x-y| ≤ r`, `ln(1/|x-y|)/ln(1/r)` for `r < |x-y| < 1`,
//! and `0` beyond. On a flat boundary only half of each sphere around `y`
//! lies in the domain, so `‖∇u_r‖_n^n = ½ ω_{n-1} (ln 1/r)^{-(n-1)}`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{critical_exponent, sphere_measure, unit_sphere_measure};
use crate::energy::{dirichlet_norm, MeshFunction};
use crate::error::{Error, Result};
use crate::mesh::{BoundarySelection, TriMesh, TAG_TRACE};
use crate::quadrature::{log_sum_exp, GaussRule};
use crate::trace::{evaluate_trace, regression_slope, ScanReport, ScanRow};

/// Measured values must stay above this fraction of the lower bound.
pub const LOWER_BOUND_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoserParams {
    pub center: [f64; 2],
    pub inner_radius: f64,
    pub n: usize,
    /// Width of a radial moving average applied to the profile; 0 keeps the kinks.
    pub mollification: f64,
}

impl MoserParams {
    pub fn new(center: [f64; 2], inner_radius: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension { n, min: 2 });
        }
        if !(inner_radius > 0.0 && inner_radius < 1.0) {
            return Err(Error::param("r", inner_radius, "inner radius must lie in (0, 1)"));
        }
        Ok(Self {
            center,
            inner_radius,
            n,
            mollification: 0.0,
        })
    }

    pub fn with_mollification(mut self, width: f64) -> Result<Self> {
        if !(width >= 0.0 && width < self.inner_radius) {
            return Err(Error::param("mollification", width, "width must lie in [0, r)"));
        }
        self.mollification = width;
        Ok(self)
    }

    pub fn with_radius(self, inner_radius: f64) -> Result<Self> {
        Ok(Self {
            mollification: self.mollification,
            ..Self::new(self.center, inner_radius, self.n)?
        })
    }

    /// Radial profile as a function of the distance to the center.
    pub fn profile(&self, rho: f64) -> f64 {
        if self.mollification == 0.0 {
            return log_profile(rho, self.inner_radius);
        }
        let half = 0.5 * self.mollification;
        GaussRule::new(8).integrate(rho - half, rho + half, |s| log_profile(s.abs(), self.inner_radius))
            / self.mollification
    }
}

fn log_profile(rho: f64, r: f64) -> f64 {
    if rho <= r {
        1.0
    } else if rho >= 1.0 {
        0.0
    } else {
        rho.ln() / r.ln()
    }
}

fn check_resolution(params: &MoserParams, mesh: &TriMesh) -> Result<()> {
    let r = params.inner_radius;
    let local_h = mesh.local_h(params.center, r);
    let required_h = r / 4.0;
    if local_h > required_h {
        return Err(Error::UnderResolved {
            radius: r,
            local_h,
            required_h,
        });
    }
    Ok(())
}

/// Nodal interpolation of `u_r`; rejects meshes coarser than `r/4` near the center.
pub fn moser_function(params: &MoserParams, mesh: &Arc<TriMesh>) -> Result<MeshFunction> {
    check_resolution(params, mesh)?;
    let y = params.center;
    Ok(MeshFunction::from_fn(mesh.clone(), |x| params.profile((x[0] - y[0]).hypot(x[1] - y[1]))))
}

/// `½ ω_{n-1} (ln 1/r)^{-(n-1)}`.
pub fn moser_norm_predicted(r: f64, n: usize) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::param("r", r, "inner radius must lie in (0, 1)"));
    }
    Ok(0.5 * sphere_measure(n)? * (1.0 / r).ln().powi(1 - n as i32))
}

/// `‖∇u_r‖_n^n` of the interpolant.
pub fn moser_norm_measured(params: &MoserParams, mesh: &Arc<TriMesh>) -> Result<f64> {
    let u = moser_function(params, mesh)?;
    Ok(dirichlet_norm(&u, params.n as f64)?.powi(params.n as i32))
}

/// `(u_r - mean(u_r)) / ‖∇u_r‖_n` for each radius, in input order.
pub fn normalized_test_sequence(r_values: &[f64], mesh: &Arc<TriMesh>, base: &MoserParams) -> Result<Vec<MeshFunction>> {
    r_values
        .par_iter()
        .map(|&r| normalized_member(&base.with_radius(r)?, mesh))
        .collect()
}

fn normalized_member(params: &MoserParams, mesh: &Arc<TriMesh>) -> Result<MeshFunction> {
    let u = moser_function(params, mesh)?;
    let norm = dirichlet_norm(&u, params.n as f64)?;
    let mean = u.mean();
    Ok(u.map(|v| (v - mean) / norm))
}

/// Lower-bound column `r^{n-1} (1/r)^{α (ω_{n-1}/2)^{-1/(n-1)}}`.
pub fn sharpness_lower_bound(alpha: f64, r: f64, n: usize) -> Result<f64> {
    let nm1 = n as f64 - 1.0;
    let rate = alpha * (sphere_measure(n)? / 2.0).powf(-1.0 / nm1);
    Ok((nm1 * r.ln() - rate * r.ln()).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessReport {
    pub scan: ScanReport,
    /// `α (ω_{n-1}/2)^{-1/(n-1)} - (n-1)`.
    pub predicted_exponent: f64,
    /// Every measured value is at least `LOWER_BOUND_FRACTION` × its lower bound.
    pub dominates_lower_bound: bool,
}

fn finish_sharpness(alpha: f64, n: usize, baseline: f64, mut rows: Vec<ScanRow>) -> Result<SharpnessReport> {
    for row in &mut rows {
        row.lower_bound = Some(sharpness_lower_bound(alpha, row.param, n)?);
    }
    let dominates = rows
        .iter()
        .all(|row| row.log_trace_integral >= (LOWER_BOUND_FRACTION * row.lower_bound.unwrap()).ln());
    let xs: Vec<f64> = rows.iter().map(|row| -row.param.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|row| row.log_trace_integral).collect();
    let mut scan = ScanReport::from_rows(alpha, n, baseline, rows);
    scan.slope = regression_slope(&xs, &ys);
    let nm1 = n as f64 - 1.0;
    Ok(SharpnessReport {
        scan,
        predicted_exponent: alpha * (sphere_measure(n)? / 2.0).powf(-1.0 / nm1) - nm1,
        dominates_lower_bound: dominates,
    })
}

fn sorted_descending(r_values: &[f64]) -> Result<Vec<f64>> {
    if r_values.is_empty() {
        return Err(Error::param("r", 0.0, "need at least one radius"));
    }
    let mut rs = r_values.to_vec();
    rs.sort_by(|a, b| b.total_cmp(a));
    Ok(rs)
}

/// Trace integrals of the normalized sequence over the `trace`-tagged
/// boundary, rows ordered by `r` descending. The center must lie on that
/// boundary.
pub fn sharpness_experiment(
    alpha: f64,
    r_values: &[f64],
    mesh: &Arc<TriMesh>,
    base: &MoserParams,
) -> Result<SharpnessReport> {
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", alpha, "alpha must be positive"));
    }
    let sel = BoundarySelection::tag(TAG_TRACE);
    if !mesh.point_on_boundary(base.center, &sel, 1e-12) {
        return Err(Error::param("center", base.center[0], "center must lie on the trace boundary"));
    }
    let n = base.n;
    let q = critical_exponent(n);
    let rs = sorted_descending(r_values)?;
    let rows = rs
        .par_iter()
        .map(|&r| {
            let v = normalized_member(&base.with_radius(r)?, mesh)?;
            let t = evaluate_trace(&v, alpha, n, &sel)?;
            let exponent_max = alpha * v.sup_norm().powf(q);
            Ok(ScanRow {
                param: r,
                trace_integral: t.boundary_value,
                log_trace_integral: t.log_boundary_value,
                grad_norm: dirichlet_norm(&v, n as f64)?,
                mean: v.mean(),
                exponent_max,
                lower_bound: None,
                holder_term: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish_sharpness(alpha, n, mesh.boundary_measure(&sel), rows)
}

/// The same experiment on the exact half ball `{x ∈ ℝ^n : |x| < 1, x_n > 0}`
/// with the center at the origin, integrated in the radial variable.
pub fn sharpness_experiment_radial(alpha: f64, r_values: &[f64], n: usize) -> Result<SharpnessReport> {
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", alpha, "alpha must be positive"));
    }
    let model = HalfBallModel::new(n)?;
    let rs = sorted_descending(r_values)?;
    let rows = rs
        .par_iter()
        .map(|&r| model.row(alpha, r))
        .collect::<Result<Vec<_>>>()?;
    finish_sharpness(alpha, n, model.flat_measure(), rows)
}

/// Radial integrals over the unit half ball in ℝ^n and its flat face.
#[derive(Debug, Clone)]
pub struct HalfBallModel {
    n: usize,
    /// Measure of the unit sphere S^{n-1}.
    omega: f64,
    /// Measure of the unit sphere S^{n-2} (2 for n = 2).
    omega_flat: f64,
    rule: GaussRule,
}

/// Subintervals per decade of the radial grid.
const PANELS_PER_DECADE: usize = 16;

impl HalfBallModel {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            omega: sphere_measure(n)?,
            omega_flat: unit_sphere_measure(n - 1),
            rule: GaussRule::new(10),
        })
    }

    pub fn volume(&self) -> f64 {
        self.omega / (2.0 * self.n as f64)
    }

    pub fn flat_measure(&self) -> f64 {
        self.omega_flat / (self.n as f64 - 1.0)
    }

    /// Quadrature nodes and weights on `[lo, 1]` using geometric panels.
    fn panels(&self, lo: f64) -> Vec<(f64, f64)> {
        let decades = (1.0 / lo).log10();
        let k = ((decades * PANELS_PER_DECADE as f64).ceil() as usize).max(1);
        let ratio = lo.powf(1.0 / k as f64);
        let mut out = Vec::with_capacity(k * 10);
        let mut b = 1.0;
        for j in 1..=k {
            let a = if j == k { lo } else { ratio.powi(j as i32) };
            out.extend(self.rule.points(a, b));
            b = a;
        }
        out
    }

    /// `(ω_{n-1}/2) ∫_0^1 |u'|^n ρ^{n-1} dρ` for the truncated logarithm.
    pub fn dirichlet_energy(&self, r: f64) -> f64 {
        let nf = self.n as f64;
        let l = (1.0 / r).ln();
        let s: f64 = self
            .panels(r)
            .iter()
            .map(|&(rho, w)| w * (1.0 / (rho * l)).powf(nf) * rho.powf(nf - 1.0))
            .sum();
        0.5 * self.omega * s
    }

    /// Mean of the truncated logarithm over the half ball.
    pub fn mean(&self, r: f64) -> f64 {
        let nf = self.n as f64;
        let inner = r.powf(nf) / nf;
        let outer: f64 = self
            .panels(r)
            .iter()
            .map(|&(rho, w)| w * log_profile(rho, r) * rho.powf(nf - 1.0))
            .sum();
        0.5 * self.omega * (inner + outer) / self.volume()
    }

    /// Log of `ω_{n-2} ∫_0^1 exp(α|v(ρ)|^{n/(n-1)}) ρ^{n-2} dρ` for the normalized profile.
    fn log_flat_integral(&self, alpha: f64, r: f64, mean: f64, norm: f64) -> (f64, f64) {
        let nf = self.n as f64;
        let q = critical_exponent(self.n);
        let expo = |u: f64| alpha * ((u - mean) / norm).abs().powf(q);
        let plateau = expo(1.0);
        let inner = self.omega_flat.ln() + (nf - 1.0) * r.ln() - (nf - 1.0).ln() + plateau;
        let outer = self
            .panels(r)
            .into_iter()
            .map(|(rho, w)| self.omega_flat.ln() + w.ln() + (nf - 2.0) * rho.ln() + expo(log_profile(rho, r)));
        (log_sum_exp(std::iter::once(inner).chain(outer)), plateau.max(expo(0.0)))
    }

    fn row(&self, alpha: f64, r: f64) -> Result<ScanRow> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::param("r", r, "inner radius must lie in (0, 1)"));
        }
        let energy = self.dirichlet_energy(r);
        let norm = energy.powf(1.0 / self.n as f64);
        let mean = self.mean(r);
        let (log_value, exponent_max) = self.log_flat_integral(alpha, r, mean, norm);
        Ok(ScanRow {
            param: r,
            trace_integral: log_value.exp(),
            log_trace_integral: log_value,
            grad_norm: 1.0,
            mean: 0.0,
            exponent_max,
            lower_bound: None,
            holder_term: None,
        })
    }
}
