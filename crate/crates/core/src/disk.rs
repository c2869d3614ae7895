//! Unit-disk objects: Beurling's extremal functions, level sets of boundary
//! values, the Poisson kernel and the exponential integral
//! `∫ exp(α|f(e^{iθ}) - f(z)|²) P_z(θ) dθ/2π`.
//!
//! Integrals over the circle use the probability measure dθ/2π, so the
//! integral of the zero function is 1. The dθ/π normalization differs by a
//! factor of 2.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{log_sum_exp, pairwise_sum, GaussRule};
use crate::trace::{Verdict, LOG_SPACE_THRESHOLD};

pub const MIN_SAMPLES: usize = 16;
/// Closest admissible distance from a disk point to the circle.
pub const DISK_MARGIN: f64 = 1e-9;
/// Growth over the first value that a diverging run along `a → 1` must exceed.
pub const CM_GROWTH_FACTOR: f64 = 10.0;
/// Largest max/min ratio for a run that counts as bounded.
pub const CM_BOUNDED_FACTOR: f64 = 1.5;
/// Absolute accuracy demanded of the series for the Dirichlet norm.
pub const SERIES_TOL: f64 = 1e-12;

/// Samples `f(e^{iθ_j})`, `θ_j = 2πj/m`, with `m ≥ 16` a power of two.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFunction1D {
    values: Vec<Complex64>,
}

impl BoundaryFunction1D {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        let m = values.len();
        if m < MIN_SAMPLES || !m.is_power_of_two() {
            return Err(Error::param("m", m as f64, "sample count must be a power of two >= 16"));
        }
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { node: j, value: v.norm() });
        }
        Ok(Self { values })
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new((0..m).map(|j| f(theta(j, m))).collect())
    }

    pub fn zeros(m: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); m])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        let m = self.len();
        (0..m).map(move |j| theta(j, m))
    }

    pub fn real_part(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| Complex64::new(v.re, 0.0)).collect(),
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * t).collect(),
        }
    }

    /// Cyclic shift by `k` samples: `g(θ_j) = f(θ_{j+k})`.
    pub fn rotated(&self, k: usize) -> Self {
        let mut values = self.values.clone();
        values.rotate_left(k % self.len());
        Self { values }
    }
}

fn theta(j: usize, m: usize) -> f64 {
    2.0 * PI * j as f64 / m as f64
}

/// A point `z` with `|z| ≤ 1 - DISK_MARGIN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskPoint(Complex64);

impl DiskPoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        let z = Complex64::new(re, im);
        if !(z.norm() <= 1.0 - DISK_MARGIN) {
            return Err(Error::param("z", z.norm(), "point must lie inside the unit disk"));
        }
        Ok(Self(z))
    }

    pub fn origin() -> Self {
        Self(Complex64::new(0.0, 0.0))
    }

    pub fn z(&self) -> Complex64 {
        self.0
    }
}

fn check_a(a: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::param("a", a, "parameter must lie in (0, 1)"));
    }
    Ok(())
}

/// `B_a(e^{iθ}) = log(1/(1 - a e^{iθ})) / √(log(1/(1-a²)))`, principal branch.
pub fn beurling_boundary(a: f64, m: usize) -> Result<BoundaryFunction1D> {
    check_a(a)?;
    let scale = (1.0 / (1.0 - a * a)).ln().sqrt();
    BoundaryFunction1D::from_fn(m, |t| {
        let w = Complex64::new(1.0, 0.0) - a * Complex64::cis(t);
        -w.ln() / scale
    })
}

/// Smallest power of two, at least 2^16, whose grid spacing is below `(1-a)/8`.
pub fn resolving_samples(a: f64) -> usize {
    let need = (16.0 * PI / (1.0 - a)).ceil() as usize;
    need.max(1 << 16).next_power_of_two()
}

fn series_tail(a: f64, terms: usize) -> f64 {
    let k = terms as f64 + 1.0;
    PI * a.powf(2.0 * k) / (k * (1.0 - a * a)) / (1.0 / (1.0 - a * a)).ln()
}

/// Terms needed for the series to be within `SERIES_TOL` of its limit.
pub fn required_terms(a: f64) -> Result<usize> {
    check_a(a)?;
    let mut k = 1usize;
    while series_tail(a, k) > SERIES_TOL {
        k *= 2;
    }
    let (mut lo, mut hi) = (k / 2, k);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if series_tail(a, mid) > SERIES_TOL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `∫∫_{|z|<1} |B_a'|² = π Σ_{k≥1} a^{2k}/k / log(1/(1-a²))` by the truncated series.
pub fn beurling_dirichlet_norm_sq(a: f64, terms: usize) -> Result<f64> {
    let needed = required_terms(a)?;
    if terms < needed {
        return Err(Error::InsufficientTerms { needed, given: terms });
    }
    let a2 = a * a;
    let mut power = 1.0;
    let parts: Vec<f64> = (1..=terms)
        .map(|k| {
            power *= a2;
            power / k as f64
        })
        .collect();
    Ok(PI * pairwise_sum(&parts) / (1.0 / (1.0 - a2)).ln())
}

/// Tensor-grid quadrature of `|B_a'|²` over the disk: `angular` trapezoid
/// points in θ, Gauss panels in ρ graded geometrically toward the circle.
pub fn beurling_dirichlet_norm_sq_quadrature(a: f64, angular: usize, panels: usize) -> Result<f64> {
    check_a(a)?;
    if angular < MIN_SAMPLES || panels == 0 {
        return Err(Error::param("angular", angular as f64, "need at least 16 angles and one panel"));
    }
    let scale = (1.0 / (1.0 - a * a)).ln();
    let rule = GaussRule::new(12);
    // panels in t = 1 - ρ on [ (1-a)/100, 1 ] geometric plus a last one at the circle
    let t_min = (1.0 - a) / 100.0;
    let ratio = t_min.powf(1.0 / panels as f64);
    let mut radial = Vec::new();
    let mut hi = 1.0;
    for k in 1..=panels {
        let lo = ratio.powi(k as i32);
        radial.extend(rule.points(lo, hi));
        hi = lo;
    }
    radial.extend(rule.points(0.0, hi));
    let total: Vec<f64> = radial
        .par_iter()
        .map(|&(t, w)| {
            let rho = 1.0 - t;
            let ring: Vec<f64> = (0..angular)
                .map(|j| {
                    let z = rho * Complex64::cis(theta(j, angular));
                    let d = Complex64::new(1.0, 0.0) - a * z;
                    a * a / d.norm_sqr()
                })
                .collect();
            w * rho * 2.0 * PI * pairwise_sum(&ring) / angular as f64
        })
        .collect();
    Ok(pairwise_sum(&total) / scale)
}

/// `(2π/m) · #{j : |f(θ_j)| ≥ s}`.
pub fn level_set_measure(f: &BoundaryFunction1D, s: f64) -> f64 {
    2.0 * PI * level_set_fraction(f, s)
}

/// Level-set measure under dθ/2π, i.e. the fraction of samples with `|f| ≥ s`.
pub fn level_set_fraction(f: &BoundaryFunction1D, s: f64) -> f64 {
    let count = f.values().iter().filter(|v| v.norm() >= s).count();
    count as f64 / f.len() as f64
}

/// `(1 - |z|²)/|e^{iθ} - z|²`, with mean 1 under dθ/2π.
pub fn poisson_kernel(z: DiskPoint, theta: f64) -> f64 {
    let z = z.z();
    (1.0 - z.norm_sqr()) / (Complex64::cis(theta) - z).norm_sqr()
}

/// Harmonic extension of the samples to `z` by the discrete Poisson integral.
pub fn poisson_extension(f: &BoundaryFunction1D, z: DiskPoint) -> Complex64 {
    let m = f.len() as f64;
    let re: Vec<f64> = f.values().iter().zip(f.thetas()).map(|(v, t)| v.re * poisson_kernel(z, t)).collect();
    let im: Vec<f64> = f.values().iter().zip(f.thetas()).map(|(v, t)| v.im * poisson_kernel(z, t)).collect();
    Complex64::new(pairwise_sum(&re) / m, pairwise_sum(&im) / m)
}

/// Log of `(1/m) Σ_j exp(α|f_j - f(z)|²) P_z(θ_j)`; stays finite past the double range.
pub fn cm_integral_log(f: &BoundaryFunction1D, alpha: f64, z: DiskPoint) -> Result<f64> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", alpha, "alpha must be finite and nonnegative"));
    }
    let center = poisson_extension(f, z);
    let m = f.len() as f64;
    let exps: Vec<f64> = f.values().iter().map(|v| alpha * (v - center).norm_sqr()).collect();
    let max = exps.iter().cloned().fold(0.0, f64::max);
    let kernel = f.thetas().map(|t| poisson_kernel(z, t));
    if max <= LOG_SPACE_THRESHOLD {
        let terms: Vec<f64> = exps.iter().zip(kernel).map(|(x, p)| x.exp() * p).collect();
        Ok((pairwise_sum(&terms) / m).ln())
    } else {
        Ok(log_sum_exp(exps.iter().zip(kernel).map(|(x, p)| x + p.ln())) - m.ln())
    }
}

pub fn cm_integral(f: &BoundaryFunction1D, alpha: f64, z: DiskPoint) -> Result<f64> {
    Ok(cm_integral_log(f, alpha, z)?.exp())
}

/// Verdict for integrals along an increasing `a` grid: blow-up when strictly
/// increasing past `CM_GROWTH_FACTOR` × the first value, bounded when all
/// values stay within `CM_BOUNDED_FACTOR` of each other.
pub fn cm_growth_verdict(log_values: &[f64]) -> Verdict {
    if log_values.len() < 2 || log_values.iter().any(|v| !v.is_finite()) {
        return Verdict::Inconclusive;
    }
    let increasing = log_values.windows(2).all(|w| w[1] > w[0]);
    if increasing && log_values[log_values.len() - 1] - log_values[0] > CM_GROWTH_FACTOR.ln() {
        return Verdict::BlowUp;
    }
    let max = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = log_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if max - min <= CM_BOUNDED_FACTOR.ln() {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmRow {
    pub a: f64,
    pub alpha: f64,
    pub z_re: f64,
    pub z_im: f64,
    pub cm_integral: f64,
    pub log_cm_integral: f64,
    pub dirichlet_norm_sq: f64,
}

/// Integral of `Re B_a` for every `(a, z)` pair, rows in `a`-major input order.
/// Without an explicit sample count each `a` gets [`resolving_samples`].
pub fn cm_scan(a_values: &[f64], alpha: f64, points: &[DiskPoint], samples: Option<usize>) -> Result<Vec<CmRow>> {
    let per_a = a_values
        .par_iter()
        .map(|&a| {
            let f = beurling_boundary(a, samples.unwrap_or_else(|| resolving_samples(a)))?.real_part();
            let norm = beurling_dirichlet_norm_sq(a, required_terms(a)?)?;
            points
                .iter()
                .map(|&z| {
                    let lv = cm_integral_log(&f, alpha, z)?;
                    Ok(CmRow {
                        a,
                        alpha,
                        z_re: z.z().re,
                        z_im: z.z().im,
                        cm_integral: lv.exp(),
                        log_cm_integral: lv,
                        dirichlet_norm_sq: norm,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_a.into_iter().flatten().collect())
}

/// `k × k` Cartesian grid over `[-extent, extent]²`.
pub fn disk_grid(k: usize, extent: f64) -> Result<Vec<DiskPoint>> {
    if k == 0 {
        return Err(Error::param("k", 0.0, "grid needs at least one point per side"));
    }
    let step = if k == 1 { 0.0 } else { 2.0 * extent / (k - 1) as f64 };
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let (x, y) = if k == 1 { (0.0, 0.0) } else { (-extent + step * i as f64, -extent + step * j as f64) };
            out.push(DiskPoint::new(x, y)?);
        }
    }
    Ok(out)
}
