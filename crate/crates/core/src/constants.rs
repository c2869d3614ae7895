//! Dimensional constants of the exponential-integrability inequalities.
//!
//! All constants are built from the surface measure of the unit sphere
//! `ω_{n-1} = 2 π^{n/2} / Γ(n/2)`. The Gamma function is evaluated with a
//! Lanczos approximation (g = 7, nine coefficients), accurate to roughly
//! 15 significant digits on the half-integer arguments used here.

use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Lanczos approximation of Γ(x) for real x (reflection below 1/2).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Measure of the unit sphere in ℝ^k for any k ≥ 1 (ω_0 = 2 counts two points).
pub(crate) fn unit_sphere_measure(k: usize) -> f64 {
    let half = k as f64 / 2.0;
    2.0 * PI.powf(half) / gamma(half)
}

/// Surface measure ω_{n-1} of the unit sphere S^{n-1} ⊂ ℝ^n.
pub fn sphere_measure(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidDimension { n, min: 2 });
    }
    Ok(unit_sphere_measure(n))
}

/// Interior Moser constant α_n = n ω_{n-1}^{1/(n-1)}.
pub fn moser_constant(n: usize) -> Result<f64> {
    let omega = sphere_measure(n)?;
    Ok(n as f64 * omega.powf(1.0 / (n as f64 - 1.0)))
}

/// Sharp trace constant β_n = (n-1) (ω_{n-1}/2)^{1/(n-1)}.
pub fn trace_constant(n: usize) -> Result<f64> {
    let omega = sphere_measure(n)?;
    let nm1 = n as f64 - 1.0;
    Ok(nm1 * (omega / 2.0).powf(1.0 / nm1))
}

/// Half-space interior constant n (ω_{n-1}/2)^{1/(n-1)}, strictly above β_n.
pub fn half_space_interior_constant(n: usize) -> Result<f64> {
    let omega = sphere_measure(n)?;
    Ok(n as f64 * (omega / 2.0).powf(1.0 / (n as f64 - 1.0)))
}

/// Sobolev conjugate p* with 1/p* = 1/p - 1/n, defined for 1 ≤ p < n.
pub fn sobolev_conjugate(p: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    if !(p >= 1.0 && p < nf) {
        return Err(Error::param("p", p, "Sobolev conjugate needs 1 <= p < n"));
    }
    Ok(nf * p / (nf - p))
}

/// Exponent n/(n-1) applied to |u| inside the exponential.
pub fn critical_exponent(n: usize) -> f64 {
    n as f64 / (n as f64 - 1.0)
}

/// Bundle of constants appearing in every formula for a given dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimensionConstants {
    pub n: usize,
    pub omega: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
    pub p: f64,
    pub p_star: f64,
}

impl DimensionConstants {
    pub fn new(n: usize, p: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension { n, min: 2 });
        }
        if !(p > 1.0 && p < n as f64) {
            return Err(Error::param("p", p, "exponent must satisfy 1 < p < n"));
        }
        Ok(Self {
            n,
            omega: sphere_measure(n)?,
            alpha_n: moser_constant(n)?,
            beta_n: trace_constant(n)?,
            p,
            p_star: sobolev_conjugate(p, n)?,
        })
    }

    /// Blow-up rate of the normalized extremal family: α (ω/2)^{-1/(n-1)} - (n-1).
    pub fn blow_up_exponent(&self, alpha: f64) -> f64 {
        let nm1 = self.n as f64 - 1.0;
        alpha * (self.omega / 2.0).powf(-1.0 / nm1) - nm1
    }
}
