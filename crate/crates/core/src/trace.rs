//! The boundary exponential integral `∫_{∂Ω} exp(α|u|^{n/(n-1)})` and the
//! interior identity that controls it through the trace function.

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{critical_exponent, half_space_interior_constant, sobolev_conjugate};
use crate::energy::{cell_fluxes, dirichlet_norm, mean_zero_project, EnergyConfig, MeshFunction};
use crate::error::{Error, Result};
use crate::mesh::{boundary_quadrature_on, BoundarySelection};
use crate::quadrature::{log_sum_exp, pairwise_sum};

/// Nodal exponents above this are summed in log space.
pub const LOG_SPACE_THRESHOLD: f64 = 700.0;

/// Ratio over baseline that a blow-up run has to exceed.
pub const BLOW_UP_FACTOR: f64 = 1e3;
/// Allowed late growth of the running maximum for a bounded run.
pub const BOUNDED_SLACK: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overflow {
    pub node: usize,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvalResult {
    pub alpha: f64,
    /// May be `+inf` when the integral exceeds the double range; see `log_boundary_value`.
    pub boundary_value: f64,
    pub log_boundary_value: f64,
    pub interior_value: Option<f64>,
    pub relative_defect: Option<f64>,
    pub overflow: Option<Overflow>,
}

fn check_inputs(alpha: f64, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidDimension { n, min: 2 });
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::param("alpha", alpha, "alpha must be finite and nonnegative"));
    }
    Ok(())
}

fn exponent(alpha: f64, u: f64, q: f64) -> f64 {
    if alpha == 0.0 {
        0.0
    } else {
        alpha * u.abs().powf(q)
    }
}

/// Trapezoid value of `∫_{∂Ω} exp(α|u|^{n/(n-1)})` over the whole boundary.
pub fn trace_integral(u: &MeshFunction, alpha: f64, n: usize) -> Result<f64> {
    Ok(evaluate_trace(u, alpha, n, &BoundarySelection::All)?.boundary_value)
}

pub fn trace_integral_on(u: &MeshFunction, alpha: f64, n: usize, sel: &BoundarySelection) -> Result<f64> {
    Ok(evaluate_trace(u, alpha, n, sel)?.boundary_value)
}

/// Boundary integral with log-space fallback. Overflow is not an error:
/// the value becomes `+inf` and the offending node is recorded.
pub fn evaluate_trace(u: &MeshFunction, alpha: f64, n: usize, sel: &BoundarySelection) -> Result<TraceEvalResult> {
    check_inputs(alpha, n)?;
    let mesh = u.mesh();
    let q = critical_exponent(n);
    let vals = u.values();
    let mut worst: Option<Overflow> = None;
    let mut exps = vec![0.0; vals.len()];
    for e in mesh.boundary_edges().iter().filter(|e| sel.contains(e)) {
        for i in [e.a, e.b] {
            if !vals[i].is_finite() {
                return Err(Error::NonFinite { node: i, value: vals[i] });
            }
            let x = exponent(alpha, vals[i], q);
            exps[i] = x;
            if worst.is_none_or(|w| x > w.exponent) {
                worst = Some(Overflow { node: i, exponent: x });
            }
        }
    }
    let max_exp = worst.map_or(0.0, |w| w.exponent);
    let (value, log_value) = if max_exp <= LOG_SPACE_THRESHOLD {
        let ex: Vec<f64> = exps.iter().map(|x| x.exp()).collect();
        let v = boundary_quadrature_on(mesh, &ex, sel)?;
        (v, v.ln())
    } else {
        let terms = mesh
            .boundary_edges()
            .iter()
            .filter(|e| sel.contains(e))
            .flat_map(|e| {
                let w = (0.5 * e.length).ln();
                [w + exps[e.a], w + exps[e.b]]
            });
        let lv = log_sum_exp(terms);
        (lv.exp(), lv)
    };
    Ok(TraceEvalResult {
        alpha,
        boundary_value: value,
        log_boundary_value: log_value,
        interior_value: None,
        relative_defect: None,
        overflow: if value.is_finite() { None } else { worst },
    })
}

/// Compares `∫_{∂Ω} e^{α|u|^{n/(n-1)}}` with the divergence-theorem interior form
/// `∫_Ω e^{α|u|^{n/(n-1)}} (α n/(n-1) |u|^{1/(n-1)} sgn(u) ∇u·σ + |∂Ω|/|Ω|)`,
/// σ = |∇w|^{p-2}∇w, which holds because w has unit boundary flux and
/// p-Laplacian |∂Ω|/|Ω|. The interior side uses a degree-2 rule per cell
/// with the piecewise-linear `u`.
pub fn conversion_identity_check(
    u: &MeshFunction,
    w: &MeshFunction,
    alpha: f64,
    n: usize,
    cfg: &EnergyConfig,
) -> Result<TraceEvalResult> {
    check_inputs(alpha, n)?;
    if !u.same_mesh(w) {
        return Err(Error::MeshMismatch);
    }
    let boundary = evaluate_trace(u, alpha, n, &BoundarySelection::All)?;
    let mesh = u.mesh();
    let q = critical_exponent(n);
    let lambda = mesh.perimeter() / mesh.area();
    let fluxes = cell_fluxes(w, cfg);
    let vals = u.values();
    const BARY: [[f64; 3]; 3] = [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ];
    // (log weight, signed factor) per quadrature point
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(3 * mesh.n_cells());
    for (c, cell) in mesh.cells().iter().enumerate() {
        let g = u.cell_gradient(c);
        let drift = g[0] * fluxes[c][0] + g[1] * fluxes[c][1];
        let weight = mesh.cell_areas()[c] / 3.0;
        for b in BARY {
            let uq = b[0] * vals[cell[0]] + b[1] * vals[cell[1]] + b[2] * vals[cell[2]];
            let slope = if alpha == 0.0 {
                0.0
            } else {
                alpha * q * uq.abs().powf(q - 1.0) * uq.signum()
            };
            terms.push((exponent(alpha, uq, q), weight * (slope * drift + lambda)));
        }
    }
    let shift = terms
        .iter()
        .map(|t| t.0)
        .fold(boundary.log_boundary_value, f64::max)
        .max(0.0);
    let shift = if shift > LOG_SPACE_THRESHOLD { shift } else { 0.0 };
    let scaled: Vec<f64> = terms.iter().map(|(x, f)| (x - shift).exp() * f).collect();
    let interior_scaled = pairwise_sum(&scaled);
    let boundary_scaled = (boundary.log_boundary_value - shift).exp();
    let defect = ((interior_scaled - boundary_scaled) / boundary_scaled).abs();
    Ok(TraceEvalResult {
        interior_value: Some(interior_scaled * shift.exp()),
        relative_defect: Some(defect),
        ..boundary
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Bounded,
    BlowUp,
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Bounded => "bounded",
            Verdict::BlowUp => "blow-up",
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies a run from log values: blow-up when strictly increasing and the
/// last value exceeds `BLOW_UP_FACTOR` × baseline; bounded when the maximum
/// over the last quarter stays within `BOUNDED_SLACK` of the maximum over the
/// first half.
pub fn classify(log_values: &[f64], log_baseline: f64) -> Verdict {
    if log_values.len() < 2 || log_values.iter().any(|v| v.is_nan()) {
        return Verdict::Inconclusive;
    }
    let increasing = log_values.windows(2).all(|w| w[1] > w[0]);
    let last = *log_values.last().unwrap();
    if increasing && last - log_baseline > BLOW_UP_FACTOR.ln() {
        return Verdict::BlowUp;
    }
    let len = log_values.len();
    let mid_max = log_values[..len.div_ceil(2)].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tail_max = log_values[len - len.div_ceil(4)..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if tail_max <= mid_max + BOUNDED_SLACK.ln() {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    }
}

/// Hölder split exponent for the interior term: the scan reports
/// `(∫_Ω e^{p*α|u|^{n/(n-1)}} |u|^{p*/(n-1)})^{1/p*}` with p* the Sobolev conjugate of `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct HolderSplit {
    pub p: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    pub selection: BoundarySelection,
    pub holder: Option<HolderSplit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub param: f64,
    pub trace_integral: f64,
    pub log_trace_integral: f64,
    pub grad_norm: f64,
    pub mean: f64,
    pub exponent_max: f64,
    pub lower_bound: Option<f64>,
    pub holder_term: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub alpha: f64,
    pub n: usize,
    pub baseline: f64,
    pub rows: Vec<ScanRow>,
    pub verdict: Verdict,
    /// Least-squares slope of ln(trace integral) against ln(1/param).
    pub slope: Option<f64>,
    /// Whether `α p* + ε` stays below the interior constant.
    pub holder_admissible: Option<bool>,
}

impl ScanReport {
    pub fn from_rows(alpha: f64, n: usize, baseline: f64, rows: Vec<ScanRow>) -> Self {
        let logs: Vec<f64> = rows.iter().map(|r| r.log_trace_integral).collect();
        let verdict = classify(&logs, baseline.ln());
        Self {
            alpha,
            n,
            baseline,
            rows,
            verdict,
            slope: None,
            holder_admissible: None,
        }
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn holder_term(u: &MeshFunction, alpha: f64, n: usize, pstar: f64) -> f64 {
    let q = critical_exponent(n);
    let pw = pstar / (n as f64 - 1.0);
    let terms = u
        .values()
        .iter()
        .zip(u.mesh().lumped_mass())
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, m)| m.ln() + pstar * exponent(alpha, *v, q) + pw * v.abs().ln());
    (log_sum_exp(terms) / pstar).exp()
}

/// Trace integrals over a family, each member made mean-zero and scaled
/// down to unit L^n gradient norm if it exceeds it. Rows keep the family order.
pub fn boundedness_scan(
    family: &[(f64, MeshFunction)],
    alpha: f64,
    n: usize,
    opts: &ScanOptions,
) -> Result<ScanReport> {
    check_inputs(alpha, n)?;
    let Some((_, first)) = family.first() else {
        return Err(Error::param("family", 0.0, "scan needs at least one member"));
    };
    let pstar = opts.holder.map(|h| sobolev_conjugate(h.p, n)).transpose()?;
    let rows = family
        .par_iter()
        .map(|(param, u)| scan_row(*param, u, alpha, n, &opts.selection, pstar))
        .collect::<Result<Vec<_>>>()?;
    let baseline = first.mesh().boundary_measure(&opts.selection);
    let mut rep = ScanReport::from_rows(alpha, n, baseline, rows);
    if let (Some(h), Some(ps)) = (opts.holder, pstar) {
        rep.holder_admissible = Some(alpha * ps + h.epsilon <= half_space_interior_constant(n)?);
    }
    Ok(rep)
}

fn scan_row(
    param: f64,
    u: &MeshFunction,
    alpha: f64,
    n: usize,
    sel: &BoundarySelection,
    pstar: Option<f64>,
) -> Result<ScanRow> {
    let mut v = mean_zero_project(u);
    let mut norm = dirichlet_norm(&v, n as f64)?;
    if norm > 1.0 {
        v = v.scaled(1.0 / norm);
        norm = dirichlet_norm(&v, n as f64)?;
    }
    let t = evaluate_trace(&v, alpha, n, sel)?;
    let q = critical_exponent(n);
    let exponent_max = v
        .mesh()
        .boundary_edges()
        .iter()
        .filter(|e| sel.contains(e))
        .flat_map(|e| [e.a, e.b])
        .map(|i| exponent(alpha, v.values()[i], q))
        .fold(0.0, f64::max);
    Ok(ScanRow {
        param,
        trace_integral: t.boundary_value,
        log_trace_integral: t.log_boundary_value,
        grad_norm: norm,
        mean: v.mean(),
        exponent_max,
        lower_bound: None,
        holder_term: pstar.map(|ps| holder_term(&v, alpha, n, ps)),
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::mesh::{build_disk_mesh, build_half_disk_mesh, TriMesh, TAG_TRACE};
    use crate::torsion::{solve_with, SolveOptions};

    fn disk(level: u32) -> Arc<TriMesh> {
        Arc::new(build_disk_mesh(level))
    }

    #[test]
    fn trace_of_constants() {
        let mesh = disk(3);
        let zero = MeshFunction::zeros(mesh.clone());
        let v = trace_integral(&zero, 2.0, 2).unwrap();
        assert!((v - mesh.perimeter()).abs() < 1e-13);
        assert!((v - 2.0 * PI).abs() < 1e-2);
        let c = MeshFunction::constant(mesh.clone(), -0.7);
        let v = trace_integral(&c, 1.3, 3).unwrap();
        let expect = mesh.perimeter() * (1.3 * 0.7f64.powf(1.5)).exp();
        assert!((v - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn overflow_reports_node_and_log_value() {
        let mesh = disk(1);
        let mut u = MeshFunction::zeros(mesh.clone());
        let node = (0..mesh.n_vertices()).find(|&i| mesh.is_boundary_node(i)).unwrap();
        u.values_mut()[node] = 40.0;
        let r = evaluate_trace(&u, 1.0, 2, &BoundarySelection::All).unwrap();
        assert!(r.boundary_value.is_infinite());
        let o = r.overflow.unwrap();
        assert_eq!(o.node, node);
        assert!((o.exponent - 1600.0).abs() < 1e-9);
        // one node carries half of each adjacent edge
        assert!((r.log_boundary_value - 1600.0 - (mesh.boundary_mass()[node]).ln()).abs() < 1e-9);
    }

    #[test]
    fn log_space_matches_direct_sum_near_threshold() {
        let mesh = disk(2);
        let u = MeshFunction::from_fn(mesh.clone(), |x| 20.0 * x[0]);
        let a = evaluate_trace(&u, 1.74, 2, &BoundarySelection::All).unwrap();
        let b = evaluate_trace(&u, 1.76, 2, &BoundarySelection::All).unwrap();
        assert!(a.overflow.is_none() && b.overflow.is_none());
        // exponent max is 400·α; crossing 700 switches paths
        let ratio = (b.log_boundary_value - a.log_boundary_value) / (0.02 * 400.0);
        assert!(ratio > 0.9 && ratio < 1.0, "{ratio}");
        let rejected = evaluate_trace(&u, -1.0, 2, &BoundarySelection::All);
        assert!(rejected.is_err());
    }

    #[test]
    fn selection_restricts_to_tagged_edges() {
        let mesh = Arc::new(build_half_disk_mesh(3));
        let zero = MeshFunction::zeros(mesh.clone());
        let v = trace_integral_on(&zero, 1.0, 2, &BoundarySelection::tag(TAG_TRACE)).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn conversion_identity_for_zero_is_exact() {
        let mesh = disk(2);
        let cfg = EnergyConfig::new(2.0).unwrap();
        let w = solve_with(&mesh, &cfg, &SolveOptions::for_mesh(&mesh)).unwrap().w;
        let zero = MeshFunction::zeros(mesh.clone());
        let r = conversion_identity_check(&zero, &w, 0.3, 2, &cfg).unwrap();
        assert!(r.relative_defect.unwrap() < 1e-13);
        assert!((r.interior_value.unwrap() - mesh.perimeter()).abs() < 1e-12);
    }

    #[test]
    fn conversion_identity_for_radial_bump_converges() {
        let cfg = EnergyConfig::new(2.0).unwrap();
        let mut defects = Vec::new();
        for level in [2, 3, 4] {
            let mesh = disk(level);
            let w = solve_with(&mesh, &cfg, &SolveOptions::for_mesh(&mesh)).unwrap().w;
            let u = MeshFunction::from_fn(mesh.clone(), |x| (1.0 - x[0] * x[0] - x[1] * x[1]).powi(2) + 0.5);
            defects.push(conversion_identity_check(&u, &w, 0.5, 2, &cfg).unwrap().relative_defect.unwrap());
        }
        for d in defects.windows(2) {
            assert!(d[1] <= 0.75 * d[0], "{defects:?}");
        }
    }

    #[test]
    fn verdict_rules() {
        let base = 2.0f64.ln();
        let up: Vec<f64> = [1.0, 10.0, 300.0, 5000.0].iter().map(|v: &f64| v.ln()).collect();
        assert_eq!(classify(&up, base), Verdict::BlowUp);
        let flat: Vec<f64> = [2.4, 2.42, 2.31, 2.22].iter().map(|v: &f64| v.ln()).collect();
        assert_eq!(classify(&flat, base), Verdict::Bounded);
        let slow: Vec<f64> = [3.0, 5.0, 7.0, 10.0].iter().map(|v: &f64| v.ln()).collect();
        assert_eq!(classify(&slow, base), Verdict::Inconclusive);
        assert_eq!(classify(&[1.0], base), Verdict::Inconclusive);
        assert_eq!(Verdict::BlowUp.to_string(), "blow-up");
    }

    #[test]
    fn constant_family_is_bounded() {
        let mesh = disk(2);
        let family: Vec<_> = (0..4).map(|k| (k as f64, MeshFunction::zeros(mesh.clone()))).collect();
        let rep = boundedness_scan(&family, 1.0, 2, &ScanOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Bounded);
        assert!(rep.rows.iter().all(|r| r.trace_integral == rep.baseline));
    }

    #[test]
    fn scan_normalizes_members() {
        let mesh = disk(2);
        let family = vec![(1.0, MeshFunction::from_fn(mesh.clone(), |x| 5.0 * x[0] + 3.0))];
        let opts = ScanOptions {
            holder: Some(HolderSplit { p: 1.5, epsilon: 0.1 }),
            ..Default::default()
        };
        let rep = boundedness_scan(&family, 1.0, 2, &opts).unwrap();
        let row = &rep.rows[0];
        assert!((row.grad_norm - 1.0).abs() < 1e-12);
        assert!(row.mean.abs() < 1e-12);
        assert!(row.holder_term.unwrap() > 0.0);
        // α p* + ε = 6.1 stays below 2π
        assert_eq!(rep.holder_admissible, Some(true));
    }

    #[test]
    fn slope_of_exact_line() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [0.5, 2.5, 4.5];
        assert!((regression_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-15);
        assert!(regression_slope(&[1.0], &[1.0]).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monotone_in_alpha(seed in 0u64..1000, a in 0.0f64..3.0, da in 0.0f64..2.0, n in 2usize..5) {
            let mesh = disk(1);
            let u = MeshFunction::from_fn(mesh.clone(), |x| ((seed as f64 + 1.0) * x[0]).sin() + x[1]);
            let lo = trace_integral(&u, a, n).unwrap();
            let hi = trace_integral(&u, a + da, n).unwrap();
            prop_assert!(hi >= lo);
        }

        #[test]
        fn scaling_identity(seed in 0u64..1000, a in 0.0f64..3.0, t in 0.1f64..3.0, n in 2usize..5) {
            let mesh = disk(1);
            let u = MeshFunction::from_fn(mesh.clone(), |x| ((seed as f64 + 1.0) * x[1]).cos() - x[0]);
            let lhs = trace_integral(&u.scaled(t), a, n).unwrap();
            let rhs = trace_integral(&u, a * t.powf(critical_exponent(n)), n).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }
    }
}
