//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracelab::constants::trace_constant;
use tracelab::disk::{
    beurling_boundary, beurling_dirichlet_norm_sq, cm_growth_verdict, cm_scan, level_set_fraction, level_set_measure,
    required_terms, DiskPoint,
};
use tracelab::energy::{energy, energy_gradient, EnergyConfig, MeshFunction};
use tracelab::mesh::{build_disk_mesh, build_graded_half_disk_mesh, TriMesh};
use tracelab::moser::{moser_norm_measured, moser_norm_predicted, sharpness_experiment, sharpness_experiment_radial, MoserParams};
use tracelab::torsion::{radial_gradient_error, solve_trace_function, solve_with, weak_boundary_flux, SolveOptions};
use tracelab::trace::{conversion_identity_check, Verdict};

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail, notes: Vec::new() }
    }

    fn note(mut self, line: String) -> Self {
        self.notes.push(line);
        self
    }
}

type Check = fn() -> Outcome;

fn disk(level: u32) -> Arc<TriMesh> {
    Arc::new(build_disk_mesh(level))
}

fn random_function(mesh: &Arc<TriMesh>, rng: &mut ChaCha8Rng) -> MeshFunction {
    let vals = (0..mesh.n_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MeshFunction::new(mesh.clone(), vals).unwrap()
}

fn torsion_oracle() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [1.5, 2.0] {
        let cfg = EnergyConfig::new(p).unwrap();
        let mut errs = Vec::new();
        let mut flux_err: f64 = 0.0;
        for level in [5, 6] {
            let mesh = disk(level);
            let rep = solve_trace_function(&mesh, &cfg, SolveOptions::for_mesh(&mesh).tol).unwrap();
            errs.push(radial_gradient_error(&rep.w, p, 1.0));
            let measure = mesh.perimeter();
            flux_err = flux_err.max((weak_boundary_flux(&rep.w, &cfg) - measure).abs() / measure);
        }
        let ratio = errs[1] / errs[0];
        let ok = errs[0] <= 0.03 && (0.375..=0.625).contains(&ratio) && flux_err <= 1e-6;
        pass &= ok;
        parts.push(format!(
            "p={p}: err5={:.3e} err6={:.3e} ratio={ratio:.3} flux={flux_err:.1e}",
            errs[0], errs[1]
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn convexity_uniqueness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mesh = disk(3);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let p = rng.random_range(1.1..4.0);
        let cfg = EnergyConfig::new(p).unwrap();
        let u = random_function(&mesh, &mut rng);
        let v = random_function(&mesh, &mut rng);
        let mid = u.axpy(1.0, &v).unwrap().scaled(0.5);
        worst = worst.max(energy(&mid, &cfg) - 0.5 * (energy(&u, &cfg) + energy(&v, &cfg)));
    }
    let mesh = disk(4);
    let cfg = EnergyConfig::new(1.5).unwrap();
    let solves: Vec<_> = (0..2)
        .map(|_| {
            let mut opts = SolveOptions::for_mesh(&mesh);
            opts.start = Some(random_function(&mesh, &mut rng));
            solve_with(&mesh, &cfg, &opts).unwrap()
        })
        .collect();
    let diff = solves[0].w.axpy(-1.0, &solves[1].w).unwrap().sup_norm();
    let bound = 10.0 * solves[0].tol;
    Outcome::new(
        worst <= 1e-10 && diff <= bound,
        format!("max midpoint defect {worst:.2e}; random-start sup difference {diff:.2e} (10·tol = {bound:.2e})"),
    )
}

fn gradient_fd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mesh = disk(2);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(1.2..3.5);
        let cfg = EnergyConfig::new(p).unwrap();
        let u = random_function(&mesh, &mut rng);
        let d = random_function(&mesh, &mut rng);
        let g = energy_gradient(&u, &cfg);
        let exact: f64 = g.values().iter().zip(d.values()).map(|(a, b)| a * b).sum();
        let fd = (energy(&u.axpy(eps, &d).unwrap(), &cfg) - energy(&u.axpy(-eps, &d).unwrap(), &cfg)) / (2.0 * eps);
        worst = worst.max((exact - fd).abs() / exact.abs().max(1e-300));
    }
    Outcome::new(worst <= 1e-6, format!("max relative error {worst:.2e} over 100 directional checks"))
}

fn moser_norm() -> Outcome {
    let mesh = Arc::new(build_graded_half_disk_mesh(5, 0.01));
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for r in [0.5, 0.1, 0.01] {
        let m = moser_norm_measured(&MoserParams::new([0.0, 0.0], r, 2).unwrap(), &mesh).unwrap();
        let rel = (m / moser_norm_predicted(r, 2).unwrap() - 1.0).abs();
        worst = worst.max(rel);
        parts.push(format!("r={r}: {rel:.2e}"));
    }
    Outcome::new(worst <= 0.05, format!("relative errors {}", parts.join(", ")))
}

const R_GRID: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

fn blow_up_holds(values: &[f64], baseline: f64) -> bool {
    values.windows(2).all(|w| w[1] > w[0]) && values.last().is_some_and(|&v| v > 1e3 * baseline)
}

fn extended_grid_note(n: usize, alpha: f64) -> String {
    let rs: Vec<f64> = (1..=40).map(|k| 10f64.powi(-k)).collect();
    let rep = sharpness_experiment_radial(alpha, &rs, n).unwrap();
    let first = rep
        .scan
        .rows
        .iter()
        .find(|row| row.trace_integral > 1e3 * rep.scan.baseline)
        .map_or("none up to 1e-40".to_string(), |row| format!("{:.0e}", row.param));
    let tail = &rep.scan.rows[rep.scan.rows.len() - 4..];
    let xs: Vec<f64> = tail.iter().map(|row| -row.param.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|row| row.log_trace_integral).collect();
    let slope = tracelab::trace::regression_slope(&xs, &ys).unwrap_or(f64::NAN);
    format!(
        "radial model n={n}, alpha={alpha:.4}: 1e3 x baseline first exceeded at r={first}; slope over r=1e-37..1e-40 is {slope:.4} (predicted {:.4})",
        rep.predicted_exponent
    )
}

fn sharpness_n2() -> Outcome {
    let beta = trace_constant(2).unwrap();
    let mesh = Arc::new(build_graded_half_disk_mesh(5, 1e-4));
    let base = MoserParams::new([0.0, 0.0], 0.5, 2).unwrap();
    let high = sharpness_experiment(1.2 * beta, &R_GRID, &mesh, &base).unwrap();
    let low = sharpness_experiment(0.5 * beta, &R_GRID, &mesh, &base).unwrap();
    let values: Vec<f64> = high.scan.rows.iter().map(|r| r.trace_integral).collect();
    let blow_up = blow_up_holds(&values, high.scan.baseline);
    let bounded = low.scan.verdict == Verdict::Bounded;
    let slope = high.scan.slope.unwrap_or(f64::NAN);
    let slope_rel = ((slope - high.predicted_exponent) / high.predicted_exponent).abs();
    Outcome::new(
        blow_up && bounded && slope_rel <= 0.15,
        format!(
            "1.2β values {values:.3?} vs 1e3 x baseline {:.3}: {}; 0.5β verdict {}; slope {slope:.4} vs {:.4} ({:.1}% off)",
            1e3 * high.scan.baseline,
            if blow_up { "blow-up" } else { "not reached" },
            low.scan.verdict,
            high.predicted_exponent,
            100.0 * slope_rel
        ),
    )
    .note(extended_grid_note(2, 1.2 * beta))
}

fn sharpness_n3() -> Outcome {
    let beta = trace_constant(3).unwrap();
    let exact = 2.0 * (2.0 * PI).sqrt();
    let high = sharpness_experiment_radial(1.2 * beta, &R_GRID, 3).unwrap();
    let low = sharpness_experiment_radial(0.5 * beta, &R_GRID, 3).unwrap();
    let values: Vec<f64> = high.scan.rows.iter().map(|r| r.trace_integral).collect();
    let blow_up = blow_up_holds(&values, high.scan.baseline);
    let bounded = low.scan.verdict == Verdict::Bounded;
    let constant_ok = (beta - exact).abs() <= 1e-12 * exact;
    Outcome::new(
        constant_ok && blow_up && bounded,
        format!(
            "β_3={beta:.12} (|Δ| {:.1e}); 1.2β values {values:.3?} vs 1e3 x baseline {:.3}: {}; 0.5β verdict {}; slope {:.4} vs {:.4}",
            (beta - exact).abs(),
            1e3 * high.scan.baseline,
            if blow_up { "blow-up" } else { "not reached" },
            low.scan.verdict,
            high.scan.slope.unwrap_or(f64::NAN),
            high.predicted_exponent
        ),
    )
    .note(extended_grid_note(3, 1.2 * beta))
}

fn conversion() -> Outcome {
    let cfg = EnergyConfig::new(2.0).unwrap();
    let defects: Vec<f64> = [4, 5, 6]
        .iter()
        .map(|&level| {
            let mesh = disk(level);
            let rep = solve_trace_function(&mesh, &cfg, SolveOptions::for_mesh(&mesh).tol).unwrap();
            let u = MeshFunction::from_fn(mesh.clone(), |x| x[0]);
            conversion_identity_check(&u, &rep.w, 0.1, 2, &cfg).unwrap().relative_defect.unwrap()
        })
        .collect();
    let decreasing = defects.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        defects[1] <= 0.02 && decreasing,
        format!("defects at refinement 4/5/6: {:.2e}, {:.2e}, {:.2e}", defects[0], defects[1], defects[2]),
    )
}

const A_SMALL: [f64; 3] = [0.5, 0.9, 0.99];

fn beurling_exact() -> Outcome {
    let worst = A_SMALL
        .iter()
        .map(|&a| (beurling_dirichlet_norm_sq(a, required_terms(a).unwrap()).unwrap() - PI).abs())
        .fold(0.0, f64::max);
    Outcome::new(worst <= 1e-10, format!("max |norm² - π| = {worst:.2e}"))
}

fn beurling_level_sets() -> Outcome {
    let m = 1 << 16;
    let mut worst = f64::NEG_INFINITY;
    let mut literal_violations = 0;
    for a in A_SMALL {
        let f = beurling_boundary(a, m).unwrap();
        for s in [0.5f64, 1.0, 1.5, 2.0, 2.5] {
            let bound = (1.0 - s * s).exp();
            worst = worst.max(level_set_fraction(&f, s) / bound);
            if level_set_measure(&f, s) > bound {
                literal_violations += 1;
            }
        }
    }
    Outcome::new(worst <= 1.0, format!("max measure / e^(1-s²) = {worst:.4} (measure normalized by 2π)")).note(format!(
        "unnormalized arc length exceeds the bound in {literal_violations} of 15 cases"
    ))
}

fn chang_marshall() -> Outcome {
    let a_grid = [0.9, 0.99, 0.999, 0.9999];
    let z = [DiskPoint::origin()];
    let logs = |alpha: f64| -> Vec<f64> { cm_scan(&a_grid, alpha, &z, None).unwrap().iter().map(|r| r.log_cm_integral).collect() };
    let high = logs(1.1);
    let low = logs(0.9);
    let grows = high.windows(2).all(|w| w[1] > w[0]) && high[3] - high[0] > 10f64.ln();
    let stays = cm_growth_verdict(&low) == Verdict::Bounded;
    let exp = |v: &[f64]| v.iter().map(|x| x.exp()).collect::<Vec<_>>();
    Outcome::new(
        grows && stays,
        format!(
            "α=1.1 values {:.4?} (last/first {:.3}); α=0.9 values {:.4?}",
            exp(&high),
            (high[3] - high[0]).exp(),
            exp(&low)
        ),
    )
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let runs: [&[&str]; 5] = [
        &["verify-el", "--p", "1.5", "--refine", "3", "--seed", "42"],
        &["sharpness", "--refine", "3", "--r", "0.1,0.01"],
        &["beurling", "--a", "0.5,0.9", "--samples", "4096"],
        &["cm-scan", "--samples", "4096", "--z-grid", "3"],
        &["conversion-check", "--refine", "3"],
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (k, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let dir = tmp.path().join(format!("{k}-{rep}"));
            Command::new(env!("CARGO_BIN_EXE_tracelab"))
                .args(*args)
                .arg("--out")
                .arg(&dir)
                .env_remove("TRACELAB_OUT_DIR")
                .output()
                .unwrap();
            outputs.push(csv_files(&dir.join(args[0])));
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            mismatched.push(args[0]);
        }
        compared += outputs[0].len();
    }
    Outcome::new(
        mismatched.is_empty(),
        format!("{compared} CSV files compared across {} subcommands; mismatched: {mismatched:?}", runs.len()),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 11] = [
        ("torsion oracle and flux", torsion_oracle),
        ("convexity and uniqueness", convexity_uniqueness),
        ("gradient vs finite differences", gradient_fd),
        ("moser norm formula", moser_norm),
        ("sharpness threshold n=2", sharpness_n2),
        ("sharpness threshold n=3", sharpness_n3),
        ("conversion identity", conversion),
        ("beurling dirichlet norm", beurling_exact),
        ("beurling level sets", beurling_level_sets),
        ("chang-marshall growth", chang_marshall),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2} {name}: {} ({:.1}s)", k + 1, out.detail, start.elapsed().as_secs_f64());
        for note in &out.notes {
            println!("       note: {note}");
        }
        if !out.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
