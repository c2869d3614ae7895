//! Run artifacts: a JSON envelope, CSV tables and a gnuplot script that reads them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::disk::{BoundaryFunction1D, CmRow};
use crate::trace::{ScanReport, Verdict};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column-major numeric table written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Whether values span decades (plotted on log axes).
    pub log_scale: bool,
}

impl Table {
    pub fn new(name: &str, headers: &[&str], log_scale: bool) -> Self {
        Self {
            name: name.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            log_scale,
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn column(&self, header: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == header)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| format_value(v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Shortest round-trip decimal; scientific notation outside `[1e-4, 1e15)`.
pub fn format_value(v: f64) -> String {
    let m = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&m) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// `param,trace_integral,grad_norm,mean,exponent_max` plus `lower_bound` when present.
pub fn scan_table(name: &str, scan: &ScanReport) -> Table {
    let with_bound = scan.rows.iter().any(|r| r.lower_bound.is_some());
    let mut headers = vec!["param", "trace_integral", "grad_norm", "mean", "exponent_max"];
    if with_bound {
        headers.push("lower_bound");
    }
    let mut t = Table::new(name, &headers, true);
    for r in &scan.rows {
        let mut row = vec![r.param, r.trace_integral, r.grad_norm, r.mean, r.exponent_max];
        if with_bound {
            row.push(r.lower_bound.unwrap_or(f64::NAN));
        }
        t.push(row);
    }
    t
}

/// `a,alpha,z_re,z_im,cm_integral,dirichlet_norm_sq`.
pub fn cm_table(name: &str, rows: &[CmRow]) -> Table {
    let mut t = Table::new(name, &["a", "alpha", "z_re", "z_im", "cm_integral", "dirichlet_norm_sq"], true);
    for r in rows {
        t.push(vec![r.a, r.alpha, r.z_re, r.z_im, r.cm_integral, r.dirichlet_norm_sq]);
    }
    t
}

/// `theta,value_re,value_im`.
pub fn boundary_table(name: &str, f: &BoundaryFunction1D) -> Table {
    let mut t = Table::new(name, &["theta", "value_re", "value_im"], false);
    for (theta, v) in f.thetas().zip(f.values()) {
        t.push(vec![theta, v.re, v.im]);
    }
    t
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEnvelope {
    pub version: String,
    pub config: serde_json::Value,
    pub results: Vec<serde_json::Value>,
    pub verdicts: BTreeMap<String, Verdict>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl ReportEnvelope {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            version: TOOL_VERSION.to_string(),
            config,
            results: Vec::new(),
            verdicts: BTreeMap::new(),
            timings: BTreeMap::new(),
            tables: Vec::new(),
        }
    }

    pub fn any_failed(&self) -> bool {
        self.verdicts.values().any(|v| *v == Verdict::Fail)
    }

    /// Writes `report.json`, every table and `plot.gp` into `dir`, one file at a time.
    pub fn write_to(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for table in &self.tables {
            let path = dir.join(table.file_name());
            fs::write(&path, table.to_csv_string())?;
            written.push(path);
        }
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        let path = dir.join("report.json");
        fs::write(&path, json + "\n")?;
        written.push(path);
        let path = dir.join("plot.gp");
        fs::write(&path, emit_plot_script(self))?;
        written.push(path);
        Ok(written)
    }
}

/// Gnuplot script drawing every table's value columns against its first
/// column; tables flagged `log_scale` get log-log axes.
pub fn emit_plot_script(report: &ReportEnvelope) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator \",\"");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set grid");
    if report.tables.is_empty() {
        let _ = writeln!(s, "set xrange [0:1]");
        let _ = writeln!(s, "set yrange [0:1]");
        let _ = writeln!(s, "plot NaN notitle");
        return s;
    }
    for table in &report.tables {
        let _ = writeln!(s, "\n# {}", table.file_name());
        if table.log_scale {
            let _ = writeln!(s, "set logscale xy");
        } else {
            let _ = writeln!(s, "unset logscale");
        }
        let x = &table.headers[0];
        let curves: Vec<usize> = value_columns(table);
        let y = curves.first().map_or("value", |&c| table.headers[c].as_str());
        let _ = writeln!(s, "set xlabel \"{x}\"");
        let _ = writeln!(s, "set ylabel \"{y}\"");
        if curves.is_empty() {
            let _ = writeln!(s, "plot NaN notitle");
            continue;
        }
        let parts: Vec<String> = curves
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let file = if k == 0 { format!("\"{}\"", table.file_name()) } else { "\"\"".to_string() };
                format!("{file} using 1:{} with linespoints title \"{}\"", c + 1, table.headers[c])
            })
            .collect();
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
        let _ = writeln!(s, "pause -1");
    }
    s
}

fn value_columns(table: &Table) -> Vec<usize> {
    const PREFERRED: [&str; 3] = ["trace_integral", "cm_integral", "lower_bound"];
    let picked: Vec<usize> = PREFERRED.iter().filter_map(|h| table.column(h)).collect();
    if !picked.is_empty() {
        return picked;
    }
    (1..table.headers.len()).take(1).collect()
}
