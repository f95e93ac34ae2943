//! Sparsity metrics, per-run reports, tables and CSV/JSON export.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::solver_irls2::{Irls2Report, Variant};

/// Magnitude at or below which a coefficient counts as zero.
pub const ZERO_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SparsityMetrics {
    /// `#{k : |x_k| > 1e-10}`.
    pub nnz: usize,
    /// `#{k : |x_k| <= 1e-10}`.
    pub nz_complement: usize,
    pub lp_quasi_norm: f64,
    /// `#{k : |x_k| < eps}` at the final smoothing level.
    pub singular_count: usize,
    pub residual_inf: f64,
}

impl SparsityMetrics {
    pub fn compute(x: &[f64], pk: &[f64], eps: f64, residual_inf: f64) -> Result<Self> {
        let (nnz, nz_complement) = sparsity_counts(x, ZERO_THRESHOLD);
        Ok(SparsityMetrics {
            nnz,
            nz_complement,
            lp_quasi_norm: lp_quasi_norm(x, pk)?,
            singular_count: singular_count(x, eps)?,
            residual_inf,
        })
    }

    pub fn len(&self) -> usize {
        self.nnz + self.nz_complement
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the entries below `eps` are exactly the ones counted as zero.
    pub fn singular_consistent(&self) -> bool {
        self.singular_count == self.nz_complement
    }
}

/// `(|x|_0, |x|_0^c)` for the given threshold.
pub fn sparsity_counts(x: &[f64], thresh: f64) -> (usize, usize) {
    let nnz = x.iter().filter(|v| v.abs() > thresh).count();
    (nnz, x.len() - nnz)
}

/// `sum_k |x_k|^{p_k}`.
pub fn lp_quasi_norm(x: &[f64], pk: &[f64]) -> Result<f64> {
    check_len(x.len(), pk.len())?;
    Ok(x.iter().zip(pk).map(|(v, p)| v.abs().powf(*p)).sum())
}

pub fn singular_count(x: &[f64], eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    Ok(x.iter().filter(|v| v.abs() < eps).count())
}

/// The per-(problem, alpha) record written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub alpha: f64,
    pub iters: usize,
    pub nnz_c: usize,
    pub lp: f64,
    pub residual_inf: f64,
    pub sp: usize,
    pub eps_final: f64,
    pub variant: Variant,
}

impl RunRecord {
    pub fn from_irls2(r: &Irls2Report) -> Self {
        RunRecord {
            alpha: r.alpha,
            iters: r.total_inner_iters,
            nnz_c: r.metrics.nz_complement,
            lp: r.metrics.lp_quasi_norm,
            residual_inf: r.metrics.residual_inf,
            sp: r.metrics.singular_count,
            eps_final: r.eps_final,
            variant: r.variant,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }
}

/// One line of a solver trace (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub solver: String,
    pub alpha: f64,
    pub eps: f64,
    pub iter: usize,
    pub objective: f64,
    pub residual: f64,
}

pub fn irls2_trace(r: &Irls2Report) -> Vec<TraceRecord> {
    r.stages
        .iter()
        .flat_map(|s| {
            s.trace.iter().map(move |t| TraceRecord {
                solver: "irls2".into(),
                alpha: r.alpha,
                eps: s.eps,
                iter: t.iter,
                objective: t.objective,
                residual: t.residual,
            })
        })
        .collect()
}

pub fn write_trace_jsonl<W: Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

const COLUMNS: [&str; 8] = ["alpha", "iters", "nnz_c", "lp", "residual_inf", "sp", "eps_final", "variant"];

fn cells(r: &RunRecord) -> [String; 8] {
    [
        format!("{:e}", r.alpha),
        r.iters.to_string(),
        r.nnz_c.to_string(),
        format!("{:.6e}", r.lp),
        format!("{:.3e}", r.residual_inf),
        r.sp.to_string(),
        format!("{:e}", r.eps_final),
        r.variant.as_str().to_string(),
    ]
}

/// Aligned plain-text table, one row per alpha.
pub fn render_table(records: &[RunRecord]) -> String {
    let rows: Vec<[String; 8]> = records.iter().map(cells).collect();
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([COLUMNS[c].len()]).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    let line = |s: &mut String, items: &[&str]| {
        let parts: Vec<String> = items.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut s, &COLUMNS);
    for r in &rows {
        line(&mut s, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    s
}

pub fn render_csv(records: &[RunRecord]) -> String {
    let mut s = COLUMNS.join(",");
    s.push('\n');
    for r in records {
        s.push_str(&cells(r).join(","));
        s.push('\n');
    }
    s
}

/// `index,value` lines.
pub fn solution_csv(x: &[f64]) -> String {
    let mut s = String::from("index,value\n");
    for (k, v) in x.iter().enumerate() {
        let _ = writeln!(s, "{k},{v:e}");
    }
    s
}

/// A `d x d` grid, one mesh row (fixed second coordinate) per line.
pub fn grid_csv(x: &[f64], d: usize) -> Result<String> {
    check_len(d * d, x.len())?;
    let mut s = String::new();
    for row in x.chunks(d) {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&vals.join(","));
        s.push('\n');
    }
    Ok(s)
}
