//! Per-length exposure report and its CSV / JSON serialization.
//!
//! CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `l` | length, from 1 |
//! | `eps_le_l` | `ε_≤l` |
//! | `R_le_l` | regret `R_≤l` |
//! | `acc_err` | `AccErr_≤(l)` or `NA` |
//! | `pct_ex_acc_err` | `%ExAccErr_≤(l)` or `NA` |
//! | `bound_lo`, `bound_hi` | `l·ε_≤l`, `l²·ε_≤l` |
//! | `stderr` | bootstrap standard error of `R_≤l` |
//! | `stderr_eps_le_l` | bootstrap standard error of `ε_≤l` |
//! | `stderr_pct_ex_acc_err` | paired-bootstrap standard error of `%ExAccErr_≤(l)` or `NA` |
//! | `H_le_l` | model entropy rate on held-out positions up to `l` |
//! | `n_active` | rollouts still active at step `l` |
//!
//! Floats use the shortest representation that parses back to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::accumulation::{acc_err, bound_diagnostic, excess_acc_err, BoundDiagnostic};
use super::eps::{cumsum, PerStepErrorSeries};
use super::regret::RegretCurve;
use super::stats::sample_std;
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 12] = [
    "l",
    "eps_le_l",
    "R_le_l",
    "acc_err",
    "pct_ex_acc_err",
    "bound_lo",
    "bound_hi",
    "stderr",
    "stderr_eps_le_l",
    "stderr_pct_ex_acc_err",
    "H_le_l",
    "n_active",
];

pub const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub spec: String,
    pub seed: u64,
    pub horizon: usize,
    pub prompts: usize,
    pub heldout_sequences: usize,
    pub bootstrap_resamples: usize,
    pub oracle_id: String,
    pub model_id: String,
    /// The full run configuration that produced the report.
    pub run_config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub l: usize,
    pub eps_le_l: f64,
    pub r_le_l: f64,
    pub acc_err: Option<f64>,
    pub pct_ex_acc_err: Option<f64>,
    pub bound_lo: f64,
    pub bound_hi: f64,
    pub stderr: f64,
    pub stderr_eps_le_l: f64,
    pub stderr_pct_ex_acc_err: Option<f64>,
    pub h_le_l: f64,
    pub n_active: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExposureReport {
    pub metadata: ReportMetadata,
    pub bound: BoundDiagnostic,
    pub rows: Vec<ReportRow>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    metadata: &'a ReportMetadata,
    bound: &'a BoundDiagnostic,
    columns: &'a [&'a str],
}

impl ExposureReport {
    /// Joins the two series up to the shorter length. The ε bootstrap uses
    /// `metadata.seed` and pairs its replicates index-wise with the regret
    /// replicates for the `%ExAccErr` error.
    pub fn new(eps: &PerStepErrorSeries, curve: &RegretCurve, metadata: ReportMetadata) -> Result<Self> {
        let len = eps.len().min(curve.len());
        if len == 0 {
            return Err(Error::param("report needs at least one step of ε and regret"));
        }
        let eps_t = &eps.eps_t[..len];
        let r = &curve.r_le_l[..len];
        let cum = cumsum(eps_t);
        let acc = acc_err(r, eps_t);
        let ex = excess_acc_err(r, eps_t);
        let h = eps.entropy_rate_le();

        let eps_reps = eps.bootstrap_cumulative(metadata.bootstrap_resamples, metadata.seed);
        let paired = eps_reps.len().min(curve.replicates.len());

        let rows = (0..len)
            .map(|i| {
                let l = (i + 1) as f64;
                let eps_col: Vec<f64> = eps_reps.iter().map(|c| c[i] / l).collect();
                let ex_col: Vec<f64> = (0..paired)
                    .filter_map(|b| {
                        let c = eps_reps[b][i];
                        (c > 0.0).then(|| (curve.replicates[b][i] - c) / c * 100.0)
                    })
                    .collect();
                ReportRow {
                    l: i + 1,
                    eps_le_l: cum[i] / l,
                    r_le_l: r[i],
                    acc_err: acc[i],
                    pct_ex_acc_err: ex[i],
                    bound_lo: cum[i],
                    bound_hi: l * cum[i],
                    stderr: curve.stderr_le_l[i],
                    stderr_eps_le_l: sample_std(&eps_col),
                    stderr_pct_ex_acc_err: (ex[i].is_some() && ex_col.len() == paired && paired > 1)
                        .then(|| sample_std(&ex_col)),
                    h_le_l: h[i],
                    n_active: curve.counts_t[i],
                }
            })
            .collect();
        Ok(Self {
            bound: bound_diagnostic(eps_t, r, len),
            metadata,
            rows,
        })
    }

    pub fn row(&self, l: usize) -> Option<&ReportRow> {
        l.checked_sub(1).and_then(|i| self.rows.get(i))
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    pub fn sidecar_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&Sidecar {
            metadata: &self.metadata,
            bound: &self.bound,
            columns: &CSV_COLUMNS,
        })?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns both paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        fs::write(&json, self.sidecar_json()?).map_err(|e| Error::io(&json, e))?;
        Ok((csv, json))
    }
}

pub fn fmt_float(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), fmt_float)
}

/// Header plus rows, quoting only fields that need it.
pub(crate) fn write_records(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for rec in std::iter::once(header.iter().map(|h| h.to_string()).collect::<Vec<_>>()).chain(rows.iter().cloned()) {
        w.write_record(&rec).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("utf-8 fields")
}

/// Records after a header that must equal `header`, each with its 1-based line.
pub(crate) fn read_records(text: &str, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(i + 1, |p| p.line() as usize),
            column: 1,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 {
            if rec.iter().ne(header.iter().copied()) {
                return Err(Error::Parse {
                    line,
                    column: 1,
                    message: format!("expected header `{}`", header.join(",")),
                });
            }
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                column: 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    if out.is_empty() && text.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected header `{}`", header.join(",")),
        });
    }
    Ok(out)
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.l,
            fmt_float(r.eps_le_l),
            fmt_float(r.r_le_l),
            fmt_opt(r.acc_err),
            fmt_opt(r.pct_ex_acc_err),
            fmt_float(r.bound_lo),
            fmt_float(r.bound_hi),
            fmt_float(r.stderr),
            fmt_float(r.stderr_eps_le_l),
            fmt_opt(r.stderr_pct_ex_acc_err),
            fmt_float(r.h_le_l),
            r.n_active,
        );
    }
    out
}

/// Parses a report CSV written by [`ExposureReport::to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, h)| h).unwrap_or("");
    if header != CSV_COLUMNS.join(",") {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected header `{}`", CSV_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CSV_COLUMNS.len() {
            return Err(Error::Parse {
                line: i + 1,
                column: 1,
                message: format!("expected {} fields, found {}", CSV_COLUMNS.len(), fields.len()),
            });
        }
        let err = |col: usize, what: &str| Error::Parse {
            line: i + 1,
            column: col + 1,
            message: format!("bad {} value `{}`", what, fields[col]),
        };
        let f = |col: usize| fields[col].parse::<f64>().map_err(|_| err(col, CSV_COLUMNS[col]));
        let o = |col: usize| {
            if fields[col] == NA {
                Ok(None)
            } else {
                f(col).map(Some)
            }
        };
        let u = |col: usize| fields[col].parse::<usize>().map_err(|_| err(col, CSV_COLUMNS[col]));
        rows.push(ReportRow {
            l: u(0)?,
            eps_le_l: f(1)?,
            r_le_l: f(2)?,
            acc_err: o(3)?,
            pct_ex_acc_err: o(4)?,
            bound_lo: f(5)?,
            bound_hi: f(6)?,
            stderr: f(7)?,
            stderr_eps_le_l: f(8)?,
            stderr_pct_ex_acc_err: o(9)?,
            h_le_l: f(10)?,
            n_active: u(11)?,
        });
    }
    Ok(rows)
}
