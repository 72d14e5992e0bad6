//! Tables and plot series written by the command-line front end.
//!
//! Every table is a CSV with a header row; every plot series is tidy long
//! format (`series,day,kind,value`). Column layouts are listed in
//! `docs/formats.md`.

use std::fmt::Write as _;
use std::path::Path;

use crate::archive::DrawArchive;
use crate::diagnostics::{random_walk_errors, DicSummary, ForecastSeries};
use crate::error::{Error, Result};
use crate::model::{DUMMY_NAMES, THETA_NAMES};
use crate::stats::PosteriorSummary;

pub const SUMMARY_HEADER: [&str; 5] = ["parameter", "estimate", "sd", "2.5th", "97.5th"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Platform,
    Hierarchy,
    Complement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub block: Block,
    pub parameter: String,
    pub summary: PosteriorSummary,
}

fn design_label(row: usize) -> String {
    match row {
        0 => "intercept".into(),
        r => DUMMY_NAMES.get(r - 1).map_or_else(|| format!("d{r}"), |s| s.to_string()),
    }
}

/// Posterior summaries of every traced parameter, plus the hierarchy
/// coefficients `eta` (one row per design column and parameter).
pub fn summary_rows(archive: &DrawArchive) -> Result<Vec<SummaryRow>> {
    if archive.draws.is_empty() {
        return Err(Error::InsufficientDraws("empty archive".into()));
    }
    let ids = &archive.header.complement_ids;
    let mut rows = Vec::new();
    for (name, draws) in archive.traces() {
        let block = if name.starts_with("mean.") {
            Block::Hierarchy
        } else if ids.iter().any(|id| name.starts_with(&format!("{id}."))) {
            Block::Complement
        } else {
            Block::Platform
        };
        rows.push(SummaryRow { block, parameter: name, summary: PosteriorSummary::from_draws(&draws)? });
    }
    if archive.header.hierarchical {
        let n_rows = archive.draws[0].eta.len();
        for r in 0..n_rows {
            for (k, theta) in THETA_NAMES.iter().enumerate() {
                let draws: Vec<f64> = archive.draws.iter().map(|d| d.eta[r][k]).collect();
                rows.push(SummaryRow {
                    block: Block::Hierarchy,
                    parameter: format!("eta.{}.{theta}", design_label(r)),
                    summary: PosteriorSummary::from_draws(&draws)?,
                });
            }
        }
        for (k, theta) in THETA_NAMES.iter().enumerate() {
            let draws: Vec<f64> = archive.draws.iter().map(|d| d.residual_var[k]).collect();
            rows.push(SummaryRow {
                block: Block::Hierarchy,
                parameter: format!("sigma2.{theta}"),
                summary: PosteriorSummary::from_draws(&draws)?,
            });
        }
    }
    Ok(rows)
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })
}

fn num(x: f64) -> String {
    format!("{x:.6e}")
}

/// `parameter,estimate,sd,2.5th,97.5th` for the rows of one block.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow], block: Block) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows.iter().filter(|r| r.block == block) {
        let s = r.summary;
        w.write_record([r.parameter.clone(), num(s.estimate), num(s.sd), num(s.q025), num(s.q975)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fixed-width text rendering of the summary rows, significant entries starred.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    for (block, title) in
        [(Block::Platform, "Platform"), (Block::Hierarchy, "Complement population"), (Block::Complement, "Complements")]
    {
        let rs: Vec<&SummaryRow> = rows.iter().filter(|r| r.block == block).collect();
        if rs.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{title}");
        let _ = writeln!(out, "  {:<28} {:>13} {:>13} {:>13} {:>13}", "", "Estimate", "Std. Dev.", "2.5th", "97.5th");
        for r in rs {
            let s = r.summary;
            let star = if s.significant() { "*" } else { "" };
            let _ = writeln!(
                out,
                "  {:<28} {:>13.4e} {:>13.4e} {:>13.4e} {:>13.4e}{star}",
                r.parameter, s.estimate, s.sd, s.q025, s.q975
            );
        }
        let _ = writeln!(out);
    }
    out
}

/// Model-comparison table: `variant,dic,p_d,ll_at_mean`.
pub fn write_variant_table(path: &Path, rows: &[(String, DicSummary)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["variant", "dic", "p_d", "ll_at_mean"])?;
    for (name, d) in rows {
        w.write_record([name.clone(), num(d.dic), num(d.p_d), num(d.ll_at_mean)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Forecast accuracy per series next to the random-walk baseline:
/// `series,mad,mse,rw_mad,rw_mse`.
pub fn write_forecast_metrics(path: &Path, series: &[ForecastSeries]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["series", "mad", "mse", "rw_mad", "rw_mse"])?;
    for s in series {
        let (rw_mad, rw_mse) = random_walk_errors(&s.observed);
        w.write_record([s.label.clone(), num(s.mad), num(s.mse), num(rw_mad), num(rw_mse)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Observed and one-step predicted values with a 95% band, long format:
/// `series,day,kind,value` with kind in observed / predicted / lower / upper.
pub fn write_forecast_series(path: &Path, series: &[ForecastSeries]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["series", "day", "kind", "value"])?;
    for s in series {
        for i in 0..s.days.len() {
            let day = s.days[i].to_string();
            if let Some(y) = s.observed[i] {
                w.write_record([s.label.as_str(), &day, "observed", &num(y)])?;
            }
            let (p, sd) = (s.predicted[i], s.sd[i]);
            w.write_record([s.label.as_str(), &day, "predicted", &num(p)])?;
            w.write_record([s.label.as_str(), &day, "lower", &num(p - 1.96 * sd)])?;
            w.write_record([s.label.as_str(), &day, "upper", &num(p + 1.96 * sd)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Latent path posterior means from the stored paths, long format
/// `series,day,kind,value` with kind `filtered_mean`.
pub fn write_path_series(path: &Path, archive: &DrawArchive, launches: &[usize]) -> Result<()> {
    let stored: Vec<_> = archive.draws.iter().filter(|d| d.platform_path.is_some()).collect();
    let mut w = writer(path)?;
    w.write_record(["series", "day", "kind", "value"])?;
    if let Some(first) = stored.first() {
        let n = stored.len() as f64;
        let t = first.platform_path.as_ref().map_or(0, Vec::len);
        for i in 0..t {
            let m = stored.iter().map(|d| d.platform_path.as_ref().unwrap()[i]).sum::<f64>() / n;
            w.write_record(["platform", &(i + 1).to_string(), "path_mean", &num(m)])?;
        }
        let ids = &archive.header.complement_ids;
        for (j, id) in ids.iter().enumerate() {
            let len = first.complement_paths.as_ref().map_or(0, |p| p[j].len());
            for i in 0..len {
                let m = stored.iter().map(|d| d.complement_paths.as_ref().unwrap()[j][i]).sum::<f64>() / n;
                let day = launches.get(j).copied().unwrap_or(1) + i;
                w.write_record([id.as_str(), &day.to_string(), "path_mean", &num(m)])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trace of every parameter, long format `parameter,draw,value`.
pub fn write_traces(path: &Path, archive: &DrawArchive) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["parameter", "draw", "value"])?;
    for (name, draws) in archive.traces() {
        for (i, v) in draws.iter().enumerate() {
            w.write_record([name.as_str(), &i.to_string(), &num(*v)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
