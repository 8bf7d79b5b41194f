//! CSV and JSON artifact formats shared by the library and the CLI.
//!
//! Writers emit a short comment header (`# generated-by: ...` and, when a
//! configuration hash is supplied, `# config-sha256: ...`) so every
//! artifact names the run that produced it; readers skip `#` comment
//! lines. No timestamps are embedded, so a rerun on identical inputs is
//! byte-identical.
//!
//! Formats:
//!
//! - series CSV: `date,value`, dates as `YYYY-MM`, missing value = empty
//!   field, months consecutive;
//! - panel CSV: `date` plus one named column per variable, empty = missing;
//! - lunar override CSV: `year,month,day`;
//! - outlier findings CSV: `date,type,omega,t_stat`; census CSV:
//!   `date,count`;
//! - grid report CSV:
//!   `p,q,P,Q,tau1,tau2,tau3,c_fit,bic,c_fc,r_fit,r_bic,r_fc,rank_sum`,
//!   plus a JSON top-N summary;
//! - backtest CSV per horizon: `origin,forecast,actual,error`; summary
//!   CSV: `h,rmse,rmse_over_sigma0`; error-trace CSV: `month,error`;
//! - decomposition CSV:
//!   `date,raw,sf_effect,trend,seasonal,irregular,adjusted`;
//! - factor loadings CSV: `covariate,factor1..factorR` with
//!   variance-share rows appended;
//! - fitted-model JSON: a lossless [`ModelDocument`].

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::backtest::{ForecastReport, HorizonTrace};
use crate::diffusion::FactorModel;
use crate::error::{Error, Result};
use crate::outlierscan::{OutlierCensus, OutlierFinding};
use crate::sarimax::FittedModel;
use crate::seasadj::Decomposition;
use crate::selection::GridResult;
use crate::timeseries::{Month, MonthlySeries, Panel};

/// Provenance stamped on every artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    /// Tool name and version, e.g. `cpikit 0.1.0`.
    pub generated_by: String,
    /// SHA-256 of the canonical configuration document, when one exists.
    pub config_sha256: Option<String>,
}

impl ArtifactMeta {
    pub fn new() -> Self {
        ArtifactMeta {
            generated_by: format!("cpikit {}", env!("CARGO_PKG_VERSION")),
            config_sha256: None,
        }
    }

    pub fn with_config_hash(hash: impl Into<String>) -> Self {
        ArtifactMeta {
            config_sha256: Some(hash.into()),
            ..ArtifactMeta::new()
        }
    }
}

impl Default for ArtifactMeta {
    fn default() -> Self {
        ArtifactMeta::new()
    }
}

/// Writes the standard `#`-comment metadata header that opens every
/// artifact. Exposed so downstream writers (e.g. CLI-specific reports)
/// emit the same header as the built-in formats.
pub fn write_comment_header<W: Write>(w: &mut W, meta: &ArtifactMeta) -> Result<()> {
    writeln!(w, "# generated-by: {}", meta.generated_by)?;
    if let Some(hash) = &meta.config_sha256 {
        writeln!(w, "# config-sha256: {hash}")?;
    }
    Ok(())
}

fn csv_err(path: &str, detail: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_string(),
        detail: detail.into(),
    }
}

/// Converts a `csv` crate error on the write side.
fn wcsv(e: csv::Error) -> Error {
    Error::Csv {
        path: "<output>".to_string(),
        detail: e.to_string(),
    }
}

/// Shortest decimal form that parses back to the same bits.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Empty field for NaN, shortest round-trip form otherwise.
fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        fmt_f64(v)
    }
}

fn none_if_nan(v: f64) -> Option<f64> {
    if v.is_nan() {
        None
    } else {
        Some(v)
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn record_line(rec: &csv::StringRecord, fallback_row: usize) -> u64 {
    rec.position()
        .map(|p| p.line())
        .unwrap_or(fallback_row as u64)
}

// ---------------------------------------------------------------------
// Series and panel CSV
// ---------------------------------------------------------------------

/// Reads a `date,value` CSV into a monthly series.
///
/// `path` labels error messages only; months must be consecutive and an
/// empty value field marks a missing observation.
pub fn read_series_csv<R: Read>(r: R, path: &str) -> Result<MonthlySeries> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(|e| csv_err(path, e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "value" {
        return Err(csv_err(
            path,
            format!("header must be `date,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut start: Option<Month> = None;
    let mut values: Vec<Option<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e.to_string()))?;
        let line = record_line(&rec, i + 2);
        let month: Month = rec[0]
            .parse()
            .map_err(|e| csv_err(path, format!("line {line}: {e}")))?;
        if let Some(s) = start {
            let expected = s.plus(values.len() as i64);
            if month != expected {
                return Err(csv_err(
                    path,
                    format!("line {line}: expected {expected}, found {month} (months must be consecutive)"),
                ));
            }
        } else {
            start = Some(month);
        }
        let field = &rec[1];
        values.push(if field.is_empty() {
            None
        } else {
            Some(field.parse::<f64>().map_err(|e| {
                csv_err(path, format!("line {line}: bad value `{field}`: {e}"))
            })?)
        });
    }
    let start = start.ok_or_else(|| csv_err(path, "no data rows"))?;
    MonthlySeries::from_options(start, values)
}

/// Writes a monthly series as `date,value` rows (missing = empty field).
pub fn write_series_csv<W: Write>(
    mut w: W,
    series: &MonthlySeries,
    meta: &ArtifactMeta,
) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "value"]).map_err(wcsv)?;
    for i in 0..series.len() {
        let value = series.value(i).map(fmt_f64).unwrap_or_default();
        out.write_record([series.month_at(i).to_string(), value])
            .map_err(wcsv)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `date,<name>,...` CSV into a month-aligned panel; empty cells
/// become missing (NaN).
pub fn read_panel_csv<R: Read>(r: R, path: &str) -> Result<Panel> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(|e| csv_err(path, e.to_string()))?;
    if headers.len() < 2 || &headers[0] != "date" {
        return Err(csv_err(
            path,
            "header must be `date` followed by at least one column name",
        ));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let ncols = names.len();

    let mut start: Option<Month> = None;
    let mut cells: Vec<f64> = Vec::new();
    let mut nrows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e.to_string()))?;
        let line = record_line(&rec, i + 2);
        let month: Month = rec[0]
            .parse()
            .map_err(|e| csv_err(path, format!("line {line}: {e}")))?;
        if let Some(s) = start {
            let expected = s.plus(nrows as i64);
            if month != expected {
                return Err(csv_err(
                    path,
                    format!("line {line}: expected {expected}, found {month} (months must be consecutive)"),
                ));
            }
        } else {
            start = Some(month);
        }
        for j in 0..ncols {
            let field = &rec[j + 1];
            cells.push(if field.is_empty() {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|e| {
                    csv_err(
                        path,
                        format!("line {line}, column `{}`: bad value `{field}`: {e}", names[j]),
                    )
                })?
            });
        }
        nrows += 1;
    }
    let start = start.ok_or_else(|| csv_err(path, "no data rows"))?;
    Panel::new(
        start,
        names,
        nalgebra::DMatrix::from_row_slice(nrows, ncols, &cells),
    )
}

/// Writes a panel as `date,<name>,...` rows (missing cell = empty field).
pub fn write_panel_csv<W: Write>(mut w: W, panel: &Panel, meta: &ArtifactMeta) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(panel.names().iter().cloned());
    out.write_record(&header).map_err(wcsv)?;
    for i in 0..panel.nrows() {
        let mut row = vec![panel.month_at(i).to_string()];
        for j in 0..panel.ncols() {
            row.push(fmt_opt(panel.data()[(i, j)]));
        }
        out.write_record(&row).map_err(wcsv)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `year,month,day` CSV of Spring Festival dates, for
/// [`LunarTable::from_entries`](crate::calendar::LunarTable::from_entries)
/// or
/// [`LunarTable::with_overrides`](crate::calendar::LunarTable::with_overrides).
pub fn read_lunar_csv<R: Read>(r: R, path: &str) -> Result<Vec<(i32, u32, u32)>> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(|e| csv_err(path, e.to_string()))?;
    if headers.len() != 3 || &headers[0] != "year" || &headers[1] != "month" || &headers[2] != "day"
    {
        return Err(csv_err(path, "header must be `year,month,day`"));
    }
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e.to_string()))?;
        let line = record_line(&rec, i + 2);
        let parse = |field: &str, what: &str| -> Result<u32> {
            field
                .parse::<u32>()
                .map_err(|e| csv_err(path, format!("line {line}: bad {what} `{field}`: {e}")))
        };
        let year = rec[0]
            .parse::<i32>()
            .map_err(|e| csv_err(path, format!("line {line}: bad year `{}`: {e}", &rec[0])))?;
        entries.push((year, parse(&rec[1], "month")?, parse(&rec[2], "day")?));
    }
    Ok(entries)
}

// ---------------------------------------------------------------------
// Outlier reports
// ---------------------------------------------------------------------

/// Writes outlier findings as `date,type,omega,t_stat` rows.
pub fn write_findings_csv<W: Write>(
    mut w: W,
    findings: &[OutlierFinding],
    meta: &ArtifactMeta,
) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "type", "omega", "t_stat"])
        .map_err(wcsv)?;
    for f in findings {
        out.write_record([
            f.month().to_string(),
            f.kind().label().to_string(),
            fmt_f64(f.omega()),
            fmt_f64(f.t_stat()),
        ])
        .map_err(wcsv)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the per-month outlier census as `date,count` rows.
pub fn write_census_csv<W: Write>(
    mut w: W,
    census: &OutlierCensus,
    meta: &ArtifactMeta,
) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "count"]).map_err(wcsv)?;
    for (i, &count) in census.counts().iter().enumerate() {
        out.write_record([census.month_at(i).to_string(), count.to_string()])
            .map_err(wcsv)?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// Grid reports
// ---------------------------------------------------------------------

/// Writes every evaluated grid cell as
/// `p,q,P,Q,tau1,tau2,tau3,c_fit,bic,c_fc,r_fit,r_bic,r_fc,rank_sum`.
/// Failed cells leave the three criterion fields empty and keep their
/// (last-place) ranks.
pub fn write_grid_csv<W: Write>(mut w: W, grid: &GridResult, meta: &ArtifactMeta) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "p", "q", "P", "Q", "tau1", "tau2", "tau3", "c_fit", "bic", "c_fc", "r_fit", "r_bic",
        "r_fc", "rank_sum",
    ])
    .map_err(wcsv)?;
    for cell in grid.cells() {
        let (p, q, sp, sq) = cell.order;
        out.write_record([
            p.to_string(),
            q.to_string(),
            sp.to_string(),
            sq.to_string(),
            cell.window.tau1.to_string(),
            cell.window.tau2.to_string(),
            cell.window.tau3.to_string(),
            fmt_opt(cell.scores.c_fit),
            fmt_opt(cell.scores.bic),
            fmt_opt(cell.scores.c_fc),
            cell.scores.r_fit.to_string(),
            cell.scores.r_bic.to_string(),
            cell.scores.r_fc.to_string(),
            cell.scores.rank_sum().to_string(),
        ])
        .map_err(wcsv)?;
    }
    out.flush()?;
    Ok(())
}

/// Score ceilings used to count qualifying candidates in a grid summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridThresholds {
    pub c_fit: f64,
    pub bic: f64,
    pub c_fc: f64,
}

/// One order's line in the JSON grid summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummaryEntry {
    pub p: usize,
    pub q: usize,
    #[serde(rename = "P")]
    pub seasonal_p: usize,
    #[serde(rename = "Q")]
    pub seasonal_q: usize,
    pub tau1: u32,
    pub tau2: u32,
    pub tau3: u32,
    pub c_fit: Option<f64>,
    pub bic: Option<f64>,
    pub c_fc: Option<f64>,
    pub r_fit: usize,
    pub r_bic: usize,
    pub r_fc: usize,
    pub rank_sum: usize,
    pub failure: Option<String>,
}

/// The JSON summary of a grid search: the top-N orders at their best
/// windows, plus how many orders clear the supplied score ceilings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummaryDocument {
    pub meta: ArtifactMeta,
    pub sigma0: f64,
    pub n_orders: usize,
    pub n_windows: usize,
    pub thresholds: Option<GridThresholds>,
    /// Orders whose best-window scores meet all three thresholds.
    pub n_qualifying: Option<usize>,
    pub top: Vec<GridSummaryEntry>,
    pub notes: Vec<String>,
}

/// Assembles the JSON summary of a finished grid search.
pub fn grid_summary(
    grid: &GridResult,
    top_n: usize,
    thresholds: Option<GridThresholds>,
    meta: &ArtifactMeta,
) -> GridSummaryDocument {
    let entry = |s: &crate::selection::OrderSummary| {
        let (p, q, sp, sq) = s.order;
        GridSummaryEntry {
            p,
            q,
            seasonal_p: sp,
            seasonal_q: sq,
            tau1: s.tau_star.tau1,
            tau2: s.tau_star.tau2,
            tau3: s.tau_star.tau3,
            c_fit: none_if_nan(s.scores.c_fit),
            bic: none_if_nan(s.scores.bic),
            c_fc: none_if_nan(s.scores.c_fc),
            r_fit: s.scores.r_fit,
            r_bic: s.scores.r_bic,
            r_fc: s.scores.r_fc,
            rank_sum: s.scores.rank_sum(),
            failure: s.failure.clone(),
        }
    };
    let n_qualifying = thresholds.map(|t| {
        grid.summaries()
            .iter()
            .filter(|s| {
                s.failure.is_none()
                    && s.scores.c_fit <= t.c_fit
                    && s.scores.bic <= t.bic
                    && s.scores.c_fc <= t.c_fc
            })
            .count()
    });
    GridSummaryDocument {
        meta: meta.clone(),
        sigma0: grid.sigma0(),
        n_orders: grid.summaries().len(),
        n_windows: grid.n_windows(),
        thresholds,
        n_qualifying,
        top: grid.top(top_n).iter().map(|s| entry(s)).collect(),
        notes: grid.notes().to_vec(),
    }
}

/// Writes a grid summary as pretty-printed JSON.
pub fn write_grid_summary_json<W: Write>(mut w: W, doc: &GridSummaryDocument) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    Ok(())
}

/// Parses a grid summary back from JSON.
pub fn read_grid_summary_json<R: Read>(r: R) -> Result<GridSummaryDocument> {
    Ok(serde_json::from_reader(r)?)
}

// ---------------------------------------------------------------------
// Backtest reports
// ---------------------------------------------------------------------

/// Writes one horizon's trace as `origin,forecast,actual,error` rows.
pub fn write_backtest_csv<W: Write>(
    mut w: W,
    trace: &HorizonTrace,
    meta: &ArtifactMeta,
) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["origin", "forecast", "actual", "error"])
        .map_err(wcsv)?;
    for i in 0..trace.len() {
        out.write_record([
            trace.origins()[i].to_string(),
            fmt_f64(trace.forecasts()[i]),
            fmt_f64(trace.actuals()[i]),
            fmt_f64(trace.errors()[i]),
        ])
        .map_err(wcsv)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the per-horizon summary as `h,rmse,rmse_over_sigma0` rows; the
/// ratio column is left empty when no baseline scale is supplied.
pub fn write_backtest_summary_csv<W: Write>(
    mut w: W,
    report: &ForecastReport,
    sigma0: Option<f64>,
    meta: &ArtifactMeta,
) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["h", "rmse", "rmse_over_sigma0"])
        .map_err(wcsv)?;
    for trace in report.traces() {
        let ratio = match sigma0 {
            Some(s) if s > 0.0 => fmt_f64(trace.rmse() / s),
            _ => String::new(),
        };
        out.write_record([trace.horizon().to_string(), fmt_f64(trace.rmse()), ratio])
            .map_err(wcsv)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes one horizon's plot trace as `month,error` rows, dated at the
/// forecast target month.
pub fn write_error_trace_csv<W: Write>(
    mut w: W,
    trace: &HorizonTrace,
    meta: &ArtifactMeta,
) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["month", "error"]).map_err(wcsv)?;
    for (target, &err) in trace.targets().iter().zip(trace.errors()) {
        out.write_record([target.to_string(), fmt_f64(err)])
            .map_err(wcsv)?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// Seasonal decomposition
// ---------------------------------------------------------------------

/// Writes a decomposition as
/// `date,raw,sf_effect,trend,seasonal,irregular,adjusted` rows.
pub fn write_decomposition_csv<W: Write>(
    mut w: W,
    d: &Decomposition,
    meta: &ArtifactMeta,
) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "date",
        "raw",
        "sf_effect",
        "trend",
        "seasonal",
        "irregular",
        "adjusted",
    ])
    .map_err(wcsv)?;
    let series = [
        d.raw(),
        d.sf_effect(),
        d.trend(),
        d.seasonal(),
        d.irregular(),
        d.adjusted(),
    ];
    for i in 0..d.raw().len() {
        let mut row = vec![d.raw().month_at(i).to_string()];
        for s in series {
            row.push(s.value(i).map(fmt_f64).unwrap_or_default());
        }
        out.write_record(&row).map_err(wcsv)?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// Factor loadings
// ---------------------------------------------------------------------

/// Writes the loading matrix as `covariate,factor1..factorR` rows, one
/// per named variable, followed by `variance_share` and
/// `cumulative_share` rows.
pub fn write_loadings_csv<W: Write>(
    mut w: W,
    model: &FactorModel,
    names: &[String],
    meta: &ArtifactMeta,
) -> Result<()> {
    let n = model.loadings().nrows();
    if names.len() != n {
        return Err(Error::InvalidParam(format!(
            "{} names for {} loading rows",
            names.len(),
            n
        )));
    }
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    let r = model.r();
    let mut header = vec!["covariate".to_string()];
    header.extend((1..=r).map(|j| format!("factor{j}")));
    out.write_record(&header).map_err(wcsv)?;
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..r).map(|j| fmt_f64(model.loadings()[(i, j)])));
        out.write_record(&row).map_err(wcsv)?;
    }
    let shares = model.variance_shares();
    let mut share_row = vec!["variance_share".to_string()];
    share_row.extend(shares.iter().map(|&s| fmt_f64(s)));
    out.write_record(&share_row).map_err(wcsv)?;
    let mut acc = 0.0;
    let mut cum_row = vec!["cumulative_share".to_string()];
    cum_row.extend(shares.iter().map(|&s| {
        acc += s;
        fmt_f64(acc)
    }));
    out.write_record(&cum_row).map_err(wcsv)?;
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// Fitted-model JSON
// ---------------------------------------------------------------------

/// One regressor's metadata and estimate in a [`ModelDocument`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorEntry {
    /// Display name, e.g. `H1` or `AO(2008-02)`.
    pub name: String,
    /// Shape label: `H1`/`H2`/`H3`/`AO`/`LS`/`TC`/`IO`.
    pub kind: String,
    /// Event month for interventions; absent for holiday columns.
    pub anchor: Option<Month>,
    /// Damping factor for transient changes.
    pub delta: Option<f64>,
    /// Holiday window `(tau1, tau2, tau3)` for holiday columns.
    pub window: Option<(u32, u32, u32)>,
    pub coefficient: f64,
    pub se: Option<f64>,
    /// False when differencing annihilated the column and the
    /// coefficient is a placeholder zero.
    pub active: bool,
}

/// A fitted model as a self-contained JSON document; serializing and
/// parsing it back is lossless.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub meta: ArtifactMeta,
    pub p: usize,
    pub d: usize,
    pub q: usize,
    #[serde(rename = "P")]
    pub seasonal_p: usize,
    #[serde(rename = "D")]
    pub seasonal_d: usize,
    #[serde(rename = "Q")]
    pub seasonal_q: usize,
    pub season: usize,
    pub sample_start: Month,
    pub sample_end: Month,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub seasonal_phi: Vec<f64>,
    pub seasonal_theta: Vec<f64>,
    /// Standard errors for `[phi, theta, seasonal_phi, seasonal_theta]`;
    /// absent entries were not computed.
    pub arma_se: Vec<Option<f64>>,
    pub mean_regressors: Vec<RegressorEntry>,
    pub innovation_pulses: Vec<RegressorEntry>,
    pub sigma_a: f64,
    pub sigma2_mle: f64,
    pub loglik: f64,
    pub n_effective: usize,
}

/// Flattens a fitted model into its JSON document form.
pub fn model_document(model: &FittedModel, meta: &ArtifactMeta) -> ModelDocument {
    let spec = model.spec();
    let params = model.params();
    let mean_regressors = spec
        .mean_regressors()
        .iter()
        .enumerate()
        .map(|(i, col)| RegressorEntry {
            name: col.name(),
            kind: col.kind().label().to_string(),
            anchor: col.anchor(),
            delta: col.delta(),
            window: col.window().map(|w| (w.tau1, w.tau2, w.tau3)),
            coefficient: params.beta[i],
            se: none_if_nan(model.beta_se()[i]),
            active: model.active_mean()[i],
        })
        .collect();
    let innovation_pulses = spec
        .innovation_pulses()
        .iter()
        .enumerate()
        .map(|(i, col)| RegressorEntry {
            name: col.name(),
            kind: col.kind().label().to_string(),
            anchor: col.anchor(),
            delta: col.delta(),
            window: None,
            coefficient: params.omega_io[i],
            se: none_if_nan(model.io_se()[i]),
            active: true,
        })
        .collect();
    ModelDocument {
        meta: meta.clone(),
        p: spec.p(),
        d: spec.d(),
        q: spec.q(),
        seasonal_p: spec.seasonal_p(),
        seasonal_d: spec.seasonal_d(),
        seasonal_q: spec.seasonal_q(),
        season: spec.season(),
        sample_start: model.series().start(),
        sample_end: model.series().end(),
        phi: params.phi.clone(),
        theta: params.theta.clone(),
        seasonal_phi: params.seasonal_phi.clone(),
        seasonal_theta: params.seasonal_theta.clone(),
        arma_se: model.arma_se().iter().map(|&v| none_if_nan(v)).collect(),
        mean_regressors,
        innovation_pulses,
        sigma_a: model.sigma_a(),
        sigma2_mle: model.sigma2_mle(),
        loglik: model.loglik(),
        n_effective: model.n_effective(),
    }
}

/// Writes a model document as pretty-printed JSON.
pub fn write_model_json<W: Write>(mut w: W, doc: &ModelDocument) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    Ok(())
}

/// Parses a model document back from JSON.
pub fn read_model_json<R: Read>(r: R) -> Result<ModelDocument> {
    Ok(serde_json::from_reader(r)?)
}
