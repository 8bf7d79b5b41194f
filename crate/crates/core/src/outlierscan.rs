//! Outlier detection against a fitted model, in the style of Chen and Liu.
//!
//! A fitted model implies an inverse filter `pi(B)` that turns the observed
//! series back into (approximately) white innovations. Each of the four
//! intervention shapes — additive outlier, innovation outlier, level shift,
//! transient change — leaves a characteristic footprint on those filtered
//! residuals, so its magnitude can be estimated by a simple least-squares
//! regression of the residuals on the footprint, one candidate month at a
//! time. Months whose best-fitting shape carries a t-statistic past the
//! critical value are reported.
//!
//! [`detect`] scans one fitted model; [`detect_iterative`] alternates
//! scanning with refitting until the model explains every flagged month; and
//! [`census`] aggregates scan results over a whole model set into per-month
//! frequencies, the diagnostic used to decide whether a seasonal holiday
//! effect has been handled adequately.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{intervention_column, RegressorKind, TC_DELTA_DEFAULT};
use crate::error::{Error, Result};
use crate::poly::{difference_poly, expand_ratio, poly_mul, seasonal_product};
use crate::sarimax::{fit_with_options, FitOptions, FittedModel, SarimaParams, SarimaSpec};
use crate::timeseries::{Month, MonthlySeries};

/// Conventional critical value for monthly samples.
pub const DEFAULT_CRITICAL_VALUE: f64 = 3.5;

/// Cap on detect-then-refit rounds before the scan reports oscillation.
pub const MAX_ITERATIVE_ROUNDS: usize = 10;

/// Magnitudes of the inverse-filter weights past which the scan refuses to
/// continue; only nearly non-invertible models get here.
const PI_EXPLOSION_BOUND: f64 = 1e6;

/// The four intervention shapes the scan can attribute to a month.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutlierKind {
    /// One-month additive spike on the observed series.
    Ao,
    /// One-shot shock entering through the innovation sequence.
    Io,
    /// Permanent step in the level of the series.
    Ls,
    /// Shock that decays geometrically back to the old level.
    Tc,
}

impl OutlierKind {
    /// Conventional two-letter label.
    pub fn label(self) -> &'static str {
        match self {
            OutlierKind::Ao => "AO",
            OutlierKind::Io => "IO",
            OutlierKind::Ls => "LS",
            OutlierKind::Tc => "TC",
        }
    }

    /// The regressor shape that absorbs this outlier when refitting.
    fn regressor_kind(self) -> RegressorKind {
        match self {
            OutlierKind::Ao => RegressorKind::AoPulse,
            OutlierKind::Io => RegressorKind::IoPulse,
            OutlierKind::Ls => RegressorKind::LsStep,
            OutlierKind::Tc => RegressorKind::TcDecay,
        }
    }
}

impl std::fmt::Display for OutlierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One flagged month: the winning shape, its estimated magnitude, and the
/// t-statistic that put it over the threshold.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OutlierFinding {
    month: Month,
    kind: OutlierKind,
    omega: f64,
    t_stat: f64,
}

impl OutlierFinding {
    pub fn month(&self) -> Month {
        self.month
    }

    pub fn kind(&self) -> OutlierKind {
        self.kind
    }

    /// Estimated effect size on the scale of the modeled series.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn t_stat(&self) -> f64 {
        self.t_stat
    }
}

/// Result of [`detect_iterative`]: the final augmented model plus everything
/// flagged along the way.
#[derive(Clone, Debug)]
pub struct IterativeScan {
    model: FittedModel,
    findings: Vec<OutlierFinding>,
    rounds: usize,
    converged: bool,
}

impl IterativeScan {
    /// The model refit with every accepted finding as a regressor.
    pub fn model(&self) -> &FittedModel {
        &self.model
    }

    /// Cumulative findings, strongest first.
    pub fn findings(&self) -> &[OutlierFinding] {
        &self.findings
    }

    /// Number of augment-and-refit rounds performed.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// False when the round cap was hit with flagged months still
    /// outstanding; the model and findings are then a partial result.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn into_model(self) -> FittedModel {
        self.model
    }
}

/// Per-month frequencies of models reporting outliers, over a model set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutlierCensus {
    start: Month,
    counts: Vec<usize>,
    n_models: usize,
    total_findings: usize,
    january_findings: usize,
    february_findings: usize,
}

impl OutlierCensus {
    pub fn start(&self) -> Month {
        self.start
    }

    /// Number of models with at least one finding in each month; aligned
    /// with the scanned series.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn month_at(&self, index: usize) -> Month {
        self.start.plus(index as i64)
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    /// Total findings summed over all models in the set.
    pub fn total_findings(&self) -> usize {
        self.total_findings
    }

    /// Percentage of all findings dated in January (0 when there are none).
    pub fn pct_january(&self) -> f64 {
        self.share(self.january_findings)
    }

    /// Percentage of all findings dated in February.
    pub fn pct_february(&self) -> f64 {
        self.share(self.february_findings)
    }

    /// Percentage of findings outside January and February.
    pub fn pct_other(&self) -> f64 {
        self.share(self.total_findings - self.january_findings - self.february_findings)
    }

    fn share(&self, count: usize) -> f64 {
        if self.total_findings == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.total_findings as f64
        }
    }
}

/// The four candidate regressions at one month: `(omega, t)` in the fixed
/// order AO, IO, LS, TC.
type MonthStats = [(f64, f64); 4];

const KIND_ORDER: [OutlierKind; 4] = [
    OutlierKind::Ao,
    OutlierKind::Io,
    OutlierKind::Ls,
    OutlierKind::Tc,
];

/// Filtered residuals and the three shifted footprint profiles shared by
/// every candidate month.
struct ScanContext {
    /// Inverse-filtered, regressor-adjusted series on the differenced
    /// scale: entry `i` belongs to month `offset + i`.
    residuals: Vec<f64>,
    /// Months consumed by differencing; no candidate can be scored there.
    offset: usize,
    /// Inverse-filter weights: the AO footprint starting at its anchor.
    pi: Vec<f64>,
    /// Cumulative weights: the LS footprint.
    pi_cum: Vec<f64>,
    /// Geometrically smeared weights: the TC footprint.
    pi_tc: Vec<f64>,
}

fn scan_context(model: &FittedModel) -> Result<ScanContext> {
    let series = model.series();
    let spec = model.spec();
    let params = model.params();
    let z = series.to_complete_vec()?;
    let t_len = z.len();

    // Strip the estimated deterministic effects. Dropped (identically zero)
    // columns carry beta = 0, so no special-casing is needed.
    let mut adjusted = z;
    for (coef, col) in params.beta.iter().zip(spec.mean_regressors()) {
        for (v, x) in adjusted.iter_mut().zip(col.values()) {
            *v -= coef * x;
        }
    }

    // pi(B) = phi(B) Phi(B^s) (1-B)^d (1-B^s)^D / [theta(B) Theta(B^s)],
    // truncated at the sample length with zero pre-sample values.
    let ar_full = seasonal_product(&params.phi, &params.seasonal_phi, spec.season());
    let ma_full = seasonal_product(&params.theta, &params.seasonal_theta, spec.season());
    let diff = difference_poly(spec.d(), spec.seasonal_d(), spec.season());
    let pi = expand_ratio(&poly_mul(&ar_full, &diff), &ma_full, t_len);
    if pi.iter().any(|v| !v.is_finite() || v.abs() > PI_EXPLOSION_BOUND) {
        return Err(Error::IllConditioned(
            "inverse filter weights diverge; the model is too close to non-invertible".into(),
        ));
    }

    // Residuals are computed on the differenced scale: applying the full
    // pi(B) (differencing included) directly to the level series would leave
    // level-sized start-up transients in the first d + s*D entries, and those
    // swamp every genuine outlier statistic near the sample start. The months
    // consumed by differencing are excluded from the scan instead.
    let offset = spec.d() + spec.season() * spec.seasonal_d();
    let n_valid = t_len - offset;
    let mut w = vec![0.0; n_valid];
    for (i, wi) in w.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &dj) in diff.iter().enumerate() {
            acc += dj * adjusted[offset + i - j];
        }
        *wi = acc;
    }
    let pi_arma = expand_ratio(&ar_full, &ma_full, n_valid);
    let mut residuals = vec![0.0; n_valid];
    for t in 0..n_valid {
        let mut acc = 0.0;
        for (j, x) in pi_arma[..=t].iter().enumerate() {
            acc += x * w[t - j];
        }
        residuals[t] = acc;
    }
    // The inverse filter collapses each estimated innovation pulse back to
    // a pulse of its own size; remove those too.
    for (coef, col) in params.omega_io.iter().zip(spec.innovation_pulses()) {
        let anchor = col.anchor().expect("innovation pulses always carry an anchor");
        let idx = series.index_of(anchor).ok_or_else(|| {
            Error::SpanMismatch(format!(
                "innovation pulse {anchor} lies outside the series span"
            ))
        })?;
        if idx >= offset {
            residuals[idx - offset] -= coef;
        }
    }

    let mut pi_cum = Vec::with_capacity(t_len);
    let mut pi_tc = Vec::with_capacity(t_len);
    let mut run = 0.0;
    let mut smear = 0.0;
    for (j, &w) in pi.iter().enumerate() {
        run += w;
        smear = w + if j == 0 { 0.0 } else { TC_DELTA_DEFAULT * smear };
        pi_cum.push(run);
        pi_tc.push(smear);
    }

    Ok(ScanContext { residuals, offset, pi, pi_cum, pi_tc })
}

/// Median of a finite slice (mean of the middle pair for even lengths).
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("residuals are finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Robust residual scale: 1.4826 * MAD, falling back to the sample standard
/// deviation when the MAD degenerates (near-constant residuals).
fn robust_scale(residuals: &[f64]) -> f64 {
    let med = median(residuals);
    let deviations: Vec<f64> = residuals.iter().map(|v| (v - med).abs()).collect();
    let mad = 1.4826 * median(&deviations);
    if mad > 1e-12 * (1.0 + med.abs()) {
        return mad;
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    var.sqrt()
}

/// Least-squares effect and t-statistic of one footprint anchored at
/// `anchor`; `profile` is the footprint from its anchor onward.
fn candidate_regression(residuals: &[f64], profile: &[f64], anchor: usize) -> (f64, f64) {
    let window = (residuals.len() - anchor).min(profile.len());
    let mut ssq = 0.0;
    let mut cross = 0.0;
    for (k, &x) in profile[..window].iter().enumerate() {
        ssq += x * x;
        cross += x * residuals[anchor + k];
    }
    let omega = cross / ssq;
    let mut removed = residuals.to_vec();
    for (k, &x) in profile[..window].iter().enumerate() {
        removed[anchor + k] -= omega * x;
    }
    let scale = robust_scale(&removed);
    if scale <= 0.0 || !scale.is_finite() {
        return (omega, 0.0);
    }
    (omega, omega * ssq.sqrt() / scale)
}

/// All four candidate statistics for every month of the sample, AO/IO/LS/TC
/// order; shared by `detect` and the invariants in the test suite.
pub(crate) fn candidate_statistics(model: &FittedModel) -> Result<Vec<MonthStats>> {
    let ctx = scan_context(model)?;
    let t_len = ctx.offset + ctx.residuals.len();
    let pulse = [1.0];
    let mut stats = Vec::with_capacity(t_len);
    // Months consumed by differencing have no residual to regress on; they
    // report zero statistics and can never be flagged.
    stats.resize(ctx.offset, [(0.0, 0.0); 4]);
    for anchor in ctx.offset..t_len {
        let at = anchor - ctx.offset;
        stats.push([
            candidate_regression(&ctx.residuals, &ctx.pi, at),
            candidate_regression(&ctx.residuals, &pulse, at),
            candidate_regression(&ctx.residuals, &ctx.pi_cum, at),
            candidate_regression(&ctx.residuals, &ctx.pi_tc, at),
        ]);
    }
    Ok(stats)
}

fn check_same_series(series: &MonthlySeries, model: &FittedModel) -> Result<()> {
    let fitted = model.series();
    if fitted.start() != series.start() || fitted.len() != series.len() {
        return Err(Error::SpanMismatch(format!(
            "model was fitted on {}..{}, scan requested {}..{}",
            fitted.start(),
            fitted.end(),
            series.start(),
            series.end()
        )));
    }
    if fitted.values() != series.values() {
        return Err(Error::InvalidParam(
            "outlier scan requires the exact series the model was fitted on".into(),
        ));
    }
    Ok(())
}

/// Scans every month of `series` for the four outlier shapes under `model`,
/// reporting each month whose strongest shape has `|t| >= c`.
///
/// Findings come back sorted by `|t|` descending (ties by month). At each
/// month only the best-fitting shape is reported; the four footprints at one
/// date are strongly collinear and reporting them all would double-count.
pub fn detect(series: &MonthlySeries, model: &FittedModel, c: f64) -> Result<Vec<OutlierFinding>> {
    if !(c > 0.0) {
        return Err(Error::InvalidParam(format!(
            "critical value must be positive, got {c}"
        )));
    }
    check_same_series(series, model)?;
    let stats = candidate_statistics(model)?;
    let mut findings = Vec::new();
    for (idx, month_stats) in stats.iter().enumerate() {
        let mut best = 0;
        for k in 1..4 {
            if month_stats[k].1.abs() > month_stats[best].1.abs() {
                best = k;
            }
        }
        let (omega, t_stat) = month_stats[best];
        if t_stat.abs() >= c {
            findings.push(OutlierFinding {
                month: series.month_at(idx),
                kind: KIND_ORDER[best],
                omega,
                t_stat,
            });
        }
    }
    sort_findings(&mut findings);
    Ok(findings)
}

fn sort_findings(findings: &mut [OutlierFinding]) {
    findings.sort_by(|a, b| {
        b.t_stat
            .abs()
            .partial_cmp(&a.t_stat.abs())
            .expect("t-statistics are finite")
            .then(a.month.cmp(&b.month))
    });
}

/// Fits `spec`, then alternates outlier detection with refitting — each
/// flagged month is added to the model as the matching intervention
/// regressor — until a scan finds nothing new or [`MAX_ITERATIVE_ROUNDS`]
/// is hit. A month is only ever claimed once, so the loop always terminates;
/// hitting the cap is reported through [`IterativeScan::converged`] with the
/// partial result intact.
pub fn detect_iterative(
    series: &MonthlySeries,
    spec: &SarimaSpec,
    c: f64,
) -> Result<IterativeScan> {
    let mut model = fit_with_options(series, spec, &FitOptions::default())?;
    let mut claimed: BTreeSet<Month> = BTreeSet::new();
    let mut cumulative: Vec<OutlierFinding> = Vec::new();
    let mut rounds = 0;
    let converged = loop {
        let findings = detect(series, &model, c)?;
        let new: Vec<OutlierFinding> = findings
            .into_iter()
            .filter(|f| !claimed.contains(&f.month))
            .collect();
        if new.is_empty() {
            break true;
        }
        if rounds >= MAX_ITERATIVE_ROUNDS {
            break false;
        }
        rounds += 1;
        let current = model.spec();
        let mut mean_cols = current.mean_regressors().to_vec();
        let mut io_cols = current.innovation_pulses().to_vec();
        for finding in &new {
            claimed.insert(finding.month);
            let column = intervention_column(
                series.start(),
                series.len(),
                finding.kind.regressor_kind(),
                finding.month,
                TC_DELTA_DEFAULT,
            )?;
            match finding.kind {
                OutlierKind::Io => io_cols.push(column),
                _ => mean_cols.push(column),
            }
        }
        let mut next_spec = SarimaSpec::new(
            current.p(),
            current.d(),
            current.q(),
            current.seasonal_p(),
            current.seasonal_d(),
            current.seasonal_q(),
        );
        if !mean_cols.is_empty() {
            next_spec = next_spec.with_mean_regressors(mean_cols)?;
        }
        if !io_cols.is_empty() {
            next_spec = next_spec.with_innovation_pulses(io_cols)?;
        }
        // Warm-start the refit from the current ARMA coefficients; the new
        // regressors change them only mildly.
        let mut init = SarimaParams::zeros(&next_spec);
        init.phi.clone_from(&model.params().phi);
        init.theta.clone_from(&model.params().theta);
        init.seasonal_phi.clone_from(&model.params().seasonal_phi);
        init.seasonal_theta.clone_from(&model.params().seasonal_theta);
        let options = FitOptions { init: Some(init), ..FitOptions::default() };
        model = fit_with_options(series, &next_spec, &options)?;
        cumulative.extend(new);
    };
    sort_findings(&mut cumulative);
    Ok(IterativeScan { model, findings: cumulative, rounds, converged })
}

/// Runs [`detect`] for every model in the set and tallies, per month, how
/// many models report at least one finding there.
///
/// All models must have been fitted on exactly `series`. The per-model scans
/// are independent and fan out across threads; the tally is a plain indexed
/// reduction, so the result does not depend on scheduling.
pub fn census(
    series: &MonthlySeries,
    models: &[FittedModel],
    c: f64,
) -> Result<OutlierCensus> {
    if models.is_empty() {
        return Err(Error::InvalidParam("census needs at least one model".into()));
    }
    let per_model: Vec<Vec<OutlierFinding>> = models
        .par_iter()
        .map(|model| detect(series, model, c))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![0usize; series.len()];
    let mut total = 0;
    let mut january = 0;
    let mut february = 0;
    for findings in &per_model {
        for finding in findings {
            let idx = series
                .index_of(finding.month)
                .expect("findings are anchored inside the series");
            counts[idx] += 1;
            total += 1;
            match finding.month.month() {
                1 => january += 1,
                2 => february += 1,
                _ => {}
            }
        }
    }
    Ok(OutlierCensus {
        start: series.start(),
        counts,
        n_models: models.len(),
        total_findings: total,
        january_findings: january,
        february_findings: february,
    })
}
