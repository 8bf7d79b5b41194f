//! Expanding- and rolling-window multi-horizon out-of-sample evaluation.
//!
//! [`run`] walks a forecast span month by month: for each horizon `h` and
//! each target month `t` in the span it trains a [`Forecaster`] on the
//! protocol-defined slice ending at the origin `t − h`, asks for an
//! `h`-step-ahead point forecast, and records the error against the
//! realized value. The engine only ever sees the training slice, so
//! look-ahead is impossible by construction.
//!
//! Two training schemes are supported: *expanding* windows run from a fixed
//! first month through the origin, while *rolling* windows keep a constant
//! length that shrinks with the horizon (a base of 49 months gives
//! `49 − h` training months, so every scheme/horizon pair spends the same
//! data budget on history plus forecast path).
//!
//! Re-estimation happens at every origin by default. For expensive engines
//! the protocol's `refit_stride` trades exactness for speed: coefficients
//! are re-estimated only at every `stride`-th origin and re-applied to the
//! intermediate training slices (regression coefficients are still
//! re-profiled exactly; see [`Forecaster::forecast_anchored`]).

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

use rayon::prelude::*;

use crate::calendar::{
    intervention_column, sf_regressors, HolidayWindow, LunarTable, RegressorKind,
};
use crate::error::{Error, Result};
use crate::sarimax::{
    self, FitOptions, SarimaParams, SarimaSpec,
};
use crate::timeseries::{Month, MonthlySeries};

/// How the training window moves with the forecast origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Scheme {
    /// Train on everything from a fixed first month through the origin.
    Expanding,
    /// Train on a fixed-length window ending at the origin.
    Rolling,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Expanding => "expanding",
            Scheme::Rolling => "rolling",
        })
    }
}

/// Default rolling-window base: a window of `49 − h` months at horizon `h`.
pub const ROLLING_BASE_DEFAULT: usize = 49;

/// The standard evaluation horizons.
pub const HORIZONS_DEFAULT: [usize; 6] = [1, 2, 3, 6, 9, 12];

/// A complete description of one out-of-sample experiment.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct BacktestProtocol {
    scheme: Scheme,
    training_start: Month,
    span: (Month, Month),
    horizons: Vec<usize>,
    rolling_base: usize,
    refit_stride: usize,
}

impl BacktestProtocol {
    /// A protocol forecasting every month of `span_start..=span_end` at the
    /// given horizons. Expanding windows start at `training_start`; rolling
    /// windows cover `49 − h` months (adjust with [`with_rolling_base`]).
    ///
    /// [`with_rolling_base`]: BacktestProtocol::with_rolling_base
    pub fn new(
        scheme: Scheme,
        training_start: Month,
        span_start: Month,
        span_end: Month,
        horizons: &[usize],
    ) -> Result<Self> {
        if span_start <= training_start {
            return Err(Error::InvalidParam(format!(
                "forecast span must start after the training start ({span_start} <= {training_start})"
            )));
        }
        if span_end < span_start {
            return Err(Error::InvalidParam(format!(
                "forecast span end {span_end} precedes its start {span_start}"
            )));
        }
        if horizons.is_empty() {
            return Err(Error::InvalidParam("no forecast horizons given".into()));
        }
        if horizons.contains(&0) {
            return Err(Error::InvalidParam("forecast horizons must be >= 1".into()));
        }
        let mut horizons = horizons.to_vec();
        horizons.sort_unstable();
        horizons.dedup();
        Ok(BacktestProtocol {
            scheme,
            training_start,
            span: (span_start, span_end),
            horizons,
            rolling_base: ROLLING_BASE_DEFAULT,
            refit_stride: 1,
        })
    }

    /// Changes the rolling-window base (window length is `base − h`).
    pub fn with_rolling_base(mut self, base: usize) -> Result<Self> {
        let h_max = *self.horizons.last().expect("horizons are non-empty");
        if base <= h_max + 1 {
            return Err(Error::InvalidParam(format!(
                "rolling base {base} leaves fewer than 2 training months at horizon {h_max}"
            )));
        }
        self.rolling_base = base;
        Ok(self)
    }

    /// Re-estimates coefficients only at every `stride`-th origin; the
    /// slices in between reuse the most recent estimates via
    /// [`Forecaster::forecast_anchored`]. `1` (the default) re-estimates
    /// everywhere and is exact.
    pub fn with_refit_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidParam("refit stride must be >= 1".into()));
        }
        self.refit_stride = stride;
        Ok(self)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn training_start(&self) -> Month {
        self.training_start
    }

    /// Forecast-target span, inclusive.
    pub fn span(&self) -> (Month, Month) {
        self.span
    }

    /// Horizons, ascending and deduplicated.
    pub fn horizons(&self) -> &[usize] {
        &self.horizons
    }

    pub fn rolling_base(&self) -> usize {
        self.rolling_base
    }

    pub fn refit_stride(&self) -> usize {
        self.refit_stride
    }

    /// The training slice for a forecast made at `origin` for horizon `h`.
    fn training_slice(&self, series: &MonthlySeries, origin: Month, h: usize) -> Result<MonthlySeries> {
        match self.scheme {
            Scheme::Expanding => {
                if origin < self.training_start {
                    return Err(Error::InvalidParam(format!(
                        "origin {origin} precedes the training start {}",
                        self.training_start
                    )));
                }
                series.slice(self.training_start, origin)
            }
            Scheme::Rolling => {
                let len = self.rolling_base.saturating_sub(h);
                if len < 2 {
                    return Err(Error::InvalidParam(format!(
                        "rolling base {} leaves fewer than 2 training months at horizon {h}",
                        self.rolling_base
                    )));
                }
                let start = origin.plus(-(len as i64 - 1));
                if start < series.start() {
                    return Err(Error::SpanMismatch(format!(
                        "rolling window {start}..{origin} starts before the series ({})",
                        series.start()
                    )));
                }
                series.slice(start, origin)
            }
        }
    }
}

/// A forecasting engine the backtest can drive.
///
/// Implementations see nothing but the training slice they are handed, so
/// any engine satisfying this trait is look-ahead-free inside [`run`].
pub trait Forecaster: Sync {
    /// Estimates on `train` and returns the point forecast for the month
    /// `h` steps past `train.end()`.
    fn forecast(&self, train: &MonthlySeries, h: usize) -> Result<f64>;

    /// Like [`forecast`](Forecaster::forecast), but may reuse expensive
    /// state estimated on `anchor_train` (an earlier training slice under
    /// the same protocol) instead of re-estimating on `train`.
    ///
    /// The default ignores the anchor and re-estimates, which is always
    /// exact; engines with a cheap re-apply path override this to make
    /// `refit_stride > 1` worthwhile.
    fn forecast_anchored(
        &self,
        anchor_train: &MonthlySeries,
        train: &MonthlySeries,
        h: usize,
    ) -> Result<f64> {
        let _ = anchor_train;
        self.forecast(train, h)
    }
}

/// Forecasts, realizations, and errors for a single horizon.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct HorizonTrace {
    horizon: usize,
    origins: Vec<Month>,
    forecasts: Vec<f64>,
    actuals: Vec<f64>,
    errors: Vec<f64>,
    rmse: f64,
}

impl HorizonTrace {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Months the forecasts were made from (target month − horizon).
    pub fn origins(&self) -> &[Month] {
        &self.origins
    }

    /// Months the forecasts are for.
    pub fn targets(&self) -> Vec<Month> {
        self.origins
            .iter()
            .map(|o| o.plus(self.horizon as i64))
            .collect()
    }

    pub fn forecasts(&self) -> &[f64] {
        &self.forecasts
    }

    pub fn actuals(&self) -> &[f64] {
        &self.actuals
    }

    /// Signed errors, `forecast − realized`.
    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    /// Root of the mean squared error over all forecasts in the trace.
    pub fn rmse(&self) -> f64 {
        self.rmse
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// The result of one backtest: per-horizon traces plus the protocol echo.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ForecastReport {
    scheme: Scheme,
    span: (Month, Month),
    traces: Vec<HorizonTrace>,
}

impl ForecastReport {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn span(&self) -> (Month, Month) {
        self.span
    }

    /// Traces in ascending horizon order.
    pub fn traces(&self) -> &[HorizonTrace] {
        &self.traces
    }

    pub fn trace(&self, horizon: usize) -> Option<&HorizonTrace> {
        self.traces.iter().find(|t| t.horizon == horizon)
    }

    pub fn rmse(&self, horizon: usize) -> Option<f64> {
        self.trace(horizon).map(|t| t.rmse)
    }

    /// RMSE scaled by an external dispersion measure (σ̂₀-style ratios).
    pub fn rmse_over(&self, horizon: usize, sigma0: f64) -> Option<f64> {
        self.trace(horizon).map(|t| t.rmse / sigma0)
    }
}

/// Runs the full experiment: every horizon, every target month in the span.
///
/// Forecast targets run over `protocol.span()`; the origin for target `t`
/// at horizon `h` is `t − h`, and the engine trains on the protocol slice
/// ending there. Errors are recorded as `forecast − realized`. Origins are
/// processed in parallel; the result is identical to a sequential pass.
pub fn run<F: Forecaster>(
    series: &MonthlySeries,
    forecaster: &F,
    protocol: &BacktestProtocol,
) -> Result<ForecastReport> {
    let (span_start, span_end) = protocol.span;
    if span_start < series.start() || span_end > series.end() {
        return Err(Error::SpanMismatch(format!(
            "forecast span {span_start}..{span_end} outside series {}..{}",
            series.start(),
            series.end()
        )));
    }
    let n_targets = (span_end.months_since(span_start) + 1) as usize;

    let mut traces = Vec::with_capacity(protocol.horizons.len());
    for &h in &protocol.horizons {
        let targets: Vec<Month> = (0..n_targets)
            .map(|i| span_start.plus(i as i64))
            .collect();
        let origins: Vec<Month> = targets.iter().map(|t| t.plus(-(h as i64))).collect();

        // Fail fast (and with the protocol's own message) on slices the
        // scheme cannot honor, before any estimation starts.
        let slices: Vec<MonthlySeries> = origins
            .iter()
            .map(|&o| protocol.training_slice(series, o, h))
            .collect::<Result<_>>()?;

        // The span was checked against the series above, so a None here can
        // only mean the realized value is missing.
        let actuals: Vec<f64> = targets
            .iter()
            .map(|&t| series.value_at(t).ok_or(Error::MissingValue(t)))
            .collect::<Result<_>>()?;

        let chunks: Vec<Vec<f64>> = slices
            .par_chunks(protocol.refit_stride)
            .map(|group| {
                let anchor = &group[0];
                let mut out = Vec::with_capacity(group.len());
                out.push(forecaster.forecast(anchor, h)?);
                for train in &group[1..] {
                    out.push(forecaster.forecast_anchored(anchor, train, h)?);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let forecasts: Vec<f64> = chunks.into_iter().flatten().collect();

        let errors: Vec<f64> = forecasts
            .iter()
            .zip(&actuals)
            .map(|(f, a)| f - a)
            .collect();
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();

        traces.push(HorizonTrace {
            horizon: h,
            origins,
            forecasts,
            actuals,
            errors,
            rmse,
        });
    }

    Ok(ForecastReport {
        scheme: protocol.scheme,
        span: protocol.span,
        traces,
    })
}

/// Per-horizon RMSE ratios `a/b` (Table-4 style comparisons).
///
/// The reports must cover the same horizons and the same forecast span.
pub fn compare(a: &ForecastReport, b: &ForecastReport) -> Result<Vec<(usize, f64)>> {
    if a.span != b.span {
        return Err(Error::SpanMismatch(format!(
            "report spans differ: {}..{} vs {}..{}",
            a.span.0, a.span.1, b.span.0, b.span.1
        )));
    }
    let ha: Vec<usize> = a.traces.iter().map(|t| t.horizon).collect();
    let hb: Vec<usize> = b.traces.iter().map(|t| t.horizon).collect();
    if ha != hb {
        return Err(Error::InvalidParam(format!(
            "report horizons differ: {ha:?} vs {hb:?}"
        )));
    }
    Ok(a.traces
        .iter()
        .zip(&b.traces)
        .map(|(ta, tb)| (ta.horizon, ta.rmse / tb.rmse))
        .collect())
}

/// Key identifying a training slice (span plus content hash), so cached
/// coefficient estimates are never applied to different data.
#[derive(PartialEq, Eq, Hash, Clone, Copy)]
struct SliceKey {
    start: Month,
    end: Month,
    value_hash: u64,
}

impl SliceKey {
    fn of(train: &MonthlySeries) -> SliceKey {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        for v in train.values() {
            v.to_bits().hash(&mut hasher);
        }
        SliceKey {
            start: train.start(),
            end: train.end(),
            value_hash: hasher.finish(),
        }
    }
}

/// Cached ARMA coefficients: (φ, θ, Φ, Θ).
type ArmaBlock = [Vec<f64>; 4];

/// A seasonal-ARIMA engine for [`run`]: re-specifies its regressors on
/// every training slice and re-estimates from scratch at each origin.
///
/// The spec is rebuilt per slice: Spring-Festival columns are regenerated
/// from the lunar table over the slice's span, and intervention columns
/// are kept only when their anchor month falls inside the slice (a pulse
/// or step outside the training window has no identifiable coefficient).
///
/// Under `refit_stride > 1` the anchored path reuses the anchor slice's
/// ARMA coefficients and re-profiles the regression and pulse
/// coefficients exactly on the current slice (see [`sarimax::refilter`]).
pub struct SarimaxForecaster {
    orders: (usize, usize, usize, usize),
    d: usize,
    seasonal_d: usize,
    window: Option<HolidayWindow>,
    table: LunarTable,
    interventions: Vec<(RegressorKind, Month, f64)>,
    io_pulses: Vec<Month>,
    options: FitOptions,
    anchor_cache: Mutex<HashMap<SliceKey, ArmaBlock>>,
}

impl SarimaxForecaster {
    /// An engine for the order `(p,d,q)×(P,D,Q)₁₂` with no regressors.
    pub fn new(p: usize, d: usize, q: usize, sp: usize, sd: usize, sq: usize) -> Self {
        SarimaxForecaster {
            orders: (p, q, sp, sq),
            d,
            seasonal_d: sd,
            window: None,
            table: LunarTable::embedded(),
            interventions: Vec::new(),
            io_pulses: Vec::new(),
            options: FitOptions {
                skip_se: true,
                ..FitOptions::default()
            },
            anchor_cache: Mutex::new(HashMap::new()),
        }
    }

    /// Adds the three Spring-Festival regressors for `window`, built from
    /// `table` over each training slice.
    pub fn with_sf_window(mut self, window: HolidayWindow, table: LunarTable) -> Self {
        self.window = Some(window);
        self.table = table;
        self
    }

    /// Adds a mean-side intervention (AO pulse, LS step, or TC decay; the
    /// damping is ignored except for TC).
    pub fn with_intervention(mut self, kind: RegressorKind, anchor: Month, delta: f64) -> Result<Self> {
        if kind.is_innovation_side() {
            return Err(Error::InvalidParam(
                "IO pulses go through with_io_pulse".into(),
            ));
        }
        self.interventions.push((kind, anchor, delta));
        Ok(self)
    }

    /// Adds an innovation-side pulse at `anchor`.
    pub fn with_io_pulse(mut self, anchor: Month) -> Self {
        self.io_pulses.push(anchor);
        self
    }

    /// Overrides the estimation options (the default skips standard
    /// errors, which a backtest never reads).
    pub fn with_fit_options(mut self, options: FitOptions) -> Self {
        self.options = options;
        self
    }

    /// The model spec over one training slice (also used by the selection
    /// grid to fit the same structure on the full sample).
    pub(crate) fn spec_for(&self, train: &MonthlySeries) -> Result<SarimaSpec> {
        let (p, q, sp, sq) = self.orders;
        let mut spec = SarimaSpec::new(p, self.d, q, sp, self.seasonal_d, sq);

        let mut mean = Vec::new();
        if let Some(w) = self.window {
            let (h1, h2, h3) = sf_regressors(train.start(), train.len(), &self.table, w)?;
            mean.extend([h1, h2, h3]);
        }
        let in_slice =
            |m: Month| m >= train.start() && m <= train.end();
        for &(kind, anchor, delta) in &self.interventions {
            if in_slice(anchor) {
                mean.push(intervention_column(
                    train.start(),
                    train.len(),
                    kind,
                    anchor,
                    delta,
                )?);
            }
        }
        if !mean.is_empty() {
            spec = spec.with_mean_regressors(mean)?;
        }

        let io: Vec<_> = self
            .io_pulses
            .iter()
            .filter(|&&m| in_slice(m))
            .map(|&m| intervention_column(train.start(), train.len(), RegressorKind::IoPulse, m, 0.0))
            .collect::<Result<_>>()?;
        if !io.is_empty() {
            spec = spec.with_innovation_pulses(io)?;
        }
        Ok(spec)
    }

    fn point_forecast(&self, model: &sarimax::FittedModel, h: usize) -> Result<f64> {
        let future = sarimax::future_mean_regressors(model.spec(), &self.table, h)?;
        let fc = sarimax::forecast(model, h, &future)?;
        Ok(fc.point[h - 1])
    }
}

impl Forecaster for SarimaxForecaster {
    fn forecast(&self, train: &MonthlySeries, h: usize) -> Result<f64> {
        let spec = self.spec_for(train)?;
        let model = sarimax::fit_with_options(train, &spec, &self.options)?;
        let p = model.params();
        self.anchor_cache.lock().unwrap().insert(
            SliceKey::of(train),
            [
                p.phi.clone(),
                p.theta.clone(),
                p.seasonal_phi.clone(),
                p.seasonal_theta.clone(),
            ],
        );
        self.point_forecast(&model, h)
    }

    fn forecast_anchored(
        &self,
        anchor_train: &MonthlySeries,
        train: &MonthlySeries,
        h: usize,
    ) -> Result<f64> {
        let key = SliceKey::of(anchor_train);
        let cached = self.anchor_cache.lock().unwrap().get(&key).cloned();
        let [phi, theta, sphi, stheta] = match cached {
            Some(block) => block,
            None => {
                let spec = self.spec_for(anchor_train)?;
                let model = sarimax::fit_with_options(anchor_train, &spec, &self.options)?;
                let p = model.params();
                let block = [
                    p.phi.clone(),
                    p.theta.clone(),
                    p.seasonal_phi.clone(),
                    p.seasonal_theta.clone(),
                ];
                self.anchor_cache.lock().unwrap().insert(key, block.clone());
                block
            }
        };
        let spec = self.spec_for(train)?;
        let mut params = SarimaParams::zeros(&spec);
        params.phi = phi;
        params.theta = theta;
        params.seasonal_phi = sphi;
        params.seasonal_theta = stheta;
        let model = sarimax::refilter(train, &spec, &params)?;
        self.point_forecast(&model, h)
    }
}
