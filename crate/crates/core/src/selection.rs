//! The three model-selection criteria and the two-step rank-sum search.
//!
//! Candidate models differ in two dimensions: the seasonal-ARIMA orders
//! `(p, q, P, Q)` and the Spring-Festival window `τ = (τ1, τ2, τ3)`. Each
//! cell of the grid is scored on
//!
//! - `C_Fit` — the fitted innovation scale over the baseline dispersion
//!   `σ̂₀` of the doubly differenced series,
//! - `BIC` — `−2 log L + log(n)·k` with `k = p + q + P + Q + |τ|`, where
//!   `|τ|` counts the nonzero window components and `n` is the number of
//!   doubly differenced observations (`T − 13`), and
//! - `C_FC` — the 1-step expanding-window out-of-sample RMSE over `σ̂₀`.
//!
//! The search runs in two steps. First, within each order's pool of
//! windows, every window is ranked on each criterion (ascending) and the
//! window `τ*` with the smallest rank sum wins. Second, the orders are
//! ranked the same way on their criteria at `τ*`, and the order with the
//! smallest rank sum heads the report.
//!
//! Ranks are always a permutation `1..=N` of the pool: ties on a criterion
//! value go to the cell that comes first in grid order (lexicographic for
//! the default grids), and cells whose estimation failed rank after every
//! finite value. All cells are evaluated independently, so the search
//! parallelizes; results are identical for any scheduling.

use rayon::prelude::*;

use crate::backtest::{self, BacktestProtocol, Forecaster, SarimaxForecaster};
use crate::calendar::{HolidayWindow, LunarTable, RegressorKind};
use crate::error::{Error, Result};
use crate::sarimax::{self, FitOptions, FittedModel};
use crate::timeseries::{difference, Month, MonthlySeries};

/// Seasonal-ARIMA orders `(p, q, P, Q)`; the pipeline fixes `d = D = 1`.
pub type Orders = (usize, usize, usize, usize);

/// The 81 default order choices: `p, q, P, Q ∈ {0, 1, 2}`, lexicographic.
pub fn default_order_grid() -> Vec<Orders> {
    let mut out = Vec::with_capacity(81);
    for p in 0..=2 {
        for q in 0..=2 {
            for sp in 0..=2 {
                for sq in 0..=2 {
                    out.push((p, q, sp, sq));
                }
            }
        }
    }
    out
}

/// The 147 default Spring-Festival windows: `τ1, τ3 ∈ {0, 4, …, 24}` and
/// `τ2 ∈ {0, 4, 8}`, lexicographic in `(τ1, τ2, τ3)`.
pub fn default_window_grid() -> Vec<HolidayWindow> {
    let mut out = Vec::with_capacity(147);
    for t1 in (0..=24).step_by(4) {
        for t2 in (0..=8).step_by(4) {
            for t3 in (0..=24).step_by(4) {
                out.push(HolidayWindow::new(t1, t2, t3));
            }
        }
    }
    out
}

/// Baseline dispersion `σ̂₀`: the sample standard deviation (divisor
/// `n − 1`) of the doubly differenced series `(1−B)(1−B¹²)·z`.
pub fn sigma0(series: &MonthlySeries) -> Result<f64> {
    let w = difference(series, 1, 1, 12)?;
    let w = w.to_complete_vec()?;
    let n = w.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { needed: 15, got: series.len() });
    }
    let mean = w.iter().sum::<f64>() / n as f64;
    let ss = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Fitting criterion: `σ̂_a / σ̂₀`.
pub fn c_fit(model: &FittedModel, sigma0: f64) -> Result<f64> {
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidParam(format!(
            "baseline dispersion must be positive, got {sigma0}"
        )));
    }
    Ok(model.params().sigma_a / sigma0)
}

/// Parsimony criterion: `−2 log L + log(n)·k`.
///
/// `k = p + q + P + Q + |τ|` counts the ARMA coefficients plus the nonzero
/// Spring-Festival window components; intervention and innovation-pulse
/// coefficients are excluded, as is `σ_a`. `n` is the estimation sample
/// after differencing.
pub fn bic(model: &FittedModel) -> f64 {
    let spec = model.spec();
    let mut k = spec.p() + spec.q() + spec.seasonal_p() + spec.seasonal_q();
    for col in spec.mean_regressors() {
        let Some(w) = col.window() else { continue };
        let component = match col.kind() {
            RegressorKind::SfBefore => w.tau1,
            RegressorKind::SfDuring => w.tau2,
            RegressorKind::SfAfter => w.tau3,
            _ => continue,
        };
        if component > 0 {
            k += 1;
        }
    }
    let n = model.n_effective() as f64;
    -2.0 * model.loglik() + n.ln() * k as f64
}

/// Forecasting criterion: 1-step out-of-sample RMSE over `σ̂₀`.
///
/// The protocol must include horizon 1; only that horizon is evaluated.
/// The RMSE divides by the number of forecasts made. (The source
/// formulation pairs a 95-month forecast span with a divisor of 83; this
/// implementation keeps RMSE² equal to the mean squared error, which
/// rescales every candidate by the same constant and leaves rankings
/// unchanged — see [`DIVISOR_NOTE`].)
pub fn c_fc<F: Forecaster>(
    series: &MonthlySeries,
    engine: &F,
    sigma0: f64,
    protocol: &BacktestProtocol,
) -> Result<f64> {
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidParam(format!(
            "baseline dispersion must be positive, got {sigma0}"
        )));
    }
    if !protocol.horizons().contains(&1) {
        return Err(Error::InvalidParam(
            "the forecasting criterion needs horizon 1 in the protocol".into(),
        ));
    }
    let one_step = BacktestProtocol::new(
        protocol.scheme(),
        protocol.training_start(),
        protocol.span().0,
        protocol.span().1,
        &[1],
    )?
    .with_rolling_base(protocol.rolling_base())?
    .with_refit_stride(protocol.refit_stride())?;
    let report = backtest::run(series, engine, &one_step)?;
    Ok(report.rmse(1).expect("horizon 1 was requested") / sigma0)
}

/// Note attached to every grid report about the RMSE divisor convention.
pub const DIVISOR_NOTE: &str = "RMSE divides by the number of forecasts; \
the source formulation divides the same 95-month sum by 83. The common \
rescaling does not affect any ranking.";

/// Criteria and ranks for one cell or one order summary.
///
/// Ranks are ascending positions within the comparison pool (the window
/// pool of one order in step 1; the order pool in step 2).
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct ScoreTriple {
    pub c_fit: f64,
    pub bic: f64,
    pub c_fc: f64,
    pub r_fit: usize,
    pub r_bic: usize,
    pub r_fc: usize,
}

impl ScoreTriple {
    pub fn rank_sum(&self) -> usize {
        self.r_fit + self.r_bic + self.r_fc
    }
}

/// One evaluated (order, window) pair.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CellScore {
    pub order: Orders,
    pub window: HolidayWindow,
    pub scores: ScoreTriple,
    /// Why estimation failed, when it did; failed cells rank last.
    pub failure: Option<String>,
}

/// One order's result at its best window `τ*`, with step-2 ranks.
#[derive(Clone, Debug)]
pub struct OrderSummary {
    pub order: Orders,
    pub tau_star: HolidayWindow,
    pub scores: ScoreTriple,
    /// The model refit on the full sample at `τ*` (absent if that fit
    /// failed; such orders rank last).
    pub model: Option<FittedModel>,
    pub failure: Option<String>,
}

/// The full two-step search output.
#[derive(Debug)]
pub struct GridResult {
    sigma0: f64,
    n_windows: usize,
    cells: Vec<CellScore>,
    summaries: Vec<OrderSummary>,
    notes: Vec<String>,
}

impl GridResult {
    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    /// Every evaluated cell, in grid order (orders outer, windows inner);
    /// the `scores` ranks are the step-1 ranks within the cell's order.
    pub fn cells(&self) -> &[CellScore] {
        &self.cells
    }

    /// The step-1 pool (all windows) for one order, in window-grid order.
    pub fn cells_for(&self, order: Orders) -> impl Iterator<Item = &CellScore> {
        self.cells.iter().filter(move |c| c.order == order)
    }

    /// Order summaries sorted by step-2 rank sum (ascending; ties go to
    /// the order earlier in the grid).
    pub fn summaries(&self) -> &[OrderSummary] {
        &self.summaries
    }

    /// The `n` best orders.
    pub fn top(&self, n: usize) -> &[OrderSummary] {
        &self.summaries[..n.min(self.summaries.len())]
    }

    /// The overall winner.
    pub fn best(&self) -> &OrderSummary {
        &self.summaries[0]
    }

    /// How often each `τ*` window appears among the `n` best orders
    /// (descending frequency, ties in window-grid order).
    pub fn window_frequency(&self, n: usize) -> Vec<(HolidayWindow, usize)> {
        let mut freq: Vec<(HolidayWindow, usize)> = Vec::new();
        for s in self.top(n) {
            match freq.iter_mut().find(|(w, _)| *w == s.tau_star) {
                Some((_, c)) => *c += 1,
                None => freq.push((s.tau_star, 1)),
            }
        }
        freq.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
        freq
    }

    /// Report metadata (divisor convention, stride, failure counts).
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    /// Number of windows in each order's step-1 pool.
    pub fn n_windows(&self) -> usize {
        self.n_windows
    }
}

/// Estimation knobs shared by every cell of one search.
pub struct GridOptions {
    /// Options for every full-sample and training-slice fit (standard
    /// errors are skipped by default — the criteria never read them).
    pub fit_options: FitOptions,
    /// Mean-side interventions (AO/LS/TC) present in every candidate.
    pub interventions: Vec<(RegressorKind, Month, f64)>,
    /// Innovation pulses present in every candidate.
    pub io_pulses: Vec<Month>,
    /// Lunar calendar for the Spring-Festival regressors.
    pub table: LunarTable,
    /// Called after each cell completes with (done, total).
    pub progress: Option<Box<dyn Fn(usize, usize) + Send + Sync>>,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            fit_options: FitOptions {
                skip_se: true,
                ..FitOptions::default()
            },
            interventions: Vec::new(),
            io_pulses: Vec::new(),
            table: LunarTable::embedded(),
            progress: None,
        }
    }
}

impl GridOptions {
    /// The backtest engine for one (order, window) cell.
    fn engine(&self, order: Orders, window: HolidayWindow) -> Result<SarimaxForecaster> {
        let (p, q, sp, sq) = order;
        let mut engine = SarimaxForecaster::new(p, 1, q, sp, 1, sq)
            .with_sf_window(window, self.table.clone())
            .with_fit_options(self.fit_options.clone());
        for &(kind, anchor, delta) in &self.interventions {
            engine = engine.with_intervention(kind, anchor, delta)?;
        }
        for &anchor in &self.io_pulses {
            engine = engine.with_io_pulse(anchor);
        }
        Ok(engine)
    }
}

/// Criteria for one cell: the full-sample fit (for `C_Fit` and `BIC`) plus
/// the 1-step backtest (for `C_FC`). This is the single source of truth —
/// re-running it for any reported cell reproduces the stored values.
pub fn evaluate_cell(
    series: &MonthlySeries,
    order: Orders,
    window: HolidayWindow,
    sigma0: f64,
    protocol: &BacktestProtocol,
    options: &GridOptions,
) -> Result<(f64, f64, f64, FittedModel)> {
    let engine = options.engine(order, window)?;
    let spec = engine.spec_for(series)?;
    let model = sarimax::fit_with_options(series, &spec, &options.fit_options)?;
    let fit = c_fit(&model, sigma0)?;
    let parsimony = bic(&model);
    let fc = c_fc(series, &engine, sigma0, protocol)?;
    Ok((fit, parsimony, fc, model))
}

/// Ascending positional ranks, `1..=N`.
///
/// Ties go to the smaller index (= earlier in grid order), and values that
/// are unavailable (NaN) rank after every finite value, again in index
/// order. The result is always a permutation.
fn ranks_ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let (va, vb) = (values[a], values[b]);
        match (va.is_nan(), vb.is_nan()) {
            (true, true) => a.cmp(&b),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            (false, false) => va.partial_cmp(&vb).unwrap().then(a.cmp(&b)),
        }
    });
    let mut ranks = vec![0; values.len()];
    for (pos, &i) in idx.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// The two-step rank-sum search over `orders × windows`.
///
/// Every cell is estimated independently (in parallel); failures are
/// recorded on the cell and rank last rather than aborting the search.
/// Step 1 picks each order's best window `τ*` by rank sum within the
/// order's window pool; step 2 ranks the orders at their `τ*`. The
/// winners' full-sample models are refit once at the end so each summary
/// carries its `FittedModel`.
pub fn grid_search(
    series: &MonthlySeries,
    orders: &[Orders],
    windows: &[HolidayWindow],
    sigma0: f64,
    protocol: &BacktestProtocol,
    options: &GridOptions,
) -> Result<GridResult> {
    if orders.is_empty() || windows.is_empty() {
        return Err(Error::InvalidParam("empty selection grid".into()));
    }
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidParam(format!(
            "baseline dispersion must be positive, got {sigma0}"
        )));
    }

    let total = orders.len() * windows.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let raw: Vec<(f64, f64, f64, Option<String>)> = (0..total)
        .into_par_iter()
        .map(|cell| {
            let order = orders[cell / windows.len()];
            let window = windows[cell % windows.len()];
            let out = match evaluate_cell(series, order, window, sigma0, protocol, options) {
                Ok((fit, parsimony, fc, _)) => (fit, parsimony, fc, None),
                Err(e) => (f64::NAN, f64::NAN, f64::NAN, Some(e.to_string())),
            };
            if let Some(report) = &options.progress {
                let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                report(n, total);
            }
            out
        })
        .collect();

    // Step 1: rank windows within each order.
    let mut cells = Vec::with_capacity(total);
    let mut tau_stars = Vec::with_capacity(orders.len());
    for (oi, &order) in orders.iter().enumerate() {
        let pool = &raw[oi * windows.len()..(oi + 1) * windows.len()];
        let r_fit = ranks_ascending(&pool.iter().map(|c| c.0).collect::<Vec<_>>());
        let r_bic = ranks_ascending(&pool.iter().map(|c| c.1).collect::<Vec<_>>());
        let r_fc = ranks_ascending(&pool.iter().map(|c| c.2).collect::<Vec<_>>());
        let mut best = 0;
        let mut best_sum = usize::MAX;
        for (wi, c) in pool.iter().enumerate() {
            let scores = ScoreTriple {
                c_fit: c.0,
                bic: c.1,
                c_fc: c.2,
                r_fit: r_fit[wi],
                r_bic: r_bic[wi],
                r_fc: r_fc[wi],
            };
            if scores.rank_sum() < best_sum {
                best_sum = scores.rank_sum();
                best = wi;
            }
            cells.push(CellScore {
                order,
                window: windows[wi],
                scores,
                failure: c.3.clone(),
            });
        }
        tau_stars.push(best);
    }

    // Step 2: rank orders at their tau*.
    let at_star: Vec<&(f64, f64, f64, Option<String>)> = orders
        .iter()
        .enumerate()
        .map(|(oi, _)| &raw[oi * windows.len() + tau_stars[oi]])
        .collect();
    let r_fit = ranks_ascending(&at_star.iter().map(|c| c.0).collect::<Vec<_>>());
    let r_bic = ranks_ascending(&at_star.iter().map(|c| c.1).collect::<Vec<_>>());
    let r_fc = ranks_ascending(&at_star.iter().map(|c| c.2).collect::<Vec<_>>());

    let mut summaries: Vec<(usize, OrderSummary)> = orders
        .iter()
        .enumerate()
        .map(|(oi, &order)| {
            let window = windows[tau_stars[oi]];
            let c = at_star[oi];
            let model = if c.3.is_none() {
                // Deterministic re-estimation: identical to the cell's fit.
                options
                    .engine(order, window)
                    .and_then(|e| e.spec_for(series))
                    .and_then(|spec| {
                        sarimax::fit_with_options(series, &spec, &options.fit_options)
                    })
                    .ok()
            } else {
                None
            };
            let summary = OrderSummary {
                order,
                tau_star: window,
                scores: ScoreTriple {
                    c_fit: c.0,
                    bic: c.1,
                    c_fc: c.2,
                    r_fit: r_fit[oi],
                    r_bic: r_bic[oi],
                    r_fc: r_fc[oi],
                },
                model,
                failure: c.3.clone(),
            };
            (oi, summary)
        })
        .collect();
    summaries.sort_by_key(|(oi, s)| (s.scores.rank_sum(), *oi));

    let failed = cells.iter().filter(|c| c.failure.is_some()).count();
    let mut notes = vec![DIVISOR_NOTE.to_string()];
    if protocol.refit_stride() != 1 {
        notes.push(format!(
            "forecast criterion used a refit stride of {} (coefficients \
re-estimated every {} origins)",
            protocol.refit_stride(),
            protocol.refit_stride()
        ));
    }
    if failed > 0 {
        notes.push(format!("{failed} of {total} cells failed to estimate"));
    }

    Ok(GridResult {
        sigma0,
        n_windows: windows.len(),
        cells,
        summaries: summaries.into_iter().map(|(_, s)| s).collect(),
        notes,
    })
}
