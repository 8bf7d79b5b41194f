//! Subcommand bodies: each loads its inputs through `cpikit::io`, runs
//! the corresponding library pipeline, and writes artifacts into the
//! output directory. Input files are never modified.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use cpikit::backtest::{self, BacktestProtocol, Forecaster, SarimaxForecaster, Scheme};
use cpikit::calendar::{
    intervention_column, sf_regressors, sf_relative_percentage, LunarTable, RegressorKind,
};
use cpikit::diffusion::{self, DiForecast, DiTuning};
use cpikit::error::{Error, Result};
use cpikit::io::{self, ArtifactMeta};
use cpikit::outlierscan;
use cpikit::sarimax::{self, FitOptions, FittedModel, SarimaSpec};
use cpikit::seasadj::{self, Mode};
use cpikit::selection::{self, GridOptions};
use cpikit::timeseries::{apply_transform, Month, MonthlySeries, Panel};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{resolve, ModelConfig, PipelineConfig};

/// Everything a subcommand needs: the validated config, its directory
/// (the base for relative paths), the artifact directory, the metadata
/// header, and the lunar table.
pub struct Context {
    pub config: PipelineConfig,
    pub dir: PathBuf,
    pub out: PathBuf,
    pub meta: ArtifactMeta,
    pub table: LunarTable,
}

impl Context {
    pub fn new(config: PipelineConfig, dir: PathBuf, out_override: Option<PathBuf>) -> Result<Self> {
        let out = out_override.unwrap_or_else(|| resolve(&dir, &config.out_dir));
        let table = config.lunar_table(&dir)?;
        let meta = ArtifactMeta::with_config_hash(config.hash());
        Ok(Context {
            config,
            dir,
            out,
            meta,
            table,
        })
    }

    /// Creates (or truncates) an artifact file in the output directory.
    fn create(&self, name: &str) -> Result<File> {
        std::fs::create_dir_all(&self.out)?;
        Ok(File::create(self.out.join(name))?)
    }

    /// The target series, clipped to start no earlier than
    /// `training_start`.
    fn load_target(&self) -> Result<MonthlySeries> {
        let series = self.read_series(&self.config.target_csv)?;
        clip_start(&series, self.config.training_start)
    }

    fn read_series(&self, rel: &str) -> Result<MonthlySeries> {
        let path = resolve(&self.dir, rel);
        let file = File::open(&path)?;
        io::read_series_csv(file, &path.display().to_string())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            seed: self.config.seed,
            ..FitOptions::default()
        }
    }

    fn fast_fit_options(&self) -> FitOptions {
        FitOptions {
            seed: self.config.seed,
            skip_se: true,
            ..FitOptions::default()
        }
    }
}

fn clip_start(series: &MonthlySeries, start: Month) -> Result<MonthlySeries> {
    if start > series.start() {
        series.slice(start, series.end())
    } else {
        Ok(series.clone())
    }
}

/// The configured model structure over one estimation span: holiday
/// regressors over the span plus every configured intervention whose
/// anchor falls inside it.
fn build_spec(model: &ModelConfig, series: &MonthlySeries, table: &LunarTable) -> Result<SarimaSpec> {
    let mut spec = SarimaSpec::new(
        model.p,
        model.d,
        model.q,
        model.seasonal_p,
        model.seasonal_d,
        model.seasonal_q,
    );
    let in_span = |m: Month| m >= series.start() && m <= series.end();

    let mut mean = Vec::new();
    if model.has_holiday_window() {
        let (h1, h2, h3) =
            sf_regressors(series.start(), series.len(), table, model.holiday_window())?;
        mean.extend([h1, h2, h3]);
    }
    for (kind, anchor, delta) in model.mean_interventions()? {
        if in_span(anchor) {
            mean.push(intervention_column(
                series.start(),
                series.len(),
                kind,
                anchor,
                delta,
            )?);
        }
    }
    if !mean.is_empty() {
        spec = spec.with_mean_regressors(mean)?;
    }

    let io_cols: Vec<_> = model
        .io_pulses()?
        .into_iter()
        .filter(|&m| in_span(m))
        .map(|m| intervention_column(series.start(), series.len(), RegressorKind::IoPulse, m, 0.0))
        .collect::<Result<_>>()?;
    if !io_cols.is_empty() {
        spec = spec.with_innovation_pulses(io_cols)?;
    }
    Ok(spec)
}

// ---------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------

pub fn cmd_fit(ctx: &Context) -> Result<()> {
    let series = ctx.load_target()?;
    let spec = build_spec(&ctx.config.model, &series, &ctx.table)?;
    let model = sarimax::fit_with_options(&series, &spec, &ctx.fit_options())?;

    let doc = io::model_document(&model, &ctx.meta);
    io::write_model_json(ctx.create("model.json")?, &doc)?;
    io::write_series_csv(ctx.create("residuals.csv")?, model.residuals(), &ctx.meta)?;
    println!(
        "fit: wrote model.json and residuals.csv (loglik = {:.4}, sigma_a = {:.4}, n_eff = {})",
        model.loglik(),
        model.sigma_a(),
        model.n_effective()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------

pub fn cmd_grid(ctx: &Context) -> Result<()> {
    let series = ctx.load_target()?;
    let cfg = &ctx.config;
    let orders = cfg.order_grid.orders();
    let windows = cfg.window_grid.windows();
    let sigma0 = selection::sigma0(&series)?;

    // The forecast criterion is always the 1-step expanding experiment
    // over the configured span, whatever scheme the backtest subcommand
    // uses.
    let protocol = BacktestProtocol::new(
        Scheme::Expanding,
        cfg.training_start,
        cfg.span_start,
        cfg.span_end,
        &[1],
    )?
    .with_refit_stride(cfg.refit_stride)?;

    let total = orders.len() * windows.len();
    let options = GridOptions {
        fit_options: ctx.fast_fit_options(),
        interventions: cfg.model.mean_interventions()?,
        io_pulses: cfg.model.io_pulses()?,
        table: ctx.table.clone(),
        progress: Some(Box::new(move |done, _| {
            if done == total || done % 50 == 0 {
                eprintln!("grid: {done}/{total} cells");
            }
        })),
    };

    let grid = selection::grid_search(&series, &orders, &windows, sigma0, &protocol, &options)?;
    io::write_grid_csv(ctx.create("grid.csv")?, &grid, &ctx.meta)?;
    let doc = io::grid_summary(&grid, 10, None, &ctx.meta);
    io::write_grid_summary_json(ctx.create("grid_summary.json")?, &doc)?;

    let best = grid.best();
    let (p, q, sp, sq) = best.order;
    println!(
        "grid: {} orders x {} windows (sigma0 = {:.4}); best ({p},{q},{sp},{sq}) at window ({},{},{}); wrote grid.csv and grid_summary.json",
        orders.len(),
        windows.len(),
        grid.sigma0(),
        best.tau_star.tau1,
        best.tau_star.tau2,
        best.tau_star.tau3,
    );
    Ok(())
}

// ---------------------------------------------------------------------
// outliers
// ---------------------------------------------------------------------

pub fn cmd_outliers(ctx: &Context) -> Result<()> {
    let series = ctx.load_target()?;
    let cfg = &ctx.config;

    // Iterative scan of the configured model: detect, absorb the
    // strongest finding as a regressor, refit, repeat.
    let spec = build_spec(&cfg.model, &series, &ctx.table)?;
    let scan = outlierscan::detect_iterative(&series, &spec, cfg.critical_value)?;
    io::write_findings_csv(ctx.create("findings.csv")?, scan.findings(), &ctx.meta)?;
    let doc = io::model_document(scan.model(), &ctx.meta);
    io::write_model_json(ctx.create("adjusted_model.json")?, &doc)?;
    if !scan.converged() {
        eprintln!("outliers: round cap hit; findings.csv is a partial result");
    }

    // Census: one detection pass per order in the grid, all at the
    // configured holiday window and interventions.
    let options = ctx.fast_fit_options();
    let fits: Vec<std::result::Result<FittedModel, Error>> = cfg
        .order_grid
        .orders()
        .par_iter()
        .map(|&(p, q, sp, sq)| {
            let mc = ModelConfig {
                p,
                q,
                seasonal_p: sp,
                seasonal_q: sq,
                ..cfg.model.clone()
            };
            let spec = build_spec(&mc, &series, &ctx.table)?;
            sarimax::fit_with_options(&series, &spec, &options)
        })
        .collect();
    let mut models = Vec::new();
    let mut failed = 0usize;
    for fit in fits {
        match fit {
            Ok(m) => models.push(m),
            Err(_) => failed += 1,
        }
    }
    if models.is_empty() {
        return Err(Error::NonConvergence(
            "every order in the census grid failed to fit".into(),
        ));
    }
    let census = outlierscan::census(&series, &models, cfg.critical_value)?;
    io::write_census_csv(ctx.create("census.csv")?, &census, &ctx.meta)?;

    println!(
        "outliers: {} findings in {} rounds; census over {} models ({} failed): {:.1}% January, {:.1}% February; wrote findings.csv, adjusted_model.json, census.csv",
        scan.findings().len(),
        scan.rounds(),
        census.n_models(),
        failed,
        census.pct_january(),
        census.pct_february(),
    );
    Ok(())
}

// ---------------------------------------------------------------------
// sf-effects
// ---------------------------------------------------------------------

pub fn cmd_sf_effects(ctx: &Context) -> Result<()> {
    let series = ctx.load_target()?;
    let cfg = &ctx.config;
    if !cfg.model.has_holiday_window() {
        return Err(Error::InvalidParam(
            "sf-effects requires a nonzero holiday window in model.window".into(),
        ));
    }

    let spec = build_spec(&cfg.model, &series, &ctx.table)?;
    let model = sarimax::fit_with_options(&series, &spec, &ctx.fit_options())?;
    let (_, effect) = seasadj::remove_sf(&series, &model)?;
    io::write_series_csv(ctx.create("sf_effects.csv")?, &effect, &ctx.meta)?;

    let pct = sf_relative_percentage(&series, &effect)?;
    io::write_series_csv(ctx.create("sf_relative_pct.csv")?, &pct, &ctx.meta)?;

    let (h1, h2, h3) = sf_regressors(
        series.start(),
        series.len(),
        &ctx.table,
        cfg.model.holiday_window(),
    )?;
    let regressors = Panel::from_series(vec![
        ("H1".into(), h1.series().clone()),
        ("H2".into(), h2.series().clone()),
        ("H3".into(), h3.series().clone()),
    ])?;
    io::write_panel_csv(ctx.create("sf_regressors.csv")?, &regressors, &ctx.meta)?;

    println!(
        "sf-effects: window ({},{},{}); wrote sf_effects.csv, sf_relative_pct.csv, sf_regressors.csv",
        cfg.model.window[0], cfg.model.window[1], cfg.model.window[2],
    );
    Ok(())
}

// ---------------------------------------------------------------------
// seasadj
// ---------------------------------------------------------------------

pub fn cmd_seasadj(ctx: &Context) -> Result<()> {
    let series = ctx.load_target()?;
    let cfg = &ctx.config;
    let mode = cfg.sa_mode()?;

    let decomposition = if cfg.model.has_holiday_window() {
        let spec = build_spec(&cfg.model, &series, &ctx.table)?;
        let model = sarimax::fit_with_options(&series, &spec, &ctx.fast_fit_options())?;
        seasadj::adjust(&series, &model, mode)?
    } else {
        seasadj::decompose(&series, mode)?
    };

    io::write_decomposition_csv(ctx.create("decomposition.csv")?, &decomposition, &ctx.meta)?;
    io::write_series_csv(ctx.create("sa_series.csv")?, decomposition.adjusted(), &ctx.meta)?;
    println!(
        "seasadj: {} adjustment over {}..{}; wrote decomposition.csv and sa_series.csv",
        cfg.sa_mode,
        series.start(),
        series.end()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// backtest
// ---------------------------------------------------------------------

fn sarimax_engine(ctx: &Context) -> Result<SarimaxForecaster> {
    let m = &ctx.config.model;
    let mut engine = SarimaxForecaster::new(m.p, m.d, m.q, m.seasonal_p, m.seasonal_d, m.seasonal_q)
        .with_fit_options(ctx.fast_fit_options());
    if m.has_holiday_window() {
        engine = engine.with_sf_window(m.holiday_window(), ctx.table.clone());
    }
    for (kind, anchor, delta) in m.mean_interventions()? {
        engine = engine.with_intervention(kind, anchor, delta)?;
    }
    for anchor in m.io_pulses()? {
        engine = engine.with_io_pulse(anchor);
    }
    Ok(engine)
}

pub fn cmd_backtest(ctx: &Context) -> Result<()> {
    let series = ctx.load_target()?;
    let cfg = &ctx.config;
    let scheme = cfg.scheme()?;
    let protocol = BacktestProtocol::new(
        scheme,
        cfg.training_start,
        cfg.span_start,
        cfg.span_end,
        &cfg.horizons,
    )?
    .with_rolling_base(cfg.rolling_base)?
    .with_refit_stride(cfg.refit_stride)?;

    let report = match cfg.engine.as_str() {
        "di" => {
            let engine = DiForecaster::from_context(ctx)?;
            backtest::run(&series, &engine, &protocol)?
        }
        _ => {
            let engine = sarimax_engine(ctx)?;
            backtest::run(&series, &engine, &protocol)?
        }
    };

    let sigma0 = selection::sigma0(&series).ok();
    let stem = format!("backtest_{}_{}", cfg.engine, scheme);
    for trace in report.traces() {
        let h = trace.horizon();
        io::write_backtest_csv(ctx.create(&format!("{stem}_h{h}.csv"))?, trace, &ctx.meta)?;
        io::write_error_trace_csv(
            ctx.create(&format!("errors_{}_{}_h{h}.csv", cfg.engine, scheme))?,
            trace,
            &ctx.meta,
        )?;
    }
    io::write_backtest_summary_csv(
        ctx.create(&format!("{stem}_summary.csv"))?,
        &report,
        sigma0,
        &ctx.meta,
    )?;

    let rmses: Vec<String> = report
        .traces()
        .iter()
        .map(|t| format!("h{}: {:.4}", t.horizon(), t.rmse()))
        .collect();
    println!(
        "backtest: {} engine, {scheme} scheme, span {}..{}; RMSE {}; wrote {stem}_*.csv",
        cfg.engine,
        cfg.span_start,
        cfg.span_end,
        rmses.join(", "),
    );
    Ok(())
}

// ---------------------------------------------------------------------
// Diffusion-index engine
// ---------------------------------------------------------------------

/// The diffusion-index forecast pipeline as a backtest engine. Every
/// origin re-derives everything from its own training slice: the
/// adjusted target (either the fitted holiday/seasonal removal or the
/// official-ratio route), the factors from the covariate panel cut at
/// the origin, and the tuned forecast regression.
pub struct DiForecaster {
    /// Covariate panel with the per-covariate transforms applied and the
    /// rows consumed by differencing dropped.
    panel: Panel,
    /// Raw and officially adjusted target, when configured; the pair
    /// switches the seasonal route to the published ratio.
    official: Option<(MonthlySeries, MonthlySeries)>,
    model: ModelConfig,
    mode: Mode,
    max_k: usize,
    table: LunarTable,
    options: FitOptions,
}

impl DiForecaster {
    pub fn from_context(ctx: &Context) -> Result<Self> {
        let cfg = &ctx.config;
        let rel = cfg.panel_csv.as_ref().ok_or_else(|| {
            Error::InvalidParam("the diffusion index requires panel_csv in the config".into())
        })?;
        let path = resolve(&ctx.dir, rel);
        let raw_panel = io::read_panel_csv(File::open(&path)?, &path.display().to_string())?;
        let panel = transform_panel(&raw_panel, cfg)?;

        let official = match &cfg.sa_target_csv {
            None => None,
            Some(rel) => {
                let raw = ctx.load_target()?;
                let sa = clip_start(&ctx.read_series(rel)?, cfg.training_start)?;
                Some((raw, sa))
            }
        };

        Ok(DiForecaster {
            panel,
            official,
            model: cfg.model.clone(),
            mode: cfg.sa_mode()?,
            max_k: cfg.max_k,
            table: ctx.table.clone(),
            options: ctx.fast_fit_options(),
        })
    }

    /// Adjusted history plus the `h`-step-ahead seasonal and holiday
    /// components, all derived from `train` alone.
    fn sa_components(&self, train: &MonthlySeries, h: usize) -> Result<(MonthlySeries, f64, f64)> {
        if let Some((raw_full, sa_full)) = &self.official {
            let raw = raw_full.slice(train.start(), train.end())?;
            let sa = sa_full.slice(train.start(), train.end())?;
            let ratio = seasadj::seasonality_from_ratio(&raw, &sa)?;
            let s = seasadj::forecast_seasonality(
                &ratio,
                &seasadj::seasonality_spec(),
                h,
                Mode::Multiplicative,
            )?;
            return Ok((sa, s[h - 1], 0.0));
        }
        if self.model.has_holiday_window() {
            let spec = build_spec(&self.model, train, &self.table)?;
            let fitted = sarimax::fit_with_options(train, &spec, &self.options)?;
            let d = seasadj::adjust(train, &fitted, self.mode)?;
            let s =
                seasadj::forecast_seasonality(d.seasonal(), &seasadj::seasonality_spec(), h, self.mode)?;
            let holiday = holiday_forecast(&fitted, &self.table, h)?;
            Ok((d.adjusted().clone(), s[h - 1], holiday))
        } else {
            let d = seasadj::decompose(train, self.mode)?;
            let s =
                seasadj::forecast_seasonality(d.seasonal(), &seasadj::seasonality_spec(), h, self.mode)?;
            Ok((d.adjusted().clone(), s[h - 1], 0.0))
        }
    }

    /// Factors over the panel rows up to (never past) `t0`.
    fn factors_at(&self, t0: Month) -> Result<diffusion::EmResult> {
        if self.panel.start() > t0 {
            return Err(Error::SpanMismatch(format!(
                "the covariate panel starts {} but the forecast origin is {t0}",
                self.panel.start()
            )));
        }
        let end = if self.panel.end() < t0 { self.panel.end() } else { t0 };
        let slice = self.panel.slice_rows(self.panel.start(), end)?;
        let r = self.max_k.min(slice.ncols());
        diffusion::em_impute(&slice, r)
    }

    /// The full per-origin pipeline, returning the reconstruction and
    /// the chosen regression.
    pub fn forecast_detail(&self, train: &MonthlySeries, h: usize) -> Result<(DiForecast, DiTuning)> {
        let t0 = train.end();
        let (sa, seasonal, holiday) = self.sa_components(train, h)?;
        let em = self.factors_at(t0)?;
        let factors = em.model.factor_panel(self.panel.start());
        let (y, yh) = diffusion::make_target(&sa, h)?;
        let (y_hat, tuning) = diffusion::di_forecast(&y, &yh, &factors, self.max_k, t0, h)?;
        let forecast = diffusion::reconstruct_cpi(&sa, y_hat, h, seasonal, holiday, self.mode)?;
        Ok((forecast, tuning))
    }
}

impl Forecaster for DiForecaster {
    fn forecast(&self, train: &MonthlySeries, h: usize) -> Result<f64> {
        Ok(self.forecast_detail(train, h)?.0.cpi_hat)
    }
}

/// Σ β̂ᵢ·Hᵢ at `h` months past the model's sample, over the holiday
/// regressors only (interventions are excluded from the holiday
/// component).
fn holiday_forecast(model: &FittedModel, table: &LunarTable, h: usize) -> Result<f64> {
    let future = sarimax::future_mean_regressors(model.spec(), table, h)?;
    let beta = &model.params().beta;
    let mut total = 0.0;
    for (i, col) in model.spec().mean_regressors().iter().enumerate() {
        if matches!(
            col.kind(),
            RegressorKind::SfBefore | RegressorKind::SfDuring | RegressorKind::SfAfter
        ) {
            total += beta[i] * future[i][h - 1];
        }
    }
    Ok(total)
}

/// Applies the configured per-covariate transform codes and drops the
/// leading rows the differencing consumed.
fn transform_panel(panel: &Panel, cfg: &PipelineConfig) -> Result<Panel> {
    let codes = cfg.transform_codes()?;
    for name in codes.keys() {
        if !panel.names().contains(name) {
            return Err(Error::InvalidParam(format!(
                "transforms lists {name:?}, which is not a panel column"
            )));
        }
    }
    let mut columns = Vec::with_capacity(panel.ncols());
    let mut consumed = 0usize;
    for (j, name) in panel.names().iter().enumerate() {
        let series = panel.column_series(j);
        let series = match codes.get(name) {
            Some(&code) => {
                consumed = consumed.max(code.order());
                apply_transform(&series, code)?
            }
            None => series,
        };
        columns.push((name.clone(), series));
    }
    let transformed = Panel::from_series(columns)?;
    if consumed == 0 {
        return Ok(transformed);
    }
    if transformed.nrows() <= consumed {
        return Err(Error::SeriesTooShort {
            needed: consumed + 1,
            got: transformed.nrows(),
        });
    }
    transformed.slice_rows(
        transformed.start().plus(consumed as i64),
        transformed.end(),
    )
}

// ---------------------------------------------------------------------
// di-forecast
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct DiTuningRow<'a> {
    h: usize,
    tuning: &'a DiTuning,
}

#[derive(Serialize)]
struct DiTuningDocument<'a> {
    meta: &'a ArtifactMeta,
    origin: Month,
    rows: Vec<DiTuningRow<'a>>,
}

pub fn cmd_di_forecast(ctx: &Context) -> Result<()> {
    let series = ctx.load_target()?;
    let cfg = &ctx.config;
    let engine = DiForecaster::from_context(ctx)?;
    let t0 = series.end();

    // Loadings of the full-sample factor extraction.
    let em = engine.factors_at(t0)?;
    io::write_loadings_csv(
        ctx.create("loadings.csv")?,
        &em.model,
        engine.panel.names(),
        &ctx.meta,
    )?;

    let mut rows: Vec<(DiForecast, DiTuning)> = Vec::new();
    for &h in &cfg.horizons {
        rows.push(engine.forecast_detail(&series, h)?);
    }

    let mut w = ctx.create("di_forecast.csv")?;
    io::write_comment_header(&mut w, &ctx.meta)?;
    writeln!(
        w,
        "h,y_hat,sa_cpi_hat,cpi_hat,seasonal,holiday,k,y_lags,f_lags,bic,n_obs"
    )?;
    for (fc, tuning) in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fc.h,
            fc.y_hat,
            fc.sa_cpi_hat,
            fc.cpi_hat,
            fc.seasonal,
            fc.holiday,
            tuning.k,
            tuning.y_lags,
            tuning.f_lags,
            tuning.bic,
            tuning.n_obs,
        )?;
    }
    w.flush()?;

    let doc = DiTuningDocument {
        meta: &ctx.meta,
        origin: t0,
        rows: rows
            .iter()
            .map(|(fc, tuning)| DiTuningRow { h: fc.h, tuning })
            .collect(),
    };
    let mut w = ctx.create("di_tuning.json")?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;

    println!(
        "di-forecast: {} horizons from origin {t0} ({} factors, EM {} iterations, converged = {}); wrote loadings.csv, di_forecast.csv, di_tuning.json",
        rows.len(),
        em.model.r(),
        em.iterations,
        em.converged,
    );
    Ok(())
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

/// Parses an `h,rmse,rmse_over_sigma0` summary written by `backtest`.
fn read_summary(path: &Path) -> Result<Vec<(usize, f64)>> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("h,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Csv {
                path: display,
                detail: format!("line {}: expected h,rmse,rmse_over_sigma0", i + 1),
            });
        }
        let h: usize = fields[0].parse().map_err(|e| Error::Csv {
            path: display.clone(),
            detail: format!("line {}: bad horizon: {e}", i + 1),
        })?;
        let rmse: f64 = fields[1].parse().map_err(|e| Error::Csv {
            path: display.clone(),
            detail: format!("line {}: bad rmse: {e}", i + 1),
        })?;
        out.push((h, rmse));
    }
    if out.is_empty() {
        return Err(Error::Csv {
            path: display,
            detail: "no summary rows".into(),
        });
    }
    Ok(out)
}

pub fn cmd_report(ctx: &Context) -> Result<()> {
    let mut produced = Vec::new();
    for scheme in ["expanding", "rolling"] {
        let di_path = ctx.out.join(format!("backtest_di_{scheme}_summary.csv"));
        let sx_path = ctx.out.join(format!("backtest_sarimax_{scheme}_summary.csv"));
        if !(di_path.is_file() && sx_path.is_file()) {
            continue;
        }
        let di = read_summary(&di_path)?;
        let sx = read_summary(&sx_path)?;
        let name = format!("rmse_ratio_{scheme}.csv");
        let mut w = ctx.create(&name)?;
        io::write_comment_header(&mut w, &ctx.meta)?;
        writeln!(w, "h,rmse_di,rmse_sarimax,ratio")?;
        for &(h, rmse_di) in &di {
            let Some(&(_, rmse_sx)) = sx.iter().find(|&&(hh, _)| hh == h) else {
                continue;
            };
            if rmse_sx > 0.0 {
                writeln!(w, "{h},{rmse_di},{rmse_sx},{}", rmse_di / rmse_sx)?;
            }
        }
        w.flush()?;
        produced.push(name);
    }
    if produced.is_empty() {
        return Err(Error::InvalidParam(format!(
            "report needs backtest_di_<scheme>_summary.csv and backtest_sarimax_<scheme>_summary.csv under {}; run `backtest` once with engine \"di\" and once with \"sarimax\" first",
            ctx.out.display()
        )));
    }
    println!("report: wrote {}", produced.join(", "));
    Ok(())
}
