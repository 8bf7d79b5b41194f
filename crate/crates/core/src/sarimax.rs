//! Seasonal ARIMA estimation with exogenous regressors.
//!
//! The model is a regression with seasonal-ARIMA errors,
//!
//! ```text
//! Z_t = sum_i beta_i X_it + N_t,
//! phi(B) PHI(B^s) (1-B)^d (1-B^s)^D N_t = theta(B) THETA(B^s) (a_t + sum_j omega_j P_t),
//! ```
//!
//! with minus-convention polynomials, mean regressors X (holiday terms and
//! AO/LS/TC interventions) and innovation pulses P (IO interventions).
//! Estimation differences the series and the mean regressors identically,
//! then maximizes the exact Gaussian likelihood of the stationary ARMA
//! disturbance by a Kalman recursion with stationary initialization. The
//! regression coefficients are profiled out by generalized least squares in
//! the whitened space and the innovation variance is concentrated, so the
//! optimizer only searches over the ARMA coefficients, reparameterized
//! through partial autocorrelations to keep every root outside the unit
//! circle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::calendar::{
    intervention_column, sf_regressors, LunarTable, RegressorColumn, RegressorKind,
};
use crate::error::{Error, Result};
use crate::kalman::{concentrated_loglik, ArmaFilter};
use crate::optim::{minimize, BfgsOptions};
use crate::poly::{
    coeffs_to_pacf, difference_poly, expand_ratio, pacf_to_coeffs, poly_mul,
    roots_outside_unit_circle, seasonal_product,
};
use crate::timeseries::{difference, Month, MonthlySeries};

/// Model structure: orders, differencing, and regressors.
#[derive(Clone, Debug)]
pub struct SarimaSpec {
    p: usize,
    d: usize,
    q: usize,
    seasonal_p: usize,
    seasonal_d: usize,
    seasonal_q: usize,
    season: usize,
    mean_regressors: Vec<RegressorColumn>,
    innovation_pulses: Vec<RegressorColumn>,
}

impl SarimaSpec {
    /// A monthly model `(p,d,q) x (P,D,Q)_12` with no regressors.
    pub fn new(p: usize, d: usize, q: usize, sp: usize, sd: usize, sq: usize) -> Self {
        SarimaSpec {
            p,
            d,
            q,
            seasonal_p: sp,
            seasonal_d: sd,
            seasonal_q: sq,
            season: 12,
            mean_regressors: Vec::new(),
            innovation_pulses: Vec::new(),
        }
    }

    /// Adds mean-side regressors (SF terms, AO/LS/TC interventions).
    pub fn with_mean_regressors(mut self, cols: Vec<RegressorColumn>) -> Result<Self> {
        for c in &cols {
            if c.kind().is_innovation_side() {
                return Err(Error::InvalidParam(format!(
                    "{} belongs on the innovation side",
                    c.name()
                )));
            }
        }
        self.mean_regressors = cols;
        Ok(self)
    }

    /// Adds innovation-side pulses (IO interventions).
    pub fn with_innovation_pulses(mut self, cols: Vec<RegressorColumn>) -> Result<Self> {
        for c in &cols {
            if !c.kind().is_innovation_side() {
                return Err(Error::InvalidParam(format!(
                    "{} belongs on the mean side",
                    c.name()
                )));
            }
        }
        self.innovation_pulses = cols;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn seasonal_p(&self) -> usize {
        self.seasonal_p
    }
    pub fn seasonal_d(&self) -> usize {
        self.seasonal_d
    }
    pub fn seasonal_q(&self) -> usize {
        self.seasonal_q
    }
    pub fn season(&self) -> usize {
        self.season
    }
    pub fn mean_regressors(&self) -> &[RegressorColumn] {
        &self.mean_regressors
    }
    pub fn innovation_pulses(&self) -> &[RegressorColumn] {
        &self.innovation_pulses
    }

    /// Months consumed by differencing.
    pub fn diff_offset(&self) -> usize {
        self.d + self.seasonal_d * self.season
    }

    fn n_arma(&self) -> usize {
        self.p + self.q + self.seasonal_p + self.seasonal_q
    }
}

/// A complete parameter point for [`loglik`] and [`simulate`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SarimaParams {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub seasonal_phi: Vec<f64>,
    pub seasonal_theta: Vec<f64>,
    /// Mean-regressor coefficients, one per column in spec order.
    pub beta: Vec<f64>,
    /// Innovation-pulse coefficients, one per pulse in spec order.
    pub omega_io: Vec<f64>,
    pub sigma_a: f64,
}

impl SarimaParams {
    pub fn zeros(spec: &SarimaSpec) -> Self {
        SarimaParams {
            phi: vec![0.0; spec.p],
            theta: vec![0.0; spec.q],
            seasonal_phi: vec![0.0; spec.seasonal_p],
            seasonal_theta: vec![0.0; spec.seasonal_q],
            beta: vec![0.0; spec.mean_regressors.len()],
            omega_io: vec![0.0; spec.innovation_pulses.len()],
            sigma_a: 1.0,
        }
    }

    fn check_dims(&self, spec: &SarimaSpec) -> Result<()> {
        let ok = self.phi.len() == spec.p
            && self.theta.len() == spec.q
            && self.seasonal_phi.len() == spec.seasonal_p
            && self.seasonal_theta.len() == spec.seasonal_q
            && self.beta.len() == spec.mean_regressors.len()
            && self.omega_io.len() == spec.innovation_pulses.len();
        if !ok {
            return Err(Error::InvalidParam(
                "parameter dimensions do not match the spec".into(),
            ));
        }
        if !(self.sigma_a.is_finite() && self.sigma_a > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sigma_a must be positive, got {}",
                self.sigma_a
            )));
        }
        Ok(())
    }

    /// Checks stationarity and invertibility of the seasonal products.
    fn check_roots(&self, spec: &SarimaSpec) -> Result<()> {
        let ar = minus_coeffs(&seasonal_product(&self.phi, &self.seasonal_phi, spec.season));
        let ma = minus_coeffs(&seasonal_product(
            &self.theta,
            &self.seasonal_theta,
            spec.season,
        ));
        if !roots_outside_unit_circle(&ar)? {
            return Err(Error::InvalidParam(
                "autoregressive roots inside the unit circle".into(),
            ));
        }
        if !roots_outside_unit_circle(&ma)? {
            return Err(Error::InvalidParam(
                "moving-average roots inside the unit circle".into(),
            ));
        }
        Ok(())
    }
}

/// Estimation result.
#[derive(Clone, Debug)]
pub struct FittedModel {
    spec: SarimaSpec,
    series: MonthlySeries,
    params: SarimaParams,
    loglik: f64,
    sigma2_mle: f64,
    residuals: MonthlySeries,
    /// Standard errors for `[phi, theta, seasonal_phi, seasonal_theta]`.
    arma_se: Vec<f64>,
    /// Standard errors per mean regressor; NaN for dropped columns.
    beta_se: Vec<f64>,
    io_se: Vec<f64>,
    /// Which mean regressors survived differencing (non-zero columns).
    active_mean: Vec<bool>,
    n_effective: usize,
}

impl FittedModel {
    pub fn spec(&self) -> &SarimaSpec {
        &self.spec
    }
    pub fn series(&self) -> &MonthlySeries {
        &self.series
    }
    pub fn params(&self) -> &SarimaParams {
        &self.params
    }
    /// Maximized log-likelihood of the differenced data.
    pub fn loglik(&self) -> f64 {
        self.loglik
    }
    /// Innovation scale with divisor `n - 1`.
    pub fn sigma_a(&self) -> f64 {
        self.params.sigma_a
    }
    /// Likelihood-maximizing innovation variance (divisor `n`).
    pub fn sigma2_mle(&self) -> f64 {
        self.sigma2_mle
    }
    /// One-step prediction errors scaled to a common variance.
    pub fn residuals(&self) -> &MonthlySeries {
        &self.residuals
    }
    pub fn arma_se(&self) -> &[f64] {
        &self.arma_se
    }
    pub fn beta_se(&self) -> &[f64] {
        &self.beta_se
    }
    pub fn io_se(&self) -> &[f64] {
        &self.io_se
    }
    pub fn active_mean(&self) -> &[bool] {
        &self.active_mean
    }
    pub fn n_effective(&self) -> usize {
        self.n_effective
    }
}

/// Point forecasts and standard errors for months after the sample.
#[derive(Clone, Debug)]
pub struct Forecast {
    start: Month,
    pub point: Vec<f64>,
    pub se: Vec<f64>,
}

impl Forecast {
    pub fn start(&self) -> Month {
        self.start
    }

    pub fn month(&self, j: usize) -> Month {
        self.start.plus(j as i64)
    }

    pub fn horizon(&self) -> usize {
        self.point.len()
    }
}

/// Fit controls; `Default` matches the pipeline settings.
#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Extra perturbed starts tried when an attempt fails to converge.
    pub restarts: usize,
    /// Seed for the restart perturbations.
    pub seed: u64,
    /// Warm-start parameters (beta/omega/sigma entries are ignored).
    pub init: Option<SarimaParams>,
    /// Skip the numerical-Hessian standard errors (they cost a few dozen
    /// likelihood evaluations and grid search never reads them).
    pub skip_se: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 3,
            seed: 0,
            init: None,
            skip_se: false,
        }
    }
}

fn minus_coeffs(full: &[f64]) -> Vec<f64> {
    full[1..].iter().map(|v| -v).collect()
}

/// Differenced data and regressors shared by fit/loglik/forecast.
struct Prepared {
    /// Differenced series, length `n`.
    w: Vec<f64>,
    /// Differenced mean-regressor columns (all of them, aligned to spec).
    mean_cols: Vec<Vec<f64>>,
    /// Columns that are not identically zero after differencing.
    active: Vec<bool>,
    /// Innovation-pulse anchors as raw-series indices.
    io_anchors: Vec<usize>,
    n: usize,
    offset: usize,
}

fn prepare(series: &MonthlySeries, spec: &SarimaSpec) -> Result<Prepared> {
    let offset = spec.diff_offset();
    let w = difference(series, spec.d, spec.seasonal_d, spec.season)?;
    let n = w.len();

    let mut mean_cols = Vec::with_capacity(spec.mean_regressors.len());
    let mut active = Vec::with_capacity(spec.mean_regressors.len());
    for col in &spec.mean_regressors {
        let s = col.series();
        if s.start() != series.start() || s.len() != series.len() {
            return Err(Error::SpanMismatch(format!(
                "regressor {} spans {}..{}, series spans {}..{}",
                col.name(),
                s.start(),
                s.end(),
                series.start(),
                series.end()
            )));
        }
        let diffed = difference(s, spec.d, spec.seasonal_d, spec.season)?;
        let vals = diffed.values().to_vec();
        active.push(vals.iter().any(|&v| v != 0.0));
        mean_cols.push(vals);
    }

    let mut io_anchors = Vec::with_capacity(spec.innovation_pulses.len());
    for col in &spec.innovation_pulses {
        let anchor = col.anchor().ok_or_else(|| {
            Error::InvalidParam(format!("{} has no anchor month", col.name()))
        })?;
        let idx = series.index_of(anchor).ok_or(Error::AnchorOutOfRange {
            anchor,
            start: series.start(),
            end: series.end(),
        })?;
        io_anchors.push(idx);
    }

    Ok(Prepared {
        w: w.values().to_vec(),
        mean_cols,
        active,
        io_anchors,
        n,
        offset,
    })
}

/// Deterministic innovation-pulse paths in the differenced series: a pulse
/// at raw index `a` shifts the disturbance mean by `omega * psi_{t-a}`.
fn io_mean_columns(
    prep: &Prepared,
    ar_full: &[f64],
    ma_full: &[f64],
    extra: usize,
) -> Vec<Vec<f64>> {
    if prep.io_anchors.is_empty() {
        return Vec::new();
    }
    let horizon = prep.offset + prep.n + extra;
    let psi = expand_ratio(ma_full, ar_full, horizon);
    prep.io_anchors
        .iter()
        .map(|&a| {
            (0..prep.n + extra)
                .map(|i| {
                    let t = i + prep.offset;
                    if t >= a {
                        psi[t - a]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

struct GlsFit {
    /// Coefficients for the active mean columns followed by IO pulses.
    gamma: Vec<f64>,
    gamma_se_unit: Vec<f64>,
    /// Whitened-residual sum of squares.
    rss: f64,
    log_f_sum: f64,
    /// Innovations of the regression residual.
    resid_innov: Vec<f64>,
    f: Vec<f64>,
    loglik: f64,
}

/// Whitens the series and regressors under an ARMA parameter point and
/// profiles the regression coefficients by least squares.
fn gls_profile(
    prep: &Prepared,
    phi: &[f64],
    theta: &[f64],
    sphi: &[f64],
    stheta: &[f64],
    season: usize,
) -> Result<GlsFit> {
    let ar_full = seasonal_product(phi, sphi, season);
    let ma_full = seasonal_product(theta, stheta, season);
    let filter = ArmaFilter::new(&minus_coeffs(&ar_full), &minus_coeffs(&ma_full));

    let io_cols = io_mean_columns(prep, &ar_full, &ma_full, 0);
    let mut columns: Vec<&[f64]> = Vec::with_capacity(1 + prep.mean_cols.len() + io_cols.len());
    columns.push(&prep.w);
    for (c, &keep) in prep.mean_cols.iter().zip(&prep.active) {
        if keep {
            columns.push(c);
        }
    }
    for c in &io_cols {
        columns.push(c);
    }

    let wh = filter.whiten(&columns)?;
    let n = prep.n;
    let k = columns.len() - 1;
    let inv_sqrt_f: Vec<f64> = wh.f.iter().map(|f| 1.0 / f.sqrt()).collect();

    let (gamma, gamma_se_unit, rss, resid_innov) = if k == 0 {
        let rss: f64 = wh.innovations[0]
            .iter()
            .zip(&wh.f)
            .map(|(v, f)| v * v / f)
            .sum();
        (Vec::new(), Vec::new(), rss, wh.innovations[0].clone())
    } else {
        // Normal equations in the whitened space.
        let mut xtx = nalgebra::DMatrix::zeros(k, k);
        let mut xty = nalgebra::DVector::zeros(k);
        for i in 0..k {
            for j in i..k {
                let mut s = 0.0;
                for t in 0..n {
                    s += wh.innovations[1 + i][t] * wh.innovations[1 + j][t]
                        * inv_sqrt_f[t]
                        * inv_sqrt_f[t];
                }
                xtx[(i, j)] = s;
                xtx[(j, i)] = s;
            }
            let mut s = 0.0;
            for t in 0..n {
                s += wh.innovations[1 + i][t] * wh.innovations[0][t] * inv_sqrt_f[t] * inv_sqrt_f[t];
            }
            xty[i] = s;
        }
        let chol = xtx.clone().cholesky().ok_or_else(|| {
            Error::IllConditioned("regressor matrix is singular after whitening".into())
        })?;
        let gamma_v = chol.solve(&xty);
        let xtx_inv = chol.inverse();
        let gamma: Vec<f64> = gamma_v.iter().copied().collect();
        let gamma_se_unit: Vec<f64> = (0..k).map(|i| xtx_inv[(i, i)].max(0.0).sqrt()).collect();
        let mut resid = wh.innovations[0].clone();
        for (i, g) in gamma.iter().enumerate() {
            for t in 0..n {
                resid[t] -= g * wh.innovations[1 + i][t];
            }
        }
        let rss: f64 = resid.iter().zip(&wh.f).map(|(v, f)| v * v / f).sum();
        (gamma, gamma_se_unit, rss, resid)
    };

    if !(rss.is_finite() && rss > 0.0) {
        return Err(Error::DegenerateSeries(format!(
            "residual sum of squares {rss:.3e}"
        )));
    }
    let (loglik, _) = concentrated_loglik_from_rss(rss, n, wh.log_f_sum);
    Ok(GlsFit {
        gamma,
        gamma_se_unit,
        rss,
        log_f_sum: wh.log_f_sum,
        resid_innov,
        f: wh.f,
        loglik,
    })
}

fn concentrated_loglik_from_rss(rss: f64, n: usize, log_f_sum: f64) -> (f64, f64) {
    let nf = n as f64;
    let sigma2 = rss / nf;
    let ll = -0.5 * nf * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * nf * sigma2.ln()
        - 0.5 * log_f_sum
        - 0.5 * nf;
    (ll, sigma2)
}

fn unpack_arma(x: &[f64], spec: &SarimaSpec) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (p, q, sp, sq) = (spec.p, spec.q, spec.seasonal_p, spec.seasonal_q);
    let phi = pacf_to_coeffs(&x[..p]);
    let theta = pacf_to_coeffs(&x[p..p + q]);
    let sphi = pacf_to_coeffs(&x[p + q..p + q + sp]);
    let stheta = pacf_to_coeffs(&x[p + q + sp..p + q + sp + sq]);
    (phi, theta, sphi, stheta)
}

fn pack_arma(params: &SarimaParams) -> Vec<f64> {
    let mut x = coeffs_to_pacf(&params.phi);
    x.extend(coeffs_to_pacf(&params.theta));
    x.extend(coeffs_to_pacf(&params.seasonal_phi));
    x.extend(coeffs_to_pacf(&params.seasonal_theta));
    x
}

/// Maximum-likelihood fit of `spec` to `series` with default options.
pub fn fit(series: &MonthlySeries, spec: &SarimaSpec) -> Result<FittedModel> {
    fit_with_options(series, spec, &FitOptions::default())
}

/// Maximum-likelihood fit with explicit restart/warm-start controls.
pub fn fit_with_options(
    series: &MonthlySeries,
    spec: &SarimaSpec,
    options: &FitOptions,
) -> Result<FittedModel> {
    let prep = prepare(series, spec)?;
    let n_active = prep.active.iter().filter(|&&a| a).count();
    let n_params = spec.n_arma() + n_active + prep.io_anchors.len() + 1;
    if prep.n < n_params + 5 {
        return Err(Error::SeriesTooShort {
            needed: prep.n + (n_params + 5 - prep.n),
            got: prep.n,
        });
    }

    let dim = spec.n_arma();
    let mut objective = |x: &[f64]| -> f64 {
        let (phi, theta, sphi, stheta) = unpack_arma(x, spec);
        match gls_profile(&prep, &phi, &theta, &sphi, &stheta, spec.season) {
            Ok(g) => -g.loglik,
            Err(_) => f64::INFINITY,
        }
    };

    let base_x0: Vec<f64> = match &options.init {
        Some(p) => {
            p.check_dims(spec)?;
            pack_arma(p)
        }
        None => vec![0.0; dim],
    };

    let opts = BfgsOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut x0 = base_x0.clone();
    let mut solution = None;
    for _ in 0..=options.restarts {
        let res = minimize(&mut objective, &x0, &opts);
        if res.converged && res.f.is_finite() {
            solution = Some(res);
            break;
        }
        x0 = base_x0
            .iter()
            .map(|&v| {
                let u: f64 = rng.random();
                let u2: f64 = rng.random();
                v * (1.0 + 0.4 * (u - 0.5)) + 0.2 * (u2 - 0.5)
            })
            .collect();
    }
    let best = solution.ok_or_else(|| {
        Error::NonConvergence(format!(
            "optimizer failed after {} starts",
            options.restarts + 1
        ))
    })?;

    let (phi, theta, sphi, stheta) = unpack_arma(&best.x, spec);
    let gls = gls_profile(&prep, &phi, &theta, &sphi, &stheta, spec.season)?;

    // Safety net; the reparameterization keeps roots admissible by
    // construction.
    let tmp = SarimaParams {
        phi: phi.clone(),
        theta: theta.clone(),
        seasonal_phi: sphi.clone(),
        seasonal_theta: stheta.clone(),
        beta: vec![],
        omega_io: vec![],
        sigma_a: 1.0,
    };
    {
        let probe = SarimaSpec::new(spec.p, 0, spec.q, spec.seasonal_p, 0, spec.seasonal_q);
        tmp.check_roots(&probe)?;
    }

    let arma_se = if options.skip_se || dim == 0 {
        vec![f64::NAN; dim]
    } else {
        profile_hessian_se(&prep, &phi, &theta, &sphi, &stheta, spec.season)
    };

    assemble_model(series, spec, prep, [phi, theta, sphi, stheta], gls, arma_se)
}

/// Re-runs the filtering and GLS stage at fixed ARMA coefficients.
///
/// The regression and innovation-pulse coefficients are re-profiled exactly
/// (they are conditionally linear given the ARMA block), so the result is a
/// complete [`FittedModel`] whose likelihood, residuals, and scale are exact
/// for the supplied coefficients — no optimizer runs. `params.beta`,
/// `params.omega_io`, and `params.sigma_a` are ignored on input. ARMA
/// standard errors are not recomputed (NaN).
///
/// This is the cheap way to apply an already-estimated model to new or
/// extended data, and the reference way to verify that reported criteria
/// reproduce from stored parameters.
pub fn refilter(
    series: &MonthlySeries,
    spec: &SarimaSpec,
    params: &SarimaParams,
) -> Result<FittedModel> {
    params.check_dims(spec)?;
    params.check_roots(spec)?;
    let prep = prepare(series, spec)?;
    let gls = gls_profile(
        &prep,
        &params.phi,
        &params.theta,
        &params.seasonal_phi,
        &params.seasonal_theta,
        spec.season,
    )?;
    let coeffs = [
        params.phi.clone(),
        params.theta.clone(),
        params.seasonal_phi.clone(),
        params.seasonal_theta.clone(),
    ];
    let arma_se = vec![f64::NAN; spec.n_arma()];
    assemble_model(series, spec, prep, coeffs, gls, arma_se)
}

/// Builds the public estimation result from a finished GLS pass.
fn assemble_model(
    series: &MonthlySeries,
    spec: &SarimaSpec,
    prep: Prepared,
    [phi, theta, sphi, stheta]: [Vec<f64>; 4],
    gls: GlsFit,
    arma_se: Vec<f64>,
) -> Result<FittedModel> {
    let n = prep.n;
    let sigma2_mle = gls.rss / n as f64;
    let sigma_a = (gls.rss / (n - 1) as f64).sqrt();

    // Map profiled coefficients back to spec order.
    let mut beta = vec![0.0; spec.mean_regressors.len()];
    let mut beta_se = vec![f64::NAN; spec.mean_regressors.len()];
    let mut gi = 0;
    for (i, &keep) in prep.active.iter().enumerate() {
        if keep {
            beta[i] = gls.gamma[gi];
            beta_se[i] = sigma_a * gls.gamma_se_unit[gi];
            gi += 1;
        }
    }
    let mut omega_io = Vec::with_capacity(prep.io_anchors.len());
    let mut io_se = Vec::with_capacity(prep.io_anchors.len());
    for _ in 0..prep.io_anchors.len() {
        omega_io.push(gls.gamma[gi]);
        io_se.push(sigma_a * gls.gamma_se_unit[gi]);
        gi += 1;
    }

    let residuals = {
        let vals: Vec<f64> = gls
            .resid_innov
            .iter()
            .zip(&gls.f)
            .map(|(v, f)| v / f.sqrt())
            .collect();
        MonthlySeries::new(series.start().plus(prep.offset as i64), vals)?
    };

    Ok(FittedModel {
        spec: spec.clone(),
        series: series.clone(),
        params: SarimaParams {
            phi,
            theta,
            seasonal_phi: sphi,
            seasonal_theta: stheta,
            beta,
            omega_io,
            sigma_a,
        },
        loglik: gls.loglik,
        sigma2_mle,
        residuals,
        arma_se,
        beta_se,
        io_se,
        active_mean: prep.active,
        n_effective: n,
    })
}

/// Standard errors from the inverse numerical Hessian of the profile
/// likelihood in original coefficient space. Diagnostics only; a
/// non-invertible Hessian yields NaN entries.
fn profile_hessian_se(
    prep: &Prepared,
    phi: &[f64],
    theta: &[f64],
    sphi: &[f64],
    stheta: &[f64],
    season: usize,
) -> Vec<f64> {
    let mut c: Vec<f64> = Vec::new();
    c.extend_from_slice(phi);
    c.extend_from_slice(theta);
    c.extend_from_slice(sphi);
    c.extend_from_slice(stheta);
    let dim = c.len();
    let (p, q, sp) = (phi.len(), theta.len(), sphi.len());

    let eval = |c: &[f64]| -> f64 {
        let phi = &c[..p];
        let theta = &c[p..p + q];
        let sphi = &c[p + q..p + q + sp];
        let stheta = &c[p + q + sp..];
        match gls_profile(prep, phi, theta, sphi, stheta, season) {
            Ok(g) => -g.loglik,
            Err(_) => f64::NAN,
        }
    };

    let f0 = eval(&c);
    let h: Vec<f64> = c.iter().map(|v| 1e-4 * (1.0 + v.abs())).collect();
    let mut hess = nalgebra::DMatrix::zeros(dim, dim);
    let mut work = c.clone();
    for i in 0..dim {
        work[i] = c[i] + h[i];
        let fp = eval(&work);
        work[i] = c[i] - h[i];
        let fm = eval(&work);
        work[i] = c[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            work[i] = c[i] + h[i];
            work[j] = c[j] + h[j];
            let fpp = eval(&work);
            work[j] = c[j] - h[j];
            let fpm = eval(&work);
            work[i] = c[i] - h[i];
            work[j] = c[j] + h[j];
            let fmp = eval(&work);
            work[j] = c[j] - h[j];
            let fmm = eval(&work);
            work[i] = c[i];
            work[j] = c[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return vec![f64::NAN; dim];
    }
    match hess.cholesky() {
        Some(chol) => {
            let inv = chol.inverse();
            (0..dim).map(|i| inv[(i, i)].max(0.0).sqrt()).collect()
        }
        None => vec![f64::NAN; dim],
    }
}

/// Exact Gaussian log-likelihood of the differenced, regressor-adjusted
/// series at a full parameter point.
pub fn loglik(series: &MonthlySeries, spec: &SarimaSpec, params: &SarimaParams) -> Result<f64> {
    params.check_dims(spec)?;
    params.check_roots(spec)?;
    let prep = prepare(series, spec)?;

    let ar_full = seasonal_product(&params.phi, &params.seasonal_phi, spec.season);
    let ma_full = seasonal_product(&params.theta, &params.seasonal_theta, spec.season);
    let io_cols = io_mean_columns(&prep, &ar_full, &ma_full, 0);

    let mut adj = prep.w.clone();
    for (col, &b) in prep.mean_cols.iter().zip(&params.beta) {
        for (a, &x) in adj.iter_mut().zip(col) {
            *a -= b * x;
        }
    }
    for (col, &om) in io_cols.iter().zip(&params.omega_io) {
        for (a, &x) in adj.iter_mut().zip(col) {
            *a -= om * x;
        }
    }

    let filter = ArmaFilter::new(&minus_coeffs(&ar_full), &minus_coeffs(&ma_full));
    let wh = filter.whiten(&[&adj])?;
    let n = prep.n as f64;
    let s2 = params.sigma_a * params.sigma_a;
    let quad: f64 = wh.innovations[0]
        .iter()
        .zip(&wh.f)
        .map(|(v, f)| v * v / f)
        .sum();
    Ok(-0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * n * s2.ln()
        - 0.5 * wh.log_f_sum
        - 0.5 * quad / s2)
}

/// Minimum-MSE forecasts of the undifferenced series.
///
/// `future_mean` supplies raw values of each mean regressor for the `h`
/// months after the sample, in spec order ([`future_mean_regressors`]
/// builds them from a lunar table). Innovation pulses need no future
/// values: their anchors lie in the sample and their tail effect comes
/// from the psi-weights.
pub fn forecast(model: &FittedModel, h: usize, future_mean: &[Vec<f64>]) -> Result<Forecast> {
    if h < 1 {
        return Err(Error::InvalidParam("forecast horizon must be >= 1".into()));
    }
    let spec = &model.spec;
    if future_mean.len() != spec.mean_regressors.len()
        || future_mean.iter().any(|c| c.len() != h)
    {
        return Err(Error::SpanMismatch(format!(
            "need {} future regressor columns of length {h}",
            spec.mean_regressors.len()
        )));
    }
    let series = &model.series;
    let prep = prepare(series, spec)?;
    let params = &model.params;

    let ar_full = seasonal_product(&params.phi, &params.seasonal_phi, spec.season);
    let ma_full = seasonal_product(&params.theta, &params.seasonal_theta, spec.season);
    let io_cols = io_mean_columns(&prep, &ar_full, &ma_full, h);

    // Stochastic part: filter the fully adjusted disturbance and project.
    let mut adj = prep.w.clone();
    for (col, &b) in prep.mean_cols.iter().zip(&params.beta) {
        for (a, &x) in adj.iter_mut().zip(col) {
            *a -= b * x;
        }
    }
    for (col, &om) in io_cols.iter().zip(&params.omega_io) {
        for (t, a) in adj.iter_mut().enumerate() {
            *a -= om * col[t];
        }
    }
    let filter = ArmaFilter::new(&minus_coeffs(&ar_full), &minus_coeffs(&ma_full));
    let state = filter.filtered_state(&adj)?;
    let w_stoch = filter.forecast_from_state(&state, h);

    // Deterministic part of future differenced values.
    let t_len = series.len();
    let diff_full = difference_poly(spec.d, spec.seasonal_d, spec.season);
    let mut w_mean = vec![0.0; h];
    for (i, col) in spec.mean_regressors.iter().enumerate() {
        let b = params.beta[i];
        if b == 0.0 {
            continue;
        }
        let mut raw: Vec<f64> = col.series().values().to_vec();
        raw.extend_from_slice(&future_mean[i]);
        for j in 0..h {
            let t = t_len + j;
            let mut dx = 0.0;
            for (k, &dk) in diff_full.iter().enumerate() {
                dx += dk * raw[t - k];
            }
            w_mean[j] += b * dx;
        }
    }
    for (pi, col) in io_cols.iter().enumerate() {
        let om = params.omega_io[pi];
        for j in 0..h {
            w_mean[j] += om * col[prep.n + j];
        }
    }

    // Integrate the differencing: z_t = w_t - sum_{k>=1} delta_k z_{t-k}.
    let mut z_ext: Vec<f64> = series.to_complete_vec()?;
    let mut point = Vec::with_capacity(h);
    for j in 0..h {
        let w_hat = w_stoch[j] + w_mean[j];
        let t = t_len + j;
        let mut z = w_hat;
        for (k, &dk) in diff_full.iter().enumerate().skip(1) {
            z -= dk * z_ext[t - k];
        }
        z_ext.push(z);
        point.push(z);
    }

    // Forecast-error variance from the psi-weights of the full
    // (ARMA over differencing) transfer function.
    let ar_diff = poly_mul(&ar_full, &diff_full);
    let psi = expand_ratio(&ma_full, &ar_diff, h);
    let mut cum = 0.0;
    let mut se = Vec::with_capacity(h);
    for p in psi.iter().take(h) {
        cum += p * p;
        se.push(model.params.sigma_a * cum.sqrt());
    }

    Ok(Forecast {
        start: series.end().plus(1),
        point,
        se,
    })
}

/// Rebuilds each mean regressor for the `h` months after its sample span:
/// SF columns from the lunar table and stored window, interventions from
/// their shape.
pub fn future_mean_regressors(
    spec: &SarimaSpec,
    table: &LunarTable,
    h: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(spec.mean_regressors.len());
    for col in spec.mean_regressors() {
        let s = col.series();
        let total = s.len() + h;
        let future = match col.kind() {
            RegressorKind::SfBefore | RegressorKind::SfDuring | RegressorKind::SfAfter => {
                let w = col.window().ok_or_else(|| {
                    Error::InvalidParam(format!("{} lacks its holiday window", col.name()))
                })?;
                let (h1, h2, h3) = sf_regressors(s.start(), total, table, w)?;
                let pick = match col.kind() {
                    RegressorKind::SfBefore => h1,
                    RegressorKind::SfDuring => h2,
                    _ => h3,
                };
                pick.values()[s.len()..].to_vec()
            }
            RegressorKind::AoPulse | RegressorKind::LsStep | RegressorKind::TcDecay => {
                let anchor = col.anchor().ok_or_else(|| {
                    Error::InvalidParam(format!("{} lacks an anchor", col.name()))
                })?;
                let delta = col.delta().unwrap_or(crate::calendar::TC_DELTA_DEFAULT);
                let extended =
                    intervention_column(s.start(), total, col.kind(), anchor, delta)?;
                extended.values()[s.len()..].to_vec()
            }
            RegressorKind::IoPulse => {
                return Err(Error::InvalidParam(
                    "innovation pulses are not mean regressors".into(),
                ));
            }
        };
        out.push(future);
    }
    Ok(out)
}

/// Draws a deterministic sample path of the specified process, regressor
/// effects included. The series starts at the first regressor's start
/// month, or 2000-01 when the spec has no regressors.
pub fn simulate(
    spec: &SarimaSpec,
    params: &SarimaParams,
    t_len: usize,
    seed: u64,
) -> Result<MonthlySeries> {
    params.check_dims(spec)?;
    params.check_roots(spec)?;
    if t_len <= spec.diff_offset() {
        return Err(Error::SeriesTooShort {
            needed: spec.diff_offset() + 1,
            got: t_len,
        });
    }
    let start = spec
        .mean_regressors
        .first()
        .map(|c| c.series().start())
        .or_else(|| spec.innovation_pulses.first().map(|c| c.series().start()))
        .unwrap_or_else(|| Month::new(2000, 1).expect("valid month"));
    for col in spec.mean_regressors.iter().chain(&spec.innovation_pulses) {
        let s = col.series();
        if s.start() != start || s.len() != t_len {
            return Err(Error::SpanMismatch(format!(
                "regressor {} does not cover the simulated span",
                col.name()
            )));
        }
    }

    const BURN: usize = 300;
    let total = BURN + t_len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Innovations, with IO pulses added inside the sample.
    let mut u: Vec<f64> = (0..total)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            e * params.sigma_a
        })
        .collect();
    for (col, &om) in spec.innovation_pulses.iter().zip(&params.omega_io) {
        let a = col
            .anchor()
            .and_then(|m| col.series().index_of(m))
            .ok_or_else(|| Error::InvalidParam(format!("{} anchor outside span", col.name())))?;
        u[BURN + a] += om;
    }

    // Stationary ARMA recursion on the combined polynomials.
    let ar = minus_coeffs(&seasonal_product(&params.phi, &params.seasonal_phi, spec.season));
    let ma = minus_coeffs(&seasonal_product(
        &params.theta,
        &params.seasonal_theta,
        spec.season,
    ));
    let mut w = vec![0.0; total];
    for t in 0..total {
        let mut v = u[t];
        for (i, &c) in ar.iter().enumerate() {
            if t > i {
                v += c * w[t - 1 - i];
            }
        }
        for (j, &m) in ma.iter().enumerate() {
            if t > j {
                v -= m * u[t - 1 - j];
            }
        }
        w[t] = v;
    }

    // Undo the differencing over the whole burn-in range.
    let diff_full = difference_poly(spec.d, spec.seasonal_d, spec.season);
    let mut z = vec![0.0; total];
    for t in 0..total {
        let mut v = w[t];
        for (k, &dk) in diff_full.iter().enumerate().skip(1) {
            if t >= k {
                v -= dk * z[t - k];
            }
        }
        z[t] = v;
    }

    let mut out: Vec<f64> = z[BURN..].to_vec();
    for (col, &b) in spec.mean_regressors.iter().zip(&params.beta) {
        for (o, &x) in out.iter_mut().zip(col.series().values()) {
            *o += b * x;
        }
    }
    MonthlySeries::new(start, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::HolidayWindow;
    use crate::poly::full_poly;
    use crate::timeseries::{acf_pacf, sample_std};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn month(y: i32, m: u32) -> Month {
        Month::new(y, m).unwrap()
    }

    fn white_noise(n: usize, seed: u64) -> MonthlySeries {
        let spec = SarimaSpec::new(0, 0, 0, 0, 0, 0);
        let params = SarimaParams::zeros(&spec);
        simulate(&spec, &params, n, seed).unwrap()
    }

    #[test]
    fn white_noise_fit_recovers_sample_scale() {
        let s = white_noise(400, 1);
        let spec = SarimaSpec::new(0, 0, 0, 0, 0, 0);
        let model = fit(&s, &spec).unwrap();
        let sd = sample_std(s.values());
        // The model has no mean term, so sigma_a matches the sample sd up
        // to the (tiny) sample-mean correction.
        assert!((model.sigma_a() - sd).abs() / sd < 0.01);
        // Reported log-likelihood is the exact i.i.d. Gaussian maximum.
        let n = 400.0;
        let s2 = s.values().iter().map(|v| v * v).sum::<f64>() / n;
        let want = -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + s2.ln() + 1.0);
        assert_abs_diff_eq!(model.loglik(), want, epsilon = 1e-8);
        assert_eq!(model.n_effective(), 400);
        assert_eq!(model.residuals().len(), 400);
    }

    #[test]
    fn loglik_matches_fit_at_the_optimum() {
        let s = white_noise(200, 7);
        let spec = SarimaSpec::new(1, 0, 1, 0, 0, 0);
        let model = fit(&s, &spec).unwrap();
        let mut params = model.params().clone();
        params.sigma_a = model.sigma2_mle().sqrt();
        let ll = loglik(&s, &spec, &params).unwrap();
        assert_abs_diff_eq!(ll, model.loglik(), epsilon = 1e-8);
    }

    #[test]
    fn loglik_matches_dense_gaussian_oracle() {
        // Build the exact covariance from psi-weights and compare.
        let spec = SarimaSpec::new(1, 0, 1, 1, 0, 0);
        let mut params = SarimaParams::zeros(&spec);
        params.phi = vec![0.5];
        params.theta = vec![-0.3];
        params.seasonal_phi = vec![0.4];
        params.sigma_a = 1.3;
        let s = simulate(&spec, &params, 40, 11).unwrap();

        let ll = loglik(&s, &spec, &params).unwrap();

        let ar_full = seasonal_product(&params.phi, &params.seasonal_phi, 12);
        let ma_full = seasonal_product(&params.theta, &params.seasonal_theta, 12);
        let psi = expand_ratio(&ma_full, &ar_full, 3000);
        let s2 = params.sigma_a * params.sigma_a;
        let n = s.len();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let k = (i as isize - j as isize).unsigned_abs();
                let g: f64 = (0..3000 - k).map(|l| psi[l] * psi[l + k]).sum();
                cov[(i, j)] = s2 * g;
            }
        }
        let chol = cov.cholesky().unwrap();
        let ld: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let y = DVector::from_column_slice(s.values());
        let alpha = chol.solve(&y);
        let want = -0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * ld
            - 0.5 * y.dot(&alpha);
        assert!(
            (ll - want).abs() / want.abs() < 1e-8,
            "ll = {ll}, oracle = {want}"
        );
    }

    #[test]
    fn loglik_all_zero_coefficients_is_iid_gaussian() {
        let s = MonthlySeries::new(month(2000, 1), vec![0.4, -1.0, 0.3, 1.2, -0.5]).unwrap();
        let spec = SarimaSpec::new(0, 0, 0, 0, 0, 0);
        let mut params = SarimaParams::zeros(&spec);
        params.sigma_a = 0.9;
        let ll = loglik(&s, &spec, &params).unwrap();
        let want: f64 = s
            .values()
            .iter()
            .map(|v| {
                -0.5 * (2.0 * std::f64::consts::PI).ln() - (0.9f64).ln()
                    - 0.5 * v * v / (0.9 * 0.9)
            })
            .sum();
        assert_abs_diff_eq!(ll, want, epsilon = 1e-10);
    }

    #[test]
    fn loglik_scaling_identity() {
        let spec = SarimaSpec::new(1, 0, 0, 0, 0, 0);
        let mut params = SarimaParams::zeros(&spec);
        params.phi = vec![0.6];
        let s = simulate(&spec, &params, 60, 3).unwrap();
        let ll = loglik(&s, &spec, &params).unwrap();

        let c = 2.5;
        let scaled =
            MonthlySeries::new(s.start(), s.values().iter().map(|v| c * v).collect()).unwrap();
        let mut params_c = params.clone();
        params_c.sigma_a *= c;
        let ll_c = loglik(&scaled, &spec, &params_c).unwrap();
        assert_abs_diff_eq!(ll_c, ll - 60.0 * c.ln(), epsilon = 1e-8);
    }

    #[test]
    fn ar1_estimates_land_near_truth() {
        let spec = SarimaSpec::new(1, 0, 0, 0, 0, 0);
        let mut params = SarimaParams::zeros(&spec);
        params.phi = vec![0.6];
        let mut hits = 0;
        for seed in 0..20 {
            let s = simulate(&spec, &params, 1000, seed).unwrap();
            let model = fit(&s, &spec).unwrap();
            let se = model.arma_se()[0];
            assert!(se.is_finite() && se > 0.0);
            if (model.params().phi[0] - 0.6).abs() <= 3.0 * se {
                hits += 1;
            }
        }
        assert!(hits >= 19, "only {hits}/20 within 3 standard errors");
    }

    #[test]
    fn fit_recovers_regression_coefficients() {
        // Airline-style model with SF regressors and a known beta.
        let start = month(2002, 1);
        let t_len = 240;
        let table = LunarTable::embedded();
        let (h1, _, h3) =
            sf_regressors(start, t_len, &table, HolidayWindow::new(4, 0, 12)).unwrap();
        let spec = SarimaSpec::new(0, 1, 1, 0, 1, 1)
            .with_mean_regressors(vec![h1, h3])
            .unwrap();
        let mut params = SarimaParams::zeros(&spec);
        params.theta = vec![0.4];
        params.seasonal_theta = vec![0.5];
        params.beta = vec![3.0, -2.0];
        params.sigma_a = 0.5;
        let s = simulate(&spec, &params, t_len, 42).unwrap();
        let model = fit(&s, &spec).unwrap();
        assert!(model.active_mean().iter().all(|&a| a));
        assert!(
            (model.params().beta[0] - 3.0).abs() < 3.0 * model.beta_se()[0],
            "beta1 {} se {}",
            model.params().beta[0],
            model.beta_se()[0]
        );
        assert!(
            (model.params().beta[1] + 2.0).abs() < 3.0 * model.beta_se()[1],
            "beta2 {} se {}",
            model.params().beta[1],
            model.beta_se()[1]
        );
        assert_eq!(model.n_effective(), t_len - 13);
    }

    #[test]
    fn io_pulse_coefficient_is_recovered() {
        let start = month(2000, 1);
        let t_len = 200;
        let io =
            intervention_column(start, t_len, RegressorKind::IoPulse, month(2008, 6), 0.8)
                .unwrap();
        let spec = SarimaSpec::new(1, 0, 0, 0, 0, 0)
            .with_innovation_pulses(vec![io])
            .unwrap();
        let mut params = SarimaParams::zeros(&spec);
        params.phi = vec![0.5];
        params.omega_io = vec![8.0];
        let s = simulate(&spec, &params, t_len, 5).unwrap();
        let model = fit(&s, &spec).unwrap();
        assert!(
            (model.params().omega_io[0] - 8.0).abs() < 3.0 * model.io_se()[0],
            "omega {} se {}",
            model.params().omega_io[0],
            model.io_se()[0]
        );
    }

    #[test]
    fn zero_regressor_columns_are_dropped() {
        let start = month(2002, 1);
        let t_len = 120;
        let table = LunarTable::embedded();
        let (h1, h2, h3) =
            sf_regressors(start, t_len, &table, HolidayWindow::new(4, 0, 12)).unwrap();
        assert!(h2.is_identically_zero());
        let spec = SarimaSpec::new(0, 1, 1, 0, 1, 1)
            .with_mean_regressors(vec![h1, h2, h3])
            .unwrap();
        let s = MonthlySeries::new(start, white_noise(t_len, 9).values().to_vec()).unwrap();
        let model = fit(&s, &spec).unwrap();
        assert_eq!(model.active_mean(), &[true, false, true]);
        assert_eq!(model.params().beta[1], 0.0);
        assert!(model.beta_se()[1].is_nan());
    }

    #[test]
    fn refilter_reproduces_a_fit_exactly() {
        let start = month(2002, 1);
        let t_len = 180;
        let table = LunarTable::embedded();
        let (h1, _, h3) =
            sf_regressors(start, t_len, &table, HolidayWindow::new(4, 0, 12)).unwrap();
        let io =
            intervention_column(start, t_len, RegressorKind::IoPulse, month(2008, 6), 0.8)
                .unwrap();
        let spec = SarimaSpec::new(1, 1, 0, 0, 1, 1)
            .with_mean_regressors(vec![h1, h3])
            .unwrap()
            .with_innovation_pulses(vec![io])
            .unwrap();
        let mut truth = SarimaParams::zeros(&spec);
        truth.phi = vec![0.4];
        truth.seasonal_theta = vec![0.5];
        truth.beta = vec![1.5, -0.7];
        truth.omega_io = vec![5.0];
        let s = simulate(&spec, &truth, t_len, 77).unwrap();
        let model = fit(&s, &spec).unwrap();

        // The GLS stage is deterministic at fixed coefficients, so running it
        // again at the fitted point must reproduce the fit bit for bit.
        let again = refilter(&s, &spec, model.params()).unwrap();
        assert_eq!(again.loglik(), model.loglik());
        assert_eq!(again.sigma2_mle(), model.sigma2_mle());
        assert_eq!(again.params().beta, model.params().beta);
        assert_eq!(again.params().omega_io, model.params().omega_io);
        assert_eq!(again.params().sigma_a, model.params().sigma_a);
        assert_eq!(again.residuals().values(), model.residuals().values());
        assert!(again.arma_se().iter().all(|se| se.is_nan()));

        // Beta and omega are re-profiled from scratch: feeding garbage values
        // for them changes nothing.
        let mut scrambled = model.params().clone();
        scrambled.beta = vec![99.0, 99.0];
        scrambled.omega_io = vec![-99.0];
        scrambled.sigma_a = 1.0;
        let fixed = refilter(&s, &spec, &scrambled).unwrap();
        assert_eq!(fixed.loglik(), model.loglik());
        assert_eq!(fixed.params().beta, model.params().beta);

        // The optimizer maximized over the ARMA block, so a perturbed point
        // cannot beat the fitted one.
        let mut worse = model.params().clone();
        worse.phi[0] = (worse.phi[0] - 0.2).clamp(-0.95, 0.95);
        let perturbed = refilter(&s, &spec, &worse).unwrap();
        assert!(perturbed.loglik() < model.loglik() + 1e-9);
    }

    #[test]
    fn local_optimality_probe() {
        let spec = SarimaSpec::new(1, 0, 1, 0, 0, 0);
        let mut truth = SarimaParams::zeros(&spec);
        truth.phi = vec![0.5];
        truth.theta = vec![-0.3];
        let s = simulate(&spec, &truth, 300, 17).unwrap();
        let model = fit(&s, &spec).unwrap();
        let mut base = model.params().clone();
        base.sigma_a = model.sigma2_mle().sqrt();
        for i in 0..2 {
            for delta in [-1e-4, 1e-4] {
                let mut p = base.clone();
                if i == 0 {
                    p.phi[0] += delta;
                } else {
                    p.theta[0] += delta;
                }
                let ll = loglik(&s, &spec, &p).unwrap();
                assert!(
                    ll <= model.loglik() + 1e-7,
                    "perturbation raised the likelihood: {} > {}",
                    ll,
                    model.loglik()
                );
            }
        }
    }

    #[test]
    fn residual_acf_is_white_for_well_specified_fit() {
        let spec = SarimaSpec::new(1, 1, 0, 0, 1, 1);
        let mut params = SarimaParams::zeros(&spec);
        params.phi = vec![0.4];
        params.seasonal_theta = vec![0.6];
        let mut total = 0;
        let mut inside = 0;
        for seed in 0..5 {
            let s = simulate(&spec, &params, 250, 100 + seed).unwrap();
            let model = fit(&s, &spec).unwrap();
            let (acf, _, _) = acf_pacf(model.residuals(), 24).unwrap();
            let bound = 3.0 / (model.n_effective() as f64).sqrt();
            for k in 1..=24 {
                total += 1;
                if acf[k].abs() < bound {
                    inside += 1;
                }
            }
        }
        assert!(
            inside as f64 >= 0.95 * total as f64,
            "{inside}/{total} lags inside the band"
        );
    }

    #[test]
    fn random_walk_forecast_is_last_value() {
        let vals = vec![1.0, 3.0, 2.0, 5.0, 4.0, 4.5, 3.5, 4.2, 5.1, 4.9, 5.3, 5.0, 4.8, 5.2];
        let s = MonthlySeries::new(month(2010, 1), vals.clone()).unwrap();
        let spec = SarimaSpec::new(0, 1, 0, 0, 0, 0);
        let model = fit(&s, &spec).unwrap();
        let fc = forecast(&model, 4, &[]).unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(fc.point[j], *vals.last().unwrap(), epsilon = 1e-10);
        }
        // Random-walk forecast variance grows linearly.
        let ratio = fc.se[3] / fc.se[0];
        assert_abs_diff_eq!(ratio, 2.0, epsilon = 1e-6);
        assert_eq!(fc.start(), month(2011, 3));
    }

    #[test]
    fn forecast_matches_dense_conditional_expectation() {
        // AR(1) on first differences, T=40, h=3, no regressors: condition
        // the stationary differenced process on its past and integrate.
        let spec = SarimaSpec::new(1, 1, 0, 0, 0, 0);
        let mut params = SarimaParams::zeros(&spec);
        params.phi = vec![0.6];
        let s = simulate(&spec, &params, 40, 23).unwrap();
        let model = fit(&s, &spec).unwrap();
        let h = 3;
        let fc = forecast(&model, h, &[]).unwrap();

        let w: Vec<f64> = s.values().windows(2).map(|p| p[1] - p[0]).collect();
        let n = w.len();
        let phi = model.params().phi[0];
        let ar_full = full_poly(&[phi]);
        let psi = expand_ratio(&[1.0], &ar_full, 4000);
        let gamma = |k: usize| -> f64 { (0..4000 - k).map(|l| psi[l] * psi[l + k]).sum() };
        let mut sigma11 = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                sigma11[(i, j)] = gamma((i as isize - j as isize).unsigned_abs());
            }
        }
        let mut sigma21 = DMatrix::zeros(h, n);
        for j in 0..h {
            for i in 0..n {
                sigma21[(j, i)] = gamma(n + j - i);
            }
        }
        let wv = DVector::from_column_slice(&w);
        let pred = &sigma21 * sigma11.cholesky().unwrap().solve(&wv);
        let mut level = *s.values().last().unwrap();
        for j in 0..h {
            level += pred[j];
            assert!(
                (fc.point[j] - level).abs() < 1e-8,
                "h={j}: {} vs {}",
                fc.point[j],
                level
            );
        }
    }

    #[test]
    fn one_step_forecast_equals_kalman_prediction() {
        let spec = SarimaSpec::new(1, 1, 1, 0, 0, 0);
        let mut params = SarimaParams::zeros(&spec);
        params.phi = vec![0.5];
        params.theta = vec![0.3];
        let s = simulate(&spec, &params, 120, 31).unwrap();
        let model = fit(&s, &spec).unwrap();
        let fc = forecast(&model, 1, &[]).unwrap();

        // Refit the filter by hand and take the one-step prediction.
        let w: Vec<f64> = s.values().windows(2).map(|p| p[1] - p[0]).collect();
        let filter = ArmaFilter::new(&model.params().phi, &model.params().theta);
        let state = filter.filtered_state(&w).unwrap();
        let w_next = filter.forecast_from_state(&state, 1)[0];
        let want = s.values().last().unwrap() + w_next;
        assert_abs_diff_eq!(fc.point[0], want, epsilon = 1e-10);
    }

    #[test]
    fn forecast_extends_sf_regressors() {
        let start = month(2002, 1);
        let t_len = 156; // through 2014-12
        let table = LunarTable::embedded();
        let (h1, _, h3) =
            sf_regressors(start, t_len, &table, HolidayWindow::new(4, 0, 12)).unwrap();
        let spec = SarimaSpec::new(0, 1, 1, 0, 1, 1)
            .with_mean_regressors(vec![h1, h3])
            .unwrap();
        let mut params = SarimaParams::zeros(&spec);
        params.theta = vec![0.3];
        params.seasonal_theta = vec![0.4];
        params.beta = vec![4.0, -3.0];
        params.sigma_a = 0.3;
        let s = simulate(&spec, &params, t_len, 77).unwrap();
        let model = fit(&s, &spec).unwrap();

        let future = future_mean_regressors(&spec, &table, 3).unwrap();
        // 2015 SF starts Feb 18: January H1 is 0, February H1 is 1.
        assert_eq!(future[0].len(), 3);
        assert_abs_diff_eq!(future[0][0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(future[0][1], 1.0, epsilon = 1e-15);
        let fc = forecast(&model, 3, &future).unwrap();
        assert_eq!(fc.horizon(), 3);
        assert!(fc.se.iter().all(|&v| v > 0.0));
        // Against a counterfactual with zeroed future holiday columns the
        // lift must equal beta' H month by month, exactly: the stochastic
        // part cancels and differencing/integration is linear.
        let no_holiday = vec![vec![0.0; 3], vec![0.0; 3]];
        let fc0 = forecast(&model, 3, &no_holiday).unwrap();
        let b = &model.params().beta;
        for j in 0..3 {
            let want = b[0] * future[0][j] + b[1] * future[1][j];
            assert_abs_diff_eq!(fc.point[j] - fc0.point[j], want, epsilon = 1e-8);
        }
    }

    #[test]
    fn simulate_is_deterministic_and_scales_correctly() {
        let spec = SarimaSpec::new(0, 0, 0, 0, 0, 0);
        let params = SarimaParams::zeros(&spec);
        let a = simulate(&spec, &params, 10_000, 99).unwrap();
        let b = simulate(&spec, &params, 10_000, 99).unwrap();
        assert_eq!(a.values(), b.values());
        assert!((sample_std(a.values()) - 1.0).abs() < 0.05);
    }

    #[test]
    fn simulated_ao_spike_is_visible() {
        let start = month(2000, 1);
        let t_len = 120;
        let ao = intervention_column(start, t_len, RegressorKind::AoPulse, month(2005, 1), 0.8)
            .unwrap();
        let spec = SarimaSpec::new(0, 0, 0, 0, 0, 0)
            .with_mean_regressors(vec![ao])
            .unwrap();
        let mut params = SarimaParams::zeros(&spec);
        params.beta = vec![8.0];
        let s = simulate(&spec, &params, t_len, 1).unwrap();
        let spec0 = SarimaSpec::new(0, 0, 0, 0, 0, 0);
        let clean = simulate(&spec0, &SarimaParams::zeros(&spec0), t_len, 1).unwrap();
        let idx = s.index_of(month(2005, 1)).unwrap();
        assert_abs_diff_eq!(s.values()[idx] - clean.values()[idx], 8.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_rejects_short_series() {
        let s = white_noise(20, 2);
        let spec = SarimaSpec::new(2, 1, 2, 2, 1, 2);
        assert!(matches!(
            fit(&s, &spec),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn loglik_rejects_explosive_parameters() {
        let s = white_noise(50, 3);
        let spec = SarimaSpec::new(1, 0, 0, 0, 0, 0);
        let mut params = SarimaParams::zeros(&spec);
        params.phi = vec![1.05];
        assert!(loglik(&s, &spec, &params).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let spec = SarimaSpec::new(1, 0, 1, 0, 0, 0);
        let mut params = SarimaParams::zeros(&spec);
        params.phi = vec![0.5];
        params.theta = vec![0.2];
        let s = simulate(&spec, &params, 150, 55).unwrap();
        let a = fit(&s, &spec).unwrap();
        let b = fit(&s, &spec).unwrap();
        assert_eq!(a.params().phi, b.params().phi);
        assert_eq!(a.params().theta, b.params().theta);
        assert_eq!(a.loglik(), b.loglik());
    }
}
