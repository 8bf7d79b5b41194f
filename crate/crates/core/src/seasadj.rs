//! Holiday-effect removal and classical seasonal decomposition.
//!
//! The adjustment pipeline has two stages. First, [`remove_sf`] subtracts
//! the model-estimated Spring-Festival effect `Ĥ_t = Σ β̂_i H_it` from the
//! raw index. Second, [`decompose`] splits the holiday-free series into
//! trend, seasonality, and irregular by the classical moving-average
//! method: a centered 2×12 average for the trend, calendar-month averages
//! of the detrended series for the seasonal factors (normalized to sum to
//! zero per cycle, or to mean one in multiplicative mode), and the
//! remainder as irregular.
//!
//! This replaces the official X-13ARIMA-SEATS procedure with its classical
//! core. The substitution is the primary known source of divergence from
//! seasonally adjusted figures produced by the official tool, and reports
//! built on these factors record it (see [`METHOD_NOTE`]).
//!
//! Endpoint policy: the 2×12 trend exists only six months in from either
//! edge; it is extended outward by repeating the nearest computable value,
//! and the seasonal factors average only the detrended values the proper
//! trend supports. Because the factors are periodic, every month still
//! gets a seasonal value, and the reconstruction identity holds on the
//! full span by construction.
//!
//! [`forecast_seasonality`] projects the seasonal series forward with a
//! small seasonal ARIMA model — in levels for additive adjustment, through
//! logs in multiplicative mode — so an adjusted forecast can be mapped
//! back to the raw index.

use crate::calendar::RegressorKind;
use crate::error::{Error, Result};
use crate::sarimax::{self, FittedModel, SarimaSpec};
use crate::timeseries::MonthlySeries;

/// Note attached to decomposition exports about the X-13 substitution.
pub const METHOD_NOTE: &str = "seasonal factors come from classical 2x12 \
moving-average decomposition, not X-13ARIMA-SEATS; adjusted levels can \
differ from officially adjusted series";

/// How the components combine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    /// `Z̃ = T + S + I`; adjusted = `Z − Ĥ − S`.
    Additive,
    /// `Z̃ = T·S·I`; adjusted = `(Z − Ĥ)/S`.
    Multiplicative,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Additive => "additive",
            Mode::Multiplicative => "multiplicative",
        })
    }
}

/// A full adjustment result: every component aligned with the input span.
#[derive(Clone, Debug)]
pub struct Decomposition {
    mode: Mode,
    raw: MonthlySeries,
    sf_effect: MonthlySeries,
    trend: MonthlySeries,
    seasonal: MonthlySeries,
    irregular: MonthlySeries,
    adjusted: MonthlySeries,
    factors: [f64; 12],
}

impl Decomposition {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// The series the adjustment started from (before SF removal).
    pub fn raw(&self) -> &MonthlySeries {
        &self.raw
    }

    /// The estimated Spring-Festival effect (zero when none was removed).
    pub fn sf_effect(&self) -> &MonthlySeries {
        &self.sf_effect
    }

    pub fn trend(&self) -> &MonthlySeries {
        &self.trend
    }

    /// The periodic seasonal component, one value per month of the span.
    pub fn seasonal(&self) -> &MonthlySeries {
        &self.seasonal
    }

    pub fn irregular(&self) -> &MonthlySeries {
        &self.irregular
    }

    /// The seasonally adjusted series.
    pub fn adjusted(&self) -> &MonthlySeries {
        &self.adjusted
    }

    /// Seasonal factors by calendar month (index 0 = January).
    pub fn factors(&self) -> &[f64; 12] {
        &self.factors
    }
}

/// Subtracts the fitted Spring-Festival effect from `series`.
///
/// Returns `(Z̃, Ĥ)` with `Ĥ_t = Σ_i β̂_i H_it` summed over the model's
/// SF regressors and `Z̃ = Z − Ĥ`. The series must cover exactly the
/// model's estimation span. Errors when the model has no SF regressors.
pub fn remove_sf(
    series: &MonthlySeries,
    fitted: &FittedModel,
) -> Result<(MonthlySeries, MonthlySeries)> {
    let sample = fitted.series();
    if series.start() != sample.start() || series.len() != sample.len() {
        return Err(Error::SpanMismatch(format!(
            "series spans {}..{}, model was fit on {}..{}",
            series.start(),
            series.end(),
            sample.start(),
            sample.end()
        )));
    }
    let z = series.to_complete_vec()?;

    let mut h = vec![0.0; series.len()];
    let mut n_sf = 0;
    for (i, col) in fitted.spec().mean_regressors().iter().enumerate() {
        if !matches!(
            col.kind(),
            RegressorKind::SfBefore | RegressorKind::SfDuring | RegressorKind::SfAfter
        ) {
            continue;
        }
        n_sf += 1;
        let beta = fitted.params().beta[i];
        if beta == 0.0 {
            continue;
        }
        for (acc, v) in h.iter_mut().zip(col.series().values()) {
            *acc += beta * v;
        }
    }
    if n_sf == 0 {
        return Err(Error::InvalidParam(
            "the model has no Spring-Festival regressors to remove".into(),
        ));
    }

    let z_tilde: Vec<f64> = z.iter().zip(&h).map(|(z, h)| z - h).collect();
    Ok((
        MonthlySeries::new(series.start(), z_tilde)?,
        MonthlySeries::new(series.start(), h)?,
    ))
}

/// Classical decomposition of a (holiday-free) monthly series.
///
/// Needs at least 36 months; multiplicative mode needs a strictly
/// positive series. See the module docs for the exact algorithm and
/// endpoint policy.
pub fn decompose(series: &MonthlySeries, mode: Mode) -> Result<Decomposition> {
    let z = series.to_complete_vec()?;
    let n = z.len();
    if n < 36 {
        return Err(Error::SeriesTooShort { needed: 36, got: n });
    }
    if mode == Mode::Multiplicative {
        if let Some(i) = z.iter().position(|&v| v <= 0.0) {
            return Err(Error::InvalidParam(format!(
                "multiplicative decomposition needs positive values; {} at {}",
                z[i],
                series.month_at(i)
            )));
        }
    }

    // Centered 2x12 trend, proper on [6, n-7], extended flat outward.
    let lo = 6;
    let hi = n - 7;
    let mut trend = vec![0.0; n];
    for t in lo..=hi {
        let mut acc = 0.5 * (z[t - 6] + z[t + 6]);
        for v in &z[t - 5..=t + 5] {
            acc += v;
        }
        trend[t] = acc / 12.0;
    }
    for t in 0..lo {
        trend[t] = trend[lo];
    }
    for t in hi + 1..n {
        trend[t] = trend[hi];
    }

    // Calendar-month averages of the properly detrended values. With
    // n >= 36 the proper range spans at least 24 consecutive months, so
    // every calendar month contributes.
    let mut sums = [0.0; 12];
    let mut counts = [0usize; 12];
    for t in lo..=hi {
        let m = series.month_at(t).month() as usize - 1;
        let d = match mode {
            Mode::Additive => z[t] - trend[t],
            Mode::Multiplicative => z[t] / trend[t],
        };
        sums[m] += d;
        counts[m] += 1;
    }
    let mut factors = [0.0; 12];
    for m in 0..12 {
        factors[m] = sums[m] / counts[m] as f64;
    }
    match mode {
        Mode::Additive => {
            let mean = factors.iter().sum::<f64>() / 12.0;
            for f in &mut factors {
                *f -= mean;
            }
        }
        Mode::Multiplicative => {
            let mean = factors.iter().sum::<f64>() / 12.0;
            for f in &mut factors {
                *f /= mean;
            }
        }
    }

    let seasonal: Vec<f64> = (0..n)
        .map(|t| factors[series.month_at(t).month() as usize - 1])
        .collect();
    let (irregular, adjusted): (Vec<f64>, Vec<f64>) = match mode {
        Mode::Additive => (
            (0..n).map(|t| z[t] - trend[t] - seasonal[t]).collect(),
            (0..n).map(|t| z[t] - seasonal[t]).collect(),
        ),
        Mode::Multiplicative => (
            (0..n).map(|t| z[t] / (trend[t] * seasonal[t])).collect(),
            (0..n).map(|t| z[t] / seasonal[t]).collect(),
        ),
    };

    let start = series.start();
    Ok(Decomposition {
        mode,
        raw: series.clone(),
        sf_effect: MonthlySeries::new(start, vec![0.0; n])?,
        trend: MonthlySeries::new(start, trend)?,
        seasonal: MonthlySeries::new(start, seasonal)?,
        irregular: MonthlySeries::new(start, irregular)?,
        adjusted: MonthlySeries::new(start, adjusted)?,
        factors,
    })
}

/// The full adjustment: SF removal followed by decomposition.
///
/// `raw` keeps the original series and `sf_effect` the removed holiday
/// component, so `adjusted = raw − sf_effect − seasonal` (additive) or
/// `(raw − sf_effect)/seasonal` (multiplicative), element-wise.
pub fn adjust(series: &MonthlySeries, fitted: &FittedModel, mode: Mode) -> Result<Decomposition> {
    let (z_tilde, h_hat) = remove_sf(series, fitted)?;
    let mut d = decompose(&z_tilde, mode)?;
    d.raw = series.clone();
    d.sf_effect = h_hat;
    Ok(d)
}

/// Seasonality from an officially adjusted companion series:
/// `S_t = raw_t / adjusted_t`, bypassing [`decompose`].
pub fn seasonality_from_ratio(
    raw: &MonthlySeries,
    adjusted: &MonthlySeries,
) -> Result<MonthlySeries> {
    if raw.start() != adjusted.start() || raw.len() != adjusted.len() {
        return Err(Error::SpanMismatch(format!(
            "raw spans {}..{}, adjusted spans {}..{}",
            raw.start(),
            raw.end(),
            adjusted.start(),
            adjusted.end()
        )));
    }
    let num = raw.to_complete_vec()?;
    let den = adjusted.to_complete_vec()?;
    if let Some(i) = den.iter().position(|&v| v <= 0.0) {
        return Err(Error::InvalidParam(format!(
            "adjusted series must be positive; {} at {}",
            den[i],
            adjusted.month_at(i)
        )));
    }
    let s: Vec<f64> = num.iter().zip(&den).map(|(a, b)| a / b).collect();
    MonthlySeries::new(raw.start(), s)
}

/// The default seasonality model, `(0,0,1)×(0,1,1)₁₂`.
pub fn seasonality_spec() -> SarimaSpec {
    SarimaSpec::new(0, 0, 1, 0, 1, 1)
}

/// `h`-step forecasts of a seasonal component.
///
/// Additive mode models the factors in levels; multiplicative mode models
/// their logs and exponentiates the forecasts (factors hover around one,
/// so positivity is preserved).
///
/// A strictly 12-periodic component — which [`decompose`] produces by
/// construction — has an identically zero seasonal difference, so no
/// innovation scale is identifiable and estimation is refused by the
/// engine. When the spec contains a seasonal difference, such a component
/// is extended by replaying its period instead, which is exactly what the
/// degenerate model implies. Seasonal series that actually evolve (e.g.
/// officially adjusted ratios) go through the full estimation path.
pub fn forecast_seasonality(
    seasonal: &MonthlySeries,
    spec: &SarimaSpec,
    h: usize,
    mode: Mode,
) -> Result<Vec<f64>> {
    let target = match mode {
        Mode::Additive => seasonal.clone(),
        Mode::Multiplicative => {
            let v = seasonal.to_complete_vec()?;
            if let Some(i) = v.iter().position(|&x| x <= 0.0) {
                return Err(Error::InvalidParam(format!(
                    "multiplicative seasonality must be positive; {} at {}",
                    v[i],
                    seasonal.month_at(i)
                )));
            }
            MonthlySeries::new(seasonal.start(), v.iter().map(|x| x.ln()).collect())?
        }
    };

    let v = target.to_complete_vec()?;
    let strictly_periodic = v.len() > 12 && {
        let scale = 1.0 + v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        v.windows(13).all(|w| (w[12] - w[0]).abs() <= 1e-10 * scale)
    };
    let point = if strictly_periodic && spec.seasonal_d() >= 1 {
        let last = &v[v.len() - 12..];
        (0..h).map(|j| last[j % 12]).collect()
    } else {
        let model = sarimax::fit(&target, spec)?;
        sarimax::forecast(&model, h, &[])?.point
    };

    Ok(match mode {
        Mode::Additive => point,
        Mode::Multiplicative => point.iter().map(|x| x.exp()).collect(),
    })
}
