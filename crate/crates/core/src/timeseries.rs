//! Monthly series container and stationarity tooling.
//!
//! Everything downstream works on [`MonthlySeries`]: contiguous monthly
//! observations anchored to a calendar month, with an explicit missing-value
//! mask. Missing entries are stored as NaN and tracked in the mask; a
//! non-missing value is always finite.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A calendar month, `year` plus `month` in `1..=12`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Month {
    year: i32,
    month: u8,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidParam(format!(
                "month must be in 1..=12, got {month}"
            )));
        }
        Ok(Month {
            year,
            month: month as u8,
        })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    /// Calendar month number, 1..=12.
    pub fn month(&self) -> u32 {
        self.month as u32
    }

    /// Months since 0000-01; total order for month arithmetic.
    fn index(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_index(idx: i64) -> Self {
        let year = idx.div_euclid(12);
        let month = idx.rem_euclid(12) + 1;
        Month {
            year: year as i32,
            month: month as u8,
        }
    }

    /// The month `n` steps later (earlier when negative).
    pub fn plus(&self, n: i64) -> Month {
        Month::from_index(self.index() + n)
    }

    /// Signed number of months from `earlier` to `self`.
    pub fn months_since(&self, earlier: Month) -> i64 {
        self.index() - earlier.index()
    }

    /// Number of days in this calendar month.
    pub fn days_in_month(&self) -> u32 {
        match self.month {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            2 => {
                let y = self.year;
                if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 {
                    29
                } else {
                    28
                }
            }
            _ => unreachable!(),
        }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidParam(format!("expected YYYY-MM, got `{s}`")))?;
        let year: i32 = y
            .parse()
            .map_err(|_| Error::InvalidParam(format!("bad year in `{s}`")))?;
        let month: u32 = m
            .parse()
            .map_err(|_| Error::InvalidParam(format!("bad month in `{s}`")))?;
        Month::new(year, month)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(|e| D::Error::custom(format!("{e}")))
    }
}

/// Contiguous monthly observations with a missing-value mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlySeries {
    start: Month,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl MonthlySeries {
    /// A complete series: every value present and finite.
    pub fn new(start: Month, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::SeriesTooShort { needed: 1, got: 0 });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "non-finite value at {}",
                    start.plus(i as i64)
                )));
            }
        }
        let missing = vec![false; values.len()];
        Ok(MonthlySeries {
            start,
            values,
            missing,
        })
    }

    /// A series with gaps: `None` marks a missing month.
    pub fn from_options(start: Month, values: Vec<Option<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::SeriesTooShort { needed: 1, got: 0 });
        }
        let mut vals = Vec::with_capacity(values.len());
        let mut missing = Vec::with_capacity(values.len());
        for (i, v) in values.into_iter().enumerate() {
            match v {
                Some(x) if x.is_finite() => {
                    vals.push(x);
                    missing.push(false);
                }
                Some(_) => {
                    return Err(Error::InvalidParam(format!(
                        "non-finite value at {}",
                        start.plus(i as i64)
                    )));
                }
                None => {
                    vals.push(f64::NAN);
                    missing.push(true);
                }
            }
        }
        Ok(MonthlySeries {
            start,
            values: vals,
            missing,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start(&self) -> Month {
        self.start
    }

    /// Last covered month (inclusive).
    pub fn end(&self) -> Month {
        self.start.plus(self.len() as i64 - 1)
    }

    pub fn month_at(&self, i: usize) -> Month {
        self.start.plus(i as i64)
    }

    /// Position of `month` within the series, if covered.
    pub fn index_of(&self, month: Month) -> Option<usize> {
        let offset = month.months_since(self.start);
        if offset >= 0 && (offset as usize) < self.len() {
            Some(offset as usize)
        } else {
            None
        }
    }

    /// Raw storage; missing entries hold NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.missing[i]
    }

    /// Value at position `i`, `None` when missing.
    pub fn value(&self, i: usize) -> Option<f64> {
        if self.missing[i] {
            None
        } else {
            Some(self.values[i])
        }
    }

    /// Value at a calendar month, `None` when missing or out of range.
    pub fn value_at(&self, month: Month) -> Option<f64> {
        self.index_of(month).and_then(|i| self.value(i))
    }

    pub fn is_complete(&self) -> bool {
        self.missing.iter().all(|&m| !m)
    }

    /// All values as a plain vector; errors at the first missing month.
    pub fn to_complete_vec(&self) -> Result<Vec<f64>> {
        if let Some(i) = self.missing.iter().position(|&m| m) {
            return Err(Error::MissingValue(self.month_at(i)));
        }
        Ok(self.values.clone())
    }

    pub fn months(&self) -> impl Iterator<Item = Month> + '_ {
        (0..self.len()).map(move |i| self.month_at(i))
    }

    /// Sub-series covering `from..=to` (inclusive).
    pub fn slice(&self, from: Month, to: Month) -> Result<MonthlySeries> {
        let a = self.index_of(from).ok_or_else(|| {
            Error::SpanMismatch(format!("{from} not in {}..{}", self.start(), self.end()))
        })?;
        let b = self.index_of(to).ok_or_else(|| {
            Error::SpanMismatch(format!("{to} not in {}..{}", self.start(), self.end()))
        })?;
        if b < a {
            return Err(Error::SpanMismatch(format!("{to} precedes {from}")));
        }
        Ok(MonthlySeries {
            start: from,
            values: self.values[a..=b].to_vec(),
            missing: self.missing[a..=b].to_vec(),
        })
    }

    /// Drops leading missing months (e.g. transform warm-up entries).
    pub fn trim_leading_missing(&self) -> Result<MonthlySeries> {
        let first = self
            .missing
            .iter()
            .position(|&m| !m)
            .ok_or_else(|| Error::DegenerateSeries("all values missing".into()))?;
        Ok(MonthlySeries {
            start: self.start.plus(first as i64),
            values: self.values[first..].to_vec(),
            missing: self.missing[first..].to_vec(),
        })
    }
}

/// Sample mean.
pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation, divisor `n - 1`.
pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Applies `(1-B)^d (1-B^season)^D`; output starts `d + D*season` months later.
pub fn difference(s: &MonthlySeries, d: usize, seasonal_d: usize, season: usize) -> Result<MonthlySeries> {
    let consumed = d + seasonal_d * season;
    if s.len() <= consumed {
        return Err(Error::SeriesTooShort {
            needed: consumed + 1,
            got: s.len(),
        });
    }
    if let Some(i) = s.missing.iter().position(|&m| m) {
        return Err(Error::MissingValue(s.month_at(i)));
    }
    let mut v = s.values.clone();
    for _ in 0..d {
        v = v.windows(2).map(|w| w[1] - w[0]).collect();
    }
    for _ in 0..seasonal_d {
        v = (season..v.len()).map(|i| v[i] - v[i - season]).collect();
    }
    MonthlySeries::new(s.start.plus(consumed as i64), v)
}

/// Sample ACF and PACF up to `max_lag`, plus the `1.96/sqrt(T)` band.
///
/// Both vectors are indexed by lag with entry 0 fixed at 1; the PACF is
/// computed from the ACF by the Durbin-Levinson recursion.
pub fn acf_pacf(s: &MonthlySeries, max_lag: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let x = s.to_complete_vec()?;
    let n = x.len();
    if max_lag >= n {
        return Err(Error::LagOutOfRange { lag: max_lag, len: n });
    }
    let m = mean(&x);
    let denom: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    let mut acf = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let num: f64 = (0..n - k).map(|t| (x[t] - m) * (x[t + k] - m)).sum();
        acf.push(num / denom);
    }

    // Durbin-Levinson on the sample ACF.
    let mut pacf = vec![1.0];
    let mut phi_prev: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = acf[k]
            - phi_prev
                .iter()
                .enumerate()
                .map(|(j, &p)| p * acf[k - 1 - j])
                .sum::<f64>();
        let den = 1.0
            - phi_prev
                .iter()
                .enumerate()
                .map(|(j, &p)| p * acf[j + 1])
                .sum::<f64>();
        let phi_kk = if den.abs() < 1e-14 { 0.0 } else { num / den };
        let mut phi = Vec::with_capacity(k);
        for j in 0..k - 1 {
            phi.push(phi_prev[j] - phi_kk * phi_prev[k - 2 - j]);
        }
        phi.push(phi_kk);
        pacf.push(phi_kk);
        phi_prev = phi;
    }

    let band = 1.96 / (n as f64).sqrt();
    Ok((acf, pacf, band))
}

/// Lag-order policy for [`adf_test`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LagPolicy {
    /// Schwert rule: `floor(12 * (T/100)^{1/4})`.
    Auto,
    Fixed(usize),
}

/// Augmented Dickey-Fuller test (regression with constant, no trend).
///
/// Returns the t-statistic on the lagged level and a p-value interpolated
/// from tabulated Dickey-Fuller quantiles, clamped to `[0.01, 0.99]`.
/// Small p-values favor stationarity.
pub fn adf_test(s: &MonthlySeries, lag_policy: LagPolicy) -> Result<(f64, f64)> {
    let y = s.to_complete_vec()?;
    let t_len = y.len();
    let lags = match lag_policy {
        LagPolicy::Auto => (12.0 * (t_len as f64 / 100.0).powf(0.25)).floor() as usize,
        LagPolicy::Fixed(l) => l,
    };
    // rows: t = lags+1 .. t_len-1 over dy; need k = 2 + lags columns
    let nobs = t_len.checked_sub(lags + 1).unwrap_or(0);
    let k = 2 + lags;
    if nobs < k + 3 {
        return Err(Error::SeriesTooShort {
            needed: lags + k + 4,
            got: t_len,
        });
    }
    if sample_std(&y) == 0.0 {
        return Err(Error::DegenerateSeries("constant series".into()));
    }

    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let mut design = DMatrix::zeros(nobs, k);
    let mut target = DMatrix::zeros(nobs, 1);
    for (row, t) in (lags..dy.len()).enumerate() {
        target[(row, 0)] = dy[t];
        design[(row, 0)] = 1.0;
        design[(row, 1)] = y[t]; // level lagged one step behind dy[t]
        for j in 0..lags {
            design[(row, 2 + j)] = dy[t - 1 - j];
        }
    }
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &target;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::IllConditioned("ADF design matrix".into()))?;
    let beta = chol.solve(&xty);
    let resid = &target - &design * &beta;
    let dof = nobs - k;
    let sigma2 = resid.iter().map(|r| r * r).sum::<f64>() / dof as f64;
    let xtx_inv = chol.inverse();
    let se = (sigma2 * xtx_inv[(1, 1)]).sqrt();
    if se == 0.0 || !se.is_finite() {
        return Err(Error::DegenerateSeries("ADF regression degenerate".into()));
    }
    let stat = beta[(1, 0)] / se;
    let p = df_p_value(stat, nobs);
    Ok((stat, p))
}

// Dickey-Fuller quantiles for the constant-only regression (tau_mu),
// tabulated at T = 25, 50, 100, 250, 500, inf.
const DF_PROBS: [f64; 8] = [0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99];
const DF_SIZES: [f64; 6] = [25.0, 50.0, 100.0, 250.0, 500.0, f64::INFINITY];
const DF_TAU_MU: [[f64; 8]; 6] = [
    [-3.75, -3.33, -3.00, -2.63, -0.37, 0.00, 0.34, 0.72],
    [-3.58, -3.22, -2.93, -2.60, -0.40, -0.03, 0.29, 0.66],
    [-3.51, -3.17, -2.89, -2.58, -0.42, -0.05, 0.26, 0.63],
    [-3.46, -3.14, -2.88, -2.57, -0.42, -0.06, 0.24, 0.62],
    [-3.44, -3.13, -2.87, -2.57, -0.43, -0.07, 0.24, 0.61],
    [-3.43, -3.12, -2.86, -2.57, -0.44, -0.07, 0.23, 0.60],
];

fn df_p_value(stat: f64, nobs: usize) -> f64 {
    let t = nobs as f64;
    // interpolate quantile row over sample size
    let mut row = [0.0; 8];
    if t <= DF_SIZES[0] {
        row = DF_TAU_MU[0];
    } else if t >= DF_SIZES[4] {
        row = DF_TAU_MU[5];
    } else {
        for i in 0..4 {
            if t <= DF_SIZES[i + 1] {
                let w = (t - DF_SIZES[i]) / (DF_SIZES[i + 1] - DF_SIZES[i]);
                for j in 0..8 {
                    row[j] = DF_TAU_MU[i][j] + w * (DF_TAU_MU[i + 1][j] - DF_TAU_MU[i][j]);
                }
                break;
            }
        }
    }
    // interpolate probability over the quantile row
    if stat <= row[0] {
        return DF_PROBS[0];
    }
    if stat >= row[7] {
        return DF_PROBS[7];
    }
    for j in 0..7 {
        if stat <= row[j + 1] {
            let w = (stat - row[j]) / (row[j + 1] - row[j]);
            return DF_PROBS[j] + w * (DF_PROBS[j + 1] - DF_PROBS[j]);
        }
    }
    DF_PROBS[7]
}

/// Stationarity transform codes used for covariate panels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformCode {
    /// Code 1: `(1-B) Z`.
    Diff,
    /// Code 2: `(1-B) log Z`.
    DiffLog,
    /// Code 3: `(1-B)^2 log Z`.
    Diff2Log,
}

impl TransformCode {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(TransformCode::Diff),
            2 => Ok(TransformCode::DiffLog),
            3 => Ok(TransformCode::Diff2Log),
            _ => Err(Error::InvalidParam(format!("unknown transform code {code}"))),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            TransformCode::Diff => 1,
            TransformCode::DiffLog => 2,
            TransformCode::Diff2Log => 3,
        }
    }

    /// Number of leading months consumed by the transform.
    pub fn order(&self) -> usize {
        match self {
            TransformCode::Diff | TransformCode::DiffLog => 1,
            TransformCode::Diff2Log => 2,
        }
    }
}

/// Applies a [`TransformCode`] keeping the series aligned: output has the
/// same start and length, with the consumed leading entries missing.
/// Missing inputs propagate to missing outputs.
pub fn apply_transform(s: &MonthlySeries, code: TransformCode) -> Result<MonthlySeries> {
    let order = code.order();
    if s.len() <= order {
        return Err(Error::SeriesTooShort {
            needed: order + 1,
            got: s.len(),
        });
    }
    let log_needed = matches!(code, TransformCode::DiffLog | TransformCode::Diff2Log);
    let mut work: Vec<Option<f64>> = Vec::with_capacity(s.len());
    for i in 0..s.len() {
        match s.value(i) {
            Some(v) if log_needed => {
                if v <= 0.0 {
                    return Err(Error::NonPositive {
                        month: s.month_at(i),
                        value: v,
                    });
                }
                work.push(Some(v.ln()));
            }
            Some(v) => work.push(Some(v)),
            None => work.push(None),
        }
    }
    for _ in 0..order {
        let mut next = vec![None; work.len()];
        for i in 1..work.len() {
            if let (Some(a), Some(b)) = (work[i - 1], work[i]) {
                next[i] = Some(b - a);
            }
        }
        work = next;
    }
    MonthlySeries::from_options(s.start, work)
}

/// A month-aligned matrix of named series; NaN marks missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    start: Month,
    names: Vec<String>,
    data: DMatrix<f64>,
}

impl Panel {
    pub fn new(start: Month, names: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(Error::InvalidParam(format!(
                "{} names for {} columns",
                names.len(),
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::SeriesTooShort { needed: 1, got: 0 });
        }
        Ok(Panel { start, names, data })
    }

    /// Builds a panel from aligned series; all must share start and length.
    pub fn from_series(columns: Vec<(String, MonthlySeries)>) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::InvalidParam("empty panel".into()))?;
        let start = first.1.start();
        let nrows = first.1.len();
        let mut names = Vec::with_capacity(columns.len());
        let mut data = DMatrix::zeros(nrows, columns.len());
        for (j, (name, s)) in columns.iter().enumerate() {
            if s.start() != start || s.len() != nrows {
                return Err(Error::SpanMismatch(format!(
                    "column `{name}` spans {}..{}, expected {}..{}",
                    s.start(),
                    s.end(),
                    start,
                    first.1.end()
                )));
            }
            for i in 0..nrows {
                data[(i, j)] = match s.value(i) {
                    Some(v) => v,
                    None => f64::NAN,
                };
            }
            names.push(name.clone());
        }
        Ok(Panel { start, names, data })
    }

    pub fn start(&self) -> Month {
        self.start
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn month_at(&self, i: usize) -> Month {
        self.start.plus(i as i64)
    }

    pub fn end(&self) -> Month {
        self.start.plus(self.nrows() as i64 - 1)
    }

    pub fn column_series(&self, j: usize) -> MonthlySeries {
        let vals = (0..self.nrows())
            .map(|i| {
                let v = self.data[(i, j)];
                if v.is_nan() {
                    None
                } else {
                    Some(v)
                }
            })
            .collect();
        MonthlySeries::from_options(self.start, vals).expect("non-empty panel column")
    }

    /// Rows covering `from..=to`.
    pub fn slice_rows(&self, from: Month, to: Month) -> Result<Panel> {
        let a = from.months_since(self.start);
        let b = to.months_since(self.start);
        if a < 0 || b < a || b as usize >= self.nrows() {
            return Err(Error::SpanMismatch(format!(
                "{from}..{to} not within {}..{}",
                self.start,
                self.end()
            )));
        }
        let data = self.data.rows(a as usize, (b - a + 1) as usize).into_owned();
        Panel::new(from, self.names.clone(), data)
    }
}

/// Column-wise standardization over observed cells (sd divisor `n - 1`).
///
/// Missing cells stay missing; returns the per-column means and sds so the
/// transform can be inverted.
pub fn standardize(panel: &Panel) -> Result<(Panel, Vec<f64>, Vec<f64>)> {
    let mut out = panel.data().clone();
    let mut means = Vec::with_capacity(panel.ncols());
    let mut sds = Vec::with_capacity(panel.ncols());
    for j in 0..panel.ncols() {
        let obs: Vec<f64> = (0..panel.nrows())
            .map(|i| panel.data()[(i, j)])
            .filter(|v| !v.is_nan())
            .collect();
        if obs.len() < 2 {
            return Err(Error::ZeroVariance(format!(
                "{} (fewer than 2 observed values)",
                panel.names()[j]
            )));
        }
        let m = mean(&obs);
        let sd = sample_std(&obs);
        if sd == 0.0 {
            return Err(Error::ZeroVariance(panel.names()[j].clone()));
        }
        for i in 0..panel.nrows() {
            let v = out[(i, j)];
            if !v.is_nan() {
                out[(i, j)] = (v - m) / sd;
            }
        }
        means.push(m);
        sds.push(sd);
    }
    Ok((
        Panel::new(panel.start(), panel.names().to_vec(), out)?,
        means,
        sds,
    ))
}
