//! Spring-Festival calendar regressors and intervention shapes.
//!
//! The Spring Festival (Chinese New Year) moves between January 21 and
//! February 20 on the solar calendar, so its effect on monthly data shifts
//! between January and February from year to year. The regressors built here
//! spread a holiday window — `tau1` days before, `tau2` days during, `tau3`
//! days after the festival start — across calendar months in proportion to
//! the days that fall in each month.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{Month, MonthlySeries};

/// Default damping factor for temporary-change interventions.
pub const TC_DELTA_DEFAULT: f64 = 0.8;

// Spring Festival start dates. For 2001-2017 these are the official holiday
// start dates (from 2008 on the holiday begins on New Year's Eve); outside
// that range they are the astronomical New Year dates. All lie within the
// January 21 - February 20 band.
const EMBEDDED_SF_DATES: [(i32, u32, u32); 40] = [
    (1991, 2, 15),
    (1992, 2, 4),
    (1993, 1, 23),
    (1994, 2, 10),
    (1995, 1, 31),
    (1996, 2, 19),
    (1997, 2, 7),
    (1998, 1, 28),
    (1999, 2, 16),
    (2000, 2, 5),
    (2001, 1, 24),
    (2002, 2, 12),
    (2003, 2, 1),
    (2004, 1, 22),
    (2005, 2, 9),
    (2006, 1, 29),
    (2007, 2, 18),
    (2008, 2, 6),
    (2009, 1, 25),
    (2010, 2, 13),
    (2011, 2, 2),
    (2012, 1, 22),
    (2013, 2, 9),
    (2014, 1, 31),
    (2015, 2, 18),
    (2016, 2, 7),
    (2017, 1, 27),
    (2018, 2, 16),
    (2019, 2, 5),
    (2020, 1, 25),
    (2021, 2, 12),
    (2022, 2, 1),
    (2023, 1, 22),
    (2024, 2, 10),
    (2025, 1, 29),
    (2026, 2, 17),
    (2027, 2, 6),
    (2028, 1, 26),
    (2029, 2, 13),
    (2030, 2, 3),
];

/// Year-indexed Spring Festival start dates.
#[derive(Clone, Debug)]
pub struct LunarTable {
    dates: BTreeMap<i32, NaiveDate>,
}

impl LunarTable {
    /// The built-in table, covering 1991 through 2030.
    pub fn embedded() -> Self {
        let mut dates = BTreeMap::new();
        for &(y, m, d) in EMBEDDED_SF_DATES.iter() {
            dates.insert(y, NaiveDate::from_ymd_opt(y, m, d).expect("valid embedded date"));
        }
        LunarTable { dates }
    }

    /// Builds a table from `(year, month, day)` entries, checking each date
    /// against the January 21 - February 20 band.
    pub fn from_entries(entries: &[(i32, u32, u32)]) -> Result<Self> {
        let mut table = LunarTable {
            dates: BTreeMap::new(),
        };
        table.apply_entries(entries)?;
        Ok(table)
    }

    /// Returns a copy with `entries` inserted on top of the existing dates.
    pub fn with_overrides(&self, entries: &[(i32, u32, u32)]) -> Result<Self> {
        let mut table = self.clone();
        table.apply_entries(entries)?;
        Ok(table)
    }

    fn apply_entries(&mut self, entries: &[(i32, u32, u32)]) -> Result<()> {
        for &(y, m, d) in entries {
            let date = NaiveDate::from_ymd_opt(y, m, d).ok_or_else(|| {
                Error::InvalidParam(format!("invalid date {y:04}-{m:02}-{d:02}"))
            })?;
            let ok = (m == 1 && d >= 21) || (m == 2 && d <= 20);
            if !ok {
                return Err(Error::InvalidParam(format!(
                    "Spring Festival date {date} outside January 21 - February 20"
                )));
            }
            self.dates.insert(y, date);
        }
        Ok(())
    }

    /// Spring Festival start date for `year`.
    pub fn sf_start(&self, year: i32) -> Result<NaiveDate> {
        self.dates
            .get(&year)
            .copied()
            .ok_or(Error::YearNotInTable(year))
    }

    pub fn contains(&self, year: i32) -> bool {
        self.dates.contains_key(&year)
    }

    /// Covered years, ascending.
    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.dates.keys().copied()
    }
}

/// Holiday window lengths in days: before, during, and after the festival
/// start date.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HolidayWindow {
    pub tau1: u32,
    pub tau2: u32,
    pub tau3: u32,
}

impl HolidayWindow {
    pub fn new(tau1: u32, tau2: u32, tau3: u32) -> Self {
        HolidayWindow { tau1, tau2, tau3 }
    }

    pub fn is_zero(&self) -> bool {
        self.tau1 == 0 && self.tau2 == 0 && self.tau3 == 0
    }
}

/// What a regression column represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegressorKind {
    SfBefore,
    SfDuring,
    SfAfter,
    AoPulse,
    LsStep,
    TcDecay,
    IoPulse,
}

impl RegressorKind {
    /// Short label used in reports and CSV headers.
    pub fn label(&self) -> &'static str {
        match self {
            RegressorKind::SfBefore => "H1",
            RegressorKind::SfDuring => "H2",
            RegressorKind::SfAfter => "H3",
            RegressorKind::AoPulse => "AO",
            RegressorKind::LsStep => "LS",
            RegressorKind::TcDecay => "TC",
            RegressorKind::IoPulse => "IO",
        }
    }

    /// Innovation-side pulses enter the disturbance, not the mean.
    pub fn is_innovation_side(&self) -> bool {
        matches!(self, RegressorKind::IoPulse)
    }
}

/// A named regressor aligned to a monthly span.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorColumn {
    kind: RegressorKind,
    anchor: Option<Month>,
    delta: Option<f64>,
    window: Option<HolidayWindow>,
    series: MonthlySeries,
}

impl RegressorColumn {
    pub fn kind(&self) -> RegressorKind {
        self.kind
    }

    /// Event month for intervention columns; `None` for SF columns.
    pub fn anchor(&self) -> Option<Month> {
        self.anchor
    }

    /// Damping factor, set for `TcDecay` only.
    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    /// Holiday window, set for SF columns only; needed to extend the
    /// column past the sample.
    pub fn window(&self) -> Option<HolidayWindow> {
        self.window
    }

    pub fn series(&self) -> &MonthlySeries {
        &self.series
    }

    pub fn values(&self) -> &[f64] {
        self.series.values()
    }

    /// Column name, e.g. `H1` or `AO(2008-02)`.
    pub fn name(&self) -> String {
        match self.anchor {
            Some(anchor) => format!("{}({})", self.kind.label(), anchor),
            None => self.kind.label().to_string(),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values().iter().all(|&v| v == 0.0)
    }
}

/// Builds the three Spring Festival regressors H1, H2, H3 over
/// `start..start+months`.
///
/// For sub-period `i` with length `tau_i` days, the month-`t` value is the
/// number of sub-period days falling in month `t` divided by `tau_i`; a
/// zero-length sub-period yields an all-zero column. Sub-periods may spill
/// into December of the prior year or into March; those days are allocated
/// like any others (months outside the span are simply not represented).
pub fn sf_regressors(
    start: Month,
    months: usize,
    table: &LunarTable,
    w: HolidayWindow,
) -> Result<(RegressorColumn, RegressorColumn, RegressorColumn)> {
    if months == 0 {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    let end = start.plus(months as i64 - 1);
    let mut counts = [vec![0u32; months], vec![0u32; months], vec![0u32; months]];

    for year in start.year()..=end.year() + 1 {
        match table.sf_start(year) {
            Ok(d0) => {
                let spans = sub_period_spans(d0, w);
                for (i, span) in spans.iter().enumerate() {
                    if let Some((first, last)) = span {
                        let mut day = *first;
                        while day <= *last {
                            let m = Month::new(day.year(), day.month())?;
                            if let Some(idx) = index_in(start, months, m) {
                                counts[i][idx] += 1;
                            }
                            day += Duration::days(1);
                        }
                    }
                }
            }
            Err(_) => {
                if w.is_zero() {
                    continue;
                }
                // Without the date we cannot tell whether this year's window
                // touches the span; demand coverage whenever any month the
                // window could reach (Dec of year-1 through Mar of year)
                // lies inside the span.
                let reach_start = Month::new(year - 1, 12)?;
                let reach_end = Month::new(year, 3)?;
                if reach_end.months_since(start) >= 0 && end.months_since(reach_start) >= 0 {
                    return Err(Error::YearNotInTable(year));
                }
            }
        }
    }

    let taus = [w.tau1, w.tau2, w.tau3];
    let kinds = [
        RegressorKind::SfBefore,
        RegressorKind::SfDuring,
        RegressorKind::SfAfter,
    ];
    let mut cols = Vec::with_capacity(3);
    for i in 0..3 {
        let values: Vec<f64> = counts[i]
            .iter()
            .map(|&c| {
                if taus[i] == 0 {
                    0.0
                } else {
                    c as f64 / taus[i] as f64
                }
            })
            .collect();
        cols.push(RegressorColumn {
            kind: kinds[i],
            anchor: None,
            delta: None,
            window: Some(w),
            series: MonthlySeries::new(start, values)?,
        });
    }
    let h3 = cols.pop().expect("three columns");
    let h2 = cols.pop().expect("three columns");
    let h1 = cols.pop().expect("three columns");
    Ok((h1, h2, h3))
}

/// Inclusive day spans of the before/during/after sub-periods, `None` when
/// the sub-period has zero length.
fn sub_period_spans(d0: NaiveDate, w: HolidayWindow) -> [Option<(NaiveDate, NaiveDate)>; 3] {
    let before = if w.tau1 > 0 {
        Some((d0 - Duration::days(w.tau1 as i64), d0 - Duration::days(1)))
    } else {
        None
    };
    let during = if w.tau2 > 0 {
        Some((d0, d0 + Duration::days(w.tau2 as i64 - 1)))
    } else {
        None
    };
    let after = if w.tau3 > 0 {
        let first = d0 + Duration::days(w.tau2 as i64);
        Some((first, first + Duration::days(w.tau3 as i64 - 1)))
    } else {
        None
    };
    [before, during, after]
}

fn index_in(start: Month, months: usize, m: Month) -> Option<usize> {
    let off = m.months_since(start);
    if off >= 0 && (off as usize) < months {
        Some(off as usize)
    } else {
        None
    }
}

/// Builds an intervention regressor over `start..start+months`.
///
/// Shapes: `AoPulse`/`IoPulse` are 1 at the anchor month and 0 elsewhere;
/// `LsStep` is 0 before the anchor and 1 from it onward; `TcDecay` is
/// `delta^j` at anchor+j. The anchor must lie inside the span.
pub fn intervention_column(
    start: Month,
    months: usize,
    kind: RegressorKind,
    anchor: Month,
    delta: f64,
) -> Result<RegressorColumn> {
    if months == 0 {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    let end = start.plus(months as i64 - 1);
    let anchor_idx = index_in(start, months, anchor).ok_or(Error::AnchorOutOfRange {
        anchor,
        start,
        end,
    })?;
    let mut values = vec![0.0; months];
    let stored_delta = match kind {
        RegressorKind::AoPulse | RegressorKind::IoPulse => {
            values[anchor_idx] = 1.0;
            None
        }
        RegressorKind::LsStep => {
            for v in values.iter_mut().skip(anchor_idx) {
                *v = 1.0;
            }
            None
        }
        RegressorKind::TcDecay => {
            if !(0.0 < delta && delta < 1.0) {
                return Err(Error::InvalidParam(format!(
                    "TC damping must lie in (0,1), got {delta}"
                )));
            }
            for (j, v) in values.iter_mut().skip(anchor_idx).enumerate() {
                *v = delta.powi(j as i32);
            }
            Some(delta)
        }
        _ => {
            return Err(Error::InvalidParam(format!(
                "{} is not an intervention kind",
                kind.label()
            )));
        }
    };
    Ok(RegressorColumn {
        kind,
        anchor: Some(anchor),
        delta: stored_delta,
        window: None,
        series: MonthlySeries::new(start, values)?,
    })
}

/// Relative holiday distortion of the annual inflation rate.
///
/// For each month with 12 months of history, compares the 12-month percent
/// change of the raw series (`R_t`) with that of the holiday-adjusted series
/// `raw - sf_effect` (`R~_t`) and returns `|R_t - R~_t| / |R_t|`. The first
/// twelve months are missing. A zero `R_t` in January or February is an
/// error; elsewhere the month is left missing.
pub fn sf_relative_percentage(
    raw: &MonthlySeries,
    sf_effect: &MonthlySeries,
) -> Result<MonthlySeries> {
    if raw.start() != sf_effect.start() || raw.len() != sf_effect.len() {
        return Err(Error::SpanMismatch(format!(
            "raw spans {}..{}, effect spans {}..{}",
            raw.start(),
            raw.end(),
            sf_effect.start(),
            sf_effect.end()
        )));
    }
    if raw.len() < 13 {
        return Err(Error::SeriesTooShort {
            needed: 13,
            got: raw.len(),
        });
    }
    let mut out: Vec<Option<f64>> = vec![None; raw.len()];
    for t in 12..raw.len() {
        let needed = [
            raw.value(t),
            raw.value(t - 12),
            sf_effect.value(t),
            sf_effect.value(t - 12),
        ];
        let [Some(z1), Some(z0), Some(e1), Some(e0)] = needed else {
            continue;
        };
        let month = raw.month_at(t);
        if z0 == 0.0 || z0 == e0 {
            return Err(Error::DegenerateSeries(format!(
                "annual rate undefined at {month}"
            )));
        }
        let r = 100.0 * (z1 / z0 - 1.0);
        let r_adj = 100.0 * ((z1 - e1) / (z0 - e0) - 1.0);
        if r == 0.0 {
            if month.month() <= 2 {
                return Err(Error::DegenerateSeries(format!(
                    "raw annual rate is zero at {month}"
                )));
            }
            continue;
        }
        out[t] = Some((r - r_adj).abs() / r.abs());
    }
    MonthlySeries::from_options(raw.start(), out)
}
