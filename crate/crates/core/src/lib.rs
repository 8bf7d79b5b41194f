//! Monthly CPI modeling toolkit.
//!
//! The crate covers the full monthly-index pipeline:
//!
//! - [`timeseries`] — the [`MonthlySeries`](timeseries::MonthlySeries)
//!   container, differencing, ACF/PACF, the augmented Dickey-Fuller test,
//!   stationarity transforms, and panel standardization.
//! - [`calendar`] — lunar-holiday (Spring Festival) regressors, outlier
//!   intervention shapes, and the holiday-impact diagnostic.
//! - [`sarimax`] — exact-likelihood estimation and forecasting of seasonal
//!   ARIMA models with mean-side regressors and innovation-side pulses.
//! - [`outlierscan`] — Chen-Liu style AO/IO/LS/TC detection and the
//!   per-month outlier census over a model set.
//! - [`selection`] — the three selection criteria and the two-step
//!   rank-sum search over model orders and holiday windows.
//! - [`backtest`] — expanding/rolling multi-horizon out-of-sample
//!   evaluation.
//! - [`seasadj`] — holiday-effect removal and classical seasonal
//!   decomposition.
//! - [`diffusion`] — principal-component factor extraction with EM
//!   handling of missing data and the dynamic diffusion-index forecast.
//! - [`io`] — the CSV and JSON formats shared by the library and the CLI.

pub mod backtest;
pub mod calendar;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod outlierscan;
pub mod sarimax;
pub mod seasadj;
pub mod selection;
pub mod timeseries;

mod kalman;
mod optim;
mod poly;

pub use error::{Error, Result};
pub use timeseries::{Month, MonthlySeries};
