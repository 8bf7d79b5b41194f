//! The JSON pipeline configuration: data paths, grids, protocol settings,
//! and runtime knobs. Defaults reproduce the production setup — the 81
//! order choices, the 147 holiday windows, critical value 3.5, training
//! start 2002-01, evaluation span 2009-01..2016-11, horizons
//! {1,2,3,6,9,12}, and factor counts 1..5.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cpikit::backtest::{Scheme, HORIZONS_DEFAULT, ROLLING_BASE_DEFAULT};
use cpikit::calendar::{HolidayWindow, LunarTable, RegressorKind, TC_DELTA_DEFAULT};
use cpikit::diffusion::MAX_K_LIMIT;
use cpikit::error::{Error, Result};
use cpikit::seasadj::Mode;
use cpikit::selection::Orders;
use cpikit::timeseries::{Month, TransformCode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Inclusive upper bounds for the order grid; every combination of
/// `p, q ∈ 0..=p_max/q_max` and `P, Q ∈ 0..=seasonal_*_max` is searched
/// with `d = D = 1` fixed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrderGridConfig {
    pub p_max: usize,
    pub q_max: usize,
    pub seasonal_p_max: usize,
    pub seasonal_q_max: usize,
}

impl Default for OrderGridConfig {
    fn default() -> Self {
        OrderGridConfig {
            p_max: 2,
            q_max: 2,
            seasonal_p_max: 2,
            seasonal_q_max: 2,
        }
    }
}

impl OrderGridConfig {
    /// All orders, lexicographic in `(p, q, P, Q)`.
    pub fn orders(&self) -> Vec<Orders> {
        let mut out = Vec::new();
        for p in 0..=self.p_max {
            for q in 0..=self.q_max {
                for sp in 0..=self.seasonal_p_max {
                    for sq in 0..=self.seasonal_q_max {
                        out.push((p, q, sp, sq));
                    }
                }
            }
        }
        out
    }
}

/// Candidate day counts for the three holiday sub-windows; the search
/// covers the full cross product, lexicographic in `(τ1, τ2, τ3)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowGridConfig {
    pub tau1: Vec<u32>,
    pub tau2: Vec<u32>,
    pub tau3: Vec<u32>,
}

impl Default for WindowGridConfig {
    fn default() -> Self {
        WindowGridConfig {
            tau1: (0..=24).step_by(4).collect(),
            tau2: (0..=8).step_by(4).collect(),
            tau3: (0..=24).step_by(4).collect(),
        }
    }
}

impl WindowGridConfig {
    pub fn windows(&self) -> Vec<HolidayWindow> {
        let mut out = Vec::new();
        for &t1 in &self.tau1 {
            for &t2 in &self.tau2 {
                for &t3 in &self.tau3 {
                    out.push(HolidayWindow::new(t1, t2, t3));
                }
            }
        }
        out
    }
}

/// One configured intervention: `kind` is `"AO"`, `"LS"`, `"TC"`, or
/// `"IO"`; `delta` applies to TC only (default 0.7).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionConfig {
    pub kind: String,
    pub date: Month,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl InterventionConfig {
    pub fn regressor_kind(&self) -> Result<RegressorKind> {
        match self.kind.as_str() {
            "AO" => Ok(RegressorKind::AoPulse),
            "LS" => Ok(RegressorKind::LsStep),
            "TC" => Ok(RegressorKind::TcDecay),
            "IO" => Ok(RegressorKind::IoPulse),
            other => Err(Error::InvalidParam(format!(
                "unknown intervention kind {other:?} (expected AO, LS, TC, or IO)"
            ))),
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(TC_DELTA_DEFAULT)
    }
}

/// The single model used by `fit`, `outliers`, `sf-effects`, `backtest`,
/// `seasadj`, and the diffusion pipeline's holiday/seasonal step. The
/// default is the production choice: `(1,1,0)×(1,1,2)₁₂` with holiday
/// window `(4, 0, 12)` and an additive pulse at 2008-02.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub seasonal_p: usize,
    pub seasonal_d: usize,
    pub seasonal_q: usize,
    /// Holiday window day counts `[τ1, τ2, τ3]`; all zero disables the
    /// holiday regressors.
    pub window: [u32; 3],
    pub interventions: Vec<InterventionConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            p: 1,
            d: 1,
            q: 0,
            seasonal_p: 1,
            seasonal_d: 1,
            seasonal_q: 2,
            window: [4, 0, 12],
            interventions: vec![InterventionConfig {
                kind: "AO".into(),
                date: Month::new(2008, 2).expect("valid month"),
                delta: None,
            }],
        }
    }
}

impl ModelConfig {
    pub fn holiday_window(&self) -> HolidayWindow {
        HolidayWindow::new(self.window[0], self.window[1], self.window[2])
    }

    pub fn has_holiday_window(&self) -> bool {
        self.window.iter().any(|&t| t > 0)
    }

    /// Mean-side interventions as `(kind, anchor, delta)` triples.
    pub fn mean_interventions(&self) -> Result<Vec<(RegressorKind, Month, f64)>> {
        let mut out = Vec::new();
        for iv in &self.interventions {
            let kind = iv.regressor_kind()?;
            if !kind.is_innovation_side() {
                out.push((kind, iv.date, iv.delta()));
            }
        }
        Ok(out)
    }

    /// Innovation-side pulse anchors.
    pub fn io_pulses(&self) -> Result<Vec<Month>> {
        let mut out = Vec::new();
        for iv in &self.interventions {
            if iv.regressor_kind()?.is_innovation_side() {
                out.push(iv.date);
            }
        }
        Ok(out)
    }
}

/// The complete pipeline configuration, loaded from a single JSON file.
/// Relative data paths resolve against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Target CPI series (`date,value` CSV). Required.
    pub target_csv: String,
    /// Covariate panel for the diffusion index (`date,<name>,...` CSV).
    pub panel_csv: Option<String>,
    /// Officially adjusted companion of the target; when present the
    /// seasonal factor comes from the raw/adjusted ratio and the holiday
    /// component is zero.
    pub sa_target_csv: Option<String>,
    /// Lunar new-year dates (`year,month,day` CSV) overriding the
    /// embedded 1991–2030 table.
    pub lunar_csv: Option<String>,

    pub order_grid: OrderGridConfig,
    pub window_grid: WindowGridConfig,
    /// Outlier detection critical value `C`.
    pub critical_value: f64,
    pub model: ModelConfig,

    /// Backtest scheme: `"expanding"` or `"rolling"`.
    pub scheme: String,
    /// First month of every expanding training window (and of the
    /// estimation sample for the single-model subcommands).
    pub training_start: Month,
    /// Forecast-target span, inclusive.
    pub span_start: Month,
    pub span_end: Month,
    pub horizons: Vec<usize>,
    /// Rolling windows cover `rolling_base − h` months at horizon `h`.
    pub rolling_base: usize,
    /// Re-estimate every `refit_stride`-th origin (`--fast` forces 6).
    pub refit_stride: usize,
    /// Backtest engine: `"sarimax"` or `"di"`.
    pub engine: String,

    /// Seasonal-adjustment mode: `"additive"` or `"multiplicative"`.
    pub sa_mode: String,
    /// Per-covariate transform codes (1 = Δ, 2 = Δlog, 3 = Δ²log);
    /// covariates not listed enter the panel untransformed.
    pub transforms: BTreeMap<String, u8>,

    /// Largest factor count searched by the diffusion index (1..=max_k).
    pub max_k: usize,

    /// Seed for estimation restarts and any stochastic utilities.
    pub seed: u64,
    /// Worker-pool size; absent means one worker per logical CPU.
    pub threads: Option<usize>,
    /// Artifact directory, resolved against the config file's directory.
    pub out_dir: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            target_csv: String::new(),
            panel_csv: None,
            sa_target_csv: None,
            lunar_csv: None,
            order_grid: OrderGridConfig::default(),
            window_grid: WindowGridConfig::default(),
            critical_value: 3.5,
            model: ModelConfig::default(),
            scheme: "expanding".into(),
            training_start: Month::new(2002, 1).expect("valid month"),
            span_start: Month::new(2009, 1).expect("valid month"),
            span_end: Month::new(2016, 11).expect("valid month"),
            horizons: HORIZONS_DEFAULT.to_vec(),
            rolling_base: ROLLING_BASE_DEFAULT,
            refit_stride: 1,
            engine: "sarimax".into(),
            sa_mode: "additive".into(),
            transforms: BTreeMap::new(),
            max_k: MAX_K_LIMIT,
            seed: 0,
            threads: None,
            out_dir: "out".into(),
        }
    }
}

impl PipelineConfig {
    pub fn scheme(&self) -> Result<Scheme> {
        match self.scheme.as_str() {
            "expanding" => Ok(Scheme::Expanding),
            "rolling" => Ok(Scheme::Rolling),
            other => Err(Error::InvalidParam(format!(
                "unknown scheme {other:?} (expected \"expanding\" or \"rolling\")"
            ))),
        }
    }

    pub fn sa_mode(&self) -> Result<Mode> {
        match self.sa_mode.as_str() {
            "additive" => Ok(Mode::Additive),
            "multiplicative" => Ok(Mode::Multiplicative),
            other => Err(Error::InvalidParam(format!(
                "unknown sa_mode {other:?} (expected \"additive\" or \"multiplicative\")"
            ))),
        }
    }

    /// The lunar table: embedded dates plus any configured overrides.
    pub fn lunar_table(&self, dir: &Path) -> Result<LunarTable> {
        let base = LunarTable::embedded();
        match &self.lunar_csv {
            None => Ok(base),
            Some(rel) => {
                let path = resolve(dir, rel);
                let file = std::fs::File::open(&path)?;
                let entries = cpikit::io::read_lunar_csv(file, &path.display().to_string())?;
                base.with_overrides(&entries)
            }
        }
    }

    /// Per-covariate transform codes parsed into [`TransformCode`].
    pub fn transform_codes(&self) -> Result<BTreeMap<String, TransformCode>> {
        self.transforms
            .iter()
            .map(|(name, &code)| Ok((name.clone(), TransformCode::from_code(code)?)))
            .collect()
    }

    /// Structural checks beyond the JSON schema: referenced paths exist,
    /// grids are nonempty, enums and numeric ranges are sane.
    pub fn validate(&self, dir: &Path) -> Result<()> {
        if self.target_csv.is_empty() {
            return Err(Error::InvalidParam("target_csv is required".into()));
        }
        for rel in std::iter::once(&self.target_csv)
            .chain(&self.panel_csv)
            .chain(&self.sa_target_csv)
            .chain(&self.lunar_csv)
        {
            let path = resolve(dir, rel);
            if !path.is_file() {
                return Err(Error::InvalidParam(format!(
                    "configured path {} does not exist",
                    path.display()
                )));
            }
        }
        if self.window_grid.tau1.is_empty()
            || self.window_grid.tau2.is_empty()
            || self.window_grid.tau3.is_empty()
        {
            return Err(Error::InvalidParam(
                "window_grid day counts must be nonempty".into(),
            ));
        }
        if self.horizons.is_empty() {
            return Err(Error::InvalidParam("horizons must be nonempty".into()));
        }
        if self.horizons.contains(&0) {
            return Err(Error::InvalidParam("horizons must be >= 1".into()));
        }
        if !(self.critical_value > 0.0) {
            return Err(Error::InvalidParam(format!(
                "critical_value must be positive, got {}",
                self.critical_value
            )));
        }
        if self.max_k == 0 || self.max_k > MAX_K_LIMIT {
            return Err(Error::InvalidParam(format!(
                "max_k must be in 1..={MAX_K_LIMIT}, got {}",
                self.max_k
            )));
        }
        if self.refit_stride == 0 {
            return Err(Error::InvalidParam("refit_stride must be >= 1".into()));
        }
        if self.engine != "sarimax" && self.engine != "di" {
            return Err(Error::InvalidParam(format!(
                "unknown engine {:?} (expected \"sarimax\" or \"di\")",
                self.engine
            )));
        }
        self.scheme()?;
        self.sa_mode()?;
        self.transform_codes()?;
        self.model.mean_interventions()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization. Execution-only fields
    /// (worker count, output directory) are normalized out so runs that
    /// differ only in parallelism or artifact location share a hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.threads = None;
        canonical.out_dir = String::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

/// A path from the config, resolved against the config file's directory.
pub fn resolve(dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// Loads, deserializes, and validates a config file. Returns the config
/// together with its directory (the base for relative paths).
pub fn load(path: &Path) -> Result<(PipelineConfig, PathBuf)> {
    let text = std::fs::read_to_string(path)?;
    let config: PipelineConfig = serde_json::from_str(&text)?;
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    config.validate(&dir)?;
    Ok((config, dir))
}
