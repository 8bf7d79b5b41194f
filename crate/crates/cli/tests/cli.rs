//! End-to-end checks of the `cpikit` binary: artifact shapes, byte-level
//! reproducibility, exit codes, and the backtest → report flow, all on
//! deterministic synthetic fixtures.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cpikit")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary launches")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Deterministic pseudo-noise in [-0.5, 0.5): an integer hash of `t`,
/// identical on every platform and run.
fn noise(t: usize) -> f64 {
    let mut z = (t as u64).wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

/// Month `i` counted from 2002-01.
fn month_label(i: usize) -> String {
    format!("{:04}-{:02}", 2002 + i / 12, 1 + i % 12)
}

/// A doubly integrated index around 100: `(1−B)(1−B¹²)z_t = ε_t` with
/// bounded deterministic innovations, plus a yearly drift — the
/// structure the `d = D = 1` models expect.
fn cpi_series(months: usize) -> Vec<f64> {
    let mut z = vec![0.0; months];
    let mut u = 0.0;
    for t in 0..months {
        u += 0.35 * noise(t);
        let base = if t >= 12 {
            z[t - 12]
        } else {
            let angle = std::f64::consts::TAU * t as f64 / 12.0;
            97.0 + 2.0 * angle.sin() + 1.2 * angle.cos()
        };
        z[t] = base + 0.4 + u;
    }
    z
}

fn write_cpi(dir: &Path, name: &str, months: usize, spike_at: Option<usize>) {
    let mut text = String::from("date,value\n");
    for (t, &value) in cpi_series(months).iter().enumerate() {
        let v = if spike_at == Some(t) { value + 8.0 } else { value };
        text.push_str(&format!("{},{v}\n", month_label(t)));
    }
    fs::write(dir.join(name), text).unwrap();
}

fn write_panel(dir: &Path, name: &str, months: usize) {
    let mut text = String::from("date,x1,x2,x3\n");
    for t in 0..months {
        let angle = std::f64::consts::TAU * (t % 12) as f64 / 12.0;
        let x1 = 1.5 * angle.sin() + 0.3 * noise(t + 1000);
        let x2 = 0.8 * angle.cos() + 0.3 * noise(t + 2000);
        let x3 = 50.0 + 0.1 * t as f64 + 0.5 * noise(t + 3000);
        text.push_str(&format!("{},{x1},{x2},{x3}\n", month_label(t)));
    }
    fs::write(dir.join(name), text).unwrap();
}

fn write_config(dir: &Path, name: &str, value: &serde_json::Value) {
    fs::write(dir.join(name), serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Non-comment lines after the column header.
fn data_rows(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .skip(1)
        .collect()
}

/// A cheap model for toy runs: (1,1,0)×(0,1,1)₁₂, no holiday window, no
/// interventions.
fn plain_model() -> serde_json::Value {
    serde_json::json!({
        "p": 1, "d": 1, "q": 0,
        "seasonal_p": 0, "seasonal_d": 1, "seasonal_q": 1,
        "window": [0, 0, 0],
        "interventions": []
    })
}

#[test]
fn fit_artifacts_are_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_cpi(dir, "cpi.csv", 150, None);
    write_config(dir, "config.json", &serde_json::json!({ "target_csv": "cpi.csv" }));
    let input_before = fs::read(dir.join("cpi.csv")).unwrap();

    assert_success(&run(dir, &["fit", "--config", "config.json", "--out", "a", "--threads", "2"]));
    assert_success(&run(dir, &["fit", "--config", "config.json", "--out", "b", "--threads", "2"]));

    let model_a = fs::read(dir.join("a/model.json")).unwrap();
    assert_eq!(model_a, fs::read(dir.join("b/model.json")).unwrap());
    assert_eq!(
        fs::read(dir.join("a/residuals.csv")).unwrap(),
        fs::read(dir.join("b/residuals.csv")).unwrap()
    );

    // Inputs are never mutated, and artifacts carry the metadata header.
    assert_eq!(input_before, fs::read(dir.join("cpi.csv")).unwrap());
    let residuals = fs::read_to_string(dir.join("a/residuals.csv")).unwrap();
    assert!(residuals.starts_with("# generated-by: cpikit "));
    assert!(residuals.lines().nth(1).unwrap().starts_with("# config-sha256: "));
    let doc: serde_json::Value = serde_json::from_slice(&model_a).unwrap();
    assert_eq!(doc["meta"]["config_sha256"].as_str().unwrap().len(), 64);
    // The default production model: (1,1,0)×(1,1,2)₁₂ with the holiday
    // window and the 2008-02 pulse.
    assert_eq!(doc["p"], 1);
    assert_eq!(doc["Q"], 2);
    assert_eq!(doc["mean_regressors"].as_array().unwrap().len(), 4);
}

#[test]
fn grid_covers_every_toy_cell_and_is_schedule_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_cpi(dir, "cpi.csv", 96, None);
    write_config(
        dir,
        "config.json",
        &serde_json::json!({
            "target_csv": "cpi.csv",
            "order_grid": { "p_max": 1, "q_max": 0, "seasonal_p_max": 0, "seasonal_q_max": 0 },
            "window_grid": { "tau1": [0, 4], "tau2": [0], "tau3": [0] },
            "model": plain_model(),
            "span_start": "2009-01",
            "span_end": "2009-06",
            "horizons": [1]
        }),
    );

    assert_success(&run(dir, &["grid", "--config", "config.json", "--out", "g1", "--threads", "1"]));
    assert_success(&run(dir, &["grid", "--config", "config.json", "--out", "g2", "--threads", "2"]));

    // Worker count changes neither a byte of the cell table nor of the
    // summary.
    let grid1 = fs::read(dir.join("g1/grid.csv")).unwrap();
    assert_eq!(grid1, fs::read(dir.join("g2/grid.csv")).unwrap());
    assert_eq!(
        fs::read(dir.join("g1/grid_summary.json")).unwrap(),
        fs::read(dir.join("g2/grid_summary.json")).unwrap()
    );

    // 2 orders × 2 windows → 4 rows, enumerated order-major then
    // window-major, lexicographic.
    let text = String::from_utf8(grid1).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("0,0,0,0,0,0,0,"));
    assert!(rows[1].starts_with("0,0,0,0,4,0,0,"));
    assert!(rows[2].starts_with("1,0,0,0,0,0,0,"));
    assert!(rows[3].starts_with("1,0,0,0,4,0,0,"));

    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("g1/grid_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_orders"], 2);
    assert_eq!(summary["n_windows"], 2);
    let top = summary["top"].as_array().unwrap();
    assert_eq!(top.len(), 2);
    assert!(top[0]["rank_sum"].as_u64().unwrap() <= top[1]["rank_sum"].as_u64().unwrap());
}

#[test]
fn backtest_report_flow_emits_the_ratio_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_cpi(dir, "cpi.csv", 96, None);
    write_panel(dir, "panel.csv", 96);
    let base = serde_json::json!({
        "target_csv": "cpi.csv",
        "panel_csv": "panel.csv",
        "model": plain_model(),
        "span_start": "2009-01",
        "span_end": "2009-06",
        "horizons": [1],
        "max_k": 1,
        "transforms": { "x3": 1 }
    });
    let mut sarimax_cfg = base.clone();
    sarimax_cfg["engine"] = "sarimax".into();
    write_config(dir, "sarimax.json", &sarimax_cfg);
    let mut di_cfg = base.clone();
    di_cfg["engine"] = "di".into();
    write_config(dir, "di.json", &di_cfg);

    assert_success(&run(dir, &["backtest", "--config", "sarimax.json", "--out", "bt", "--threads", "2"]));
    assert_success(&run(dir, &["backtest", "--config", "di.json", "--out", "bt", "--threads", "2"]));
    for name in [
        "backtest_sarimax_expanding_h1.csv",
        "backtest_sarimax_expanding_summary.csv",
        "backtest_di_expanding_h1.csv",
        "backtest_di_expanding_summary.csv",
        "errors_sarimax_expanding_h1.csv",
        "errors_di_expanding_h1.csv",
    ] {
        assert!(dir.join("bt").join(name).is_file(), "missing {name}");
    }

    // Six origins per horizon trace.
    let trace = fs::read_to_string(dir.join("bt/backtest_di_expanding_h1.csv")).unwrap();
    assert_eq!(data_rows(&trace).len(), 6);
    assert!(data_rows(&trace)[0].starts_with("2008-12,"));

    assert_success(&run(dir, &["report", "--config", "sarimax.json", "--out", "bt"]));
    let ratio_text = fs::read_to_string(dir.join("bt/rmse_ratio_expanding.csv")).unwrap();
    let rows = data_rows(&ratio_text);
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(fields[0], "1");
    let rmse_di: f64 = fields[1].parse().unwrap();
    let rmse_sx: f64 = fields[2].parse().unwrap();
    let ratio: f64 = fields[3].parse().unwrap();
    assert!(rmse_di > 0.0 && rmse_sx > 0.0);
    assert!((ratio - rmse_di / rmse_sx).abs() <= 1e-12 * ratio.abs());

    // The ratio numerators and denominators are exactly the summaries'
    // RMSE values.
    let di_summary = fs::read_to_string(dir.join("bt/backtest_di_expanding_summary.csv")).unwrap();
    let sx_summary =
        fs::read_to_string(dir.join("bt/backtest_sarimax_expanding_summary.csv")).unwrap();
    let from_summary = |text: &str| -> f64 {
        data_rows(text)[0].split(',').nth(1).unwrap().parse().unwrap()
    };
    assert_eq!(rmse_di, from_summary(&di_summary));
    assert_eq!(rmse_sx, from_summary(&sx_summary));
}

#[test]
fn di_forecast_emits_loadings_and_tuning() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_cpi(dir, "cpi.csv", 96, None);
    write_panel(dir, "panel.csv", 96);
    write_config(
        dir,
        "config.json",
        &serde_json::json!({
            "target_csv": "cpi.csv",
            "panel_csv": "panel.csv",
            "model": plain_model(),
            "horizons": [1, 3],
            "max_k": 2,
            "transforms": { "x3": 1 }
        }),
    );

    assert_success(&run(dir, &["di-forecast", "--config", "config.json", "--out", "di", "--threads", "2"]));

    let loadings = fs::read_to_string(dir.join("di/loadings.csv")).unwrap();
    let header = loadings.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "covariate,factor1,factor2");
    let rows = data_rows(&loadings);
    assert_eq!(rows.len(), 5); // 3 covariates + variance_share + cumulative_share
    assert!(rows[3].starts_with("variance_share,"));
    assert!(rows[4].starts_with("cumulative_share,"));

    let forecast = fs::read_to_string(dir.join("di/di_forecast.csv")).unwrap();
    let rows = data_rows(&forecast);
    assert_eq!(rows.len(), 2);
    let last_level = *cpi_series(96).last().unwrap();
    for (row, expect_h) in rows.iter().zip(["1", "3"]) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 11);
        assert_eq!(fields[0], expect_h);
        let cpi_hat: f64 = fields[3].parse().unwrap();
        assert!(
            (cpi_hat - last_level).abs() < 10.0,
            "cpi_hat {cpi_hat} too far from last level {last_level}"
        );
    }

    let tuning: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("di/di_tuning.json")).unwrap()).unwrap();
    assert_eq!(tuning["origin"], "2009-12");
    let tuning_rows = tuning["rows"].as_array().unwrap();
    assert_eq!(tuning_rows.len(), 2);
    assert_eq!(tuning_rows[0]["h"], 1);
    let k = tuning_rows[0]["tuning"]["k"].as_u64().unwrap();
    assert!((1..=2).contains(&k));
    // Exhaustive candidate table: k ∈ {1,2} × 6 y-lags × 6 factor lags.
    assert_eq!(
        tuning_rows[0]["tuning"]["candidates"].as_array().unwrap().len(),
        72
    );
}

#[test]
fn seasadj_and_sf_effects_write_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_cpi(dir, "cpi.csv", 120, None);
    write_config(dir, "config.json", &serde_json::json!({ "target_csv": "cpi.csv" }));

    assert_success(&run(dir, &["seasadj", "--config", "config.json", "--out", "sa", "--threads", "2"]));
    let decomposition = fs::read_to_string(dir.join("sa/decomposition.csv")).unwrap();
    let header = decomposition.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "date,raw,sf_effect,trend,seasonal,irregular,adjusted");
    assert_eq!(data_rows(&decomposition).len(), 120);
    let sa_series = fs::read_to_string(dir.join("sa/sa_series.csv")).unwrap();
    assert_eq!(data_rows(&sa_series).len(), 120);

    assert_success(&run(dir, &["sf-effects", "--config", "config.json", "--out", "sf", "--threads", "2"]));
    let regressors = fs::read_to_string(dir.join("sf/sf_regressors.csv")).unwrap();
    let header = regressors.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "date,H1,H2,H3");
    assert_eq!(data_rows(&regressors).len(), 120);
    assert_eq!(data_rows(&fs::read_to_string(dir.join("sf/sf_effects.csv")).unwrap()).len(), 120);
    assert!(dir.join("sf/sf_relative_pct.csv").is_file());
}

#[test]
fn outliers_flags_an_injected_spike() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // +8 at 2006-03 (index 50) against ~0.35 residual noise.
    write_cpi(dir, "cpi.csv", 120, Some(50));
    write_config(
        dir,
        "config.json",
        &serde_json::json!({
            "target_csv": "cpi.csv",
            "order_grid": { "p_max": 0, "q_max": 0, "seasonal_p_max": 0, "seasonal_q_max": 0 },
            "model": {
                "p": 1, "d": 1, "q": 0,
                "seasonal_p": 1, "seasonal_d": 1, "seasonal_q": 2,
                "window": [4, 0, 12],
                "interventions": []
            }
        }),
    );

    assert_success(&run(dir, &["outliers", "--config", "config.json", "--out", "o", "--threads", "2"]));

    let findings = fs::read_to_string(dir.join("o/findings.csv")).unwrap();
    let header = findings.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "date,type,omega,t_stat");
    let spike_row = data_rows(&findings)
        .into_iter()
        .find(|row| row.starts_with("2006-03,"))
        .expect("the injected spike is reported");
    assert!(spike_row.starts_with("2006-03,AO,"), "row: {spike_row}");

    let census = fs::read_to_string(dir.join("o/census.csv")).unwrap();
    assert_eq!(data_rows(&census).len(), 120);
    let adjusted: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("o/adjusted_model.json")).unwrap()).unwrap();
    assert!(adjusted["mean_regressors"]
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["name"].as_str().unwrap() == "AO(2006-03)"));
}

#[test]
fn bad_inputs_exit_with_the_data_error_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // Missing config file.
    let out = run(dir, &["fit", "--config", "nope.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    // Unknown config field (schema violation).
    fs::write(dir.join("bad.json"), r#"{"target_csv":"cpi.csv","bogus":1}"#).unwrap();
    let out = run(dir, &["fit", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    // Referenced data file does not exist.
    fs::write(dir.join("missing.json"), r#"{"target_csv":"missing.csv"}"#).unwrap();
    let out = run(dir, &["fit", "--config", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));

    // Malformed CSV: a gap in the months, reported with its line number.
    let mut text = String::from("date,value\n");
    text.push_str("2002-01,100.0\n2002-02,100.5\n2002-04,101.0\n");
    fs::write(dir.join("gap.csv"), text).unwrap();
    fs::write(dir.join("gap.json"), r#"{"target_csv":"gap.csv"}"#).unwrap();
    let out = run(dir, &["fit", "--config", "gap.json"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(stderr.contains("line"), "stderr: {stderr}");
}
