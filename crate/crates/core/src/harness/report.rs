use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::{Aggregate, HarnessError, RunResult};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const REPORT_FILES: [&str; 4] = ["run_config.json", "folds.csv", "aggregate.json", "plot_data.csv"];

/// One point of an FPRD plot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub setting: String,
    pub model: String,
    pub x_label: String,
    pub x_value: f64,
    pub fprd_mean: f64,
    pub fprd_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub n_folds: usize,
    /// Seeds pooled into the row, `;`-separated.
    pub seed: String,
}

/// x is the mean AUC for plain runs and the sweep coordinate otherwise.
pub fn plot_rows(result: &RunResult) -> Vec<PlotRow> {
    let seeds = result
        .config
        .seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(";");
    let x_label = result.x_label.clone().unwrap_or_else(|| "auc".into());
    result
        .aggregates
        .iter()
        .map(|a: &Aggregate| PlotRow {
            setting: a.setting.name().into(),
            model: a.model.name().into(),
            x_label: x_label.clone(),
            x_value: a.x.unwrap_or(a.auc_mean),
            fprd_mean: a.fprd_mean,
            fprd_std: a.fprd_std,
            auc_mean: a.auc_mean,
            auc_std: a.auc_std,
            n_folds: a.n_folds,
            seed: seeds.clone(),
        })
        .collect()
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

fn json_err(e: serde_json::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_folds(result: &RunResult, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "seed",
        "fold",
        "setting",
        "model",
        "label_source",
        "x",
        "n_train",
        "n_test",
        "auc",
        "fpr_young",
        "fpr_old",
        "fprd",
        "fp_young",
        "tn_young",
        "fp_old",
        "tn_old",
    ])
    .map_err(csv_err)?;
    for r in result.folds.iter().chain(&result.oracle_folds) {
        let c = &r.report.confusion;
        w.write_record([
            r.seed.to_string(),
            r.fold.to_string(),
            r.setting.name().to_string(),
            r.model.name().to_string(),
            format!("{:?}", r.report.label_source),
            opt(r.x),
            r.n_train.to_string(),
            r.n_test.to_string(),
            r.report.auc.to_string(),
            r.report.fpr_young.to_string(),
            r.report.fpr_old.to_string(),
            r.report.fprd.to_string(),
            c.young.fp.to_string(),
            c.young.tn.to_string(),
            c.older.fp.to_string(),
            c.older.tn.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plot(result: &RunResult, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in plot_rows(result) {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the four report files into `dir` and returns their paths. Only the `timing` member of
/// run_config.json varies between identical runs.
pub fn emit_reports(result: &RunResult, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let run_config = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": result.config,
        "timing": { "duration_secs": result.duration_secs },
    });
    fs::write(dir.join("run_config.json"), serde_json::to_string_pretty(&run_config).map_err(json_err)? + "\n")?;
    write_folds(result, &dir.join("folds.csv"))?;
    let aggregate = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "x_label": result.x_label,
        "aggregates": result.aggregates,
        "oracle_aggregates": result.oracle_aggregates,
        "repairs": result.repairs,
    });
    fs::write(dir.join("aggregate.json"), serde_json::to_string_pretty(&aggregate).map_err(json_err)? + "\n")?;
    write_plot(result, &dir.join("plot_data.csv"))?;
    Ok(REPORT_FILES.iter().map(|f| dir.join(f)).collect())
}
