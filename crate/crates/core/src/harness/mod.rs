//! Cross-validated experiments over the four training/evaluation settings,
//! the discrimination-doubling and selection-bias sweeps, and report
//! emission.
//!
//! Within one fold all settings share work: the treatment-effect forest is
//! fitted once on the raw training fold (for the forest family it is the BR
//! model itself, trained on the same inputs with the same parameters and
//! seed), and EBR and EBR-Train/ITE-Test share the model trained on the
//! equalized training fold.

mod report;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{emit_reports, plot_rows, PlotRow, REPORT_FILES, REPORT_SCHEMA_VERSION};

use crate::causal::{estimate_ite, fit_twin_model, CausalError, TreatmentFrame, TwinModel};
use crate::data::{
    generate_synthetic, kfold_split, load_csv, AgeGroup, DataError, Dataset, FeatureEncoder, FeatureMatrix,
    SchemaSpec, SynthConfig,
};
use crate::forest::{fit_forest, predict_proba, ForestError, ForestParams};
use crate::metrics::{evaluate, ConfusionByGroup, EvalReport, LabelSource, MetricsError};
use crate::neural::{fit_mlp, mlp_predict_proba, MlpParams, NeuralError};
use crate::repair::{
    double_discrimination, equalize_base_rate, inject_selection_bias, repair_labels_ite, BiasTarget, RepairError,
    RepairLog,
};
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("fold {fold} (seed {seed}): {source}")]
    Fold {
        seed: u64,
        fold: usize,
        #[source]
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    /// 1 config, 2 data, 3 infeasible intervention.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Data(DataError::InfeasibleDelta { .. }) => 3,
            HarnessError::Data(DataError::InvalidConfig(_)) => 1,
            HarnessError::Repair(_) => 3,
            HarnessError::Fold { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    BR,
    EBR,
    ITE_TrainAndTest,
    EBR_Train_ITE_Test,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::BR, Setting::EBR, Setting::ITE_TrainAndTest, Setting::EBR_Train_ITE_Test];

    pub fn name(self) -> &'static str {
        match self {
            Setting::BR => "BR",
            Setting::EBR => "EBR",
            Setting::ITE_TrainAndTest => "ITE_TrainAndTest",
            Setting::EBR_Train_ITE_Test => "EBR_Train_ITE_Test",
        }
    }

    pub fn parse(s: &str) -> Option<Setting> {
        let norm: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        match norm.as_str() {
            "br" | "baserate" => Some(Setting::BR),
            "ebr" | "equalizedbaserate" => Some(Setting::EBR),
            "itetrainandtest" | "ite" => Some(Setting::ITE_TrainAndTest),
            "ebrtrainitetest" | "ebrite" => Some(Setting::EBR_Train_ITE_Test),
            _ => None,
        }
    }

    /// Labels the test fold is scored against.
    pub fn label_source(self) -> LabelSource {
        match self {
            Setting::BR | Setting::EBR => LabelSource::Observed,
            Setting::ITE_TrainAndTest | Setting::EBR_Train_ITE_Test => LabelSource::Repaired,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Forest,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Forest => "Forest",
            ModelKind::Mlp => "Mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SynthConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    DiscriminationDoubling { target_gap: f64 },
    SpanishDisparity { levels: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub settings: Vec<Setting>,
    pub model: ModelKind,
    pub k_folds: usize,
    pub budget_rate: f64,
    /// One full cross-validation per seed. For synthetic sources the seed
    /// also replaces the generator seed.
    pub seeds: Vec<u64>,
    pub data_source: DataSource,
    pub sweep: Option<Sweep>,
    pub forest: ForestParams,
    pub mlp: MlpParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            settings: Setting::ALL.to_vec(),
            model: ModelKind::Forest,
            k_folds: 5,
            budget_rate: 0.16,
            seeds: vec![0],
            data_source: DataSource::Synthetic(SynthConfig::default()),
            sweep: None,
            forest: ForestParams::default(),
            mlp: MlpParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.settings.is_empty() {
            return bad("no settings selected".into());
        }
        if self.k_folds < 2 {
            return bad(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if !(self.budget_rate > 0.0 && self.budget_rate < 1.0) {
            return bad(format!("budget_rate {} outside (0, 1)", self.budget_rate));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        match &self.sweep {
            Some(Sweep::DiscriminationDoubling { target_gap }) if !(0.0..=1.0).contains(target_gap) => {
                return bad(format!("target_gap {target_gap} outside [0, 1]"));
            }
            Some(Sweep::SpanishDisparity { levels }) if levels.iter().any(|x| !(0.0..=1.0).contains(x)) => {
                return bad("disparity levels must lie in [0, 1]".into());
            }
            _ => {}
        }
        if let DataSource::Synthetic(s) = &self.data_source {
            s.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn wants(&self, s: Setting) -> bool {
        self.settings.contains(&s)
    }
}

/// One evaluation of one setting on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub seed: u64,
    pub fold: usize,
    pub setting: Setting,
    pub model: ModelKind,
    /// Sweep coordinate (observed gap or disparity level), if any.
    pub x: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub report: EvalReport,
}

/// How well one application of the label repair hit the planted flips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairSummary {
    pub seed: u64,
    pub fold: usize,
    pub x: Option<f64>,
    /// "train" or "test".
    pub target: String,
    pub iterations: usize,
    pub final_gap: f64,
    /// Share of flipped records whose label was planted discrimination.
    pub precision: Option<f64>,
    /// Expected precision of flipping the same number of records per group
    /// uniformly at random from the same candidate pools.
    pub random_precision: Option<f64>,
    #[serde(skip)]
    pub log: Option<RepairLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub setting: Setting,
    pub model: ModelKind,
    pub label_source: LabelSource,
    pub x: Option<f64>,
    pub n_folds: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub fprd_mean: f64,
    pub fprd_std: f64,
    /// FPRD of the confusion counts summed over all folds.
    pub fprd_pooled: f64,
    /// Standard deviation across seeds of the per-seed mean FPRD.
    pub fprd_seed_std: f64,
    pub auc_seed_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    /// Sweep axis name, e.g. "spanish_disparity".
    pub x_label: Option<String>,
    pub folds: Vec<FoldRecord>,
    /// Same folds scored against latent labels (synthetic data only).
    pub oracle_folds: Vec<FoldRecord>,
    pub repairs: Vec<RepairSummary>,
    pub aggregates: Vec<Aggregate>,
    pub oracle_aggregates: Vec<Aggregate>,
    pub duration_secs: f64,
}

impl RunResult {
    pub fn aggregate(&self, setting: Setting, x: Option<f64>) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.setting == setting && a.x == x)
    }

    pub fn oracle_aggregate(&self, setting: Setting, x: Option<f64>) -> Option<&Aggregate> {
        self.oracle_aggregates.iter().find(|a| a.setting == setting && a.x == x)
    }

    /// Mean FPRD of EBR-Train/ITE-Test minus mean FPRD of EBR.
    pub fn discrepancy(&self, x: Option<f64>) -> Option<f64> {
        let e = self.aggregate(Setting::EBR, x)?;
        let ei = self.aggregate(Setting::EBR_Train_ITE_Test, x)?;
        Some(ei.fprd_mean - e.fprd_mean)
    }

    pub fn mean_repair_precision(&self, target: &str) -> Option<(f64, f64)> {
        let rs: Vec<&RepairSummary> = self
            .repairs
            .iter()
            .filter(|r| r.target == target && r.precision.is_some())
            .collect();
        if rs.is_empty() {
            return None;
        }
        let n = rs.len() as f64;
        Some((
            rs.iter().map(|r| r.precision.unwrap()).sum::<f64>() / n,
            rs.iter().map(|r| r.random_precision.unwrap_or(0.0)).sum::<f64>() / n,
        ))
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Loads or generates the dataset a seed's replicate runs on.
pub fn source_data(config: &ExperimentConfig, seed: u64) -> Result<Dataset, HarnessError> {
    match &config.data_source {
        DataSource::Csv(path) => Ok(load_csv(path, &SchemaSpec::default())?),
        DataSource::Synthetic(s) => {
            let mut s = s.clone();
            s.seed = seed;
            Ok(generate_synthetic(&s)?)
        }
    }
}

enum Scorer {
    Forest(crate::forest::ForestModel),
    Mlp(crate::neural::MlpModel),
}

impl Scorer {
    fn fit(kind: ModelKind, config: &ExperimentConfig, x: &FeatureMatrix, y: &[bool], seed: u64) -> Result<Scorer, HarnessError> {
        Ok(match kind {
            ModelKind::Forest => Scorer::Forest(fit_forest(x, y, &config.forest.clone().with_seed(seed))?),
            ModelKind::Mlp => Scorer::Mlp(fit_mlp(x, y, &config.mlp.clone().with_seed(seed))?.model),
        })
    }

    fn score(&self, x: &FeatureMatrix) -> Result<Vec<f64>, HarnessError> {
        Ok(match self {
            Scorer::Forest(f) => predict_proba(f, x)?,
            Scorer::Mlp(m) => mlp_predict_proba(m, x)?,
        })
    }
}

fn planted_precision(flipped: &[usize], planted: &[bool]) -> f64 {
    if flipped.is_empty() {
        return 0.0;
    }
    flipped.iter().filter(|&&i| planted[i]).count() as f64 / flipped.len() as f64
}

/// Planted share among the pools a repair draws from, averaged over the
/// two pools since each contributes the same number of flips.
fn random_pool_precision(data: &Dataset, planted: &[bool], log: &RepairLog) -> f64 {
    use crate::repair::FlipDirection::*;
    let Some(first) = log.flips.first() else {
        return 0.0;
    };
    let favoured_young = matches!(first.direction, PosToNegYoung | NegToPosOlder);
    let pools = if favoured_young {
        [(AgeGroup::Young, true), (AgeGroup::Older, false)]
    } else {
        [(AgeGroup::Older, true), (AgeGroup::Young, false)]
    };
    let share = |(g, y): (AgeGroup, bool)| {
        let members: Vec<usize> = (0..data.len())
            .filter(|&i| data.records[i].age_group == g && data.records[i].callback == y)
            .collect();
        members.iter().filter(|&&i| planted[i]).count() as f64 / members.len().max(1) as f64
    };
    (share(pools[0]) + share(pools[1])) / 2.0
}

struct FoldOutput {
    records: Vec<FoldRecord>,
    oracle: Vec<FoldRecord>,
    repairs: Vec<RepairSummary>,
}

fn run_fold(
    config: &ExperimentConfig,
    data: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    seed: u64,
    fold: usize,
    x: Option<f64>,
) -> Result<FoldOutput, HarnessError> {
    let train = data.subset(train_idx);
    let test = data.subset(test_idx);
    let encoder = FeatureEncoder::fit(&train, false, FeatureEncoder::DEFAULT_MIN_CITY_SHARE)?;
    let train_frame = TreatmentFrame::from_dataset(&train, &encoder)?;
    let test_frame = TreatmentFrame::from_dataset(&test, &encoder)?;
    let x_train = train_frame.design();
    let x_test = test_frame.design();
    let groups = test.groups();
    let observed = test.labels();
    let latent = test.latent_labels();
    let model_seed = |name: &str| derive_seed(seed, name, fold as u64);
    let fold_seed = model_seed("model");

    let need_ebr = config.wants(Setting::EBR) || config.wants(Setting::EBR_Train_ITE_Test);
    let need_ite = config.wants(Setting::ITE_TrainAndTest) || config.wants(Setting::EBR_Train_ITE_Test);
    let need_br = config.wants(Setting::BR);

    let mut out = FoldOutput {
        records: Vec::new(),
        oracle: Vec::new(),
        repairs: Vec::new(),
    };
    let mut push = |setting: Setting, scores: &[f64], labels: &[bool], source: LabelSource, n_train: usize| -> Result<(), HarnessError> {
        let report = evaluate(scores, labels, &groups, config.budget_rate, source)?;
        out.records.push(FoldRecord {
            seed,
            fold,
            setting,
            model: config.model,
            x,
            n_train,
            n_test: test.len(),
            report,
        });
        if let Some(l) = &latent {
            let report = evaluate(scores, l, &groups, config.budget_rate, LabelSource::Latent)?;
            out.oracle.push(FoldRecord {
                seed,
                fold,
                setting,
                model: config.model,
                x,
                n_train,
                n_test: test.len(),
                report,
            });
        }
        Ok(())
    };

    // BR model; for forests it doubles as the treatment-effect model
    let mut twin: Option<TwinModel> = None;
    if need_br || (need_ite && config.model == ModelKind::Forest) {
        let br = Scorer::fit(config.model, config, &x_train, &train.labels(), fold_seed)?;
        if need_br {
            push(Setting::BR, &br.score(&x_test)?, &observed, LabelSource::Observed, train.len())?;
        }
        if let Scorer::Forest(f) = br {
            twin = Some(TwinModel::from_forest(f));
        }
    }

    let mut repaired_test: Option<Vec<bool>> = None;
    let mut repaired_train: Option<Dataset> = None;
    if need_ite {
        let twin = match twin {
            Some(t) => t,
            None => fit_twin_model(&train_frame, &config.forest.clone().with_seed(fold_seed))?,
        };
        let planted_train = train.planted_flips();
        let planted_test = test.planted_flips();
        let mut summarize = |target: &str, d: &Dataset, log: RepairLog, planted: &Option<Vec<bool>>| {
            let flipped = log.flipped_indices();
            out.repairs.push(RepairSummary {
                seed,
                fold,
                x,
                target: target.into(),
                iterations: log.iterations,
                final_gap: log.final_gap,
                precision: planted.as_ref().map(|p| planted_precision(&flipped, p)),
                random_precision: planted.as_ref().map(|p| random_pool_precision(d, p, &log)),
                log: Some(log),
            });
        };
        let tau_test = estimate_ite(&twin, &test_frame.x)?;
        let (rt, log) = repair_labels_ite(&test, &tau_test.tau)?;
        summarize("test", &test, log, &planted_test);
        repaired_test = Some(rt.labels());
        if config.wants(Setting::ITE_TrainAndTest) {
            let tau_train = estimate_ite(&twin, &train_frame.x)?;
            let (rtr, log) = repair_labels_ite(&train, &tau_train.tau)?;
            summarize("train", &train, log, &planted_train);
            repaired_train = Some(rtr);
        }
    }

    if let Some(rtr) = repaired_train {
        let m = Scorer::fit(config.model, config, &x_train, &rtr.labels(), model_seed("model-ite"))?;
        let labels = repaired_test.as_ref().expect("test repaired alongside train");
        push(Setting::ITE_TrainAndTest, &m.score(&x_test)?, labels, LabelSource::Repaired, train.len())?;
    }

    if need_ebr {
        let ebr = equalize_base_rate(&train, model_seed("ebr"));
        let kept: Vec<usize> = {
            let mut keep = vec![true; train.len()];
            for &i in &ebr.removed {
                keep[i] = false;
            }
            (0..train.len()).filter(|&i| keep[i]).collect()
        };
        let x_ebr = x_train.select_rows(&kept);
        let m = Scorer::fit(config.model, config, &x_ebr, &ebr.data.labels(), model_seed("model-ebr"))?;
        let scores = m.score(&x_test)?;
        if config.wants(Setting::EBR) {
            push(Setting::EBR, &scores, &observed, LabelSource::Observed, ebr.data.len())?;
        }
        if config.wants(Setting::EBR_Train_ITE_Test) {
            let labels = repaired_test.as_ref().expect("test repaired for EBR-ITE");
            push(Setting::EBR_Train_ITE_Test, &scores, labels, LabelSource::Repaired, ebr.data.len())?;
        }
    }

    let order = |r: &FoldRecord| Setting::ALL.iter().position(|&s| s == r.setting).unwrap();
    out.records.sort_by_key(order);
    out.oracle.sort_by_key(order);
    out.repairs.sort_by(|a, b| a.target.cmp(&b.target));
    Ok(out)
}

fn cross_validate(
    config: &ExperimentConfig,
    data: &Dataset,
    seed: u64,
    x: Option<f64>,
) -> Result<Vec<FoldOutput>, HarnessError> {
    let folds = kfold_split(data, config.k_folds, derive_seed(seed, "folds", 0))?;
    (0..config.k_folds)
        .into_par_iter()
        .map(|f| {
            run_fold(config, data, &folds.train_indices(f), &folds.test_indices(f), seed, f, x).map_err(|e| {
                HarnessError::Fold {
                    seed,
                    fold: f,
                    source: Box::new(e),
                }
            })
        })
        .collect()
}

fn aggregate_records(records: &[FoldRecord], config: &ExperimentConfig) -> Result<Vec<Aggregate>, HarnessError> {
    let mut keys: Vec<(Setting, Option<u64>)> = records.iter().map(|r| (r.setting, r.x.map(f64::to_bits))).collect();
    keys.sort_by(|a, b| {
        let xa = a.1.map(f64::from_bits).unwrap_or(f64::NEG_INFINITY);
        let xb = b.1.map(f64::from_bits).unwrap_or(f64::NEG_INFINITY);
        xa.total_cmp(&xb).then(a.0.cmp(&b.0))
    });
    keys.dedup();
    let mut out = Vec::new();
    for (setting, xbits) in keys {
        let x = xbits.map(f64::from_bits);
        let rs: Vec<&FoldRecord> = records.iter().filter(|r| r.setting == setting && r.x == x).collect();
        let fprd: Vec<f64> = rs.iter().map(|r| r.report.fprd).collect();
        let auc: Vec<f64> = rs.iter().map(|r| r.report.auc).collect();
        let pooled = ConfusionByGroup::sum(rs.iter().map(|r| &r.report.confusion));
        let per_seed = |f: &dyn Fn(&FoldRecord) -> f64| -> Vec<f64> {
            config
                .seeds
                .iter()
                .map(|&s| {
                    let v: Vec<f64> = rs.iter().filter(|r| r.seed == s).map(|r| f(r)).collect();
                    mean(&v)
                })
                .filter(|v| v.is_finite())
                .collect()
        };
        out.push(Aggregate {
            setting,
            model: config.model,
            label_source: rs[0].report.label_source,
            x,
            n_folds: rs.len(),
            auc_mean: mean(&auc),
            auc_std: sample_std(&auc),
            fprd_mean: mean(&fprd),
            fprd_std: sample_std(&fprd),
            fprd_pooled: crate::metrics::compute_fprd(&pooled)?,
            fprd_seed_std: sample_std(&per_seed(&|r| r.report.fprd)),
            auc_seed_std: sample_std(&per_seed(&|r| r.report.auc)),
        });
    }
    Ok(out)
}

fn assemble(config: &ExperimentConfig, x_label: Option<String>, outputs: Vec<FoldOutput>, started: Instant) -> Result<RunResult, HarnessError> {
    let mut folds = Vec::new();
    let mut oracle_folds = Vec::new();
    let mut repairs = Vec::new();
    for o in outputs {
        folds.extend(o.records);
        oracle_folds.extend(o.oracle);
        repairs.extend(o.repairs);
    }
    let aggregates = aggregate_records(&folds, config)?;
    let oracle_aggregates = aggregate_records(&oracle_folds, config)?;
    Ok(RunResult {
        config: config.clone(),
        x_label,
        folds,
        oracle_folds,
        repairs,
        aggregates,
        oracle_aggregates,
        duration_secs: started.elapsed().as_secs_f64(),
    })
}

/// Applies the configured sweep (if any) to one seed's data, returning the
/// dataset variants to cross-validate with their sweep coordinate.
fn sweep_variants(config: &ExperimentConfig, data: Dataset, seed: u64) -> Result<Vec<(Option<f64>, Dataset)>, HarnessError> {
    match &config.sweep {
        None => Ok(vec![(None, data)]),
        Some(Sweep::DiscriminationDoubling { target_gap }) => {
            let gap0 = data.group_counts().gap();
            let doubled = double_discrimination(&data, *target_gap, derive_seed(seed, "double", 0))?.data;
            let gap1 = doubled.group_counts().gap();
            Ok(vec![(Some(gap0), data), (Some(gap1), doubled)])
        }
        Some(Sweep::SpanishDisparity { levels }) => {
            let mut out = Vec::new();
            for (i, &lvl) in levels.iter().enumerate() {
                let target = BiasTarget::disparity(&data, lvl);
                match inject_selection_bias(&data, &target, derive_seed(seed, "selection-bias", i as u64)) {
                    Ok(r) => out.push((Some(lvl), r.data)),
                    Err(e @ RepairError::InfeasibleTarget(_)) => {
                        eprintln!("warning: skipping disparity {lvl}: {e}");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(out)
        }
    }
}

/// Runs every configured setting over all seeds, folds and sweep points.
pub fn run_settings(config: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let x_label = match &config.sweep {
        None => None,
        Some(Sweep::DiscriminationDoubling { .. }) => Some("observed_gap".to_string()),
        Some(Sweep::SpanishDisparity { .. }) => Some("spanish_disparity".to_string()),
    };
    let mut outputs = Vec::new();
    for &seed in &config.seeds {
        let data = source_data(config, seed)?;
        for (x, variant) in sweep_variants(config, data, seed)? {
            outputs.extend(cross_validate(config, &variant, seed, x)?);
        }
    }
    assemble(config, x_label, outputs, started)
}

/// A single setting; convenience over [`run_settings`].
pub fn run_setting(config: &ExperimentConfig, setting: Setting) -> Result<RunResult, HarnessError> {
    let mut c = config.clone();
    c.settings = vec![setting];
    run_settings(&c)
}

/// Original and doubled-gap runs side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct Rq3Result {
    pub original: RunResult,
    pub doubled: RunResult,
    pub discrepancy_original: f64,
    pub discrepancy_doubled: f64,
}

pub fn run_rq3(config: &ExperimentConfig, target_gap: f64) -> Result<Rq3Result, HarnessError> {
    let mut c = config.clone();
    c.sweep = None;
    let started = Instant::now();
    let mut original = Vec::new();
    let mut doubled = Vec::new();
    for &seed in &c.seeds {
        let data = source_data(&c, seed)?;
        let d2 = double_discrimination(&data, target_gap, derive_seed(seed, "double", 0))?.data;
        original.extend(cross_validate(&c, &data, seed, None)?);
        doubled.extend(cross_validate(&c, &d2, seed, None)?);
    }
    let original = assemble(&c, None, original, started)?;
    let doubled = assemble(&c, None, doubled, started)?;
    let need = |r: &RunResult| {
        r.discrepancy(None)
            .ok_or_else(|| HarnessError::Config("RQ3 needs the EBR and EBR_Train_ITE_Test settings".into()))
    };
    Ok(Rq3Result {
        discrepancy_original: need(&original)?,
        discrepancy_doubled: need(&doubled)?,
        original,
        doubled,
    })
}

pub fn run_rq4(config: &ExperimentConfig, levels: &[f64]) -> Result<RunResult, HarnessError> {
    let mut c = config.clone();
    c.sweep = Some(Sweep::SpanishDisparity { levels: levels.to_vec() });
    run_settings(&c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_names_round_trip() {
        for s in Setting::ALL {
            assert_eq!(Setting::parse(s.name()), Some(s));
        }
        assert_eq!(Setting::parse("ebr-ite"), Some(Setting::EBR_Train_ITE_Test));
        assert_eq!(Setting::parse("nope"), None);
    }

    #[test]
    fn std_conventions() {
        assert_eq!(sample_std(&[1.0]), 0.0);
        assert!((sample_std(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.k_folds = 1;
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
        let parsed = ExperimentConfig::from_toml("model = \"Mlp\"\nseeds = [1, 2]\nk_folds = 3\n").unwrap();
        assert_eq!(parsed.model, ModelKind::Mlp);
        assert_eq!(parsed.seeds, vec![1, 2]);
        assert!(ExperimentConfig::from_toml("budget_rate = 2.0").is_err());
        assert_eq!(ExperimentConfig::from_toml("bogus = 1").unwrap_err().exit_code(), 1);
    }
}
