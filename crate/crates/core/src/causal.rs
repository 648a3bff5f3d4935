//! Virtual-twins treatment effects of being in the Young group.
//!
//! One forest is fitted on the covariates with the treatment indicator
//! appended as the last column (1 = Young, 0 = Older). Each record's effect
//! is the forest's callback posterior with the indicator forced to 1 minus
//! the posterior with it forced to 0.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{AgeGroup, DataError, Dataset, FeatureEncoder, FeatureMatrix};
use crate::forest::{fit_forest, ForestError, ForestModel, ForestParams};

pub const TREATMENT_COLUMN: &str = "treatment_young";

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("all records are in one treatment arm")]
    SingleArm,
    #[error("treatment frame is empty")]
    EmptyFrame,
    #[error("shape mismatch: expected {expected} covariates, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Covariates without age, the Young indicator, and the observed label.
#[derive(Debug, Clone)]
pub struct TreatmentFrame {
    pub x: FeatureMatrix,
    pub treated: Vec<bool>,
    pub y: Vec<bool>,
}

impl TreatmentFrame {
    pub fn new(x: FeatureMatrix, treated: Vec<bool>, y: Vec<bool>) -> Self {
        assert_eq!(x.n_rows, treated.len());
        assert_eq!(x.n_rows, y.len());
        TreatmentFrame { x, treated, y }
    }

    /// Encodes `data` with an encoder that must exclude the age column.
    pub fn from_dataset(data: &Dataset, encoder: &FeatureEncoder) -> Result<Self, CausalError> {
        assert!(!encoder.include_age, "age enters as the treatment, not a covariate");
        let x = encoder.encode(data)?;
        let treated = data.records.iter().map(|r| r.age_group == AgeGroup::Young).collect();
        Ok(TreatmentFrame::new(x, treated, data.labels()))
    }

    /// Covariates with the treatment appended as the final column.
    pub fn design(&self) -> FeatureMatrix {
        let a: Vec<f64> = self.treated.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        self.x.with_appended_column(TREATMENT_COLUMN, &a)
    }
}

/// Forest over (X, A).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinModel {
    pub forest: ForestModel,
}

impl TwinModel {
    /// Wraps a forest already trained with the treatment as its last column.
    pub fn from_forest(forest: ForestModel) -> Self {
        TwinModel { forest }
    }

    pub fn n_covariates(&self) -> usize {
        self.forest.n_features - 1
    }
}

pub fn fit_twin_model(frame: &TreatmentFrame, params: &ForestParams) -> Result<TwinModel, CausalError> {
    if frame.x.n_rows == 0 {
        return Err(CausalError::EmptyFrame);
    }
    let first = frame.treated[0];
    if frame.treated.iter().all(|&t| t == first) {
        return Err(CausalError::SingleArm);
    }
    let forest = fit_forest(&frame.design(), &frame.y, params)?;
    Ok(TwinModel { forest })
}

/// Estimated effect per row, each in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItEScores {
    pub tau: Vec<f64>,
    /// Free-form note on which data the scores describe.
    pub provenance: String,
}

impl ItEScores {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.tau.iter().sum::<f64>() / self.tau.len().max(1) as f64
    }
}

pub fn estimate_ite(model: &TwinModel, x: &FeatureMatrix) -> Result<ItEScores, CausalError> {
    if x.n_cols != model.n_covariates() {
        return Err(CausalError::ShapeMismatch {
            expected: model.n_covariates(),
            got: x.n_cols,
        });
    }
    let tau = (0..x.n_rows)
        .into_par_iter()
        .map_init(
            || vec![0.0; x.n_cols + 1],
            |buf, i| {
                buf[..x.n_cols].copy_from_slice(x.row(i));
                buf[x.n_cols] = 1.0;
                let treated = model.forest.predict_row(buf);
                buf[x.n_cols] = 0.0;
                let control = model.forest.predict_row(buf);
                treated - control
            },
        )
        .collect();
    Ok(ItEScores {
        tau,
        provenance: format!("{} rows", x.n_rows),
    })
}

/// Writes `record_index,tau_hat,treatment,callback` rows.
pub fn write_ite_csv(scores: &ItEScores, data: &Dataset, out: impl Write) -> Result<(), CausalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["record_index", "tau_hat", "treatment", "callback"])
        .map_err(DataError::from)?;
    for (i, (t, r)) in scores.tau.iter().zip(&data.records).enumerate() {
        w.write_record([
            i.to_string(),
            format!("{t}"),
            r.age_group.treatment().to_string(),
            u8::from(r.callback).to_string(),
        ])
        .map_err(DataError::from)?;
    }
    w.flush()?;
    Ok(())
}
