//! Applicant records, datasets and everything needed to get them into a
//! classifier: CSV ingestion, the synthetic audit generator, stratified
//! k-fold splits and the feature encoder.

mod csv_io;
mod encode;
mod folds;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_csv, read_csv, write_csv, Column, SchemaSpec};
pub use encode::{encode_features, FeatureEncoder, FeatureMatrix};
pub use folds::{kfold_split, FoldAssignment};
pub use synth::{
    generate_synthetic, DiscriminationProfile, FeatureMarginals, QualificationWeights, SynthConfig,
    REPLICA_OLDER, REPLICA_YOUNG,
};

pub const SCHEMA_VERSION: &str = "audit-applicant/1";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("invalid value at row {row}, column `{column}`: `{token}`")]
    InvalidValue {
        row: usize,
        column: String,
        token: String,
    },
    #[error("file contains no records")]
    EmptyFile,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cannot split {records} records into {k} folds")]
    TooFewRecords { records: usize, k: usize },
    #[error("discrimination delta {delta} is infeasible: {reason}")]
    InfeasibleDelta { delta: f64, reason: String },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Protected attribute. Three-way source codings collapse middle and old
/// applicants into `Older`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    Young,
    Older,
}

impl AgeGroup {
    /// Treatment indicator: Young is the treated arm.
    pub fn treatment(self) -> u8 {
        match self {
            AgeGroup::Young => 1,
            AgeGroup::Older => 0,
        }
    }
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }
    };
}

token_enum!(Gender { Female => "F", Male => "M" });
token_enum!(Occupation {
    Admin => "Admin",
    Sales => "Sales",
    Janitor => "Janitor",
    Security => "Security",
});
token_enum!(
    /// Resume type from the audit design: young, middle, old, bridging,
    /// late bridging, early bridging.
    ResumeType {
        Y => "Y",
        M => "M",
        O => "O",
        B => "B",
        BL => "BL",
        BE => "BE",
    }
);
token_enum!(Template { A => "A", B => "B", C => "C" });

impl FromStr for Gender {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" | "0" => Ok(Gender::Female),
            "m" | "male" | "1" => Ok(Gender::Male),
            _ => Err(()),
        }
    }
}

impl FromStr for Occupation {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "admin" | "administrative" | "administrative assistant" => Ok(Occupation::Admin),
            "sales" | "retail" | "retail sales" => Ok(Occupation::Sales),
            "janitor" => Ok(Occupation::Janitor),
            "security" => Ok(Occupation::Security),
            _ => Err(()),
        }
    }
}

impl FromStr for ResumeType {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        let upper = s.trim().to_ascii_uppercase();
        ResumeType::ALL
            .iter()
            .copied()
            .find(|t| t.token() == upper)
            .ok_or(())
    }
}

impl FromStr for Template {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        let upper = s.trim().to_ascii_uppercase();
        Template::ALL
            .iter()
            .copied()
            .find(|t| t.token() == upper)
            .ok_or(())
    }
}

impl FromStr for AgeGroup {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "young" | "y" | "younger" => Ok(AgeGroup::Young),
            "older" | "old" | "o" | "middle" | "m" | "old/middle" => Ok(AgeGroup::Older),
            _ => Err(()),
        }
    }
}

/// Typing speed advertised on the resume; only 45, 50 and 55 occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Wpm(u8);

impl Wpm {
    pub const VALUES: [u8; 3] = [45, 50, 55];

    pub fn new(value: u8) -> Option<Self> {
        Self::VALUES.contains(&value).then_some(Wpm(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Affine map onto [0, 1].
    pub fn scaled(self) -> f64 {
        (f64::from(self.0) - 45.0) / 10.0
    }
}

impl TryFrom<u8> for Wpm {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        Wpm::new(v).ok_or_else(|| format!("wpm must be one of 45, 50, 55 (got {v})"))
    }
}

impl From<Wpm> for u8 {
    fn from(w: Wpm) -> u8 {
        w.0
    }
}

/// One resume sent in the audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicantRecord {
    pub city_zip: String,
    pub age_group: AgeGroup,
    pub gender: Gender,
    pub employment: bool,
    pub occupation: Occupation,
    pub resume_type: ResumeType,
    pub template: Template,
    pub spanish: bool,
    pub internship: bool,
    pub customer_service: bool,
    pub cpr: bool,
    pub tech_skills: bool,
    pub wpm: Wpm,
    pub grammar: bool,
    pub college: bool,
    pub employee_month: bool,
    pub volunteer: bool,
    /// High (true) or low (false) skill resume.
    pub skill: bool,
    pub callback: bool,
    /// Label free of discrimination; only known for synthetic data.
    pub latent_callback: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Ingested,
    Synthetic,
    Resampled,
}

/// One entry in a dataset's intervention trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub operation: String,
    pub parameters: String,
    pub seed: Option<u64>,
    pub records_affected: usize,
}

/// Counts by (age group, callback).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub young_pos: usize,
    pub young_neg: usize,
    pub older_pos: usize,
    pub older_neg: usize,
}

impl GroupCounts {
    pub fn young(&self) -> usize {
        self.young_pos + self.young_neg
    }

    pub fn older(&self) -> usize {
        self.older_pos + self.older_neg
    }

    pub fn total(&self) -> usize {
        self.young() + self.older()
    }

    pub fn young_rate(&self) -> f64 {
        ratio(self.young_pos, self.young())
    }

    pub fn older_rate(&self) -> f64 {
        ratio(self.older_pos, self.older())
    }

    /// Young callback rate minus older callback rate.
    pub fn gap(&self) -> f64 {
        self.young_rate() - self.older_rate()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<ApplicantRecord>,
    pub schema_version: String,
    pub provenance: Provenance,
    #[serde(default)]
    pub trail: Vec<TrailEntry>,
}

impl Dataset {
    pub fn new(records: Vec<ApplicantRecord>, provenance: Provenance) -> Self {
        Dataset {
            records,
            schema_version: SCHEMA_VERSION.to_string(),
            provenance,
            trail: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn group_counts(&self) -> GroupCounts {
        count_groups(self.records.iter().map(|r| (r.age_group, r.callback)))
    }

    /// Counts using the latent labels, if every record has one.
    pub fn latent_group_counts(&self) -> Option<GroupCounts> {
        let pairs: Option<Vec<_>> = self
            .records
            .iter()
            .map(|r| r.latent_callback.map(|y| (r.age_group, y)))
            .collect();
        pairs.map(|p| count_groups(p.into_iter()))
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.callback).collect()
    }

    pub fn latent_labels(&self) -> Option<Vec<bool>> {
        self.records.iter().map(|r| r.latent_callback).collect()
    }

    pub fn groups(&self) -> Vec<AgeGroup> {
        self.records.iter().map(|r| r.age_group).collect()
    }

    /// Records whose observed label differs from the latent one: the planted
    /// discrimination on synthetic data.
    pub fn planted_flips(&self) -> Option<Vec<bool>> {
        self.records
            .iter()
            .map(|r| r.latent_callback.map(|y| y != r.callback))
            .collect()
    }

    /// New dataset holding the given rows in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            schema_version: self.schema_version.clone(),
            provenance: self.provenance,
            trail: self.trail.clone(),
        }
    }

    /// Copy with an intervention appended to the trail.
    pub fn resampled(&self, records: Vec<ApplicantRecord>, entry: TrailEntry) -> Dataset {
        let mut trail = self.trail.clone();
        trail.push(entry);
        Dataset {
            records,
            schema_version: self.schema_version.clone(),
            provenance: Provenance::Resampled,
            trail,
        }
    }
}

fn count_groups(pairs: impl Iterator<Item = (AgeGroup, bool)>) -> GroupCounts {
    let mut c = GroupCounts::default();
    for (g, y) in pairs {
        match (g, y) {
            (AgeGroup::Young, true) => c.young_pos += 1,
            (AgeGroup::Young, false) => c.young_neg += 1,
            (AgeGroup::Older, true) => c.older_pos += 1,
            (AgeGroup::Older, false) => c.older_neg += 1,
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_way_age_coding_collapses() {
        assert_eq!("young".parse(), Ok(AgeGroup::Young));
        assert_eq!("Middle".parse(), Ok(AgeGroup::Older));
        assert_eq!("OLD".parse(), Ok(AgeGroup::Older));
        assert!("elderly".parse::<AgeGroup>().is_err());
    }

    #[test]
    fn wpm_only_accepts_enumerated_values() {
        assert!(Wpm::new(60).is_none());
        assert_eq!(Wpm::new(45).unwrap().scaled(), 0.0);
        assert_eq!(Wpm::new(55).unwrap().scaled(), 1.0);
        assert_eq!(Wpm::new(50).unwrap().scaled(), 0.5);
    }

    #[test]
    fn group_counts_sum_to_total() {
        let c = GroupCounts {
            young_pos: 2505,
            young_neg: 10896,
            older_pos: 3587,
            older_neg: 21945,
        };
        assert_eq!(c.total(), 38933);
        assert!((c.young_rate() - 0.186926).abs() < 1e-6);
        assert!((c.older_rate() - 0.140490).abs() < 1e-6);
    }
}
