//! Synthetic audit data with planted age discrimination.
//!
//! Covariates are drawn independently of the age group. Each record gets a
//! latent utility `q . x + L`, with `q` the qualification weights applied to
//! the encoded features and `L` standard logistic noise; within each age
//! group the top `round(base_callback_rate * n_group)` utilities receive a
//! latent callback. This is a logistic callback model whose intercept is
//! calibrated per group so that both groups share the same latent rate.
//!
//! Discrimination is planted as `k` symmetric pairs: `k` Young latent
//! negatives flipped to an observed callback and `k` Older latent positives
//! flipped to none. Each pair moves the observed gap by exactly
//! `1/n_young + 1/n_older`, so `k` is the closest integer that brings the
//! gap to `discrimination_delta`. Flipped records are chosen by weighted
//! sampling without replacement, where a record's weight is the product of
//! [`DiscriminationProfile`] multipliers over its active features; an empty
//! profile gives uniform selection.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    AgeGroup, ApplicantRecord, DataError, Dataset, FeatureEncoder, Gender, Occupation, Provenance,
    ResumeType, Template, TrailEntry, Wpm,
};
use crate::rng::stream;

/// Sampling distribution of every covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureMarginals {
    /// City/zip tokens and their relative frequencies.
    pub cities: Vec<(String, f64)>,
    /// Relative frequencies over F, M.
    pub gender: [f64; 2],
    /// Over Admin, Sales, Janitor, Security.
    pub occupation: [f64; 4],
    /// Over Y, M, O, B, BL, BE.
    pub resume_type: [f64; 6],
    /// Over A, B, C.
    pub template: [f64; 3],
    /// Over 45, 50, 55.
    pub wpm: [f64; 3],
    /// P(true) for each boolean covariate.
    pub employment: f64,
    pub spanish: f64,
    pub internship: f64,
    pub customer_service: f64,
    pub cpr: f64,
    pub tech_skills: f64,
    pub grammar: f64,
    pub college: f64,
    pub employee_month: f64,
    pub volunteer: f64,
    pub skill: f64,
}

impl Default for FeatureMarginals {
    fn default() -> Self {
        let cities = ["boston", "chicago", "houston", "los_angeles", "new_orleans", "seattle"]
            .iter()
            .map(|c| (c.to_string(), 1.0))
            .collect();
        FeatureMarginals {
            cities,
            gender: [1.0; 2],
            occupation: [1.0; 4],
            resume_type: [1.0; 6],
            template: [1.0; 3],
            wpm: [1.0; 3],
            employment: 0.5,
            spanish: 0.5,
            internship: 0.5,
            customer_service: 0.5,
            cpr: 0.5,
            tech_skills: 0.5,
            grammar: 0.5,
            college: 0.5,
            employee_month: 0.5,
            volunteer: 0.5,
            skill: 0.5,
        }
    }
}

/// Coefficients keyed by encoded column name (see [`FeatureEncoder`]);
/// columns not listed get zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualificationWeights(pub BTreeMap<String, f64>);

impl Default for QualificationWeights {
    fn default() -> Self {
        let w = [
            ("employment", 1.0),
            ("spanish", 1.2),
            ("internship", -0.6),
            ("customer_service", 0.8),
            ("cpr", 0.4),
            ("tech_skills", 0.8),
            ("wpm", 0.8),
            ("grammar", 1.0),
            ("college", 1.2),
            ("employee_month", 0.8),
            ("volunteer", 0.4),
            ("skill", 2.0),
            ("occupation=Sales", 2.0),
            ("occupation=Janitor", -1.0),
            ("occupation=Security", -1.0),
        ];
        QualificationWeights(w.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }
}

/// Per-column multipliers on a record's chance of being picked for a
/// planted flip: weight = product over columns of `m ^ x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscriminationProfile(pub BTreeMap<String, f64>);

impl Default for DiscriminationProfile {
    /// Discrimination confined to Sales openings.
    fn default() -> Self {
        let m = [
            ("occupation=Admin", 0.0),
            ("occupation=Janitor", 0.0),
            ("occupation=Security", 0.0),
        ];
        DiscriminationProfile(m.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }
}

impl DiscriminationProfile {
    pub fn uniform() -> Self {
        DiscriminationProfile(BTreeMap::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_records: usize,
    pub p_young: f64,
    /// Latent callback rate, shared by both groups.
    pub base_callback_rate: f64,
    /// Target observed gap, P(Y=1 | Young) - P(Y=1 | Older).
    pub discrimination_delta: f64,
    pub feature_marginals: FeatureMarginals,
    pub qualification_weights: QualificationWeights,
    pub discrimination_profile: DiscriminationProfile,
    pub seed: u64,
}

/// Group sizes and callback counts of the published audit.
pub const REPLICA_YOUNG: (usize, usize) = (2505, 13401);
pub const REPLICA_OLDER: (usize, usize) = (3587, 25532);

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::table2_replica(0)
    }
}

impl SynthConfig {
    /// Exactly reproduces the audit's counts: 2,505 of 13,401 Young and
    /// 3,587 of 25,532 Older applicants called back.
    pub fn table2_replica(seed: u64) -> Self {
        let (yp, yn) = REPLICA_YOUNG;
        let (op, on) = REPLICA_OLDER;
        let n = yn + on;
        SynthConfig {
            n_records: n,
            p_young: yn as f64 / n as f64,
            base_callback_rate: (yp + op) as f64 / n as f64,
            discrimination_delta: yp as f64 / yn as f64 - op as f64 / on as f64,
            feature_marginals: FeatureMarginals::default(),
            qualification_weights: QualificationWeights::default(),
            discrimination_profile: DiscriminationProfile::default(),
            seed,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.n_records < 2 {
            return bad("n_records must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.p_young) {
            return bad(format!("p_young {} outside [0, 1]", self.p_young));
        }
        if !(0.0..=1.0).contains(&self.base_callback_rate) {
            return bad(format!("base_callback_rate {} outside [0, 1]", self.base_callback_rate));
        }
        if !(self.discrimination_delta >= 0.0) {
            return bad(format!("discrimination_delta {} is negative", self.discrimination_delta));
        }
        if self.discrimination_delta > self.base_callback_rate {
            return Err(DataError::InfeasibleDelta {
                delta: self.discrimination_delta,
                reason: "exceeds the base callback rate".into(),
            });
        }
        let m = &self.feature_marginals;
        if m.cities.is_empty() {
            return bad("at least one city is required".into());
        }
        for p in [
            m.employment,
            m.spanish,
            m.internship,
            m.customer_service,
            m.cpr,
            m.tech_skills,
            m.grammar,
            m.college,
            m.employee_month,
            m.volunteer,
            m.skill,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("boolean marginal {p} outside [0, 1]"));
            }
        }
        let known = self.encoder().column_names();
        for key in self
            .qualification_weights
            .0
            .keys()
            .chain(self.discrimination_profile.0.keys())
        {
            if !known.contains(key) {
                return bad(format!("unknown feature column `{key}`"));
            }
        }
        if self.discrimination_profile.0.values().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return bad("discrimination multipliers must be finite and non-negative".into());
        }
        Ok(())
    }

    fn encoder(&self) -> FeatureEncoder {
        let mut cities: Vec<String> = self.feature_marginals.cities.iter().map(|c| c.0.clone()).collect();
        cities.sort();
        cities.dedup();
        FeatureEncoder {
            cities,
            include_age: false,
        }
    }

    /// Young record count.
    pub fn n_young(&self) -> usize {
        round_half_away(self.p_young * self.n_records as f64)
    }
}

pub(crate) fn round_half_away(x: f64) -> usize {
    x.round().max(0.0) as usize
}

fn categorical<T: Copy>(values: &[T], weights: &[f64], rng: &mut impl Rng) -> Result<T, DataError> {
    let d = WeightedIndex::new(weights)
        .map_err(|e| DataError::InvalidConfig(format!("bad categorical weights: {e}")))?;
    Ok(values[d.sample(rng)])
}

fn draw_covariates(m: &FeatureMarginals, age: AgeGroup, rng: &mut impl Rng) -> Result<ApplicantRecord, DataError> {
    let city_w: Vec<f64> = m.cities.iter().map(|c| c.1).collect();
    let city_ix: Vec<usize> = (0..m.cities.len()).collect();
    let city = categorical(&city_ix, &city_w, rng)?;
    let wpm = categorical(&[45u8, 50, 55], &m.wpm, rng)?;
    Ok(ApplicantRecord {
        city_zip: m.cities[city].0.clone(),
        age_group: age,
        gender: categorical(Gender::ALL, &m.gender, rng)?,
        employment: rng.gen_bool(m.employment),
        occupation: categorical(Occupation::ALL, &m.occupation, rng)?,
        resume_type: categorical(ResumeType::ALL, &m.resume_type, rng)?,
        template: categorical(Template::ALL, &m.template, rng)?,
        spanish: rng.gen_bool(m.spanish),
        internship: rng.gen_bool(m.internship),
        customer_service: rng.gen_bool(m.customer_service),
        cpr: rng.gen_bool(m.cpr),
        tech_skills: rng.gen_bool(m.tech_skills),
        wpm: Wpm::new(wpm).expect("enumerated wpm"),
        grammar: rng.gen_bool(m.grammar),
        college: rng.gen_bool(m.college),
        employee_month: rng.gen_bool(m.employee_month),
        volunteer: rng.gen_bool(m.volunteer),
        skill: rng.gen_bool(m.skill),
        callback: false,
        latent_callback: None,
    })
}

/// Picks `k` of `pool` without replacement with probability proportional
/// to `weight` (Efraimidis-Spirakis keys). Zero-weight entries are never
/// picked.
fn weighted_pick(pool: &[usize], weight: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = pool
        .iter()
        .map(|&i| {
            let u: f64 = 1.0 - rng.gen::<f64>();
            let key = if weight[i] > 0.0 { u.ln() / weight[i] } else { f64::NEG_INFINITY };
            (key, i)
        })
        .filter(|(key, _)| key.is_finite())
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.truncate(k);
    let mut picked: Vec<usize> = keyed.into_iter().map(|e| e.1).collect();
    picked.sort_unstable();
    picked
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let n = config.n_records;
    let n_young = config.n_young();
    if n_young == 0 || n_young == n {
        return Err(DataError::InvalidConfig("both age groups need at least one record".into()));
    }

    let mut ages: Vec<AgeGroup> = (0..n)
        .map(|i| if i < n_young { AgeGroup::Young } else { AgeGroup::Older })
        .collect();
    ages.shuffle(&mut stream(config.seed, "synth-age", 0));

    let mut cov_rng = stream(config.seed, "synth-covariates", 0);
    let mut records = ages
        .iter()
        .map(|&a| draw_covariates(&config.feature_marginals, a, &mut cov_rng))
        .collect::<Result<Vec<_>, _>>()?;

    let encoder = config.encoder();
    let provisional = Dataset::new(records.clone(), Provenance::Synthetic);
    let x = encoder.encode(&provisional)?;
    let names = x.column_names.clone();
    let linear = |table: &BTreeMap<String, f64>| -> Vec<(usize, f64)> {
        names
            .iter()
            .enumerate()
            .filter_map(|(j, c)| table.get(c).map(|&v| (j, v)))
            .collect()
    };
    let qual = linear(&config.qualification_weights.0);
    let disc = linear(&config.discrimination_profile.0);

    let mut noise_rng = stream(config.seed, "synth-noise", 0);
    let utility: Vec<f64> = x
        .rows()
        .map(|row| {
            let u: f64 = noise_rng.gen_range(f64::EPSILON..1.0);
            let eta: f64 = qual.iter().map(|&(j, w)| w * row[j]).sum();
            eta + (u / (1.0 - u)).ln()
        })
        .collect();
    let flip_weight: Vec<f64> = x
        .rows()
        .map(|row| disc.iter().map(|&(j, m)| m.powf(row[j])).product())
        .collect();

    // latent labels: per-group top-m by utility, ties by index
    let mut latent = vec![false; n];
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for i in 0..n {
        members[usize::from(ages[i] == AgeGroup::Older)].push(i);
    }
    for group in &members {
        let m = round_half_away(config.base_callback_rate * group.len() as f64).min(group.len());
        let mut order = group.clone();
        order.sort_by(|&a, &b| utility[b].total_cmp(&utility[a]).then(a.cmp(&b)));
        for &i in &order[..m] {
            latent[i] = true;
        }
    }

    let ny = members[0].len() as f64;
    let no = members[1].len() as f64;
    let young_pos = members[0].iter().filter(|&&i| latent[i]).count() as f64;
    let older_pos = members[1].iter().filter(|&&i| latent[i]).count() as f64;
    let gap0 = young_pos / ny - older_pos / no;
    let step = 1.0 / ny + 1.0 / no;
    let k = ((config.discrimination_delta - gap0) / step).round().max(0.0) as usize;

    let mut observed = latent.clone();
    if k > 0 {
        let young_pool: Vec<usize> = members[0].iter().copied().filter(|&i| !latent[i]).collect();
        let older_pool: Vec<usize> = members[1].iter().copied().filter(|&i| latent[i]).collect();
        let eligible = |pool: &[usize]| pool.iter().filter(|&&i| flip_weight[i] > 0.0).count();
        for (pool, what) in [(&young_pool, "Young non-callbacks"), (&older_pool, "Older callbacks")] {
            let avail = eligible(pool);
            if avail < k {
                return Err(DataError::InfeasibleDelta {
                    delta: config.discrimination_delta,
                    reason: format!("needs {k} flips but only {avail} eligible {what}"),
                });
            }
        }
        let mut flip_rng = stream(config.seed, "synth-flips", 0);
        for i in weighted_pick(&young_pool, &flip_weight, k, &mut flip_rng) {
            observed[i] = true;
        }
        for i in weighted_pick(&older_pool, &flip_weight, k, &mut flip_rng) {
            observed[i] = false;
        }
    }

    for (i, r) in records.iter_mut().enumerate() {
        r.latent_callback = Some(latent[i]);
        r.callback = observed[i];
    }
    let mut data = Dataset::new(records, Provenance::Synthetic);
    data.trail.push(TrailEntry {
        operation: "generate_synthetic".into(),
        parameters: format!(
            "n_records={n} p_young={} base_callback_rate={} discrimination_delta={} planted_pairs={k}",
            config.p_young, config.base_callback_rate, config.discrimination_delta
        ),
        seed: Some(config.seed),
        records_affected: 2 * k,
    });
    Ok(data)
}
