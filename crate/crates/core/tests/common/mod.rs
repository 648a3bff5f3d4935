#![allow(dead_code)]

use audit_repair::data::{
    AgeGroup, ApplicantRecord, Dataset, Gender, Occupation, Provenance, ResumeType, Template, Wpm,
};

pub fn record(young: bool, callback: bool, spanish: bool) -> ApplicantRecord {
    ApplicantRecord {
        city_zip: "boston".into(),
        age_group: if young { AgeGroup::Young } else { AgeGroup::Older },
        gender: Gender::ALL[0],
        employment: false,
        occupation: Occupation::ALL[0],
        resume_type: ResumeType::ALL[0],
        template: Template::ALL[0],
        spanish,
        internship: false,
        customer_service: false,
        cpr: false,
        tech_skills: false,
        wpm: Wpm::new(50).unwrap(),
        grammar: false,
        college: false,
        employee_month: false,
        volunteer: false,
        skill: false,
        callback,
        latent_callback: None,
    }
}

/// Dataset with the given (young_pos, young_neg, older_pos, older_neg) counts.
pub fn counts_dataset(yp: usize, yn: usize, op: usize, on: usize) -> Dataset {
    let mut records = Vec::new();
    for (n, young, cb) in [(yp, true, true), (yn, true, false), (op, false, true), (on, false, false)] {
        records.extend((0..n).map(|_| record(young, cb, false)));
    }
    Dataset::new(records, Provenance::Ingested)
}

/// Exact counts of the published audit.
pub fn replica_counts() -> Dataset {
    counts_dataset(2505, 13401 - 2505, 3587, 25532 - 3587)
}
