use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgeGroup, ApplicantRecord, DataError, Dataset, Gender, Occupation, ResumeType, Template};

/// Dense row-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
    pub column_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        FeatureMatrix {
            n_rows: rows.len(),
            n_cols,
            data: rows.concat(),
            column_names: (0..n_cols).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }

    /// Copy with one extra trailing column.
    pub fn with_appended_column(&self, name: &str, values: &[f64]) -> FeatureMatrix {
        assert_eq!(values.len(), self.n_rows);
        let n_cols = self.n_cols + 1;
        let mut data = Vec::with_capacity(self.n_rows * n_cols);
        for (row, &v) in self.rows().zip(values) {
            data.extend_from_slice(row);
            data.push(v);
        }
        let mut column_names = self.column_names.clone();
        column_names.push(name.to_string());
        FeatureMatrix {
            n_rows: self.n_rows,
            n_cols,
            data,
            column_names,
        }
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            data,
            column_names: self.column_names.clone(),
        }
    }
}

/// Column layout, fixed once fitted:
///
/// 1. `city_zip=<value>` for each retained city (lexicographic), then
///    `city_zip=other`
/// 2. `gender=F`, `gender=M`
/// 3. `employment`
/// 4. `occupation=Admin|Sales|Janitor|Security`
/// 5. `type=Y|M|O|B|BL|BE`
/// 6. `template=A|B|C`
/// 7. `spanish`, `internship`, `customer_service`, `cpr`, `tech_skills`
/// 8. `wpm` scaled as (wpm - 45) / 10
/// 9. `grammar`, `college`, `employee_month`, `volunteer`, `skill`
/// 10. `age_young` (only when requested; always last)
///
/// Cities whose share of the fitting data is below `min_city_share` go to
/// the `other` bucket, as do cities unseen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub cities: Vec<String>,
    pub include_age: bool,
}

pub const AGE_COLUMN: &str = "age_young";

impl FeatureEncoder {
    pub const DEFAULT_MIN_CITY_SHARE: f64 = 0.005;

    pub fn fit(data: &Dataset, include_age: bool, min_city_share: f64) -> Result<Self, DataError> {
        if data.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &data.records {
            *freq.entry(r.city_zip.as_str()).or_default() += 1;
        }
        let min = min_city_share * data.len() as f64;
        let cities = freq
            .into_iter()
            .filter(|&(_, c)| c as f64 >= min)
            .map(|(city, _)| city.to_string())
            .collect();
        Ok(FeatureEncoder {
            cities,
            include_age,
        })
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.cities.iter().map(|c| format!("city_zip={c}")).collect();
        names.push("city_zip=other".into());
        names.extend(Gender::ALL.iter().map(|g| format!("gender={g}")));
        names.push("employment".into());
        names.extend(Occupation::ALL.iter().map(|o| format!("occupation={o}")));
        names.extend(ResumeType::ALL.iter().map(|t| format!("type={t}")));
        names.extend(Template::ALL.iter().map(|t| format!("template={t}")));
        for n in ["spanish", "internship", "customer_service", "cpr", "tech_skills", "wpm"] {
            names.push(n.into());
        }
        for n in ["grammar", "college", "employee_month", "volunteer", "skill"] {
            names.push(n.into());
        }
        if self.include_age {
            names.push(AGE_COLUMN.into());
        }
        names
    }

    pub fn n_columns(&self) -> usize {
        self.cities.len() + 1 + 2 + 1 + 4 + 6 + 3 + 6 + 5 + usize::from(self.include_age)
    }

    fn encode_record(&self, r: &ApplicantRecord, out: &mut Vec<f64>) {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        let city = self.cities.binary_search_by(|c| c.as_str().cmp(&r.city_zip));
        for j in 0..self.cities.len() {
            out.push(b(city == Ok(j)));
        }
        out.push(b(city.is_err()));
        for g in Gender::ALL {
            out.push(b(r.gender == *g));
        }
        out.push(b(r.employment));
        for o in Occupation::ALL {
            out.push(b(r.occupation == *o));
        }
        for t in ResumeType::ALL {
            out.push(b(r.resume_type == *t));
        }
        for t in Template::ALL {
            out.push(b(r.template == *t));
        }
        out.extend([
            b(r.spanish),
            b(r.internship),
            b(r.customer_service),
            b(r.cpr),
            b(r.tech_skills),
            r.wpm.scaled(),
            b(r.grammar),
            b(r.college),
            b(r.employee_month),
            b(r.volunteer),
            b(r.skill),
        ]);
        if self.include_age {
            out.push(b(r.age_group == AgeGroup::Young));
        }
    }

    pub fn encode(&self, data: &Dataset) -> Result<FeatureMatrix, DataError> {
        if data.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let n_cols = self.n_columns();
        let mut buf = Vec::with_capacity(data.len() * n_cols);
        for r in &data.records {
            self.encode_record(r, &mut buf);
        }
        debug_assert_eq!(buf.len(), data.len() * n_cols);
        Ok(FeatureMatrix {
            n_rows: data.len(),
            n_cols,
            data: buf,
            column_names: self.column_names(),
        })
    }
}

/// Fits an encoder on `data` and encodes it in one go.
pub fn encode_features(data: &Dataset, include_age: bool) -> Result<FeatureMatrix, DataError> {
    FeatureEncoder::fit(data, include_age, FeatureEncoder::DEFAULT_MIN_CITY_SHARE)?.encode(data)
}
