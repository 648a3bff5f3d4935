use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{
    AgeGroup, ApplicantRecord, DataError, Dataset, Gender, Occupation, Provenance, ResumeType,
    Template, Wpm,
};

/// Canonical CSV columns, in the order they are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    CityZip,
    AgeGroup,
    Gender,
    Employment,
    Occupation,
    ResumeType,
    Template,
    Spanish,
    Internship,
    CustomerService,
    Cpr,
    TechSkills,
    Wpm,
    Grammar,
    College,
    EmployeeMonth,
    Volunteer,
    Skill,
    Callback,
    LatentCallback,
}

impl Column {
    pub const REQUIRED: [Column; 19] = [
        Column::CityZip,
        Column::AgeGroup,
        Column::Gender,
        Column::Employment,
        Column::Occupation,
        Column::ResumeType,
        Column::Template,
        Column::Spanish,
        Column::Internship,
        Column::CustomerService,
        Column::Cpr,
        Column::TechSkills,
        Column::Wpm,
        Column::Grammar,
        Column::College,
        Column::EmployeeMonth,
        Column::Volunteer,
        Column::Skill,
        Column::Callback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::CityZip => "city_zip",
            Column::AgeGroup => "age_group",
            Column::Gender => "gender",
            Column::Employment => "employment",
            Column::Occupation => "occupation",
            Column::ResumeType => "type",
            Column::Template => "template",
            Column::Spanish => "spanish",
            Column::Internship => "internship",
            Column::CustomerService => "customer_service",
            Column::Cpr => "cpr",
            Column::TechSkills => "tech_skills",
            Column::Wpm => "wpm",
            Column::Grammar => "grammar",
            Column::College => "college",
            Column::EmployeeMonth => "employee_month",
            Column::Volunteer => "volunteer",
            Column::Skill => "skill",
            Column::Callback => "callback",
            Column::LatentCallback => "latent_callback",
        }
    }
}

/// Header matching rules. Headers are compared after lower-casing and
/// mapping spaces and hyphens to underscores, so `City-Zip`, `city zip` and
/// `city_zip` are the same column.
#[derive(Debug, Clone)]
pub struct SchemaSpec {
    aliases: HashMap<String, Column>,
}

impl Default for SchemaSpec {
    fn default() -> Self {
        let mut aliases = HashMap::new();
        for c in Column::REQUIRED.iter().chain([Column::LatentCallback].iter()) {
            aliases.insert(c.name().to_string(), *c);
        }
        for (alias, col) in [
            ("city", Column::CityZip),
            ("zip", Column::CityZip),
            ("cityzip", Column::CityZip),
            ("age", Column::AgeGroup),
            ("resume_type", Column::ResumeType),
            ("customerservice", Column::CustomerService),
            ("techskills", Column::TechSkills),
            ("tech", Column::TechSkills),
            ("typing_speed", Column::Wpm),
            ("employee_of_the_month", Column::EmployeeMonth),
            ("employee_of_month", Column::EmployeeMonth),
            ("employeemonth", Column::EmployeeMonth),
            ("skill_level", Column::Skill),
            ("y", Column::Callback),
            ("y_star", Column::LatentCallback),
            ("latent", Column::LatentCallback),
        ] {
            aliases.insert(alias.to_string(), col);
        }
        SchemaSpec { aliases }
    }
}

impl SchemaSpec {
    pub fn with_alias(mut self, alias: &str, column: Column) -> Self {
        self.aliases.insert(normalize_header(alias), column);
        self
    }

    fn resolve(&self, header: &str) -> Option<Column> {
        self.aliases.get(&normalize_header(header)).copied()
    }
}

fn normalize_header(h: &str) -> String {
    h.trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c })
        .collect()
}

pub fn load_csv(path: impl AsRef<Path>, schema: &SchemaSpec) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Parses applicant rows. Row numbers in errors are 1-based and exclude the
/// header line.
pub fn read_csv<R: Read>(reader: R, schema: &SchemaSpec) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile);
    }
    let mut positions: HashMap<Column, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(col) = schema.resolve(h) {
            positions.entry(col).or_insert(i);
        }
    }
    for col in Column::REQUIRED {
        if !positions.contains_key(&col) {
            return Err(DataError::MissingColumn(col.name().to_string()));
        }
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let field = |col: Column| -> &str { row.get(positions[&col]).unwrap_or("") };
        let invalid = |col: Column| DataError::InvalidValue {
            row: row_no,
            column: col.name().to_string(),
            token: field(col).to_string(),
        };
        let flag = |col: Column| parse_bool(field(col)).ok_or_else(|| invalid(col));

        let city_zip = field(Column::CityZip).to_string();
        if city_zip.is_empty() {
            return Err(invalid(Column::CityZip));
        }
        let wpm = field(Column::Wpm)
            .parse::<u8>()
            .ok()
            .and_then(Wpm::new)
            .ok_or_else(|| invalid(Column::Wpm))?;
        let latent_callback = match positions.get(&Column::LatentCallback) {
            Some(&p) => {
                let tok = row.get(p).unwrap_or("");
                if tok.is_empty() {
                    None
                } else {
                    Some(parse_bool(tok).ok_or_else(|| invalid(Column::LatentCallback))?)
                }
            }
            None => None,
        };
        records.push(ApplicantRecord {
            city_zip,
            age_group: field(Column::AgeGroup)
                .parse::<AgeGroup>()
                .map_err(|_| invalid(Column::AgeGroup))?,
            gender: field(Column::Gender)
                .parse::<Gender>()
                .map_err(|_| invalid(Column::Gender))?,
            employment: flag(Column::Employment)?,
            occupation: field(Column::Occupation)
                .parse::<Occupation>()
                .map_err(|_| invalid(Column::Occupation))?,
            resume_type: field(Column::ResumeType)
                .parse::<ResumeType>()
                .map_err(|_| invalid(Column::ResumeType))?,
            template: field(Column::Template)
                .parse::<Template>()
                .map_err(|_| invalid(Column::Template))?,
            spanish: flag(Column::Spanish)?,
            internship: flag(Column::Internship)?,
            customer_service: flag(Column::CustomerService)?,
            cpr: flag(Column::Cpr)?,
            tech_skills: flag(Column::TechSkills)?,
            wpm,
            grammar: flag(Column::Grammar)?,
            college: flag(Column::College)?,
            employee_month: flag(Column::EmployeeMonth)?,
            volunteer: flag(Column::Volunteer)?,
            skill: parse_skill(field(Column::Skill)).ok_or_else(|| invalid(Column::Skill))?,
            callback: flag(Column::Callback)?,
            latent_callback,
        });
    }
    if records.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok(Dataset::new(records, Provenance::Ingested))
}

fn parse_bool(tok: &str) -> Option<bool> {
    match tok.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "t" => Some(true),
        "0" | "false" | "no" | "f" => Some(false),
        _ => None,
    }
}

fn parse_skill(tok: &str) -> Option<bool> {
    match tok.to_ascii_lowercase().as_str() {
        "high" => Some(true),
        "low" => Some(false),
        other => parse_bool(other),
    }
}

/// Writes the canonical header. `latent_callback` is written only when at
/// least one record carries a latent label.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<(), DataError> {
    let with_latent = data.records.iter().any(|r| r.latent_callback.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = Column::REQUIRED.iter().map(|c| c.name()).collect();
    if with_latent {
        header.push(Column::LatentCallback.name());
    }
    w.write_record(&header)?;
    let b = |v: bool| if v { "1" } else { "0" };
    for r in &data.records {
        let wpm = r.wpm.get().to_string();
        let mut row = vec![
            r.city_zip.as_str(),
            match r.age_group {
                AgeGroup::Young => "young",
                AgeGroup::Older => "older",
            },
            r.gender.token(),
            b(r.employment),
            r.occupation.token(),
            r.resume_type.token(),
            r.template.token(),
            b(r.spanish),
            b(r.internship),
            b(r.customer_service),
            b(r.cpr),
            b(r.tech_skills),
            wpm.as_str(),
            b(r.grammar),
            b(r.college),
            b(r.employee_month),
            b(r.volunteer),
            b(r.skill),
            b(r.callback),
        ];
        if with_latent {
            row.push(r.latent_callback.map(b).unwrap_or(""));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "City-Zip,Age Group,gender,employment,occupation,type,template,spanish,internship,customer service,cpr,tech skills,wpm,grammar,college,employee month,volunteer,skill,callback";

    fn parse(body: &str) -> Result<Dataset, DataError> {
        read_csv(body.as_bytes(), &SchemaSpec::default())
    }

    #[test]
    fn header_only_is_empty_file() {
        assert!(matches!(parse(&format!("{HEADER}\n")), Err(DataError::EmptyFile)));
        assert!(matches!(parse(""), Err(DataError::EmptyFile)));
    }

    #[test]
    fn wpm_outside_enumeration_is_rejected_with_location() {
        let body = format!(
            "{HEADER}\nAtlanta-30303,young,F,1,Sales,Y,A,0,0,1,0,1,45,1,0,0,1,1,0\n\
             Boston-02108,middle,M,0,Admin,M,B,1,0,0,1,0,60,1,1,0,0,0,1\n"
        );
        match parse(&body) {
            Err(DataError::InvalidValue { row, column, token }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "wpm");
                assert_eq!(token, "60");
            }
            other => panic!("expected InvalidValue, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let body = "city_zip,age_group\nx,young\n";
        match parse(body) {
            Err(DataError::MissingColumn(c)) => assert_eq!(c, "gender"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn aliases_and_middle_age_collapse() {
        let body = format!(
            "{HEADER}\nAtlanta-30303,middle,female,yes,retail sales,bl,c,true,no,1,0,1,50,1,0,0,1,high,1\n"
        );
        let d = parse(&body).unwrap();
        let r = &d.records[0];
        assert_eq!(r.age_group, AgeGroup::Older);
        assert_eq!(r.occupation, Occupation::Sales);
        assert_eq!(r.resume_type, ResumeType::BL);
        assert!(r.skill && r.callback && r.employment);
        assert_eq!(r.latent_callback, None);
        assert_eq!(d.provenance, Provenance::Ingested);
    }

    #[test]
    fn write_then_read_reproduces_records() {
        let body = format!(
            "{HEADER}\nAtlanta-30303,young,F,1,Sales,Y,A,0,0,1,0,1,45,1,0,0,1,1,0\n\
             Boston-02108,old,M,0,Janitor,BE,B,1,1,0,1,0,55,0,1,1,0,0,1\n"
        );
        let d = parse(&body).unwrap();
        let mut out = Vec::new();
        write_csv(&d, &mut out).unwrap();
        let again = parse(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(d.records, again.records);
    }
}
