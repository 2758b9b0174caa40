use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn code(self) -> &'static str {
        match self {
            Gender::Male => "M",
            Gender::Female => "F",
        }
    }

    /// Output index of the two-way gender head.
    pub fn class_index(self) -> usize {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Self {
        if i == 0 {
            Gender::Male
        } else {
            Gender::Female
        }
    }
}

impl FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "M" => Ok(Gender::Male),
            "F" => Ok(Gender::Female),
            other => Err(format!("gender must be M or F, got {other:?}")),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Race {
    Black,
    White,
    Other,
}

impl Race {
    pub fn code(self) -> &'static str {
        match self {
            Race::Black => "B",
            Race::White => "W",
            Race::Other => "O",
        }
    }
}

impl FromStr for Race {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "B" => Ok(Race::Black),
            "W" => Ok(Race::White),
            "O" => Ok(Race::Other),
            other => Err(format!("race must be B, W or O, got {other:?}")),
        }
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Inclusive range of accepted ages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeRange {
    pub min: u32,
    pub max: u32,
}

impl Default for AgeRange {
    fn default() -> Self {
        AgeRange { min: 16, max: 77 }
    }
}

/// One image's metadata.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelRecord {
    pub subject_id: String,
    pub image_path: String,
    pub age: u32,
    pub gender: Gender,
    pub race: Race,
    /// Date of birth, when the manifest carries one.
    pub dob: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedLabels {
    pub records: Vec<LabelRecord>,
    pub rejects: Vec<Reject>,
}

const REQUIRED: [&str; 5] = ["subject_id", "image_path", "age", "gender", "race"];

/// Parses a label manifest. Malformed rows become [`Reject`]s carrying
/// their line number; a missing required column is fatal.
pub fn parse_labels<R: Read>(
    reader: R,
    source: &Path,
    ages: AgeRange,
) -> Result<LoadedLabels, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name).ok_or_else(|| {
            DataError::format(source, format!("missing required column {name:?}"))
        })?;
    }
    let dob_col = col("dob");
    let mut out = LoadedLabels::default();
    let mut seen_paths = HashSet::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.rejects.push(Reject {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("");
        let parsed = (|| -> Result<LabelRecord, String> {
            let subject_id = field(idx[0]).to_string();
            let image_path = field(idx[1]).to_string();
            if subject_id.is_empty() {
                return Err("empty subject_id".into());
            }
            if image_path.is_empty() {
                return Err("empty image_path".into());
            }
            let age: u32 = field(idx[2])
                .parse()
                .map_err(|_| format!("age {:?} is not a whole number", field(idx[2])))?;
            if age < ages.min || age > ages.max {
                return Err(format!("age {age} outside {}..={}", ages.min, ages.max));
            }
            let gender = field(idx[3]).parse()?;
            let race = field(idx[4]).parse()?;
            let dob = dob_col.map(field).filter(|s| !s.is_empty()).map(str::to_string);
            Ok(LabelRecord {
                subject_id,
                image_path,
                age,
                gender,
                race,
                dob,
            })
        })();
        match parsed {
            Ok(rec) if !seen_paths.insert(rec.image_path.clone()) => out.rejects.push(Reject {
                line,
                reason: format!("duplicate image_path {:?}", rec.image_path),
            }),
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }
    Ok(out)
}

pub fn load_labels(path: &Path, ages: AgeRange) -> Result<LoadedLabels, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_labels(std::io::BufReader::new(file), path, ages)
}

/// Writes a manifest; the `dob` column is emitted only if some record has one.
pub fn write_labels(path: &Path, records: &[LabelRecord]) -> Result<(), DataError> {
    let with_dob = records.iter().any(|r| r.dob.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = REQUIRED.to_vec();
    if with_dob {
        header.push("dob");
    }
    w.write_record(&header)?;
    for r in records {
        let age = r.age.to_string();
        let mut row = vec![
            r.subject_id.as_str(),
            r.image_path.as_str(),
            age.as_str(),
            r.gender.code(),
            r.race.code(),
        ];
        if with_dob {
            row.push(r.dob.as_deref().unwrap_or(""));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DataError::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedLabels, DataError> {
        parse_labels(text.as_bytes(), Path::new("mem.csv"), AgeRange::default())
    }

    #[test]
    fn header_only_is_empty() {
        let l = parse("subject_id,image_path,age,gender,race\n").unwrap();
        assert!(l.records.is_empty() && l.rejects.is_empty());
    }

    #[test]
    fn bad_gender_rejected_with_line() {
        let l = parse("subject_id,image_path,age,gender,race\ns1,a.pgm,30,M,B\ns2,b.pgm,40,X,W\n").unwrap();
        assert_eq!(l.records.len(), 1);
        assert_eq!(l.rejects.len(), 1);
        assert_eq!(l.rejects[0].line, 3);
        assert!(l.rejects[0].reason.contains("gender"));
    }

    #[test]
    fn missing_column_is_fatal() {
        let err = parse("subject_id,image_path,age,gender\ns1,a.pgm,30,M\n").unwrap_err();
        assert!(err.to_string().contains("race"));
    }

    #[test]
    fn range_duplicates_and_empties_rejected() {
        let l = parse(
            "subject_id,image_path,age,gender,race\n\
             s1,a.pgm,15,M,B\n\
             s1,b.pgm,78,M,B\n\
             ,c.pgm,30,M,B\n\
             s2,d.pgm,30,F,W\n\
             s3,d.pgm,31,F,W\n\
             s4,e.pgm,thirty,F,W\n",
        )
        .unwrap();
        assert_eq!(l.records.len(), 1);
        assert_eq!(l.rejects.len(), 5);
        assert!(l.rejects[3].reason.contains("duplicate"));
    }

    #[test]
    fn column_order_is_free_and_dob_optional() {
        let l = parse("race,gender,age,image_path,subject_id,dob\nW,F,22,x.pgm,s9,1990-01-02\n").unwrap();
        let r = &l.records[0];
        assert_eq!((r.race, r.gender, r.age), (Race::White, Gender::Female, 22));
        assert_eq!(r.dob.as_deref(), Some("1990-01-02"));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let recs = parse("subject_id,image_path,age,gender,race\ns1,a.pgm,30,M,B\ns2,b.pgm,41,F,O\n")
            .unwrap()
            .records;
        write_labels(&path, &recs).unwrap();
        assert_eq!(load_labels(&path, AgeRange::default()).unwrap().records, recs);
    }
}
