//! Per-subject label consistency checks and automated correction:
//! explicit override, else majority vote, else quarantine.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::labels::{Gender, LabelRecord, Race};
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Gender,
    Race,
    Dob,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Gender => "gender",
            Field::Race => "race",
            Field::Dob => "dob",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "gender" => Some(Field::Gender),
            "race" => Some(Field::Race),
            "dob" => Some(Field::Dob),
            _ => None,
        }
    }
}

/// Distinct values seen for a subject; a set is only non-empty when it
/// holds two or more values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubjectInconsistency {
    pub genders: BTreeSet<Gender>,
    pub races: BTreeSet<Race>,
    pub dobs: BTreeSet<String>,
}

impl SubjectInconsistency {
    pub fn fields(&self) -> Vec<Field> {
        let mut f = Vec::new();
        if !self.genders.is_empty() {
            f.push(Field::Gender);
        }
        if !self.races.is_empty() {
            f.push(Field::Race);
        }
        if !self.dobs.is_empty() {
            f.push(Field::Dob);
        }
        f
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InconsistencyReport {
    pub subjects: BTreeMap<String, SubjectInconsistency>,
}

impl InconsistencyReport {
    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }
}

pub fn detect_inconsistencies(records: &[LabelRecord]) -> InconsistencyReport {
    let mut seen: BTreeMap<&str, SubjectInconsistency> = BTreeMap::new();
    for r in records {
        let e = seen.entry(&r.subject_id).or_default();
        e.genders.insert(r.gender);
        e.races.insert(r.race);
        if let Some(d) = &r.dob {
            e.dobs.insert(d.clone());
        }
    }
    let mut report = InconsistencyReport::default();
    for (id, mut s) in seen {
        if s.genders.len() < 2 {
            s.genders.clear();
        }
        if s.races.len() < 2 {
            s.races.clear();
        }
        if s.dobs.len() < 2 {
            s.dobs.clear();
        }
        if !s.fields().is_empty() {
            report.subjects.insert(id.to_string(), s);
        }
    }
    report
}

/// Writes `subject_id,field,values` with values joined by `|`.
pub fn write_report(path: &Path, report: &InconsistencyReport) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subject_id", "field", "values"])?;
    for (id, s) in &report.subjects {
        let join = |v: Vec<String>| v.join("|");
        if !s.genders.is_empty() {
            w.write_record([id.as_str(), "gender", &join(s.genders.iter().map(|g| g.to_string()).collect())])?;
        }
        if !s.races.is_empty() {
            w.write_record([id.as_str(), "race", &join(s.races.iter().map(|r| r.to_string()).collect())])?;
        }
        if !s.dobs.is_empty() {
            w.write_record([id.as_str(), "dob", &join(s.dobs.iter().cloned().collect())])?;
        }
    }
    w.flush().map_err(|e| DataError::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Override {
    pub subject_id: String,
    pub field: Field,
    pub value: String,
}

/// Reads an overrides CSV with header `subject_id,field,value`.
pub fn load_overrides(path: &Path) -> Result<Vec<Override>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["subject_id", "field", "value"] {
        return Err(DataError::format(path, "overrides header must be subject_id,field,value"));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = Field::parse(&row[1])
            .ok_or_else(|| DataError::format(path, format!("line {line}: unknown field {:?}", &row[1])))?;
        out.push(Override {
            subject_id: row[0].to_string(),
            field,
            value: row[2].to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleanOutcome {
    pub records: Vec<LabelRecord>,
    pub quarantined: Vec<LabelRecord>,
    pub warnings: Vec<String>,
}

/// Strict majority; `None` on a tie for first place.
fn majority<V: Ord + Clone>(values: impl Iterator<Item = V>) -> Option<V> {
    let mut counts: BTreeMap<V, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let top = counts.values().copied().max()?;
    let mut winners = counts.into_iter().filter(|(_, c)| *c == top);
    let first = winners.next()?.0;
    winners.next().is_none().then_some(first)
}

/// Resolves every inconsistent field per subject. Overrides win, then the
/// majority value across that subject's records; a tie with no override
/// quarantines all of the subject's records.
pub fn clean_labels(
    records: &[LabelRecord],
    report: &InconsistencyReport,
    overrides: &[Override],
) -> CleanOutcome {
    let mut out = CleanOutcome::default();
    let known: BTreeSet<&str> = records.iter().map(|r| r.subject_id.as_str()).collect();
    let mut by_subject: BTreeMap<&str, BTreeMap<Field, &str>> = BTreeMap::new();
    for o in overrides {
        if !known.contains(o.subject_id.as_str()) {
            out.warnings.push(format!(
                "override for unknown subject {:?} ({}) ignored",
                o.subject_id,
                o.field.name()
            ));
            continue;
        }
        let valid = match o.field {
            Field::Gender => o.value.parse::<Gender>().is_ok(),
            Field::Race => o.value.parse::<Race>().is_ok(),
            Field::Dob => !o.value.trim().is_empty(),
        };
        if !valid {
            out.warnings.push(format!(
                "override {}={:?} for subject {:?} is not a valid value; ignored",
                o.field.name(),
                o.value,
                o.subject_id
            ));
            continue;
        }
        by_subject
            .entry(o.subject_id.as_str())
            .or_default()
            .insert(o.field, o.value.as_str());
    }

    let mut resolved: BTreeMap<&str, Option<(Option<Gender>, Option<Race>, Option<String>)>> =
        BTreeMap::new();
    let subjects: BTreeSet<&str> = report
        .subjects
        .keys()
        .map(String::as_str)
        .chain(by_subject.keys().copied())
        .collect();
    for id in subjects {
        let mine = || records.iter().filter(move |r| r.subject_id == id);
        let ovr = by_subject.get(id);
        let inconsistent = report.subjects.get(id).map(|s| s.fields()).unwrap_or_default();
        let pick = |field: Field| -> Result<Option<String>, ()> {
            if let Some(v) = ovr.and_then(|o| o.get(&field)) {
                return Ok(Some(v.to_string()));
            }
            if !inconsistent.contains(&field) {
                return Ok(None);
            }
            let values: Box<dyn Iterator<Item = String>> = match field {
                Field::Gender => Box::new(mine().map(|r| r.gender.to_string())),
                Field::Race => Box::new(mine().map(|r| r.race.to_string())),
                Field::Dob => Box::new(mine().filter_map(|r| r.dob.clone())),
            };
            majority(values).map(Some).ok_or(())
        };
        let entry = match (pick(Field::Gender), pick(Field::Race), pick(Field::Dob)) {
            (Ok(g), Ok(r), Ok(d)) => Some((
                g.map(|v| v.parse().expect("validated")),
                r.map(|v| v.parse().expect("validated")),
                d,
            )),
            _ => None,
        };
        resolved.insert(id, entry);
    }

    for r in records {
        match resolved.get(r.subject_id.as_str()) {
            Some(None) => out.quarantined.push(r.clone()),
            Some(Some((g, race, dob))) => {
                let mut c = r.clone();
                if let Some(g) = g {
                    c.gender = *g;
                }
                if let Some(race) = race {
                    c.race = *race;
                }
                if let Some(d) = dob {
                    c.dob = Some(d.clone());
                }
                out.records.push(c);
            }
            None => out.records.push(r.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, path: &str, g: Gender, r: Race) -> LabelRecord {
        LabelRecord {
            subject_id: id.into(),
            image_path: path.into(),
            age: 30,
            gender: g,
            race: r,
            dob: None,
        }
    }

    use Gender::*;
    use Race::*;

    #[test]
    fn consistent_roster_has_empty_report() {
        let recs = vec![rec("a", "1", Male, Black), rec("a", "2", Male, Black), rec("b", "3", Female, White)];
        assert!(detect_inconsistencies(&recs).is_empty());
    }

    #[test]
    fn reports_gender_and_race_conflicts() {
        let recs = vec![
            rec("a", "1", Male, Black),
            rec("a", "2", Female, Black),
            rec("b", "3", Male, Black),
            rec("b", "4", Male, White),
            rec("b", "5", Male, Other),
        ];
        let rep = detect_inconsistencies(&recs);
        assert_eq!(rep.subjects["a"].fields(), vec![Field::Gender]);
        assert_eq!(rep.subjects["b"].fields(), vec![Field::Race]);
        assert_eq!(rep.subjects["b"].races.len(), 3);
    }

    #[test]
    fn majority_resolves() {
        let recs = vec![rec("a", "1", Male, Black), rec("a", "2", Male, Black), rec("a", "3", Female, Black)];
        let out = clean_labels(&recs, &detect_inconsistencies(&recs), &[]);
        assert!(out.quarantined.is_empty());
        assert!(out.records.iter().all(|r| r.gender == Male));
    }

    #[test]
    fn tie_without_override_quarantines() {
        let recs = vec![rec("a", "1", Male, Black), rec("a", "2", Female, Black), rec("b", "3", Male, White)];
        let out = clean_labels(&recs, &detect_inconsistencies(&recs), &[]);
        assert_eq!(out.quarantined.len(), 2);
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn override_breaks_tie() {
        let recs = vec![rec("a", "1", Male, Black), rec("a", "2", Female, Black)];
        let ovr = [Override {
            subject_id: "a".into(),
            field: Field::Gender,
            value: "F".into(),
        }];
        let out = clean_labels(&recs, &detect_inconsistencies(&recs), &ovr);
        assert!(out.quarantined.is_empty());
        assert!(out.records.iter().all(|r| r.gender == Female));
    }

    #[test]
    fn unknown_subject_override_warns() {
        let recs = vec![rec("a", "1", Male, Black)];
        let ovr = [Override {
            subject_id: "zz".into(),
            field: Field::Race,
            value: "W".into(),
        }];
        let out = clean_labels(&recs, &detect_inconsistencies(&recs), &ovr);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.records, recs);
    }

    #[test]
    fn cleaning_is_idempotent() {
        let recs = vec![
            rec("a", "1", Male, Black),
            rec("a", "2", Male, White),
            rec("a", "3", Male, White),
            rec("b", "4", Female, Black),
            rec("b", "5", Male, Black),
            rec("c", "6", Female, Other),
        ];
        let ovr = [Override {
            subject_id: "c".into(),
            field: Field::Race,
            value: "B".into(),
        }];
        let once = clean_labels(&recs, &detect_inconsistencies(&recs), &ovr);
        let twice = clean_labels(&once.records, &detect_inconsistencies(&once.records), &ovr);
        assert_eq!(once.records, twice.records);
        assert!(twice.quarantined.is_empty());
    }

    #[test]
    fn overrides_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.csv");
        std::fs::write(&p, "subject_id,field,value\na,gender,F\nb,dob,1970-01-01\n").unwrap();
        let o = load_overrides(&p).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o[1].field, Field::Dob);
        std::fs::write(&p, "subject_id,field,value\na,height,F\n").unwrap();
        assert!(load_overrides(&p).is_err());
    }
}
