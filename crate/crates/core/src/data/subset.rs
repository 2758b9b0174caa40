//! Three-way subject subsetting: two equally sized sets of black and white
//! subjects with a 3:1 male to female ratio, and a third set holding
//! everything else.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{Gender, LabelRecord, Race};
use super::DataError;

/// Roster size the default set size is scaled against.
pub const FULL_ROSTER: usize = 55_134;
/// Size of each of the first two sets on a full-size roster.
pub const FULL_SET_SIZE: usize = 10_280;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsetConfig {
    /// Size of S1 and S2; `None` scales [`FULL_SET_SIZE`] to the roster.
    pub set_size: Option<usize>,
    /// Keep every subject's images inside a single set.
    pub strict_subjects: bool,
}

impl SubsetConfig {
    pub fn resolved_size(&self, roster: usize) -> usize {
        self.set_size.unwrap_or_else(|| {
            ((FULL_SET_SIZE as f64) * roster as f64 / FULL_ROSTER as f64).round() as usize
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitSet {
    pub s1: Vec<LabelRecord>,
    pub s2: Vec<LabelRecord>,
    pub s3: Vec<LabelRecord>,
}

fn eligible(r: &LabelRecord) -> bool {
    matches!(r.race, Race::Black | Race::White)
}

/// `(males, females)` for a set of `size` records at 3:1.
fn quota(size: usize) -> (usize, usize) {
    let males = (size as f64 * 0.75).round() as usize;
    (males, size - males)
}

pub fn guo_mu_subset(
    records: &[LabelRecord],
    seed: u64,
    config: &SubsetConfig,
) -> Result<SplitSet, DataError> {
    let size = config.resolved_size(records.len());
    let (males, females) = quota(size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // assignment[i] = 1 or 2 for records placed in S1/S2.
    let mut assignment = vec![0u8; records.len()];

    if config.strict_subjects {
        let mut subjects: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            subjects.entry(&r.subject_id).or_default().push(i);
        }
        for gender in [Gender::Male, Gender::Female] {
            let want = if gender == Gender::Male { males } else { females };
            let mut pool: Vec<&Vec<usize>> = subjects
                .values()
                .filter(|idx| idx.iter().all(|&i| eligible(&records[i]) && records[i].gender == gender))
                .collect();
            pool.shuffle(&mut rng);
            let mut cursor = pool.into_iter();
            for set in [1u8, 2] {
                let mut taken = 0;
                let mut skipped = Vec::new();
                for idx in cursor.by_ref() {
                    if taken + idx.len() <= want {
                        taken += idx.len();
                        idx.iter().for_each(|&i| assignment[i] = set);
                        if taken == want {
                            break;
                        }
                    } else {
                        skipped.push(idx);
                    }
                }
                if taken < want {
                    return Err(DataError::Sizing(format!(
                        "strict mode filled {taken} of {want} {gender:?} records in S{set}"
                    )));
                }
                cursor = skipped.into_iter().chain(cursor).collect::<Vec<_>>().into_iter();
            }
        }
    } else {
        for gender in [Gender::Male, Gender::Female] {
            let want = if gender == Gender::Male { males } else { females };
            let mut pool: Vec<usize> = (0..records.len())
                .filter(|&i| eligible(&records[i]) && records[i].gender == gender)
                .collect();
            if pool.len() < 2 * want {
                return Err(DataError::Sizing(format!(
                    "need {} black/white {gender:?} records for two sets of {size}, have {} (short by {})",
                    2 * want,
                    pool.len(),
                    2 * want - pool.len()
                )));
            }
            pool.shuffle(&mut rng);
            pool[..want].iter().for_each(|&i| assignment[i] = 1);
            pool[want..2 * want].iter().for_each(|&i| assignment[i] = 2);
        }
    }

    let mut split = SplitSet::default();
    for (r, a) in records.iter().zip(assignment) {
        match a {
            1 => split.s1.push(r.clone()),
            2 => split.s2.push(r.clone()),
            _ => split.s3.push(r.clone()),
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster(n_male: usize, n_female: usize, other_every: usize) -> Vec<LabelRecord> {
        (0..n_male + n_female)
            .map(|i| LabelRecord {
                subject_id: format!("s{}", i / 2),
                image_path: format!("img{i}.pgm"),
                age: 20 + (i % 40) as u32,
                gender: if i < n_male { Gender::Male } else { Gender::Female },
                race: if other_every > 0 && i % other_every == 0 {
                    Race::Other
                } else if i % 3 == 0 {
                    Race::White
                } else {
                    Race::Black
                },
                dob: None,
            })
            .collect()
    }

    fn count(v: &[LabelRecord], g: Gender) -> usize {
        v.iter().filter(|r| r.gender == g).count()
    }

    #[test]
    fn explicit_size_and_ratio() {
        let recs = roster(400, 200, 7);
        let cfg = SubsetConfig { set_size: Some(100), strict_subjects: false };
        let s = guo_mu_subset(&recs, 3, &cfg).unwrap();
        assert_eq!((s.s1.len(), s.s2.len(), s.s3.len()), (100, 100, 400));
        assert_eq!((count(&s.s1, Gender::Male), count(&s.s1, Gender::Female)), (75, 25));
        assert!(s.s1.iter().chain(&s.s2).all(eligible));
    }

    #[test]
    fn same_seed_same_split() {
        let recs = roster(400, 200, 7);
        let cfg = SubsetConfig { set_size: Some(80), strict_subjects: false };
        assert_eq!(guo_mu_subset(&recs, 9, &cfg).unwrap(), guo_mu_subset(&recs, 9, &cfg).unwrap());
        assert_ne!(guo_mu_subset(&recs, 9, &cfg).unwrap(), guo_mu_subset(&recs, 10, &cfg).unwrap());
    }

    #[test]
    fn shortfall_reported() {
        let recs = roster(400, 20, 0);
        let cfg = SubsetConfig { set_size: Some(100), strict_subjects: false };
        let err = guo_mu_subset(&recs, 1, &cfg).unwrap_err().to_string();
        assert!(err.contains("short by 30"), "{err}");
    }

    #[test]
    fn proportional_default_size() {
        assert_eq!(SubsetConfig::default().resolved_size(FULL_ROSTER), FULL_SET_SIZE);
        assert_eq!(quota(FULL_SET_SIZE), (7710, 2570));
    }

    #[test]
    fn strict_mode_keeps_subjects_together() {
        let recs = roster(400, 200, 0);
        let cfg = SubsetConfig { set_size: Some(40), strict_subjects: true };
        let s = guo_mu_subset(&recs, 5, &cfg).unwrap();
        assert_eq!((s.s1.len(), s.s2.len()), (40, 40));
        let ids = |v: &[LabelRecord]| v.iter().map(|r| r.subject_id.clone()).collect::<std::collections::HashSet<_>>();
        assert!(ids(&s.s1).is_disjoint(&ids(&s.s2)));
        assert!(ids(&s.s1).is_disjoint(&ids(&s.s3)));
        assert!(ids(&s.s2).is_disjoint(&ids(&s.s3)));
    }
}
