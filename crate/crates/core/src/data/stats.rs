use std::path::Path;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::DataError;

/// Pixel mean and population standard deviation over every channel value
/// of a training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardizationStats {
    pub mean: f64,
    pub std: f64,
}

/// Streams every value through Welford's update in `f64`.
pub fn compute_standardization_stats<'a, T: Scalar>(
    images: impl IntoIterator<Item = &'a Tensor<T>>,
) -> Result<StandardizationStats, DataError> {
    let mut n = 0u64;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for img in images {
        for v in img.data() {
            let x = v.to_f64_lossy();
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
    }
    if n == 0 {
        return Err(DataError::Degenerate("no pixels to compute statistics from".into()));
    }
    let std = (m2 / n as f64).sqrt();
    if !(std > 0.0) {
        return Err(DataError::Degenerate(format!(
            "all {n} pixel values equal {mean}; standard deviation is zero"
        )));
    }
    Ok(StandardizationStats { mean, std })
}

/// `(p - mean) / std` per value.
pub fn standardize<T: Scalar>(img: &Tensor<T>, stats: &StandardizationStats) -> Tensor<T> {
    img.map(|p| T::from_f64_lossy((p.to_f64_lossy() - stats.mean) / stats.std))
}

pub fn unstandardize<T: Scalar>(img: &Tensor<T>, stats: &StandardizationStats) -> Tensor<T> {
    img.map(|p| T::from_f64_lossy(p.to_f64_lossy() * stats.std + stats.mean))
}

pub fn zero_center<T: Scalar>(img: &Tensor<T>, mean: f64) -> Tensor<T> {
    img.map(|p| T::from_f64_lossy(p.to_f64_lossy() - mean))
}

/// Writes `mean,std` and one value row, preceded by a provenance comment.
pub fn write_stats_file(
    path: &Path,
    stats: &StandardizationStats,
    split: &str,
    seed: u64,
) -> Result<(), DataError> {
    let text = format!(
        "# provenance: split={split} seed={seed}\nmean,std\n{},{}\n",
        stats.mean, stats.std
    );
    std::fs::write(path, text).map_err(|e| DataError::io(path, e))
}

pub fn read_stats_file(path: &Path) -> Result<StandardizationStats, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().starts_with('#') && !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("mean,std") {
        return Err(DataError::format(path, "expected header mean,std"));
    }
    let row = lines.next().ok_or_else(|| DataError::format(path, "missing value row"))?;
    let vals: Vec<f64> = row
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| DataError::format(path, format!("bad number: {e}")))?;
    match vals[..] {
        [mean, std] if std > 0.0 => Ok(StandardizationStats { mean, std }),
        _ => Err(DataError::format(path, "expected two values with std > 0")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TABLE: StandardizationStats = StandardizationStats {
        mean: 142.46,
        std: 59.85,
    };

    #[test]
    fn two_point_distribution() {
        let t = Tensor::<f32>::from_vec(vec![0.0, 255.0, 0.0, 255.0]);
        let s = compute_standardization_stats([&t]).unwrap();
        assert!((s.mean - 127.5).abs() < 1e-12);
        assert!((s.std - 127.5).abs() < 1e-12);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let t = Tensor::<f32>::full(&[1, 4, 4], 9.0);
        assert!(matches!(compute_standardization_stats([&t]), Err(DataError::Degenerate(_))));
        assert!(compute_standardization_stats::<f32>([]).is_err());
    }

    #[test]
    fn random_set_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let imgs: Vec<Tensor<f32>> = (0..5)
            .map(|_| Tensor::new(vec![3, 6, 7], (0..126).map(|_| rng.random_range(0u8..=255) as f32).collect()).unwrap())
            .collect();
        let s = compute_standardization_stats(&imgs).unwrap();
        let all: Vec<f64> = imgs.iter().flat_map(|t| t.to_f64_vec()).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64;
        assert!((s.mean - mean).abs() <= 1e-6 * mean.abs());
        assert!((s.std - var.sqrt()).abs() <= 1e-6 * var.sqrt());
    }

    #[test]
    fn table_values() {
        let t = Tensor::<f64>::from_vec(vec![142.46, 202.31]);
        let z = standardize(&t, &TABLE);
        assert!(z.data()[0].abs() < 1e-12);
        assert!((z.data()[1] - 1.0).abs() < 1e-12);
        assert!(zero_center(&t, 142.46).data()[0].abs() < 1e-12);
        let c = zero_center(&Tensor::<f64>::full(&[4], 100.0), TABLE.mean);
        assert!(c.data().iter().all(|&v| v == 100.0 - 142.46));
    }

    #[test]
    fn stats_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stats.csv");
        write_stats_file(&p, &TABLE, "S1", 7).unwrap();
        assert_eq!(read_stats_file(&p).unwrap(), TABLE);
        assert!(std::fs::read_to_string(&p).unwrap().contains("split=S1 seed=7"));
    }

    proptest! {
        #[test]
        fn unstandardize_inverts(v in prop::collection::vec(0f32..255.0, 1..50)) {
            let t = Tensor::from_vec(v);
            let back = unstandardize(&standardize(&t, &TABLE), &TABLE);
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
            }
        }

        #[test]
        fn zero_center_inverts(v in prop::collection::vec(0f64..255.0, 1..50), m in 0f64..255.0) {
            let t = Tensor::from_vec(v);
            let back = zero_center(&t, m).map(|x| x + m);
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
