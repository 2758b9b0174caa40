//! Deterministic synthetic face stand-ins. Gender is the sign of a
//! left/right background brightness split; age is the area of an
//! anti-aliased bright disc centred in the frame.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    save_image, write_labels, DataError, Gender, ImageSample, LabelRecord, Race, RawImage,
};
use crate::encoding::{MAX_AGE, MIN_AGE};
use crate::scalar::Scalar;

/// Sub-samples per axis when computing disc coverage of an edge pixel.
const SUPERSAMPLE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub age_min: u32,
    pub age_max: u32,
    pub male_fraction: f64,
    /// Standard deviation of the additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
    /// Disc radius in pixels per year of age.
    pub radius_per_year: f64,
    pub bright_side: f64,
    pub dark_side: f64,
    pub disc_level: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            width: 64,
            height: 64,
            count: 1000,
            age_min: 16,
            age_max: 77,
            male_fraction: 0.75,
            noise: 8.0,
            seed: 0,
            radius_per_year: 0.4,
            bright_side: 110.0,
            dark_side: 70.0,
            disc_level: 220.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Sizing(m));
        if self.width < 8 || self.height < 8 || self.width % 2 != 0 {
            return bad(format!("image {}x{} must be at least 8x8 with even width", self.width, self.height));
        }
        if self.age_min < MIN_AGE || self.age_max > MAX_AGE || self.age_min > self.age_max {
            return bad(format!("age range {}..{} outside {MIN_AGE}..{MAX_AGE}", self.age_min, self.age_max));
        }
        if !(0.0..=1.0).contains(&self.male_fraction) || !(self.noise >= 0.0) {
            return bad("male_fraction must be in [0, 1] and noise non-negative".into());
        }
        let limit = self.width.min(self.height) as f64 / 2.0 - 1.0;
        if !(self.radius_per_year > 0.0) || self.radius_per_year * f64::from(self.age_max) > limit {
            return bad(format!(
                "disc radius {} for age {} does not fit inside {limit} pixels",
                self.radius_per_year * f64::from(self.age_max),
                self.age_max
            ));
        }
        if !(self.disc_level > self.bright_side && self.bright_side > self.dark_side && self.dark_side >= 0.0)
            || self.disc_level > 255.0
        {
            return bad("levels must satisfy 0 <= dark_side < bright_side < disc_level <= 255".into());
        }
        Ok(())
    }

    fn background(&self, gender: Gender) -> (f64, f64) {
        match gender {
            Gender::Male => (self.bright_side, self.dark_side),
            Gender::Female => (self.dark_side, self.bright_side),
        }
    }
}

fn index_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_label<R: Rng>(spec: &SyntheticSpec, index: usize, rng: &mut R) -> LabelRecord {
    let gender = if rng.random::<f64>() < spec.male_fraction {
        Gender::Male
    } else {
        Gender::Female
    };
    let age = rng.random_range(spec.age_min..=spec.age_max);
    let race = match rng.random::<f64>() {
        u if u < 0.77 => Race::Black,
        u if u < 0.98 => Race::White,
        _ => Race::Other,
    };
    LabelRecord {
        subject_id: format!("syn{index:06}"),
        image_path: format!("img_{index:06}.pgm"),
        age,
        gender,
        race,
        dob: None,
    }
}

/// Fraction of pixel `(x, y)` covered by the disc.
fn coverage(x: usize, y: usize, cx: f64, cy: f64, r: f64) -> f64 {
    let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
    let d = px.hypot(py);
    if d <= r - std::f64::consts::FRAC_1_SQRT_2 {
        return 1.0;
    }
    if d >= r + std::f64::consts::FRAC_1_SQRT_2 {
        return 0.0;
    }
    let step = 1.0 / SUPERSAMPLE as f64;
    let mut inside = 0;
    for i in 0..SUPERSAMPLE {
        for j in 0..SUPERSAMPLE {
            let sx = x as f64 + (i as f64 + 0.5) * step - cx;
            let sy = y as f64 + (j as f64 + 0.5) * step - cy;
            if sx * sx + sy * sy <= r * r {
                inside += 1;
            }
        }
    }
    f64::from(inside) / (SUPERSAMPLE * SUPERSAMPLE) as f64
}

fn render<R: Rng>(spec: &SyntheticSpec, label: &LabelRecord, rng: &mut R) -> RawImage {
    let (w, h) = (spec.width, spec.height);
    let (left, right) = spec.background(label.gender);
    let r = spec.radius_per_year * f64::from(label.age);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let normal = Normal::new(0.0, spec.noise).expect("validated noise");
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let bg = if x < w / 2 { left } else { right };
            let c = coverage(x, y, cx, cy, r);
            let mut v = bg + c * (spec.disc_level - bg);
            if spec.noise > 0.0 {
                v += normal.sample(rng);
            }
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    RawImage {
        width: w,
        height: h,
        channels: 1,
        pixels,
    }
}

/// Label and image for one index; both depend only on `(spec, index)`.
pub fn generate_one(spec: &SyntheticSpec, index: usize) -> (LabelRecord, RawImage) {
    let mut rng = index_rng(spec.seed, index);
    let label = draw_label(spec, index, &mut rng);
    let image = render(spec, &label, &mut rng);
    (label, image)
}

/// Labels alone, without rendering.
pub fn generate_labels(spec: &SyntheticSpec) -> Vec<LabelRecord> {
    (0..spec.count)
        .map(|i| draw_label(spec, i, &mut index_rng(spec.seed, i)))
        .collect()
}

/// In-memory samples with the same pixel values the files would hold.
pub fn generate_samples<T: Scalar>(spec: &SyntheticSpec) -> Result<Vec<ImageSample<T>>, DataError> {
    spec.validate()?;
    Ok((0..spec.count)
        .map(|i| {
            let (label, image) = generate_one(spec, i);
            ImageSample {
                pixels: image.to_tensor(),
                label,
            }
        })
        .collect())
}

/// Left-half mean brighter than right-half mean reads as male.
pub fn measure_gender(img: &RawImage) -> Gender {
    let (mut left, mut right) = (0u64, 0u64);
    for row in img.pixels.chunks(img.width) {
        let (l, r) = row.split_at(img.width / 2);
        left += l.iter().map(|&v| u64::from(v)).sum::<u64>();
        right += r.iter().map(|&v| u64::from(v)).sum::<u64>();
    }
    if left > right {
        Gender::Male
    } else {
        Gender::Female
    }
}

/// Disc area from per-pixel coverage above each half's background (read
/// off the top row), converted back to years.
pub fn measure_age(img: &RawImage, spec: &SyntheticSpec) -> u32 {
    let half = img.width / 2;
    let top = &img.pixels[..img.width];
    let mean = |s: &[u8]| s.iter().map(|&v| f64::from(v)).sum::<f64>() / s.len() as f64;
    let (bl, br) = (mean(&top[..half]), mean(&top[half..]));
    let mut area = 0.0;
    for row in img.pixels.chunks(img.width) {
        for (x, &v) in row.iter().enumerate() {
            let bg = if x < half { bl } else { br };
            area += ((f64::from(v) - bg) / (spec.disc_level - bg)).clamp(0.0, 1.0);
        }
    }
    let radius = (area / std::f64::consts::PI).sqrt();
    (radius / spec.radius_per_year).round() as u32
}

/// Renders every label noise-free and checks both oracles recover it.
pub fn self_check(spec: &SyntheticSpec) -> Result<(), DataError> {
    spec.validate()?;
    let clean = SyntheticSpec { noise: 0.0, ..*spec };
    for i in 0..spec.count {
        let (label, image) = generate_one(&clean, i);
        let (g, a) = (measure_gender(&image), measure_age(&image, &clean));
        if g != label.gender || a != label.age {
            return Err(DataError::Degenerate(format!(
                "self-check failed for {}: generated {:?}/{}, measured {g:?}/{a}",
                label.image_path, label.gender, label.age
            )));
        }
    }
    Ok(())
}

/// Self-checks, then writes `count` PGM images and `labels.csv` into `dir`.
pub fn write_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<Vec<LabelRecord>, DataError> {
    self_check(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut labels = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let (label, image) = generate_one(spec, i);
        save_image::<f32>(&dir.join(&label.image_path), &image.to_tensor())?;
        labels.push(label);
    }
    write_labels(&dir.join("labels.csv"), &labels)?;
    Ok(labels)
}

/// Images per (gender, age bin) in the reference roster; bins are
/// 16-19, 20-29, 30-39, 40-49 and 50-77.
pub const ROSTER_COUNTS: [(Gender, [usize; 5]); 2] = [
    (Gender::Male, [6649, 14009, 12436, 10082, 3468]),
    (Gender::Female, [836, 2305, 2924, 1978, 447]),
];
const ROSTER_BINS: [(u32, u32); 5] = [(16, 19), (20, 29), (30, 39), (40, 49), (50, 77)];
/// Black share of the reference roster.
pub const ROSTER_BLACK_FRACTION: f64 = 0.7722;
/// Share of records that are neither black nor white.
pub const ROSTER_OTHER_FRACTION: f64 = 0.013;

/// Label-only roster with the reference marginals. Ages are uniform
/// within each bin and races are assigned by a seeded shuffle.
pub fn reference_roster(seed: u64) -> Vec<LabelRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::new();
    for (gender, counts) in ROSTER_COUNTS {
        for (&n, &(lo, hi)) in counts.iter().zip(&ROSTER_BINS) {
            for _ in 0..n {
                cells.push((gender, rng.random_range(lo..=hi)));
            }
        }
    }
    let n = cells.len();
    let black = (n as f64 * ROSTER_BLACK_FRACTION).round() as usize;
    let other = (n as f64 * ROSTER_OTHER_FRACTION).round() as usize;
    let mut races: Vec<Race> = (0..n)
        .map(|i| match i {
            i if i < black => Race::Black,
            i if i < black + other => Race::Other,
            _ => Race::White,
        })
        .collect();
    races.shuffle(&mut rng);
    cells
        .into_iter()
        .zip(races)
        .enumerate()
        .map(|(i, ((gender, age), race))| LabelRecord {
            subject_id: format!("r{i:05}"),
            image_path: format!("roster/{i:05}.pgm"),
            age,
            gender,
            race,
            dob: None,
        })
        .collect()
}
