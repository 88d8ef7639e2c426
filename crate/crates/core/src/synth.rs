//! Seeded generator of palmprint-like textures: dark curved creases over a
//! smooth background. Each class owns a latent template; its samples are
//! translated crops of that template with brightness jitter and noise.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, LabeledImage};
use crate::error::{Error, Result};
use crate::input::InputImage;

/// The `[data]` section of experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub width: usize,
    pub height: usize,
    /// Inclusive range of strokes per class template.
    pub strokes: (usize, usize),
    /// Control-point bend as a fraction of stroke length.
    pub curvature: (f64, f64),
    /// Stroke length as a fraction of the image side.
    pub length: (f64, f64),
    /// Stroke width in pixels.
    pub stroke_width: (f64, f64),
    /// Darkening applied at full stroke coverage.
    pub contrast: (f64, f64),
    /// Maximum per-sample translation in pixels along each axis.
    pub max_translation: usize,
    pub noise_sigma: f64,
    /// Multiplicative brightness gain range.
    pub brightness: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            samples_per_class: 8,
            width: 64,
            height: 64,
            strokes: (5, 8),
            curvature: (0.0, 0.35),
            length: (0.25, 0.9),
            stroke_width: (1.0, 2.5),
            contrast: (0.25, 0.6),
            max_translation: 4,
            noise_sigma: 0.03,
            brightness: (0.85, 1.15),
            seed: 0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo >= min && lo <= hi) {
        return Err(Error::BadSpec(format!("{name} range ({lo}, {hi}) is invalid")));
    }
    Ok(())
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.samples_per_class < 2 {
            return Err(Error::BadSpec("need at least 2 classes and 2 samples per class".into()));
        }
        if self.width == 0 || self.height == 0 || self.width % 4 != 0 || self.height % 4 != 0 {
            return Err(Error::BadSpec(format!(
                "image size {}x{} must be non-zero and divisible by 4",
                self.width, self.height
            )));
        }
        if self.strokes.0 == 0 || self.strokes.0 > self.strokes.1 {
            return Err(Error::BadSpec("strokes range must be non-empty and start above 0".into()));
        }
        if 2 * self.max_translation >= self.width.min(self.height) {
            return Err(Error::BadSpec("max_translation must be below half the image side".into()));
        }
        check_range("curvature", self.curvature, 0.0)?;
        check_range("length", self.length, 0.0)?;
        check_range("stroke_width", self.stroke_width, 0.0)?;
        check_range("contrast", self.contrast, 0.0)?;
        check_range("brightness", self.brightness, 0.0)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::BadSpec("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Translations must stay compensable by a matcher searching `max_shift`
    /// feature-map pixels (one feature pixel spans four image pixels).
    pub fn check_window(&self, max_shift: u32) -> Result<()> {
        if self.max_translation > 4 * max_shift as usize {
            return Err(Error::BadSpec(format!(
                "max_translation {} exceeds window capacity {} (4 x {max_shift})",
                self.max_translation,
                4 * max_shift
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Stroke {
    p0: (f64, f64),
    p1: (f64, f64),
    p2: (f64, f64),
    width: f64,
    contrast: f64,
}

impl Stroke {
    fn polyline(&self, segments: usize) -> Vec<(f64, f64)> {
        (0..=segments)
            .map(|i| {
                let t = i as f64 / segments as f64;
                let u = 1.0 - t;
                (
                    u * u * self.p0.0 + 2.0 * u * t * self.p1.0 + t * t * self.p2.0,
                    u * u * self.p0.1 + 2.0 * u * t * self.p1.1 + t * t * self.p2.1,
                )
            })
            .collect()
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Renders a class template on a canvas padded by the translation budget.
fn render_template(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (usize, usize, Vec<f64>) {
    let pad = spec.max_translation;
    let (cw, ch) = (spec.width + 2 * pad, spec.height + 2 * pad);
    let side = spec.width.min(spec.height) as f64;

    let base = rng.gen_range(0.55..0.75);
    let (gx, gy) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
    let mut canvas: Vec<f64> = (0..ch)
        .flat_map(|y| {
            (0..cw).map(move |x| base + gx * (x as f64 / cw as f64 - 0.5) + gy * (y as f64 / ch as f64 - 0.5))
        })
        .collect();

    let count = rng.gen_range(spec.strokes.0..=spec.strokes.1);
    for _ in 0..count {
        let len = uniform(rng, spec.length) * side;
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let center = (rng.gen_range(0.0..cw as f64), rng.gen_range(0.0..ch as f64));
        let (dx, dy) = (angle.cos() * len / 2.0, angle.sin() * len / 2.0);
        let bend = uniform(rng, spec.curvature) * len * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let stroke = Stroke {
            p0: (center.0 - dx, center.1 - dy),
            p1: (center.0 - angle.sin() * bend, center.1 + angle.cos() * bend),
            p2: (center.0 + dx, center.1 + dy),
            width: uniform(rng, spec.stroke_width),
            contrast: uniform(rng, spec.contrast),
        };
        let line = stroke.polyline(32);
        for y in 0..ch {
            for x in 0..cw {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                let d = line
                    .windows(2)
                    .map(|s| segment_distance(p, s[0], s[1]))
                    .fold(f64::INFINITY, f64::min);
                let coverage = (stroke.width / 2.0 + 0.5 - d).clamp(0.0, 1.0);
                canvas[y * cw + x] -= stroke.contrast * coverage;
            }
        }
    }
    (cw, ch, canvas)
}

fn class_images(spec: &SyntheticSpec, class: usize) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(class as u64 + 1);
    let (cw, _, canvas) = render_template(spec, &mut rng);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let jitter = spec.max_translation as i64;
    (0..spec.samples_per_class)
        .map(|s| {
            let ox = (jitter + rng.gen_range(-jitter..=jitter)) as usize;
            let oy = (jitter + rng.gen_range(-jitter..=jitter)) as usize;
            let gain = uniform(&mut rng, spec.brightness);
            let image = InputImage::from_fn(spec.width, spec.height, |x, y| {
                let mut v = canvas[(y + oy) * cw + x + ox] * gain;
                if spec.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                ((v.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32
            })
            .expect("generated pixels lie in [0, 1]");
            LabeledImage {
                class,
                sample: format!("{s:02}"),
                image,
            }
        })
        .collect()
}

/// `classes x samples_per_class` images; identical for identical specs.
pub fn generate(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let per_class: Vec<Vec<LabeledImage>> = (0..spec.classes).into_par_iter().map(|c| class_images(spec, c)).collect();
    Ok(LabeledDataset {
        class_names: (0..spec.classes).map(|c| format!("{c:03}")).collect(),
        images: per_class.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mse(a: &InputImage, b: &InputImage) -> f64 {
        a.pixels()
            .iter()
            .zip(b.pixels())
            .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
            .sum::<f64>()
            / a.pixels().len() as f64
    }

    #[test]
    fn no_jitter_no_noise_gives_identical_samples() {
        let spec = SyntheticSpec {
            classes: 3,
            samples_per_class: 4,
            width: 32,
            height: 32,
            max_translation: 0,
            noise_sigma: 0.0,
            brightness: (1.0, 1.0),
            ..SyntheticSpec::default()
        };
        let ds = generate(&spec).unwrap();
        for group in ds.by_class() {
            for &i in &group[1..] {
                assert_eq!(ds.images[i].image, ds.images[group[0]].image);
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let spec = SyntheticSpec {
            classes: 4,
            samples_per_class: 3,
            width: 32,
            height: 32,
            seed: 77,
            ..SyntheticSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = generate(&SyntheticSpec { seed: 78, ..spec.clone() }).unwrap();
        assert_ne!(generate(&spec).unwrap(), other);
    }

    #[test]
    fn within_class_closer_than_between() {
        let spec = SyntheticSpec {
            seed: 5,
            ..SyntheticSpec::default()
        };
        let ds = generate(&spec).unwrap();
        assert_eq!(ds.len(), 160);
        let (mut within, mut nw, mut between, mut nb) = (0.0, 0, 0.0, 0);
        for i in 0..ds.len() {
            for j in i + 1..ds.len() {
                let d = mse(&ds.images[i].image, &ds.images[j].image);
                if ds.images[i].class == ds.images[j].class {
                    within += d;
                    nw += 1;
                } else {
                    between += d;
                    nb += 1;
                }
            }
        }
        assert!((within / nw as f64) < between / nb as f64);
    }

    #[test]
    fn rejects_bad_specs() {
        let ok = SyntheticSpec::default();
        assert!(generate(&SyntheticSpec { classes: 1, ..ok.clone() }).is_err());
        assert!(generate(&SyntheticSpec { width: 30, ..ok.clone() }).is_err());
        assert!(generate(&SyntheticSpec { contrast: (0.5, 0.1), ..ok.clone() }).is_err());
        assert!(generate(&SyntheticSpec { max_translation: 32, ..ok.clone() }).is_err());
        assert!(ok.check_window(1).is_ok());
        assert!(ok.check_window(0).is_err());
    }
}
