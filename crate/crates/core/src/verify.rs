//! Self-verification suites: finite-difference gradient checks and
//! brute-force oracle comparisons, runnable from the command line.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::eval::{compute_eer, compute_roc, expected_counts, generate_scores, Aggregation, LabeledMaps, Protocol, ScoreSet};
use crate::input::InputImage;
use crate::loss::{sstl_backward, sstl_forward, triplet_loss_plain, triplet_loss_plain_backward, LossConfig, TripletMaps};
use crate::map::{FeatureMap, ShiftOffset, ShiftWindow};
use crate::matching::{minimum_shifted_loss, shifted_distance};
use crate::nn::{Architecture, NetworkParameters, StemLayer};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Largest observed error (relative unless stated in `detail`).
    pub max_error: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, tolerance: f64, cases: usize, max_error: f64, detail: String) -> Self {
        Self {
            name,
            passed: max_error < tolerance,
            cases,
            max_error,
            detail,
        }
    }
}

fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FeatureMap<f64> {
    FeatureMap::from_fn(w, h, |_, _| rng.gen_range(-1.0..1.0))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn perturbed(t: &TripletMaps<f64>, which: usize, i: usize, delta: f64) -> TripletMaps<f64> {
    let mut maps = [t.anchor.clone(), t.positive.clone(), t.negative.clone()];
    let (w, h) = maps[which].dims();
    let mut v = maps[which].values().to_vec();
    v[i] += delta;
    maps[which] = FeatureMap::new(w, h, v).expect("finite perturbation");
    let [a, p, n] = maps;
    TripletMaps::new(a, p, n).expect("same dims")
}

/// Central differences of the soft-shifted loss against its analytic
/// gradient on `cases` random triplets. Coordinates whose perturbation flips
/// an argmin offset or the hinge state are skipped.
pub fn gradcheck_sstl(seed: u64, cases: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-6;
    let (mut worst, mut skipped, mut active, mut checked) = (0.0f64, 0usize, 0usize, 0usize);
    for _ in 0..cases {
        let w = rng.gen_range(4..=8);
        let h = rng.gen_range(4..=8);
        let window = ShiftWindow::new(rng.gen_range(0..=5u32).min(w as u32 - 1), rng.gen_range(0..=5u32).min(h as u32 - 1));
        let t = TripletMaps::new(random_map(&mut rng, w, h), random_map(&mut rng, w, h), random_map(&mut rng, w, h))?;
        let cfg = LossConfig {
            margin: rng.gen_range(0.0..0.6),
            window,
            batch_size: rng.gen_range(1..=4),
        };
        let base = sstl_forward(&t, &cfg)?;
        let g = sstl_backward(&t, &cfg)?;
        active += usize::from(g.active);
        for (which, grad) in [&g.d_anchor, &g.d_positive, &g.d_negative].into_iter().enumerate() {
            for i in 0..w * h {
                let plus = sstl_forward(&perturbed(&t, which, i, eps), &cfg)?;
                let minus = sstl_forward(&perturbed(&t, which, i, -eps), &cfg)?;
                let stable = [plus, minus]
                    .iter()
                    .all(|f| f.off_ap == base.off_ap && f.off_an == base.off_an && f.active() == base.active());
                if !stable {
                    skipped += 1;
                    continue;
                }
                let numeric = (plus.loss - minus.loss) / (2.0 * eps) / cfg.batch_size as f64;
                worst = worst.max(rel_err(grad.values()[i], numeric));
                checked += 1;
            }
        }
    }
    Ok(CheckResult::new(
        "sstl_gradient",
        1e-4,
        cases,
        worst,
        format!("{checked} coordinates, {skipped} skipped at kinks, {active}/{cases} active triplets"),
    ))
}

/// Directional derivative of `<d_out, forward(x)>` along a random parameter
/// direction, analytic versus central difference, on a small network.
pub fn gradcheck_network(seed: u64, cases: usize) -> Result<CheckResult> {
    let arch = Architecture {
        stem: vec![
            StemLayer {
                channels: 3,
                kernel: 3,
                stride: 2,
            },
            StemLayer {
                channels: 4,
                kernel: 3,
                stride: 2,
            },
        ],
        residual_blocks: 1,
        ..Architecture::reference()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let params = NetworkParameters::<f64>::init(&arch, seed.wrapping_add(case as u64))?;
        let img = InputImage::from_fn(16, 16, |_, _| rng.gen_range(0.0..1.0))?;
        let d_out = random_map(&mut rng, 4, 4);
        let grads = params.backward(&img, &d_out)?.params;
        let mut dir = params.zeros_like();
        for t in dir.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let analytic: f64 = grads
            .tensors()
            .iter()
            .zip(dir.tensors())
            .flat_map(|(g, d)| g.iter().zip(d).map(|(a, b)| a * b))
            .sum();
        let objective = |step: f64| -> Result<f64> {
            let mut p = params.clone();
            for (t, d) in p.tensors_mut().into_iter().zip(dir.tensors()) {
                t.iter_mut().zip(d).for_each(|(v, &dv)| *v += step * dv);
            }
            let out = p.forward(&img)?;
            Ok(out.values().iter().zip(d_out.values()).map(|(a, b)| a * b).sum())
        };
        let eps = 1e-5;
        let numeric = (objective(eps)? - objective(-eps)?) / (2.0 * eps);
        worst = worst.max(rel_err(analytic, numeric));
    }
    Ok(CheckResult::new("network_gradient", 1e-4, cases, worst, format!("{cases} random directions")))
}

pub fn gradcheck_suite(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![gradcheck_sstl(seed, 100)?, gradcheck_network(seed, 5)?])
}

/// Direct reading of the shifted distance: for each `(x, y)` of the first
/// map, compare with `(x - w, y - h)` of the second when that lies inside.
fn naive_distance(f1: &FeatureMap<f64>, f2: &FeatureMap<f64>, w: i32, h: i32) -> f64 {
    let (width, height) = (f1.width() as i32, f1.height() as i32);
    let (mut sum, mut count) = (0.0, 0usize);
    for y in 0..height {
        for x in 0..width {
            let (x2, y2) = (x - w, y - h);
            if (0..width).contains(&x2) && (0..height).contains(&y2) {
                let d = f1.get(x as usize, y as usize) - f2.get(x2 as usize, y2 as usize);
                sum += d * d;
                count += 1;
            }
        }
    }
    sum / count as f64
}

fn msl_oracle(seed: u64, pairs: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut offset_mismatch = 0;
    for _ in 0..pairs {
        let (w, h) = (rng.gen_range(2..=10), rng.gen_range(2..=10));
        let window = ShiftWindow::new(rng.gen_range(0..w as u32), rng.gen_range(0..h as u32));
        let (a, b) = (random_map(&mut rng, w, h), random_map(&mut rng, w, h));
        let got = minimum_shifted_loss(&a, &b, window)?;
        let mut best = (f64::INFINITY, ShiftOffset::ZERO);
        for dh in -(window.max_h as i32)..=window.max_h as i32 {
            for dw in -(window.max_w as i32)..=window.max_w as i32 {
                let d = naive_distance(&a, &b, dw, dh);
                if d < best.0 {
                    best = (d, ShiftOffset::new(dw, dh));
                }
            }
        }
        worst = worst.max(rel_err(got.distance, best.0));
        offset_mismatch += usize::from(naive_distance(&a, &b, got.best_offset.w, got.best_offset.h) != got.distance);
    }
    Ok(CheckResult::new(
        "msl_oracle",
        1e-12,
        pairs,
        worst + offset_mismatch as f64,
        format!("{offset_mismatch} reported offsets disagree with their distance"),
    ))
}

fn shift_symmetry(seed: u64, cases: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (w, h) = (rng.gen_range(2..=9), rng.gen_range(2..=9));
        let (a, b) = (random_map(&mut rng, w, h), random_map(&mut rng, w, h));
        let off = ShiftOffset::new(rng.gen_range(-(w as i32) + 1..w as i32), rng.gen_range(-(h as i32) + 1..h as i32));
        let forward = shifted_distance(&a, &b, off)?;
        let backward = shifted_distance(&b, &a, -off)?;
        worst = worst.max(rel_err(forward, backward));
    }
    Ok(CheckResult::new("shift_symmetry", 1e-12, cases, worst, "D(a,b;s) vs D(b,a;-s)".into()))
}

fn degenerate_window(seed: u64, cases: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (w, h) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
        let t = TripletMaps::new(random_map(&mut rng, w, h), random_map(&mut rng, w, h), random_map(&mut rng, w, h))?;
        let cfg = LossConfig {
            margin: rng.gen_range(0.0..0.6),
            window: ShiftWindow::NONE,
            batch_size: 3,
        };
        let s = sstl_backward(&t, &cfg)?;
        let p = triplet_loss_plain_backward(&t, &cfg)?;
        worst = worst.max(rel_err(s.loss, triplet_loss_plain(&t, &cfg)?));
        for (x, y) in [(&s.d_anchor, &p.d_anchor), (&s.d_positive, &p.d_positive), (&s.d_negative, &p.d_negative)] {
            for (a, b) in x.values().iter().zip(y.values()) {
                worst = worst.max(rel_err(*a, *b));
            }
        }
    }
    Ok(CheckResult::new("degenerate_window", 1e-10, cases, worst, "window (0,0) vs plain triplet".into()))
}

fn count_law() -> Result<CheckResult> {
    let mut mismatches = 0usize;
    let mut cases = 0;
    for k in 2..=8 {
        for s in 2..=4 {
            let values: Vec<f64> = (0..k * s).map(|i| (i % 7) as f64).collect();
            let maps = LabeledMaps {
                maps: values.iter().map(|&v| FeatureMap::new(1, 1, vec![v])).collect::<Result<Vec<_>>>()?,
                classes: (0..k * s).map(|i| i / s).collect(),
                ids: (0..k * s).map(|i| i.to_string()).collect(),
                class_names: (0..k).map(|c| c.to_string()).collect(),
            };
            let proto = Protocol {
                window: ShiftWindow::NONE,
                aggregation: Aggregation::Min,
            };
            let got = generate_scores(&maps, &proto)?.score_set().counts();
            mismatches += usize::from(got != (k * s, k * s * (k - 1)) || got != expected_counts(k * s, k));
            cases += 1;
        }
    }
    Ok(CheckResult::new("count_law", 0.5, cases, mismatches as f64, "mismatching layouts".into()))
}

fn eer_oracle(seed: u64, cases: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hand = ScoreSet {
        genuine: vec![1.0, 2.0, 3.0],
        imposter: vec![2.0, 3.0, 4.0],
    };
    let mut worst = (compute_eer(&hand)?.eer - 1.0 / 3.0).abs();
    for _ in 0..cases {
        let set = ScoreSet {
            genuine: (0..rng.gen_range(1..200)).map(|_| rng.gen_range(0..50) as f64).collect(),
            imposter: (0..rng.gen_range(1..200)).map(|_| rng.gen_range(20..80) as f64).collect(),
        };
        let roc = compute_roc(&set)?;
        let mut thresholds: Vec<f64> = set.genuine.iter().chain(&set.imposter).copied().collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        for (t, &(far, gar)) in thresholds.iter().zip(&roc[1..]) {
            let bf = set.imposter.iter().filter(|&&x| x <= *t).count() as f64 / set.imposter.len() as f64;
            let bg = set.genuine.iter().filter(|&&x| x <= *t).count() as f64 / set.genuine.len() as f64;
            worst = worst.max((far - bf).abs()).max((gar - bg).abs());
        }
        let eer = compute_eer(&set)?.eer;
        // Must sit within the FAR/FRR span at the crossing pair of thresholds.
        let pts: Vec<(f64, f64)> = roc.iter().map(|&(f, g)| (f, 1.0 - g)).collect();
        let k = pts.iter().position(|&(f, r)| f >= r).expect("ends at FRR 0");
        let (lo, hi) = if k == 0 {
            (pts[0].0, pts[0].0)
        } else {
            (pts[k - 1].0.min(pts[k].1), pts[k - 1].1.max(pts[k].0))
        };
        if eer < lo - 1e-12 || eer > hi + 1e-12 {
            worst = worst.max(1.0);
        }
    }
    Ok(CheckResult::new("eer_roc_oracle", 1e-12, cases, worst, "absolute error vs threshold sweep".into()))
}

fn shape_contract() -> Result<CheckResult> {
    let params = NetworkParameters::<f32>::init(&Architecture::reference(), 0)?;
    let mut bad = 0;
    for side in [64usize, 128] {
        let out = params.forward(&InputImage::from_fn(side, side, |x, y| ((x + y) % 2) as f32)?)?;
        bad += usize::from(out.dims() != (side / 4, side / 4));
    }
    Ok(CheckResult::new("shape_contract", 0.5, 2, bad as f64, "64->16 and 128->32".into()))
}

pub fn selftest_suite(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        msl_oracle(seed, 1000)?,
        shift_symmetry(seed, 500)?,
        degenerate_window(seed, 200)?,
        count_law()?,
        eer_oracle(seed, 100)?,
        shape_contract()?,
    ])
}
