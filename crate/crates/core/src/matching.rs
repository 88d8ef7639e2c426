//! Shifted mean-squared distance and the minimum shifted loss matcher.
//!
//! `D(F1, F2; w, h)` pairs `F1[x, y]` with `F2[x - w, y - h]` for every
//! `(x, y)` in the common region of `(w, h)`. This is the same quantity as
//! comparing `shift_map(F1, (w, h))` against `F2` on the relocated region, or
//! `F1` against `shift_map(F2, (-w, -h))` on the common region itself.
//! A map compared with its own shifted copy `shift_map(F, s)` is therefore at
//! distance zero for offset `s`.

use std::cmp::Ordering;

use crate::error::Result;
use crate::map::{common_region, FeatureMap, ShiftOffset, ShiftWindow};
use crate::scalar::Scalar;

/// Outcome of a minimum shifted loss search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub distance: f64,
    pub best_offset: ShiftOffset,
    pub region_cardinality: usize,
}

/// Mean squared difference over the overlap, accumulated in f64.
pub fn shifted_distance<T: Scalar>(
    f1: &FeatureMap<T>,
    f2: &FeatureMap<T>,
    off: ShiftOffset,
) -> Result<f64> {
    f1.ensure_same_dims(f2)?;
    let region = common_region(f1.width(), f1.height(), off)?;
    Ok(distance_unchecked(f1, f2, off, &region_bounds(&region)))
}

type Bounds = (usize, usize, usize, usize);

fn region_bounds(r: &crate::map::CommonRegion) -> Bounds {
    (r.x_min, r.x_max, r.y_min, r.y_max)
}

#[inline]
fn distance_unchecked<T: Scalar>(
    f1: &FeatureMap<T>,
    f2: &FeatureMap<T>,
    off: ShiftOffset,
    &(x_min, x_max, y_min, y_max): &Bounds,
) -> f64 {
    let width = f1.width();
    let run = x_max - x_min;
    let (a, b) = (f1.values(), f2.values());
    let mut sum = 0.0f64;
    for y in y_min..y_max {
        let y2 = (y as i64 - off.h as i64) as usize;
        let x2 = (x_min as i64 - off.w as i64) as usize;
        let row1 = &a[y * width + x_min..][..run];
        let row2 = &b[y2 * width + x2..][..run];
        for (&p, &q) in row1.iter().zip(row2) {
            let d = p.as_f64() - q.as_f64();
            sum += d * d;
        }
    }
    sum / (run * (y_max - y_min)) as f64
}

/// Orders candidates by distance, then `|w| + |h|`, then `h`, then `w`.
fn candidate_order(a: (f64, ShiftOffset), b: (f64, ShiftOffset)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.l1().cmp(&b.1.l1()))
        .then(a.1.h.cmp(&b.1.h))
        .then(a.1.w.cmp(&b.1.w))
}

/// Exhaustive minimum of [`shifted_distance`] over the window.
pub fn minimum_shifted_loss<T: Scalar>(
    f1: &FeatureMap<T>,
    f2: &FeatureMap<T>,
    window: ShiftWindow,
) -> Result<MatchResult> {
    f1.ensure_same_dims(f2)?;
    window.validate_for(f1.width(), f1.height())?;
    let mut best: Option<(f64, ShiftOffset, usize)> = None;
    for off in window.offsets() {
        let region = common_region(f1.width(), f1.height(), off)?;
        let d = distance_unchecked(f1, f2, off, &region_bounds(&region));
        let better = match best {
            None => true,
            Some((bd, boff, _)) => candidate_order((d, off), (bd, boff)) == Ordering::Less,
        };
        if better {
            best = Some((d, off, region.cardinality()));
        }
    }
    let (distance, best_offset, region_cardinality) = best.expect("window has at least one offset");
    Ok(MatchResult {
        distance,
        best_offset,
        region_cardinality,
    })
}

/// Test-time matching score; lower means more likely the same identity.
pub fn match_score<T: Scalar>(
    f1: &FeatureMap<T>,
    f2: &FeatureMap<T>,
    window: ShiftWindow,
) -> Result<f64> {
    Ok(minimum_shifted_loss(f1, f2, window)?.distance)
}
