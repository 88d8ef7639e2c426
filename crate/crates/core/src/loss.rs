//! Triplet losses on feature maps: the plain hinge triplet loss and the
//! soft-shifted variant whose distances are minimum shifted losses, each with
//! an analytic backward pass.
//!
//! Per-triplet values are returned unscaled; gradients carry the `1 / N`
//! batch factor so that summing them over a batch differentiates the batch
//! mean.

use crate::error::{Error, Result};
use crate::map::{common_region, shift_map, FeatureMap, ShiftOffset, ShiftWindow};
use crate::matching::minimum_shifted_loss;
use crate::scalar::Scalar;

/// Anchor, positive (same class) and negative (other class) embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletMaps<T> {
    pub anchor: FeatureMap<T>,
    pub positive: FeatureMap<T>,
    pub negative: FeatureMap<T>,
}

impl<T: Scalar> TripletMaps<T> {
    pub fn new(anchor: FeatureMap<T>, positive: FeatureMap<T>, negative: FeatureMap<T>) -> Result<Self> {
        anchor.ensure_same_dims(&positive)?;
        anchor.ensure_same_dims(&negative)?;
        Ok(Self {
            anchor,
            positive,
            negative,
        })
    }

    fn check(&self) -> Result<()> {
        self.anchor.ensure_same_dims(&self.positive)?;
        self.anchor.ensure_same_dims(&self.negative)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub margin: f64,
    pub window: ShiftWindow,
    pub batch_size: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            window: ShiftWindow::new(5, 5),
            batch_size: 1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be >= 0, got {}", self.margin)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-triplet loss term and the gradients of `term / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGradients<T> {
    pub loss: f64,
    pub d_anchor: FeatureMap<T>,
    pub d_positive: FeatureMap<T>,
    pub d_negative: FeatureMap<T>,
    pub active: bool,
}

impl<T: Scalar> TripletGradients<T> {
    fn inactive(loss: f64, width: usize, height: usize) -> Self {
        Self {
            loss,
            d_anchor: FeatureMap::zeros(width, height),
            d_positive: FeatureMap::zeros(width, height),
            d_negative: FeatureMap::zeros(width, height),
            active: false,
        }
    }
}

/// Forward result of the soft-shifted loss for one triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SstlForward {
    pub loss: f64,
    pub dist_ap: f64,
    pub dist_an: f64,
    pub off_ap: ShiftOffset,
    pub off_an: ShiftOffset,
}

impl SstlForward {
    pub fn active(&self) -> bool {
        self.loss > 0.0
    }
}

fn mean_sq_diff<T: Scalar>(a: &FeatureMap<T>, b: &FeatureMap<T>) -> f64 {
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&p, &q)| {
            let d = p.as_f64() - q.as_f64();
            d * d
        })
        .sum();
    sum / a.len() as f64
}

/// `[mean|a - p|^2 - mean|a - n|^2 + m]_+` over the full maps.
pub fn triplet_loss_plain<T: Scalar>(t: &TripletMaps<T>, cfg: &LossConfig) -> Result<f64> {
    t.check()?;
    cfg.validate()?;
    let ap = mean_sq_diff(&t.anchor, &t.positive);
    let an = mean_sq_diff(&t.anchor, &t.negative);
    Ok((ap - an + cfg.margin).max(0.0))
}

/// Classical triplet gradients for [`triplet_loss_plain`].
pub fn triplet_loss_plain_backward<T: Scalar>(
    t: &TripletMaps<T>,
    cfg: &LossConfig,
) -> Result<TripletGradients<T>> {
    let loss = triplet_loss_plain(t, cfg)?;
    let (w, h) = t.anchor.dims();
    if loss <= 0.0 {
        return Ok(TripletGradients::inactive(loss, w, h));
    }
    let k = 2.0 / (cfg.batch_size as f64 * (w * h) as f64);
    let (a, p, n) = (t.anchor.values(), t.positive.values(), t.negative.values());
    let grid = |f: &dyn Fn(usize) -> f64| {
        FeatureMap::new(w, h, (0..w * h).map(|i| T::of(f(i))).collect()).expect("finite gradient")
    };
    let f = |v: &[T], i: usize| v[i].as_f64();
    Ok(TripletGradients {
        loss,
        d_anchor: grid(&|i| k * (f(n, i) - f(p, i))),
        d_positive: grid(&|i| -k * (f(a, i) - f(p, i))),
        d_negative: grid(&|i| k * (f(a, i) - f(n, i))),
        active: true,
    })
}

/// `[MSL(a, p) - MSL(a, n) + m]_+` together with the two argmin offsets.
pub fn sstl_forward<T: Scalar>(t: &TripletMaps<T>, cfg: &LossConfig) -> Result<SstlForward> {
    t.check()?;
    cfg.validate()?;
    let ap = minimum_shifted_loss(&t.anchor, &t.positive, cfg.window)?;
    let an = minimum_shifted_loss(&t.anchor, &t.negative, cfg.window)?;
    Ok(SstlForward {
        loss: (ap.distance - an.distance + cfg.margin).max(0.0),
        dist_ap: ap.distance,
        dist_an: an.distance,
        off_ap: ap.best_offset,
        off_an: an.best_offset,
    })
}

/// Gradient of `D(anchor, other; off)` with respect to `other`, times `scale`.
///
/// Nonzero only on the relocated common region, where cell `(x - w, y - h)`
/// receives `-2 (a[x, y] - other[x - w, y - h]) / |C|`.
fn second_map_gradient<T: Scalar>(
    anchor: &FeatureMap<T>,
    other: &FeatureMap<T>,
    off: ShiftOffset,
    scale: f64,
) -> Result<FeatureMap<T>> {
    let (w, h) = anchor.dims();
    let region = common_region(w, h, off)?;
    let k = -2.0 * scale / region.cardinality() as f64;
    let mut grad = vec![T::zero(); w * h];
    for (x, y) in region.iter() {
        let (ox, oy) = ((x as i64 - off.w as i64) as usize, (y as i64 - off.h as i64) as usize);
        let diff = anchor.get(x, y).as_f64() - other.get(ox, oy).as_f64();
        grad[oy * w + ox] = T::of(k * diff);
    }
    FeatureMap::new(w, h, grad)
}

/// Analytic gradients of the soft-shifted loss, argmin offsets held fixed.
///
/// The negative map enters the loss with a minus sign, so its gradient is the
/// negated pair gradient. The anchor gradient is assembled from the other two
/// by relocating them back with the inverse offsets.
pub fn sstl_backward<T: Scalar>(t: &TripletMaps<T>, cfg: &LossConfig) -> Result<TripletGradients<T>> {
    let fwd = sstl_forward(t, cfg)?;
    let (w, h) = t.anchor.dims();
    if !fwd.active() {
        return Ok(TripletGradients::inactive(fwd.loss, w, h));
    }
    let scale = 1.0 / cfg.batch_size as f64;
    let d_positive = second_map_gradient(&t.anchor, &t.positive, fwd.off_ap, scale)?;
    let d_negative = second_map_gradient(&t.anchor, &t.negative, fwd.off_an, -scale)?;

    let back_p = shift_map(&d_positive, -fwd.off_ap)?;
    let back_n = shift_map(&d_negative, -fwd.off_an)?;
    let d_anchor = FeatureMap::new(
        w,
        h,
        back_p
            .values()
            .iter()
            .zip(back_n.values())
            .map(|(&p, &n)| -(p + n))
            .collect(),
    )?;
    Ok(TripletGradients {
        loss: fwd.loss,
        d_anchor,
        d_positive,
        d_negative,
        active: true,
    })
}

/// Mean loss and per-triplet gradients over a batch; `cfg.batch_size` is
/// overridden with the actual batch length.
pub fn sstl_batch<T: Scalar>(
    batch: &[TripletMaps<T>],
    cfg: &LossConfig,
) -> Result<(f64, Vec<TripletGradients<T>>)> {
    if batch.is_empty() {
        return Err(Error::InsufficientSamples("empty triplet batch".into()));
    }
    let cfg = LossConfig {
        batch_size: batch.len(),
        ..*cfg
    };
    let grads = batch
        .iter()
        .map(|t| sstl_backward(t, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let mean = grads.iter().map(|g| g.loss).sum::<f64>() / batch.len() as f64;
    Ok((mean, grads))
}
