//! Triplet sampling, optimizers and the training loop.
//!
//! One parameter set embeds anchor, positive and negative alike; their
//! gradients are summed into a single update per batch.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::loss::{sstl_backward, triplet_loss_plain_backward, LossConfig, TripletGradients, TripletMaps};
use crate::map::ShiftWindow;
use crate::matching::match_score;
use crate::nn::{Architecture, NetworkParameters};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Soft-shifted triplet loss over the configured window.
    Sstl,
    /// Plain triplet loss on unshifted maps.
    Triplet,
}

/// The `[train]` section of experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub margin: f64,
    pub window: ShiftWindow,
    pub loss: LossKind,
    pub batch_size: usize,
    pub epochs: usize,
    /// Triplets drawn per epoch; 0 means one per training image.
    pub triplets_per_epoch: usize,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Halve-style step decay; 0 keeps the rate constant.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    /// When > 0, each negative is the closest of this many candidates.
    pub hard_negative_candidates: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            margin: 0.2,
            window: ShiftWindow::new(5, 5),
            loss: LossKind::Sstl,
            batch_size: 16,
            epochs: 30,
            triplets_per_epoch: 0,
            optimizer: OptimizerKind::Adam,
            momentum: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            lr_decay_every: 10,
            lr_decay_factor: 0.5,
            hard_negative_candidates: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be >= 0");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("adam_epsilon must be > 0 and momentum in [0, 1)");
        }
        if self.lr_decay_every > 0 && !(self.lr_decay_factor > 0.0) {
            return bad("lr_decay_factor must be > 0");
        }
        Ok(())
    }

    /// Window the loss and the evaluation matcher actually use.
    pub fn effective_window(&self) -> ShiftWindow {
        match self.loss {
            LossKind::Sstl => self.window,
            LossKind::Triplet => ShiftWindow::NONE,
        }
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_every {
            0 => self.learning_rate,
            every => self.learning_rate * self.lr_decay_factor.powi((epoch / every) as i32),
        }
    }

    fn loss_config(&self, batch_size: usize) -> LossConfig {
        LossConfig {
            margin: self.margin,
            window: self.effective_window(),
            batch_size,
        }
    }
}

/// Dataset indices of one triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletIndices {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

pub type TripletBatch = Vec<TripletIndices>;

/// Uniform anchor class among classes with two or more samples, uniform
/// distinct anchor/positive within it, uniform negative class and sample.
pub fn sample_triplets(ds: &LabeledDataset, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<TripletBatch> {
    let groups = ds.by_class();
    let populated: Vec<usize> = (0..groups.len()).filter(|&c| !groups[c].is_empty()).collect();
    if populated.len() < 2 {
        return Err(Error::InsufficientClasses(populated.len()));
    }
    let anchors: Vec<usize> = populated.iter().copied().filter(|&c| groups[c].len() >= 2).collect();
    if anchors.is_empty() {
        return Err(Error::InsufficientSamples("no class has two samples".into()));
    }
    let batch = (0..batch_size)
        .map(|_| {
            let class = *anchors.choose(rng).expect("non-empty");
            let members = &groups[class];
            let a = rng.gen_range(0..members.len());
            let mut p = rng.gen_range(0..members.len() - 1);
            if p >= a {
                p += 1;
            }
            let anchor_pos = populated.iter().position(|&c| c == class).expect("anchor class is populated");
            let mut pos = rng.gen_range(0..populated.len() - 1);
            if pos >= anchor_pos {
                pos += 1;
            }
            let neg_class = populated[pos];
            let negative = *groups[neg_class].choose(rng).expect("populated");
            TripletIndices {
                anchor: members[a],
                positive: members[p],
                negative,
            }
        })
        .collect();
    Ok(batch)
}

/// Replaces each negative with the closest (by shifted matching) of
/// `candidates` random other-class samples, the current negative included.
pub fn mine_hard_negatives<T: Scalar>(
    params: &NetworkParameters<T>,
    ds: &LabeledDataset,
    batch: &mut TripletBatch,
    candidates: usize,
    window: ShiftWindow,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if candidates <= 1 {
        return Ok(());
    }
    for t in batch.iter_mut() {
        let class = ds.images[t.anchor].class;
        let mut pool = vec![t.negative];
        for _ in 1..candidates {
            let i = rng.gen_range(0..ds.len());
            if ds.images[i].class != class {
                pool.push(i);
            }
        }
        let anchor = params.forward(&ds.images[t.anchor].image)?;
        let scores = pool
            .par_iter()
            .map(|&i| match_score(&anchor, &params.forward(&ds.images[i].image)?, window))
            .collect::<Result<Vec<f64>>>()?;
        let best = (0..pool.len())
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .expect("non-empty pool");
        t.negative = pool[best];
    }
    Ok(())
}

/// First-order optimizer with its running state.
#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Sgd {
        momentum: f64,
        velocity: Option<NetworkParameters<T>>,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step: i32,
        first: Option<NetworkParameters<T>>,
        second: Option<NetworkParameters<T>>,
    },
}

impl<T: Scalar> Optimizer<T> {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        match cfg.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd {
                momentum: cfg.momentum,
                velocity: None,
            },
            OptimizerKind::Adam => Optimizer::Adam {
                beta1: cfg.adam_beta1,
                beta2: cfg.adam_beta2,
                epsilon: cfg.adam_epsilon,
                step: 0,
                first: None,
                second: None,
            },
        }
    }

    pub fn step(&mut self, params: &mut NetworkParameters<T>, grads: &NetworkParameters<T>, lr: f64) {
        match self {
            Optimizer::Sgd { momentum, velocity } => {
                if *momentum == 0.0 {
                    let lr = T::of(lr);
                    for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                        p.iter_mut().zip(g).for_each(|(p, &g)| *p -= lr * g);
                    }
                    return;
                }
                let vel = velocity.get_or_insert_with(|| grads.zeros_like());
                let (mu, lr) = (T::of(*momentum), T::of(lr));
                for ((p, v), g) in params.tensors_mut().into_iter().zip(vel.tensors_mut()).zip(grads.tensors()) {
                    for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                        *v = mu * *v + g;
                        *p -= lr * *v;
                    }
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
                step,
                first,
                second,
            } => {
                *step += 1;
                let m_all = first.get_or_insert_with(|| grads.zeros_like());
                let v_all = second.get_or_insert_with(|| grads.zeros_like());
                let (b1, b2) = (T::of(*beta1), T::of(*beta2));
                let c1 = 1.0 - beta1.powi(*step);
                let c2 = 1.0 - beta2.powi(*step);
                let step_size = T::of(lr * c2.sqrt() / c1);
                let eps = T::of(*epsilon * c2.sqrt());
                for (((p, m), v), g) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(m_all.tensors_mut())
                    .zip(v_all.tensors_mut())
                    .zip(grads.tensors())
                {
                    for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        *p -= step_size * *m / (v.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub active_fraction: f64,
}

struct TripletContribution<T> {
    loss: f64,
    active: bool,
    grads: Option<NetworkParameters<T>>,
}

fn triplet_contribution<T: Scalar>(
    params: &NetworkParameters<T>,
    ds: &LabeledDataset,
    t: TripletIndices,
    cfg: &TrainConfig,
    batch_size: usize,
) -> Result<TripletContribution<T>> {
    let (a, ca) = params.forward_cached(&ds.images[t.anchor].image)?;
    let (p, cp) = params.forward_cached(&ds.images[t.positive].image)?;
    let (n, cn) = params.forward_cached(&ds.images[t.negative].image)?;
    let maps = TripletMaps::new(a, p, n)?;
    let lc = cfg.loss_config(batch_size);
    let g: TripletGradients<T> = match cfg.loss {
        LossKind::Sstl => sstl_backward(&maps, &lc)?,
        LossKind::Triplet => triplet_loss_plain_backward(&maps, &lc)?,
    };
    if !g.loss.is_finite() {
        return Err(Error::NumericalDivergence(format!("non-finite triplet loss {}", g.loss)));
    }
    if !g.active {
        return Ok(TripletContribution {
            loss: g.loss,
            active: false,
            grads: None,
        });
    }
    let mut grads = params.zeros_like();
    for (cache, d) in [(&ca, &g.d_anchor), (&cp, &g.d_positive), (&cn, &g.d_negative)] {
        params.backward_cached(cache, d, &mut grads, false)?;
    }
    Ok(TripletContribution {
        loss: g.loss,
        active: true,
        grads: Some(grads),
    })
}

/// Mean loss over `batch` and the gradient of that mean.
pub fn batch_gradients<T: Scalar>(
    params: &NetworkParameters<T>,
    ds: &LabeledDataset,
    batch: &[TripletIndices],
    cfg: &TrainConfig,
) -> Result<(StepOutcome, NetworkParameters<T>)> {
    if batch.is_empty() {
        return Err(Error::InsufficientSamples("empty triplet batch".into()));
    }
    let parts = batch
        .par_iter()
        .map(|&t| triplet_contribution(params, ds, t, cfg, batch.len()))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = params.zeros_like();
    let (mut loss, mut active) = (0.0, 0usize);
    for part in &parts {
        loss += part.loss;
        active += usize::from(part.active);
        if let Some(g) = &part.grads {
            grads.add_assign(g);
        }
    }
    let outcome = StepOutcome {
        loss: loss / batch.len() as f64,
        active_fraction: active as f64 / batch.len() as f64,
    };
    if !outcome.loss.is_finite() || grads.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::NumericalDivergence("non-finite loss or gradient".into()));
    }
    Ok((outcome, grads))
}

/// One optimizer update from the batch-mean loss gradient.
pub fn train_step<T: Scalar>(
    params: &mut NetworkParameters<T>,
    optimizer: &mut Optimizer<T>,
    ds: &LabeledDataset,
    batch: &[TripletIndices],
    cfg: &TrainConfig,
    lr: f64,
) -> Result<StepOutcome> {
    let (outcome, grads) = batch_gradients(params, ds, batch, cfg)?;
    optimizer.step(params, &grads, lr);
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub active_fraction: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: NetworkParameters<T>,
    pub log: Vec<EpochRecord>,
}

/// Trains a freshly initialized network (seeded by `cfg.seed`).
pub fn train<T: Scalar>(ds: &LabeledDataset, arch: &Architecture, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    let params = NetworkParameters::init(arch, cfg.seed)?;
    train_from(params, ds, cfg)
}

pub fn train_from<T: Scalar>(
    mut params: NetworkParameters<T>,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    ds.validate_for_triplets()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut optimizer = Optimizer::from_config(cfg);
    let per_epoch = if cfg.triplets_per_epoch == 0 {
        ds.len()
    } else {
        cfg.triplets_per_epoch
    };
    let batches = per_epoch.div_ceil(cfg.batch_size);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let (mut loss, mut active) = (0.0, 0.0);
        for _ in 0..batches {
            let mut batch = sample_triplets(ds, cfg.batch_size, &mut rng)?;
            mine_hard_negatives(&params, ds, &mut batch, cfg.hard_negative_candidates, cfg.effective_window(), &mut rng)?;
            let out = train_step(&mut params, &mut optimizer, ds, &batch, cfg, lr)?;
            loss += out.loss;
            active += out.active_fraction;
        }
        log.push(EpochRecord {
            epoch: epoch + 1,
            loss: loss / batches as f64,
            active_fraction: active / batches as f64,
            lr,
        });
    }
    Ok(TrainOutcome { params, log })
}

/// `epoch,loss,active_fraction,lr` with round-trip float formatting.
pub fn write_log_csv(log: &[EpochRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss", "active_fraction", "lr"])?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            r.loss.to_string(),
            r.active_fraction.to_string(),
            r.lr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_log_csv(log: &[EpochRecord], path: &Path) -> Result<()> {
    write_log_csv(log, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledImage;
    use crate::input::InputImage;
    use crate::nn::StemLayer;

    fn tiny_arch() -> Architecture {
        Architecture {
            stem: vec![
                StemLayer {
                    channels: 4,
                    kernel: 3,
                    stride: 2,
                },
                StemLayer {
                    channels: 6,
                    kernel: 3,
                    stride: 2,
                },
            ],
            residual_blocks: 1,
            ..Architecture::reference()
        }
    }

    fn dataset(classes: usize, samples: usize, size: usize) -> LabeledDataset {
        let mut ds = LabeledDataset::default();
        for c in 0..classes {
            ds.class_names.push(format!("{c:03}"));
            for s in 0..samples {
                let image = InputImage::from_fn(size, size, |x, y| {
                    let v = ((x * (c + 1) + y * (c + 2) + s) % 11) as f32 / 10.0;
                    v.clamp(0.0, 1.0)
                })
                .unwrap();
                ds.images.push(LabeledImage {
                    class: c,
                    sample: format!("{s:02}"),
                    image,
                });
            }
        }
        ds
    }

    #[test]
    fn forced_structure_with_two_by_two() {
        let ds = dataset(2, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let b = sample_triplets(&ds, 1, &mut rng).unwrap();
            let t = b[0];
            let ca = ds.images[t.anchor].class;
            assert_ne!(t.anchor, t.positive);
            assert_eq!(ds.images[t.positive].class, ca);
            assert_ne!(ds.images[t.negative].class, ca);
        }
    }

    #[test]
    fn class_constraint_holds_exhaustively() {
        let ds = dataset(20, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut neg_classes = std::collections::BTreeSet::new();
        for _ in 0..200 {
            for t in sample_triplets(&ds, 16, &mut rng).unwrap() {
                let c = ds.images[t.anchor].class;
                assert_eq!(ds.images[t.positive].class, c);
                assert_ne!(t.anchor, t.positive);
                assert_ne!(ds.images[t.negative].class, c);
                neg_classes.insert(ds.images[t.negative].class);
            }
        }
        assert_eq!(neg_classes.len(), 20);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let ds = dataset(5, 3, 4);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            (0..5).map(|_| sample_triplets(&ds, 8, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sampling_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_triplets(&dataset(1, 4, 4), 1, &mut rng), Err(Error::InsufficientClasses(1))));
        assert!(matches!(sample_triplets(&dataset(3, 1, 4), 1, &mut rng), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn inactive_batch_leaves_sgd_parameters() {
        let ds = dataset(3, 2, 16);
        let cfg = TrainConfig {
            margin: 0.0,
            window: ShiftWindow::new(1, 1),
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::default()
        };
        // Identical images everywhere: both distances are 0, so with m = 0 every hinge is off.
        let mut same = ds.clone();
        let first = same.images[0].image.clone();
        same.images.iter_mut().for_each(|i| i.image = first.clone());
        let mut params = NetworkParameters::<f32>::init(&tiny_arch(), 1).unwrap();
        let before = params.clone();
        let mut opt = Optimizer::from_config(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = sample_triplets(&same, 4, &mut rng).unwrap();
        let out = train_step(&mut params, &mut opt, &same, &batch, &cfg, 0.1).unwrap();
        assert_eq!(out.active_fraction, 0.0);
        assert_eq!(out.loss, 0.0);
        assert_eq!(params, before);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let cfg = TrainConfig::default();
        let mut params = NetworkParameters::<f32>::init(&tiny_arch(), 2).unwrap();
        let before = params.clone();
        let mut opt = Optimizer::from_config(&cfg);
        opt.step(&mut params, &before.zeros_like(), 0.01);
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        let mut params = NetworkParameters::<f64>::init(&tiny_arch(), 2).unwrap();
        let before = params.clone();
        let mut grads = params.zeros_like();
        grads.head.bias[0] = 3.0;
        grads.head.weight[0] = -0.5;
        let mut opt = Optimizer::from_config(&cfg);
        opt.step(&mut params, &grads, 0.01);
        assert!((params.head.bias[0] - (before.head.bias[0] - 0.01)).abs() < 1e-9);
        assert!((params.head.weight[0] - (before.head.weight[0] + 0.01)).abs() < 1e-9);
    }

    #[test]
    fn single_triplet_overfit_with_sgd() {
        let ds = dataset(2, 2, 16);
        let cfg = TrainConfig {
            margin: 1.0,
            window: ShiftWindow::new(1, 1),
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::default()
        };
        let batch = vec![TripletIndices {
            anchor: 0,
            positive: 1,
            negative: 2,
        }];
        let mut params = NetworkParameters::<f64>::init(&tiny_arch(), 5).unwrap();
        let mut opt = Optimizer::from_config(&cfg);
        let losses: Vec<f64> = (0..50)
            .map(|_| train_step(&mut params, &mut opt, &ds, &batch, &cfg, 0.05).unwrap().loss)
            .collect();
        let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(rises <= 5, "{losses:?}");
        assert!(losses[49] < losses[0]);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = dataset(3, 2, 16);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train::<f32>(&ds, &tiny_arch(), &cfg).unwrap();
        assert_eq!(out.params, NetworkParameters::init(&tiny_arch(), cfg.seed).unwrap());
        assert!(out.log.is_empty());
    }

    #[test]
    fn training_is_reproducible() {
        let ds = dataset(3, 3, 16);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            window: ShiftWindow::new(1, 1),
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train::<f32>(&ds, &tiny_arch(), &cfg).unwrap();
        let b = train::<f32>(&ds, &tiny_arch(), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 2);
        let mut buf = Vec::new();
        write_log_csv(&a.log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,loss,active_fraction,lr\n1,"));
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate_at(0), 0.001);
        assert_eq!(cfg.learning_rate_at(9), 0.001);
        assert_eq!(cfg.learning_rate_at(10), 0.0005);
        assert_eq!(cfg.learning_rate_at(25), 0.00025);
        let constant = TrainConfig {
            lr_decay_every: 0,
            ..cfg
        };
        assert_eq!(constant.learning_rate_at(100), 0.001);
    }

    #[test]
    fn hard_negative_mining_keeps_constraint() {
        let ds = dataset(4, 3, 16);
        let params = NetworkParameters::<f32>::init(&tiny_arch(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut batch = sample_triplets(&ds, 6, &mut rng).unwrap();
        mine_hard_negatives(&params, &ds, &mut batch, 4, ShiftWindow::new(1, 1), &mut rng).unwrap();
        for t in batch {
            assert_ne!(ds.images[t.negative].class, ds.images[t.anchor].class);
        }
    }
}
