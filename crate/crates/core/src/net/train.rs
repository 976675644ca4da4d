use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::augment::{augment, LabeledFace};
use super::cascade::{CascadeSpec, LandmarkCascade, NetRole, EN1_LANDMARKS, NM1_LANDMARKS, NUM_NETWORKS};
use super::network::{accumulate_gradient, net_forward, NetworkSpec, NetworkWeights};
use super::patch::extract_patch;
use super::tensor::Tensor;
use super::NetError;
use crate::geometry::{BoundingBox, Landmark, Point2};
use crate::synth::random_face_sample;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainHyper {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self { batch_size: 16, learning_rate: 0.01, momentum: 0.9, epochs: 20, seed: 0 }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), NetError> {
        let ok = self.batch_size > 0
            && self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.momentum);
        if ok {
            Ok(())
        } else {
            Err(NetError::InvalidHyper)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: Tensor,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub weights: NetworkWeights,
    /// Mean minibatch loss of each epoch, measured before each update.
    pub loss_history: Vec<f64>,
}

/// Mean per-sample MSE over `data`.
pub fn dataset_loss(spec: &NetworkSpec, weights: &NetworkWeights, data: &[TrainSample]) -> Result<f64, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let mut total = 0.0;
    for s in data {
        let out = net_forward(spec, weights, &s.input)?;
        total += super::layers::mse_loss(&out, &s.target)?;
    }
    Ok(total / data.len() as f64)
}

/// Minibatch SGD with momentum: `v = momentum * v - lr * mean_grad`,
/// `w += v`. The sample order is reshuffled every epoch from `hyper.seed`.
pub fn sgd_train(
    spec: &NetworkSpec,
    init: &NetworkWeights,
    data: &[TrainSample],
    hyper: &TrainHyper,
) -> Result<TrainReport, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    hyper.validate()?;
    if !init.matches(spec) {
        return Err(NetError::WeightsMismatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut weights = init.clone();
    let mut velocity = NetworkWeights::zeros(spec)?;
    let mut grads = NetworkWeights::zeros(spec)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(hyper.batch_size) {
            grads.scale(0.0);
            let mut loss = 0.0;
            for &i in batch {
                loss += accumulate_gradient(spec, &weights, &data[i].input, &data[i].target, &mut grads)?;
            }
            let n = batch.len() as f64;
            velocity.scale(hyper.momentum);
            velocity.axpy(-hyper.learning_rate / n, &grads);
            weights.axpy(1.0, &velocity);
            epoch_loss += loss / n;
            batches += 1;
        }
        history.push(epoch_loss / batches as f64);
    }
    if !weights.is_finite() {
        return Err(NetError::Diverged);
    }
    Ok(TrainReport { weights, loss_history: history })
}

/// How synthetic training data for a cascade is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CascadeTrainConfig {
    /// Base faces; each is expanded by `augment` into six.
    pub base_faces: usize,
    pub min_face: f64,
    pub max_face: f64,
    /// Level-1 crop jitter: shift up to this fraction of the face side in
    /// each axis, and scale by up to this fraction.
    pub box_jitter: f64,
    /// Local patch center offset from the true landmark, as a fraction of
    /// the face short side, per level.
    pub level2_shift: f64,
    pub level3_shift: f64,
    /// Draws per augmented face for each network.
    pub draws_per_face: usize,
    pub level1: TrainHyper,
    pub local: TrainHyper,
    pub seed: u64,
}

impl Default for CascadeTrainConfig {
    fn default() -> Self {
        Self {
            base_faces: 80,
            min_face: 40.0,
            max_face: 180.0,
            box_jitter: 0.08,
            level2_shift: 0.07,
            level3_shift: 0.035,
            draws_per_face: 2,
            level1: TrainHyper { batch_size: 16, learning_rate: 0.02, momentum: 0.9, epochs: 18, seed: 0 },
            local: TrainHyper { batch_size: 16, learning_rate: 0.02, momentum: 0.9, epochs: 12, seed: 0 },
            seed: 0,
        }
    }
}

/// Rendered faces with every augmentation applied.
pub fn build_face_pool(cfg: &CascadeTrainConfig) -> Vec<LabeledFace> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
    let mut pool = Vec::with_capacity(cfg.base_faces * 6);
    for _ in 0..cfg.base_faces {
        let s = random_face_sample(&mut rng, cfg.min_face, cfg.max_face);
        pool.extend(augment(&s.image, &s.face_box, &s.landmarks));
    }
    pool
}

fn jittered_box<R: Rng>(rng: &mut R, b: &BoundingBox, jitter: f64) -> BoundingBox {
    if jitter <= 0.0 {
        return *b;
    }
    let c = b.center();
    let dx = rng.gen_range(-jitter..jitter) * b.w;
    let dy = rng.gen_range(-jitter..jitter) * b.h;
    let s = 1.0 + rng.gen_range(-jitter..jitter);
    BoundingBox::from_center(c.x + dx, c.y + dy, b.w * s, b.h * s)
}

fn normalized(p: Point2, region: &BoundingBox) -> [f64; 2] {
    [(p.x - region.x) / region.w, (p.y - region.y) / region.h]
}

/// Draw `rng`-driven training samples for network `index` of `spec`.
pub fn network_samples<R: Rng>(
    spec: &CascadeSpec,
    index: usize,
    pool: &[LabeledFace],
    cfg: &CascadeTrainConfig,
    rng: &mut R,
) -> Result<Vec<TrainSample>, NetError> {
    let role = NetRole::from_index(index).ok_or(NetError::InvalidSpec)?;
    let net = &spec.networks[index];
    let mut out = Vec::with_capacity(pool.len() * cfg.draws_per_face);
    for face in pool {
        for _ in 0..cfg.draws_per_face {
            let b = jittered_box(rng, &face.face_box, cfg.box_jitter);
            let single;
            let (region, labels): (BoundingBox, &[Landmark]) = match role {
                NetRole::F1 => (b, &Landmark::ALL),
                NetRole::EN1 => (spec.upper_region(&b), &EN1_LANDMARKS),
                NetRole::NM1 => (spec.lower_region(&b), &NM1_LANDMARKS),
                NetRole::Local { level, landmark, .. } => {
                    let shift = if level == 2 { cfg.level2_shift } else { cfg.level3_shift };
                    let s = face.face_box.short_side();
                    let p = face.landmarks.get(landmark);
                    let c = Point2::new(p.x + rng.gen_range(-shift..shift) * s, p.y + rng.gen_range(-shift..shift) * s);
                    single = [landmark];
                    (CascadeSpec::local_region(c, &face.face_box, spec.half_size(level)), &single)
                }
            };
            let input = extract_patch(&face.image, &region, net.input_h, net.input_w)?;
            let target = labels.iter().flat_map(|lm| normalized(face.landmarks.get(*lm), &region)).collect();
            out.push(TrainSample { input, target });
        }
    }
    Ok(out)
}

/// Seed for network `index`, distinct per network and reproducible.
pub fn network_seed(base: u64, index: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 * 0x1000_0001 + 1)
}

/// Generate data for and train one network of the cascade from `pool`.
pub fn train_network(
    spec: &CascadeSpec,
    index: usize,
    pool: &[LabeledFace],
    cfg: &CascadeTrainConfig,
) -> Result<TrainReport, NetError> {
    let seed = network_seed(cfg.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = network_samples(spec, index, pool, cfg, &mut rng)?;
    let net = &spec.networks[index];
    let init = NetworkWeights::init(net, seed)?;
    let level = NetRole::from_index(index).map(NetRole::level).unwrap_or(1);
    let hyper = TrainHyper { seed, ..if level == 1 { cfg.level1 } else { cfg.local } };
    sgd_train(net, &init, &data, &hyper)
}

/// Train all 23 networks one after another.
pub fn train_cascade(spec: &CascadeSpec, cfg: &CascadeTrainConfig) -> Result<(LandmarkCascade, Vec<TrainReport>), NetError> {
    spec.validate()?;
    let pool = build_face_pool(cfg);
    let reports = (0..NUM_NETWORKS).map(|i| train_network(spec, i, &pool, cfg)).collect::<Result<Vec<_>, _>>()?;
    let cascade = LandmarkCascade::new(spec.clone(), reports.iter().map(|r| r.weights.clone()).collect())?;
    Ok((cascade, reports))
}
