use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::network::{net_forward, LayerSpec, NetworkSpec, NetworkWeights};
use super::patch::extract_patch_anywhere;
use super::NetError;
use crate::geometry::{BoundingBox, Landmark, LandmarkSet, Point2};
use crate::image::GrayImage;

/// Number of networks in a cascade: three at level 1, two per landmark at
/// each of levels 2 and 3.
pub const NUM_NETWORKS: usize = 23;

/// What a network in the canonical order does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetRole {
    /// Whole face, all five landmarks.
    F1,
    /// Upper face: eyes and nose.
    EN1,
    /// Lower face: nose and mouth corners.
    NM1,
    /// One landmark on a local patch. `level` is 2 or 3, `member` 1 or 2.
    Local { level: u8, landmark: Landmark, member: u8 },
}

/// Landmarks predicted by EN1 and NM1, in output order.
pub const EN1_LANDMARKS: [Landmark; 3] = [Landmark::LeftEye, Landmark::RightEye, Landmark::Nose];
pub const NM1_LANDMARKS: [Landmark; 3] = [Landmark::Nose, Landmark::LeftMouth, Landmark::RightMouth];

impl NetRole {
    /// Role of network `index` in the canonical order: F1, EN1, NM1, then
    /// for level 2 and level 3, for each landmark, its two networks.
    pub fn from_index(index: usize) -> Option<NetRole> {
        match index {
            0 => Some(NetRole::F1),
            1 => Some(NetRole::EN1),
            2 => Some(NetRole::NM1),
            3..=22 => {
                let k = index - 3;
                Some(NetRole::Local {
                    level: 2 + (k / 10) as u8,
                    landmark: Landmark::ALL[(k % 10) / 2],
                    member: 1 + (k % 2) as u8,
                })
            }
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            NetRole::F1 => 0,
            NetRole::EN1 => 1,
            NetRole::NM1 => 2,
            NetRole::Local { level, landmark, member } => {
                3 + (level as usize - 2) * 10 + landmark.index() * 2 + (member as usize - 1)
            }
        }
    }

    /// Names such as `F1`, `EN1`, `LE21` (left eye, level 2, first network).
    pub fn name(self) -> String {
        match self {
            NetRole::F1 => "F1".into(),
            NetRole::EN1 => "EN1".into(),
            NetRole::NM1 => "NM1".into(),
            NetRole::Local { level, landmark, member } => format!("{}{}{}", landmark.short_name(), level, member),
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            NetRole::F1 => 10,
            NetRole::EN1 | NetRole::NM1 => 6,
            NetRole::Local { .. } => 2,
        }
    }

    pub fn level(self) -> u8 {
        match self {
            NetRole::Local { level, .. } => level,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CascadeSpec {
    /// Canonical order, see `NetRole::from_index`.
    pub networks: Vec<NetworkSpec>,
    /// EN1 sees this top fraction of the face box.
    pub upper_fraction: f64,
    /// NM1 sees this bottom fraction of the face box.
    pub lower_fraction: f64,
    /// Local patch half-sides as fractions of the face box short side.
    pub level2_half_size: f64,
    pub level3_half_size: f64,
}

/// Layer stack for a level-1 network: four convolutions with pools after
/// the first three, then two fully connected layers.
fn level1_layers(channels: [usize; 4], kernels: [usize; 4], hidden: usize, out: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for k in 0..4 {
        layers.push(LayerSpec::conv(channels[k], kernels[k]));
        layers.push(LayerSpec::Relu);
        if k < 3 {
            layers.push(LayerSpec::pool2());
        }
    }
    layers.push(LayerSpec::fc(hidden));
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::fc(out));
    layers
}

/// Three convolutions with pools after the first two, then one fully
/// connected output layer.
fn local_layers(channels: [usize; 3], kernels: [usize; 3]) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for k in 0..3 {
        layers.push(LayerSpec::conv(channels[k], kernels[k]));
        layers.push(LayerSpec::Relu);
        if k < 2 {
            layers.push(LayerSpec::pool2());
        }
    }
    layers.push(LayerSpec::fc(2));
    layers
}

/// Input sizes shared by both configurations: 39x39 for F1, 31 rows by 39
/// columns for EN1/NM1, 15x15 for local patches.
pub const F1_INPUT: (usize, usize) = (39, 39);
pub const HALF_FACE_INPUT: (usize, usize) = (31, 39);
pub const LOCAL_INPUT: (usize, usize) = (15, 15);

impl CascadeSpec {
    fn build(l1_channels: [usize; 4], hidden: usize, local_channels: [usize; 3]) -> Self {
        let networks = (0..NUM_NETWORKS)
            .map(|i| {
                let role = NetRole::from_index(i).unwrap();
                let (input, layers) = match role {
                    NetRole::F1 => (F1_INPUT, level1_layers(l1_channels, [4, 3, 3, 2], hidden, 10)),
                    NetRole::EN1 | NetRole::NM1 => {
                        (HALF_FACE_INPUT, level1_layers(l1_channels, [4, 3, 3, 2], hidden, 6))
                    }
                    NetRole::Local { .. } => (LOCAL_INPUT, local_layers(local_channels, [4, 3, 2])),
                };
                NetworkSpec { name: role.name(), input_h: input.0, input_w: input.1, layers, output_dim: role.output_dim() }
            })
            .collect();
        Self { networks, upper_fraction: 0.6, lower_fraction: 0.6, level2_half_size: 0.16, level3_half_size: 0.09 }
    }

    /// Full-size architecture: convolutions of 20/40/60/80 channels and a
    /// 120-unit hidden layer at level 1, 20/40/60 at levels 2 and 3.
    pub fn default_architecture() -> Self {
        Self::build([20, 40, 60, 80], 120, [20, 40, 60])
    }

    /// Same layer structure with far fewer channels, small enough to train
    /// on a CPU in a few minutes.
    pub fn toy() -> Self {
        Self::build([6, 10, 12, 16], 32, [8, 12, 16])
    }

    pub fn role(&self, index: usize) -> NetRole {
        NetRole::from_index(index).expect("index below NUM_NETWORKS")
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.networks.len() != NUM_NETWORKS {
            return Err(NetError::InvalidSpec);
        }
        let fractions_ok = [self.upper_fraction, self.lower_fraction, self.level2_half_size, self.level3_half_size]
            .iter()
            .all(|f| f.is_finite() && *f > 0.0)
            && self.upper_fraction <= 1.0
            && self.lower_fraction <= 1.0;
        if !fractions_ok {
            return Err(NetError::InvalidSpec);
        }
        let is_conv = |l: &LayerSpec| matches!(l, LayerSpec::Conv { .. });
        let is_pool = |l: &LayerSpec| matches!(l, LayerSpec::MaxPool { .. });
        let is_fc = |l: &LayerSpec| matches!(l, LayerSpec::FullyConnected { .. });
        for (i, net) in self.networks.iter().enumerate() {
            let role = self.role(i);
            net.validate()?;
            if net.name != role.name() || net.output_dim != role.output_dim() {
                return Err(NetError::InvalidSpec);
            }
            let counts = (net.count(is_conv), net.count(is_pool), net.count(is_fc));
            let expected = if role.level() == 1 { (4, 3, 2) } else { (3, 2, 1) };
            if counts != expected {
                return Err(NetError::InvalidSpec);
            }
        }
        Ok(())
    }

    pub fn upper_region(&self, face: &BoundingBox) -> BoundingBox {
        BoundingBox { h: face.h * self.upper_fraction, ..*face }
    }

    pub fn lower_region(&self, face: &BoundingBox) -> BoundingBox {
        let h = face.h * self.lower_fraction;
        BoundingBox { y: face.bottom() - h, h, ..*face }
    }

    /// Square patch centered on `p` with half-side `half_fraction` times the
    /// face short side.
    pub fn local_region(p: Point2, face: &BoundingBox, half_fraction: f64) -> BoundingBox {
        let half = half_fraction * face.short_side();
        BoundingBox::from_center(p.x, p.y, 2.0 * half, 2.0 * half)
    }

    pub fn half_size(&self, level: u8) -> f64 {
        if level == 2 {
            self.level2_half_size
        } else {
            self.level3_half_size
        }
    }
}

/// Estimates after each level, in frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeLevels {
    pub level1: LandmarkSet,
    pub level2: LandmarkSet,
    pub level3: LandmarkSet,
}

fn run_net(
    img: &GrayImage,
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    region: &BoundingBox,
) -> Result<Vec<Point2>, NetError> {
    let patch = extract_patch_anywhere(img, region, spec.input_h, spec.input_w)?;
    let out = net_forward(spec, weights, &patch)?;
    Ok(out
        .chunks_exact(2)
        .map(|uv| Point2::new(region.x + uv[0] * region.w, region.y + uv[1] * region.h))
        .collect())
}

/// Coarse-to-fine landmark prediction on `face_box`, returning every level.
pub fn cascade_predict_levels(
    img: &GrayImage,
    face_box: &BoundingBox,
    spec: &CascadeSpec,
    weights: &[NetworkWeights],
) -> Result<CascadeLevels, NetError> {
    if !face_box.is_valid() {
        return Err(NetError::DegenerateRegion);
    }
    if weights.len() != NUM_NETWORKS || spec.networks.len() != NUM_NETWORKS {
        return Err(NetError::WeightsMismatch);
    }

    let mut sum = [Point2::default(); 5];
    let mut count = [0usize; 5];
    let mut add = |lm: Landmark, p: Point2| {
        sum[lm.index()].x += p.x;
        sum[lm.index()].y += p.y;
        count[lm.index()] += 1;
    };
    let f1 = run_net(img, &spec.networks[0], &weights[0], face_box)?;
    for (lm, p) in Landmark::ALL.iter().zip(f1) {
        add(*lm, p);
    }
    let en1 = run_net(img, &spec.networks[1], &weights[1], &spec.upper_region(face_box))?;
    for (lm, p) in EN1_LANDMARKS.iter().zip(en1) {
        add(*lm, p);
    }
    let nm1 = run_net(img, &spec.networks[2], &weights[2], &spec.lower_region(face_box))?;
    for (lm, p) in NM1_LANDMARKS.iter().zip(nm1) {
        add(*lm, p);
    }
    let mut level1 = [Point2::default(); 5];
    for k in 0..5 {
        let n = count[k] as f64;
        level1[k] = Point2::new(sum[k].x / n, sum[k].y / n);
    }
    let level1 = LandmarkSet::new(level1);

    // Local patches are centered on the previous estimate pulled into the
    // frame.
    let (mx, my) = ((img.width() - 1) as f64, (img.height() - 1) as f64);
    let refine = |prev: &LandmarkSet, level: u8| -> Result<LandmarkSet, NetError> {
        let mut out = *prev;
        for lm in Landmark::ALL {
            let p = prev.get(lm);
            let center = Point2::new(p.x.clamp(0.0, mx), p.y.clamp(0.0, my));
            let region = CascadeSpec::local_region(center, face_box, spec.half_size(level));
            let mut acc = Point2::default();
            for member in 1..=2u8 {
                let i = NetRole::Local { level, landmark: lm, member }.index();
                let p = run_net(img, &spec.networks[i], &weights[i], &region)?[0];
                acc.x += 0.5 * p.x;
                acc.y += 0.5 * p.y;
            }
            out.points[lm.index()] = acc;
        }
        Ok(out)
    };
    let level2 = refine(&level1, 2)?;
    let level3 = refine(&level2, 3)?;
    Ok(CascadeLevels { level1, level2, level3 })
}

/// Final landmarks, clamped to the pixel grid of the frame.
pub fn cascade_predict(
    img: &GrayImage,
    face_box: &BoundingBox,
    spec: &CascadeSpec,
    weights: &[NetworkWeights],
) -> Result<LandmarkSet, NetError> {
    let levels = cascade_predict_levels(img, face_box, spec, weights)?;
    let (mx, my) = ((img.width() - 1) as f64, (img.height() - 1) as f64);
    Ok(levels.level3.map(|p| Point2::new(p.x.clamp(0.0, mx), p.y.clamp(0.0, my))))
}

/// A cascade specification with matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkCascade {
    spec: CascadeSpec,
    weights: Vec<NetworkWeights>,
}

impl LandmarkCascade {
    pub fn new(spec: CascadeSpec, weights: Vec<NetworkWeights>) -> Result<Self, NetError> {
        spec.validate()?;
        if weights.len() != NUM_NETWORKS
            || !weights.iter().zip(&spec.networks).all(|(w, s)| w.matches(s) && w.is_finite())
        {
            return Err(NetError::WeightsMismatch);
        }
        Ok(Self { spec, weights })
    }

    /// Freshly initialized weights, network `i` seeded with `seed + i`.
    pub fn init(spec: CascadeSpec, seed: u64) -> Result<Self, NetError> {
        let weights = spec
            .networks
            .iter()
            .enumerate()
            .map(|(i, s)| NetworkWeights::init(s, seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(spec, weights)
    }

    pub fn spec(&self) -> &CascadeSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[NetworkWeights] {
        &self.weights
    }

    pub fn into_parts(self) -> (CascadeSpec, Vec<NetworkWeights>) {
        (self.spec, self.weights)
    }

    pub fn predict(&self, img: &GrayImage, face_box: &BoundingBox) -> Result<LandmarkSet, NetError> {
        cascade_predict(img, face_box, &self.spec, &self.weights)
    }

    pub fn predict_levels(&self, img: &GrayImage, face_box: &BoundingBox) -> Result<CascadeLevels, NetError> {
        cascade_predict_levels(img, face_box, &self.spec, &self.weights)
    }
}

/// Weights whose every output is 0.5, the center of the network's crop.
pub fn center_predicting_weights(spec: &CascadeSpec) -> Result<Vec<NetworkWeights>, NetError> {
    spec.networks
        .iter()
        .map(|s| {
            let mut w = NetworkWeights::zeros(s)?;
            if let Some(last) = w.layers.iter_mut().rev().find(|l| !l.bias.is_empty()) {
                last.bias.fill(0.5);
            }
            Ok(w)
        })
        .collect()
}
