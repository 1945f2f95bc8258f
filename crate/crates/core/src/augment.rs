//! Signal augmentations: four elementary transforms and the weak/strong
//! pipelines built from them.
//!
//! Weak augmentation applies one transform chosen uniformly. Strong
//! augmentation draws a queue of `T ~ U{1..=strong_max_transforms}` distinct
//! transforms in random order and applies them one after another.

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::signal::SignalMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DropoutMode {
    /// The window is zeroed on every channel.
    #[default]
    AllChannels,
    /// The window is zeroed on one uniformly chosen channel.
    SingleChannel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// Per-channel sigma = `noise_sigma` × that channel's standard deviation.
    #[default]
    RelativeToChannelStd,
    /// Sigma = `noise_sigma` on every entry.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub dropout_max_frac: f64,
    pub dropout_mode: DropoutMode,
    pub noise_sigma: f64,
    pub noise_scale: NoiseScale,
    pub strong_max_transforms: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            dropout_max_frac: 0.5,
            dropout_mode: DropoutMode::AllChannels,
            noise_sigma: 0.1,
            noise_scale: NoiseScale::RelativeToChannelStd,
            strong_max_transforms: 4,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dropout_max_frac > 0.0 && self.dropout_max_frac <= 1.0) {
            return Err(Error::Config(format!(
                "dropout_max_frac must lie in (0, 1], got {}",
                self.dropout_max_frac
            )));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            )));
        }
        if !(1..=4).contains(&self.strong_max_transforms) {
            return Err(Error::Config(format!(
                "strong_max_transforms must lie in [1, 4], got {}",
                self.strong_max_transforms
            )));
        }
        Ok(())
    }
}

/// The four elementary transforms, numbered 1..=4 in queue notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transform {
    SignalDropout,
    TemporalFlip,
    ChannelReorganization,
    RandomNoise,
}

impl Transform {
    pub const ALL: [Transform; 4] = [
        Transform::SignalDropout,
        Transform::TemporalFlip,
        Transform::ChannelReorganization,
        Transform::RandomNoise,
    ];

    pub fn id(self) -> u8 {
        match self {
            Transform::SignalDropout => 1,
            Transform::TemporalFlip => 2,
            Transform::ChannelReorganization => 3,
            Transform::RandomNoise => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Transform> {
        Transform::ALL.get((id as usize).checked_sub(1)?).copied()
    }

    pub fn apply(
        self,
        x: &SignalMatrix,
        rng: &mut RandomStream,
        cfg: &AugmentConfig,
    ) -> SignalMatrix {
        match self {
            Transform::SignalDropout => signal_dropout(x, rng, cfg),
            Transform::TemporalFlip => temporal_flip(x),
            Transform::ChannelReorganization => channel_reorganization(x, rng),
            Transform::RandomNoise => random_noise(x, rng, cfg),
        }
    }
}

/// Draws `(start, width)` of a dropout window for a signal of `length` samples.
pub fn draw_dropout_window(
    length: usize,
    rng: &mut RandomStream,
    cfg: &AugmentConfig,
) -> (usize, usize) {
    let max_w = ((cfg.dropout_max_frac * length as f64).floor() as usize).clamp(1, length);
    let w = rng.uniform_inclusive(1, max_w);
    let start = rng.uniform_inclusive(0, length - w);
    (start, w)
}

/// Zeroes `[start, start + width)` on the given channel, or on all channels.
pub fn zero_window(
    x: &SignalMatrix,
    start: usize,
    width: usize,
    channel: Option<usize>,
) -> SignalMatrix {
    let mut out = x.clone();
    let end = (start + width).min(x.length());
    let data = out.data_mut();
    for (c, mut row) in data.rows_mut().into_iter().enumerate() {
        if channel.is_none_or(|only| only == c) {
            row.slice_mut(ndarray::s![start..end]).fill(0.0);
        }
    }
    out
}

pub fn signal_dropout(
    x: &SignalMatrix,
    rng: &mut RandomStream,
    cfg: &AugmentConfig,
) -> SignalMatrix {
    let (start, w) = draw_dropout_window(x.length(), rng, cfg);
    let channel = match cfg.dropout_mode {
        DropoutMode::AllChannels => None,
        DropoutMode::SingleChannel => Some(rng.below(x.channels())),
    };
    zero_window(x, start, w, channel)
}

pub fn temporal_flip(x: &SignalMatrix) -> SignalMatrix {
    let mut out = x.clone();
    out.data_mut().invert_axis(Axis(1));
    // invert_axis only flips strides; materialize standard layout
    let owned = out.data().as_standard_layout().into_owned();
    SignalMatrix::new(owned).expect("flip preserves validity")
}

/// Uniformly random row permutation (Fisher-Yates over row indices);
/// output row `i` is input row `perm[i]`.
pub fn draw_channel_permutation(channels: usize, rng: &mut RandomStream) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..channels).collect();
    rng.shuffle(&mut perm);
    perm
}

pub fn channel_reorganization(x: &SignalMatrix, rng: &mut RandomStream) -> SignalMatrix {
    if x.channels() < 2 {
        log::warn!("channel reorganization on a single-channel signal is the identity");
        return x.clone();
    }
    let perm = draw_channel_permutation(x.channels(), rng);
    let data = x.data().select(Axis(0), &perm);
    SignalMatrix::new(data).expect("permutation preserves validity")
}

pub fn random_noise(x: &SignalMatrix, rng: &mut RandomStream, cfg: &AugmentConfig) -> SignalMatrix {
    let sigmas: Vec<f64> = match cfg.noise_scale {
        NoiseScale::Absolute => vec![cfg.noise_sigma; x.channels()],
        NoiseScale::RelativeToChannelStd => x
            .data()
            .rows()
            .into_iter()
            .map(|r| cfg.noise_sigma * r.std(0.0))
            .collect(),
    };
    let mut out: Array2<f64> = x.data().clone();
    for (mut row, sigma) in out.rows_mut().into_iter().zip(sigmas) {
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(rng.rng_mut());
            *v += sigma * z;
        }
    }
    SignalMatrix::new(out).expect("finite noise keeps signal finite")
}

pub fn weak_augment_traced(
    x: &SignalMatrix,
    rng: &mut RandomStream,
    cfg: &AugmentConfig,
) -> (SignalMatrix, Transform) {
    let t = Transform::ALL[rng.below(4)];
    (t.apply(x, rng, cfg), t)
}

pub fn weak_augment(x: &SignalMatrix, rng: &mut RandomStream, cfg: &AugmentConfig) -> SignalMatrix {
    weak_augment_traced(x, rng, cfg).0
}

/// Random queue of `T ~ U{1..=strong_max_transforms}` distinct transforms.
pub fn draw_strong_queue(rng: &mut RandomStream, cfg: &AugmentConfig) -> Vec<Transform> {
    let t = rng.uniform_inclusive(1, cfg.strong_max_transforms.clamp(1, 4));
    let mut pool = Transform::ALL;
    // partial Fisher-Yates: the first t slots are a uniform ordered sample
    for i in 0..t {
        let j = rng.uniform_inclusive(i, 3);
        pool.swap(i, j);
    }
    pool[..t].to_vec()
}

pub fn apply_queue(
    x: &SignalMatrix,
    queue: &[Transform],
    rng: &mut RandomStream,
    cfg: &AugmentConfig,
) -> SignalMatrix {
    queue
        .iter()
        .fold(x.clone(), |acc, t| t.apply(&acc, rng, cfg))
}

pub fn strong_augment_traced(
    x: &SignalMatrix,
    rng: &mut RandomStream,
    cfg: &AugmentConfig,
) -> (SignalMatrix, Vec<Transform>) {
    let queue = draw_strong_queue(rng, cfg);
    (apply_queue(x, &queue, rng, cfg), queue)
}

pub fn strong_augment(
    x: &SignalMatrix,
    rng: &mut RandomStream,
    cfg: &AugmentConfig,
) -> SignalMatrix {
    strong_augment_traced(x, rng, cfg).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn ramp(channels: usize, length: usize) -> SignalMatrix {
        SignalMatrix::new(Array2::from_shape_fn((channels, length), |(c, t)| {
            (c * 1000 + t + 1) as f64
        }))
        .unwrap()
    }

    #[test]
    fn full_window_zeroes_everything() {
        let x = ramp(3, 8);
        let out = zero_window(&x, 0, 8, None);
        assert!(out.data().iter().all(|&v| v == 0.0));
        // L = 1 forces w = L through the random path too
        let one = ramp(3, 1);
        let cfg = AugmentConfig {
            dropout_max_frac: 1.0,
            ..Default::default()
        };
        let out = signal_dropout(&one, &mut RandomStream::new(0), &cfg);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_window_changes_one_column() {
        let x = ramp(4, 10);
        let out = zero_window(&x, 6, 1, None);
        let changed = x
            .data()
            .iter()
            .zip(out.data().iter())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 4);
    }

    #[test]
    fn dropout_matches_seeded_replay() {
        let x = ramp(2, 40);
        let cfg = AugmentConfig::default();
        let out = signal_dropout(&x, &mut RandomStream::new(42), &cfg);
        // replay the generator by hand: width then start
        let mut replay = RandomStream::new(42);
        let w = replay.uniform_inclusive(1, 20);
        let start = replay.uniform_inclusive(0, 40 - w);
        for t in 0..40 {
            let inside = t >= start && t < start + w;
            for c in 0..2 {
                if inside {
                    assert_eq!(out.data()[[c, t]], 0.0);
                } else {
                    assert_eq!(out.data()[[c, t]], x.data()[[c, t]]);
                }
            }
        }
    }

    #[test]
    fn single_channel_dropout_touches_one_row() {
        let x = ramp(5, 30);
        let cfg = AugmentConfig {
            dropout_mode: DropoutMode::SingleChannel,
            ..Default::default()
        };
        let out = signal_dropout(&x, &mut RandomStream::new(3), &cfg);
        let rows_changed = (0..5)
            .filter(|&c| out.data().row(c) != x.data().row(c))
            .count();
        assert_eq!(rows_changed, 1);
    }

    #[test]
    fn flip_examples() {
        let x = SignalMatrix::new(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(
            temporal_flip(&x).data(),
            &array![[3.0, 2.0, 1.0], [6.0, 5.0, 4.0]]
        );
        assert_eq!(temporal_flip(&temporal_flip(&x)), x);
        let c = SignalMatrix::new(Array2::from_elem((3, 5), 2.5)).unwrap();
        assert_eq!(temporal_flip(&c), c);
    }

    #[test]
    fn two_channel_reorg_is_identity_or_swap() {
        let x = ramp(2, 5);
        let swapped = x.data().select(Axis(0), &[1, 0]);
        for seed in 0..20 {
            let out = channel_reorganization(&x, &mut RandomStream::new(seed));
            assert!(out == x || out.data() == swapped);
        }
    }

    #[test]
    fn reorg_matches_fisher_yates_replay() {
        let x = ramp(12, 4);
        let out = channel_reorganization(&x, &mut RandomStream::new(17));
        let mut replay = RandomStream::new(17);
        let mut perm: Vec<usize> = (0..12).collect();
        for i in (1..12).rev() {
            let j = replay.uniform_inclusive(0, i);
            perm.swap(i, j);
        }
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(out.data().row(i), x.data().row(p));
        }
    }

    #[test]
    fn single_channel_reorg_is_identity() {
        let x = ramp(1, 6);
        assert_eq!(channel_reorganization(&x, &mut RandomStream::new(1)), x);
    }

    #[test]
    fn noise_moments() {
        let x = SignalMatrix::new(Array2::zeros((10, 20_000))).unwrap();
        let sigma = 0.3;
        let cfg = AugmentConfig {
            noise_sigma: sigma,
            noise_scale: NoiseScale::Absolute,
            ..Default::default()
        };
        let out = random_noise(&x, &mut RandomStream::new(5), &cfg);
        let n = out.data().len() as f64;
        let mean = out.data().sum() / n;
        let sd = (out.data().mapv(|v| (v - mean) * (v - mean)).sum() / (n - 1.0)).sqrt();
        let se_mean = sigma / n.sqrt();
        let se_sd = sigma / (2.0 * (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * se_mean, "mean {mean}");
        assert!((sd - sigma).abs() < 3.0 * se_sd, "sd {sd}");
    }

    #[test]
    fn tiny_noise_is_identity() {
        let x = ramp(3, 50);
        let cfg = AugmentConfig {
            noise_sigma: 1e-300,
            noise_scale: NoiseScale::Absolute,
            ..Default::default()
        };
        assert_eq!(random_noise(&x, &mut RandomStream::new(1), &cfg), x);
    }

    #[test]
    fn noise_is_deterministic() {
        let x = ramp(3, 50);
        let cfg = AugmentConfig::default();
        let a = random_noise(&x, &mut RandomStream::new(8), &cfg);
        let b = random_noise(&x, &mut RandomStream::new(8), &cfg);
        assert!(a
            .data()
            .iter()
            .zip(b.data().iter())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn weak_choice_is_uniform() {
        let x = ramp(2, 16);
        let cfg = AugmentConfig::default();
        let root = RandomStream::new(2024);
        let mut counts = [0usize; 4];
        for i in 0..4000u64 {
            let (_, t) = weak_augment_traced(&x, &mut root.derive(&[i]), &cfg);
            counts[(t.id() - 1) as usize] += 1;
        }
        for c in counts {
            let f = c as f64 / 4000.0;
            assert!((f - 0.25).abs() <= 0.03, "{counts:?}");
        }
    }

    #[test]
    fn queue_213_equals_manual_composition() {
        let x = ramp(4, 32);
        let cfg = AugmentConfig::default();
        let queue: Vec<Transform> = [2u8, 1, 3]
            .iter()
            .map(|&i| Transform::from_id(i).unwrap())
            .collect();
        let out = apply_queue(&x, &queue, &mut RandomStream::new(77), &cfg);
        let mut rng = RandomStream::new(77);
        let manual = channel_reorganization(
            &signal_dropout(&temporal_flip(&x), &mut rng, &cfg),
            &mut rng,
        );
        assert_eq!(out, manual);
    }

    #[test]
    fn strong_queue_is_distinct_and_bounded() {
        let cfg = AugmentConfig::default();
        let root = RandomStream::new(1);
        let mut lengths = [0usize; 5];
        for i in 0..2000u64 {
            let q = draw_strong_queue(&mut root.derive(&[i]), &cfg);
            assert!((1..=4).contains(&q.len()));
            let mut ids: Vec<u8> = q.iter().map(|t| t.id()).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), q.len());
            lengths[q.len()] += 1;
        }
        assert!(lengths[1..].iter().all(|&c| c > 400));
    }

    #[test]
    fn strong_with_t1_uses_single_transform() {
        let cfg = AugmentConfig {
            strong_max_transforms: 1,
            ..Default::default()
        };
        for i in 0..50 {
            assert_eq!(draw_strong_queue(&mut RandomStream::new(i), &cfg).len(), 1);
        }
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig {
            strong_max_transforms: 5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AugmentConfig {
            dropout_max_frac: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AugmentConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn pipelines_preserve_shape_and_are_deterministic(ch in 1usize..6, len in 1usize..40, seed in 0u64..1000) {
            let x = ramp(ch, len);
            let cfg = AugmentConfig::default();
            let w = weak_augment(&x, &mut RandomStream::new(seed), &cfg);
            let s = strong_augment(&x, &mut RandomStream::new(seed), &cfg);
            let s2 = strong_augment(&x, &mut RandomStream::new(seed), &cfg);
            prop_assert_eq!(w.data().dim(), x.data().dim());
            prop_assert_eq!(s.data().dim(), x.data().dim());
            prop_assert_eq!(&s, &s2);
            let ww = weak_augment(&w, &mut RandomStream::new(seed + 1), &cfg);
            prop_assert!(ww.data().iter().all(|v| v.is_finite()));
        }

        #[test]
        fn dropout_changes_one_contiguous_window(len in 2usize..60, seed in 0u64..1000) {
            let x = ramp(3, len);
            let out = signal_dropout(&x, &mut RandomStream::new(seed), &AugmentConfig::default());
            let cols: Vec<usize> = (0..len).filter(|&t| out.data().column(t) != x.data().column(t)).collect();
            prop_assert!(!cols.is_empty());
            prop_assert_eq!(cols.last().unwrap() - cols[0] + 1, cols.len());
        }

        #[test]
        fn reorg_preserves_row_multiset(ch in 2usize..12, seed in 0u64..1000) {
            let x = ramp(ch, 7);
            let out = channel_reorganization(&x, &mut RandomStream::new(seed));
            let key = |m: &SignalMatrix| {
                let mut sums: Vec<u64> = m.data().rows().into_iter().map(|r| r.sum().to_bits()).collect();
                sums.sort();
                sums
            };
            prop_assert_eq!(key(&x), key(&out));
        }
    }
}
