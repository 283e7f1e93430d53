//! Primed training pairs: two renders that share the unmodeled parameters
//! `z` but differ in the modeled state `x`.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::render::{mask_from_ids, render_with_ids, DepthImage, SegMask, INVALID};
use crate::rng::{self, Domain};
use crate::scene::{ModeledState, ScenarioSpec, UnmodeledParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub dropout_prob: f64,
    /// Standard deviation in meters.
    pub gaussian_sigma: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidArgument(format!("dropout_prob {} not in [0, 1]", self.dropout_prob)));
        }
        if !(self.gaussian_sigma >= 0.0) || !self.gaussian_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("gaussian_sigma {} must be >= 0", self.gaussian_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimedSample {
    /// Network input, possibly noisy.
    pub y1: DepthImage,
    /// Reconstruction target, always clean.
    pub y2: DepthImage,
    pub x1: ModeledState,
    pub x2: ModeledState,
    /// Target footprint in `y1` (before noise).
    pub mask1: SegMask,
    /// Labeled pixels of `y2`.
    pub mask2: SegMask,
    pub z: UnmodeledParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrimeOptions {
    pub noise: NoiseConfig,
    /// Also label the pixels the target vacated, i.e. its footprint in `y1`.
    pub mask_union: bool,
}

/// Renders a pair for given states, without noise.
pub fn primed_from_states(
    spec: &ScenarioSpec,
    x1: &ModeledState,
    x2: &ModeledState,
    z: &UnmodeledParams,
    mask_union: bool,
) -> Result<PrimedSample> {
    let targets = spec.target_ids();
    let s1 = spec.bind(x1, z)?;
    let s2 = spec.bind(x2, z)?;
    let (y1, ids1) = render_with_ids(&s1);
    let (y2, ids2) = render_with_ids(&s2);
    let mask1 = mask_from_ids(&s1, &ids1, &targets);
    let foot2 = mask_from_ids(&s2, &ids2, &targets);
    let mask2 = if mask_union { foot2.union(&mask1)? } else { foot2 };
    Ok(PrimedSample { y1, y2, x1: x1.clone(), x2: x2.clone(), mask1, mask2, z: z.clone() })
}

pub fn make_primed_pair(spec: &ScenarioSpec, seed: u64) -> Result<PrimedSample> {
    make_primed_pair_with(spec, seed, &PrimeOptions::default())
}

/// One `z`, two independent `x`; noise goes on `y1` only.
pub fn make_primed_pair_with(spec: &ScenarioSpec, seed: u64, opts: &PrimeOptions) -> Result<PrimedSample> {
    opts.noise.validate()?;
    let mut rng = rng::rng_for(seed, Domain::Scene, &[]);
    let z = spec.sample_unmodeled(&mut rng);
    let x1 = spec.sample_state(&mut rng);
    let x2 = spec.sample_state(&mut rng);
    let mut s = primed_from_states(spec, &x1, &x2, &z, opts.mask_union)?;
    s.y1 = inject_noise(&s.y1, &opts.noise, spec.camera.max_depth, rng::derive(seed, Domain::Noise, &[]));
    Ok(s)
}

/// Per-pixel dropout to the invalid code, then Gaussian noise on the
/// surviving valid pixels, clamped to `(0, max_depth]`.
pub fn inject_noise(y: &DepthImage, cfg: &NoiseConfig, max_depth: f64, seed: u64) -> DepthImage {
    if cfg.dropout_prob <= 0.0 && cfg.gaussian_sigma <= 0.0 {
        return y.clone();
    }
    let mut rng = rng::rng_for(seed, Domain::Noise, &[]);
    let normal = Normal::new(0.0, cfg.gaussian_sigma.max(0.0)).expect("sigma validated");
    let floor = 1e-6f64;
    let data = y
        .data
        .iter()
        .map(|&v| {
            let dropped = rng.random::<f64>() < cfg.dropout_prob;
            if dropped || v <= INVALID {
                return INVALID;
            }
            if cfg.gaussian_sigma > 0.0 {
                (v as f64 + normal.sample(&mut rng)).clamp(floor, max_depth) as f32
            } else {
                v
            }
        })
        .collect();
    DepthImage { width: y.width, height: y.height, data }
}

/// Sizes of the training stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub epoch_size: usize,
    pub reuse: usize,
    pub batch: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig { epoch_size: 1050, reuse: 5, batch: 35 }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epoch_size == 0 || self.reuse == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument("epoch_size, reuse and batch must be positive".into()));
        }
        if self.epoch_size % self.batch != 0 {
            return Err(Error::InvalidArgument(format!(
                "epoch_size {} is not divisible by batch {}",
                self.epoch_size, self.batch
            )));
        }
        Ok(())
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.epoch_size * self.reuse / self.batch
    }
}

/// Seed of training sample `i` in `epoch`.
pub fn sample_seed(seed: u64, epoch: usize, i: usize) -> u64 {
    rng::derive(seed, Domain::Scene, &[epoch as u64, i as u64])
}

/// Seed of validation sample `i`; disjoint from every training seed stream.
pub fn validation_seed(seed: u64, i: usize) -> u64 {
    rng::derive(seed, Domain::Validation, &[i as u64])
}

/// Sample indices of every minibatch in an epoch. The first pass runs in
/// generation order so training can start before the epoch is rendered;
/// each later pass is a fresh permutation.
pub fn epoch_plan(cfg: &StreamConfig, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.batches_per_epoch());
    let mut order: Vec<usize> = (0..cfg.epoch_size).collect();
    for pass in 0..cfg.reuse {
        if pass > 0 {
            order.sort_unstable();
            order.shuffle(&mut rng::rng_for(seed, Domain::Shuffle, &[epoch as u64, pass as u64]));
        }
        out.extend(order.chunks(cfg.batch).map(|c| c.to_vec()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::presets;

    fn box_spec() -> ScenarioSpec {
        presets::preset("box").unwrap()
    }

    #[test]
    fn degenerate_prime_gives_identical_images() {
        let spec = box_spec();
        let (x, z) = crate::scene::sample_scene(&spec, 3);
        let s = primed_from_states(&spec, &x, &x, &z, false).unwrap();
        assert_eq!(s.y1, s.y2);
        assert_eq!(s.mask1, s.mask2);
    }

    #[test]
    fn backgrounds_agree_off_footprint() {
        for spec in [box_spec(), presets::preset("laptop").unwrap(), presets::preset("tabletop").unwrap()] {
            for seed in 0..20 {
                let s = make_primed_pair(&spec, seed).unwrap();
                let mut off = 0;
                for i in 0..s.y1.data.len() {
                    if !s.mask1.data[i] && !s.mask2.data[i] {
                        off += 1;
                        assert!((s.y1.data[i] - s.y2.data[i]).abs() < 1e-6, "{} seed {seed} pixel {i}", spec.name);
                    }
                }
                assert!(off > 0);
            }
        }
    }

    #[test]
    fn footprint_difference_is_where_states_differ() {
        let spec = box_spec();
        let s = make_primed_pair(&spec, 11).unwrap();
        assert_ne!(s.x1, s.x2);
        assert!(s.y1.data.iter().zip(&s.y2.data).any(|(a, b)| a != b));
    }

    #[test]
    fn mask_union_adds_vacated_footprint() {
        let spec = box_spec();
        let opts = PrimeOptions { mask_union: true, ..Default::default() };
        let u = make_primed_pair_with(&spec, 4, &opts).unwrap();
        let p = make_primed_pair(&spec, 4).unwrap();
        assert_eq!(u.mask2, p.mask2.union(&p.mask1).unwrap());
        assert_eq!(u.y1, p.y1);
    }

    #[test]
    fn pairs_are_deterministic() {
        let spec = box_spec();
        let opts = PrimeOptions { noise: NoiseConfig { dropout_prob: 0.05, gaussian_sigma: 0.01 }, mask_union: false };
        assert_eq!(make_primed_pair_with(&spec, 9, &opts).unwrap(), make_primed_pair_with(&spec, 9, &opts).unwrap());
        assert_ne!(make_primed_pair(&spec, 9).unwrap().x1, make_primed_pair(&spec, 10).unwrap().x1);
    }

    #[test]
    fn noise_goes_on_input_only() {
        let spec = box_spec();
        let opts = PrimeOptions { noise: NoiseConfig { dropout_prob: 0.2, gaussian_sigma: 0.02 }, mask_union: false };
        let noisy = make_primed_pair_with(&spec, 5, &opts).unwrap();
        let clean = make_primed_pair(&spec, 5).unwrap();
        assert_eq!(noisy.y2, clean.y2);
        assert_ne!(noisy.y1, clean.y1);
        let max = spec.camera.max_depth as f32;
        assert!(noisy.y1.data.iter().all(|v| (0.0..=max).contains(v)));
    }

    #[test]
    fn noise_identity_and_full_dropout() {
        let y = DepthImage::filled(16, 8, 1.0);
        assert_eq!(inject_noise(&y, &NoiseConfig::default(), 2.0, 1), y);
        let all = inject_noise(&y, &NoiseConfig { dropout_prob: 1.0, gaussian_sigma: 0.0 }, 2.0, 1);
        assert!(all.data.iter().all(|v| *v == INVALID));
        assert!(NoiseConfig { dropout_prob: 1.5, gaussian_sigma: 0.0 }.validate().is_err());
        assert!(NoiseConfig { dropout_prob: 0.0, gaussian_sigma: -1.0 }.validate().is_err());
    }

    #[test]
    fn dropout_fraction_within_binomial_bound() {
        let y = DepthImage::filled(1000, 1000, 1.0);
        let n = inject_noise(&y, &NoiseConfig { dropout_prob: 0.1, gaussian_sigma: 0.0 }, 2.0, 77);
        let frac = n.data.iter().filter(|v| **v == INVALID).count() as f64 / 1e6;
        assert!((frac - 0.1).abs() < 0.002, "{frac}");
    }

    #[test]
    fn gaussian_noise_is_clamped() {
        let mut y = DepthImage::filled(64, 64, 1.99);
        y.data[0] = 1e-4;
        let n = inject_noise(&y, &NoiseConfig { dropout_prob: 0.0, gaussian_sigma: 0.5 }, 2.0, 3);
        assert!(n.data.iter().all(|v| *v > 0.0 && *v <= 2.0));
    }

    #[test]
    fn paper_stream_constants() {
        let cfg = StreamConfig::default();
        assert_eq!(cfg.batches_per_epoch(), 150);
        let plan = epoch_plan(&cfg, 1, 0).unwrap();
        assert_eq!(plan.len(), 150);
        assert!(plan.iter().all(|b| b.len() == 35));
    }

    #[test]
    fn every_pass_is_a_permutation() {
        let cfg = StreamConfig { epoch_size: 60, reuse: 4, batch: 6 };
        let plan = epoch_plan(&cfg, 2, 3).unwrap();
        let per_pass = cfg.epoch_size / cfg.batch;
        let passes: Vec<Vec<usize>> = plan.chunks(per_pass).map(|c| c.concat()).collect();
        for p in &passes {
            let mut s = p.clone();
            s.sort_unstable();
            assert_eq!(s, (0..60).collect::<Vec<_>>());
        }
        assert_ne!(passes[1], passes[2]);
        assert_eq!(plan, epoch_plan(&cfg, 2, 3).unwrap());
        assert_ne!(plan, epoch_plan(&cfg, 2, 4).unwrap());
    }

    #[test]
    fn indivisible_epoch_is_rejected() {
        assert!(epoch_plan(&StreamConfig { epoch_size: 100, reuse: 1, batch: 35 }, 0, 0).is_err());
    }

    #[test]
    fn validation_seeds_are_disjoint_from_training() {
        let train: alloc::collections::BTreeSet<u64> =
            (0..5).flat_map(|e| (0..200).map(move |i| sample_seed(1, e, i))).collect();
        assert!((0..200).all(|i| !train.contains(&validation_seed(1, i))));
    }
}
