//! Masked, class-balanced L1 objective and a single optimization step.
//! The epoch loop, data threads and checkpoints live in the std crate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Real, Tape};
use crate::data::{NoiseConfig, PrimedSample, StreamConfig};
use crate::model::{CaeModel, ModelDescriptor, Variant};
use crate::render::{DepthImage, SegMask};
use crate::scene::{presets, ScenarioSpec};
use crate::{Error, Result};

/// Pixel validity for the loss: `true` iff the depth is not the invalid
/// code and its normalized value lies strictly inside `(lo, hi)`.
pub fn outlier_mask(y: &DepthImage, lo: f64, hi: f64, max_depth: f64) -> Result<Vec<bool>> {
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidArgument(format!("outlier interval ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1")));
    }
    Ok((0..y.data.len())
        .map(|i| {
            let n = y.data[i] as f64 / max_depth;
            y.is_valid(i) && n > lo && n < hi
        })
        .collect())
}

/// Per-pixel loss weights over a whole minibatch (images concatenated).
/// Balanced: `1/n_labeled` on valid labeled pixels and `1/n_unlabeled` on
/// valid unlabeled ones; an empty class contributes nothing. Unbalanced:
/// `1/n_valid` everywhere valid.
pub fn loss_weights(masks: &[&SegMask], valid: &[&[bool]], balance: bool) -> Result<Vec<f64>> {
    if masks.len() != valid.len() {
        return Err(Error::Shape { op: "loss_weights", detail: format!("{} masks, {} validity maps", masks.len(), valid.len()) });
    }
    let mut labeled = 0usize;
    let mut unlabeled = 0usize;
    for (m, v) in masks.iter().zip(valid) {
        if m.data.len() != v.len() {
            return Err(Error::Shape { op: "loss_weights", detail: format!("mask {} vs validity {}", m.data.len(), v.len()) });
        }
        for (l, ok) in m.data.iter().zip(v.iter()) {
            match (*ok, *l) {
                (true, true) => labeled += 1,
                (true, false) => unlabeled += 1,
                _ => {}
            }
        }
    }
    let (wl, wu) = if balance {
        let inv = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
        (inv(labeled), inv(unlabeled))
    } else {
        let n = labeled + unlabeled;
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        (w, w)
    };
    Ok(masks
        .iter()
        .zip(valid)
        .flat_map(|(m, v)| {
            m.data.iter().zip(v.iter()).map(move |(l, ok)| match (*ok, *l) {
                (true, true) => wl,
                (true, false) => wu,
                _ => 0.0,
            })
        })
        .collect())
}

/// Loss split into its labeled and unlabeled means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub labeled: f64,
    pub unlabeled: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.labeled + self.unlabeled
    }
}

/// Mean |ŷ−y| over valid labeled pixels plus mean |ŷ−y| over valid
/// unlabeled pixels, both taken across the whole minibatch.
pub fn masked_balanced_l1(
    pred: &[&DepthImage],
    target: &[&DepthImage],
    masks: &[&SegMask],
    valid: &[&[bool]],
) -> Result<LossTerms> {
    if pred.len() != target.len() || pred.len() != masks.len() || pred.len() != valid.len() {
        return Err(Error::Shape { op: "masked_balanced_l1", detail: "batch lengths differ".into() });
    }
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for b in 0..pred.len() {
        pred[b].check_same(target[b])?;
        if masks[b].data.len() != pred[b].data.len() || valid[b].len() != pred[b].data.len() {
            return Err(Error::Shape { op: "masked_balanced_l1", detail: format!("item {b}: mask or validity size differs") });
        }
        for i in 0..pred[b].data.len() {
            if valid[b][i] {
                let k = if masks[b].data[i] { 0 } else { 1 };
                sums[k] += (pred[b].data[i] as f64 - target[b].data[i] as f64).abs();
                counts[k] += 1;
            }
        }
    }
    let mean = |k: usize| if counts[k] == 0 { 0.0 } else { sums[k] / counts[k] as f64 };
    Ok(LossTerms { labeled: mean(0), unlabeled: mean(1) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 32×64, latent 16.
    Desk,
    /// 128×256, latent 64.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub scenario: String,
    pub profile: Profile,
    /// Overrides the profile's latent size.
    pub latent_dim: Option<usize>,
    pub variant: Variant,
    pub precision: Precision,
    pub lr: f64,
    pub epochs: usize,
    pub epoch_size: usize,
    pub reuse: usize,
    pub batch: usize,
    pub seed: u64,
    pub outlier_masking: bool,
    pub outlier_lo: f64,
    pub outlier_hi: f64,
    pub loss_balance: bool,
    pub mask_union: bool,
    pub noise: NoiseConfig,
    /// Global gradient-norm bound; `None` picks 10 for f32 and off for f64.
    pub grad_clip: Option<f64>,
    /// Fraction of an epoch's size held out as validation samples.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scenario: "box".into(),
            profile: Profile::Desk,
            latent_dim: None,
            variant: Variant::Cae,
            precision: Precision::F32,
            lr: 1e-4,
            epochs: 30,
            epoch_size: 1050,
            reuse: 5,
            batch: 35,
            seed: 0,
            outlier_masking: true,
            outlier_lo: 0.01,
            outlier_hi: 0.99,
            loss_balance: true,
            mask_union: false,
            noise: NoiseConfig::default(),
            grad_clip: None,
            validation_fraction: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn stream(&self) -> StreamConfig {
        StreamConfig { epoch_size: self.epoch_size, reuse: self.reuse, batch: self.batch }
    }

    pub fn validation_size(&self) -> usize {
        num_traits::Float::ceil(self.epoch_size as f64 * self.validation_fraction) as usize
    }

    pub fn effective_clip(&self) -> Option<f64> {
        match (self.grad_clip, self.precision) {
            (Some(c), _) if c > 0.0 => Some(c),
            (Some(_), _) => None,
            (None, Precision::F32) => Some(10.0),
            (None, Precision::F64) => None,
        }
    }

    /// Every problem with the config, joined.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if presets::preset(&self.scenario).is_none() {
            errs.push(format!("scenario: unknown preset `{}` (known: {})", self.scenario, presets::PRESETS.join(", ")));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            errs.push(format!("lr: {} must be finite and >= 0", self.lr));
        }
        if self.epochs == 0 {
            errs.push("epochs: must be positive".into());
        }
        if let Err(e) = self.stream().validate() {
            errs.push(format!("epoch_size/reuse/batch: {e}"));
        }
        if self.latent_dim == Some(0) {
            errs.push("latent_dim: must be positive".into());
        }
        if !(0.0 <= self.outlier_lo && self.outlier_lo < self.outlier_hi && self.outlier_hi <= 1.0) {
            errs.push(format!("outlier_lo/outlier_hi: ({}, {}) must satisfy 0 <= lo < hi <= 1", self.outlier_lo, self.outlier_hi));
        }
        if let Err(e) = self.noise.validate() {
            errs.push(format!("noise: {e}"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            errs.push(format!("validation_fraction: {} not in [0, 1)", self.validation_fraction));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(errs.join("; ")))
        }
    }

    /// Scenario at the profile's resolution.
    pub fn scenario_spec(&self) -> Result<ScenarioSpec> {
        let spec = presets::preset(&self.scenario)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{}`", self.scenario)))?;
        match self.profile {
            Profile::Desk => spec.with_resolution(64, 32),
            Profile::Paper => spec.with_resolution(256, 128),
        }
    }

    pub fn descriptor(&self, spec: &ScenarioSpec) -> ModelDescriptor {
        let state_dim = spec.state_layout().len;
        let max_depth = spec.camera.max_depth;
        let mut d = match self.profile {
            Profile::Desk => ModelDescriptor::desk(self.variant, state_dim, max_depth),
            Profile::Paper => ModelDescriptor::paper(self.variant, state_dim, max_depth),
        };
        if let Some(l) = self.latent_dim {
            d.latent_dim = l;
        }
        d.with_condition_affine(spec.state_affine())
    }
}

/// Validity used by the loss for one target image.
pub fn target_validity(cfg: &TrainConfig, y: &DepthImage, max_depth: f64) -> Result<Vec<bool>> {
    if cfg.outlier_masking {
        outlier_mask(y, cfg.outlier_lo, cfg.outlier_hi, max_depth)
    } else {
        Ok((0..y.data.len()).map(|i| y.is_valid(i)).collect())
    }
}

/// Model plus optimizer state.
pub struct Trainer<T> {
    pub model: CaeModel<T>,
    pub adam: AdamState<T>,
    pub lr: f64,
    pub clip: Option<f64>,
    pub balance: bool,
    pub outlier: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    /// In meters.
    pub loss: LossTerms,
    pub grad_norm: f64,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: CaeModel<T>, cfg: &TrainConfig) -> Self {
        let adam = AdamState::new(&model.params, AdamConfig::default());
        Trainer {
            model,
            adam,
            lr: cfg.lr,
            clip: cfg.effective_clip(),
            balance: cfg.loss_balance,
            outlier: cfg.outlier_masking.then_some((cfg.outlier_lo, cfg.outlier_hi)),
        }
    }

    fn validity(&self, y: &DepthImage) -> Result<Vec<bool>> {
        let max = self.model.descriptor.max_depth;
        match self.outlier {
            Some((lo, hi)) => outlier_mask(y, lo, hi, max),
            None => Ok((0..y.data.len()).map(|i| y.is_valid(i)).collect()),
        }
    }

    /// Loss of `ψ(φ(y1), x2)` against `y2` without updating anything.
    pub fn evaluate(&self, batch: &[&PrimedSample]) -> Result<LossTerms> {
        let preds: Vec<DepthImage> = batch
            .iter()
            .map(|s| self.model.reconstruct(&s.y1, &s.x2))
            .collect::<Result<_>>()?;
        let valid: Vec<Vec<bool>> = batch.iter().map(|s| self.validity(&s.y2)).collect::<Result<_>>()?;
        let pr: Vec<&DepthImage> = preds.iter().collect();
        let tg: Vec<&DepthImage> = batch.iter().map(|s| &s.y2).collect();
        let ms: Vec<&SegMask> = batch.iter().map(|s| &s.mask2).collect();
        let vs: Vec<&[bool]> = valid.iter().map(|v| v.as_slice()).collect();
        let l = masked_balanced_l1(&pr, &tg, &ms, &vs)?;
        if self.balance {
            Ok(l)
        } else {
            // Report the single plain mean in the unlabeled slot.
            let w = loss_weights(&ms, &vs, false)?;
            let mut total = 0.0;
            let mut k = 0;
            for (p, t) in pr.iter().zip(&tg) {
                for (a, b) in p.data.iter().zip(&t.data) {
                    total += w[k] * (*a as f64 - *b as f64).abs();
                    k += 1;
                }
            }
            Ok(LossTerms { labeled: 0.0, unlabeled: total })
        }
    }

    /// Forward, backward and one Adam update on a minibatch.
    pub fn step(&mut self, batch: &[&PrimedSample]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty minibatch".into()));
        }
        let m = &self.model;
        let max = m.descriptor.max_depth;
        let mut tape = Tape::new();
        let p = m.bind(&mut tape, true);
        let y1: Vec<&DepthImage> = batch.iter().map(|s| &s.y1).collect();
        let x2: Vec<_> = batch.iter().map(|s| &s.x2).collect();
        let input = tape.constant(m.image_tensor(&y1)?);
        let cond = tape.constant(m.state_tensor(&x2)?);
        let out = m.reconstruct_vars(&mut tape, &p, input, cond)?;

        let valid: Vec<Vec<bool>> = batch.iter().map(|s| self.validity(&s.y2)).collect::<Result<_>>()?;
        let vs: Vec<&[bool]> = valid.iter().map(|v| v.as_slice()).collect();
        let ms: Vec<&SegMask> = batch.iter().map(|s| &s.mask2).collect();
        let weights = loss_weights(&ms, &vs, self.balance)?;
        let target: Vec<T> = batch.iter().flat_map(|s| s.y2.data.iter().map(|v| T::of(*v as f64 / max))).collect();

        // Split terms for reporting, from the same forward values.
        let pred = &tape.value(out).data;
        let mut terms = [0.0f64; 2];
        let mut k = 0;
        for s in batch {
            for i in 0..s.y2.data.len() {
                let d = (pred[k].f64() - target[k].f64()).abs() * weights[k] * max;
                if s.mask2.data[i] && self.balance {
                    terms[0] += d;
                } else {
                    terms[1] += d;
                }
                k += 1;
            }
        }

        let w: Vec<T> = weights.iter().map(|v| T::of(*v)).collect();
        let loss = tape.weighted_abs_diff(out, target, w)?;
        let grads = tape.backward(loss)?;
        let mut g: Vec<Vec<T>> = p
            .vars()
            .iter()
            .map(|v| grads.get(*v).map(|s| s.to_vec()).unwrap_or_else(|| alloc::vec![T::zero(); tape.value(*v).len()]))
            .collect();
        let norm = num_traits::Float::sqrt(g.iter().flatten().map(|v| v.f64() * v.f64()).sum::<f64>());
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        if let Some(c) = self.clip {
            if norm > c {
                let s = T::of(c / norm);
                g.iter_mut().flatten().for_each(|v| *v = *v * s);
            }
        }
        adam_step(&mut self.model.params, &g, &mut self.adam, self.lr)?;
        if self.model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(StepStats { loss: LossTerms { labeled: terms[0], unlabeled: terms[1] }, grad_norm: norm })
    }
}
