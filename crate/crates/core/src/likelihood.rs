//! Measurement similarity and the three likelihood evaluators.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::model::CaeModel;
use crate::render::{min_compose, render_depth, DepthImage};
use crate::scene::{sweep_axis, ModeledState, ScenarioSpec, SweepAxis, UnmodeledParams};
use crate::training::outlier_mask;
use crate::{Error, Result};

/// Loss floor used when converting losses to weights.
pub const LOSS_FLOOR: f64 = 1e-9;
/// Lower end of the unit-range scaling used by [`loss_to_weight`].
pub const SCALE_DELTA: f64 = 1e-3;

/// Mean |a−b| over pixels valid in both images and in `valid`.
pub fn similarity(a: &DepthImage, b: &DepthImage, valid: Option<&[bool]>) -> Result<f64> {
    a.check_same(b)?;
    if let Some(v) = valid {
        if v.len() != a.data.len() {
            return Err(Error::Dimension { expected: format!("{} validity flags", a.data.len()), actual: format!("{}", v.len()) });
        }
    }
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for i in 0..a.data.len() {
        if a.is_valid(i) && b.is_valid(i) && valid.is_none_or(|v| v[i]) {
            sum += (a.data[i] as f64 - b.data[i] as f64).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum / n as f64)
}

/// `𝓛(y, ψ(φ(y), x))`, restricted to pixels that pass the outlier mask.
pub fn learned_loss<T: Real>(model: &CaeModel<T>, y_obs: &DepthImage, x: &ModeledState, outlier: Option<(f64, f64)>) -> Result<f64> {
    Ok(learned_losses(model, y_obs, core::slice::from_ref(x), outlier)?[0])
}

/// Learned loss for many states with one shared encoding of `y_obs`.
pub fn learned_losses<T: Real>(
    model: &CaeModel<T>,
    y_obs: &DepthImage,
    xs: &[ModeledState],
    outlier: Option<(f64, f64)>,
) -> Result<Vec<f64>> {
    let valid = match outlier {
        Some((lo, hi)) => Some(outlier_mask(y_obs, lo, hi, model.descriptor.max_depth)?),
        None => None,
    };
    let latent = model.encode(y_obs)?;
    let mut out = Vec::with_capacity(xs.len());
    for chunk in xs.chunks(128) {
        for r in model.decode_many(&latent, chunk)? {
            out.push(similarity(y_obs, &r, valid.as_deref())?);
        }
    }
    Ok(out)
}

/// Render of the target objects alone at `x`; everything else reads max depth.
pub fn target_render(spec: &ScenarioSpec, x: &ModeledState, z: &UnmodeledParams) -> Result<DepthImage> {
    Ok(render_depth(&spec.bind(x, z)?.only(&spec.target_ids())))
}

/// `𝓛(y, min(y, y_syn(x)))` with a background-free synthetic render.
pub fn input_and_synthetic(y_obs: &DepthImage, x: &ModeledState, spec: &ScenarioSpec, z: &UnmodeledParams) -> Result<f64> {
    let syn = target_render(spec, x, z)?;
    similarity(y_obs, &min_compose(y_obs, &syn)?, None)
}

/// `𝓛(y_syn(x), y_syn(x_gt))`, both full scenes under `z_gt`.
pub fn synthetic_and_synthetic(x_gt: &ModeledState, z_gt: &UnmodeledParams, x: &ModeledState, spec: &ScenarioSpec) -> Result<f64> {
    let a = render_depth(&spec.bind(x, z_gt)?);
    let b = render_depth(&spec.bind(x_gt, z_gt)?);
    similarity(&a, &b, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    Learned,
    #[serde(rename = "insyn")]
    InputAndSynthetic,
    #[serde(rename = "synsyn")]
    SyntheticAndSynthetic,
}

impl EvaluatorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "learned" => Some(EvaluatorKind::Learned),
            "insyn" => Some(EvaluatorKind::InputAndSynthetic),
            "synsyn" => Some(EvaluatorKind::SyntheticAndSynthetic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EvaluatorKind::Learned => "learned",
            EvaluatorKind::InputAndSynthetic => "insyn",
            EvaluatorKind::SyntheticAndSynthetic => "synsyn",
        }
    }
}

/// A likelihood source. All variants are read-only.
pub enum Evaluator<'a, T> {
    Learned { model: &'a CaeModel<T>, outlier: Option<(f64, f64)> },
    /// `z` is only used to place the target for the background-free render.
    InputAndSynthetic { spec: &'a ScenarioSpec, z: UnmodeledParams },
    SyntheticAndSynthetic { spec: &'a ScenarioSpec, x_gt: ModeledState, z_gt: UnmodeledParams },
}

impl<T: Real> Evaluator<'_, T> {
    pub fn kind(&self) -> EvaluatorKind {
        match self {
            Evaluator::Learned { .. } => EvaluatorKind::Learned,
            Evaluator::InputAndSynthetic { .. } => EvaluatorKind::InputAndSynthetic,
            Evaluator::SyntheticAndSynthetic { .. } => EvaluatorKind::SyntheticAndSynthetic,
        }
    }

    /// Unit-range scaling is on by default only for the learned evaluator.
    pub fn default_scaling(&self) -> bool {
        self.kind() == EvaluatorKind::Learned
    }

    /// Loss per state, in input order.
    pub fn losses(&self, y_obs: &DepthImage, xs: &[ModeledState]) -> Result<Vec<f64>> {
        match self {
            Evaluator::Learned { model, outlier } => learned_losses(model, y_obs, xs, *outlier),
            Evaluator::InputAndSynthetic { spec, z } => {
                xs.iter().map(|x| input_and_synthetic(y_obs, x, spec, z)).collect()
            }
            Evaluator::SyntheticAndSynthetic { spec, x_gt, z_gt } => {
                let gt = render_depth(&spec.bind(x_gt, z_gt)?);
                xs.iter().map(|x| similarity(&render_depth(&spec.bind(x, z_gt)?), &gt, None)).collect()
            }
        }
    }
}

/// Min-max transform to `[0, 1]`; a constant input maps to all zeros.
pub fn scale_unit(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values.iter().map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 }).collect()
}

/// Normalized weights `wᵢ ∝ 1/𝓛ᵢ`. With `scaling`, losses are first mapped
/// to `[δ, 1]` per call.
pub fn loss_to_weight(losses: &[f64], scaling: bool) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::InvalidArgument("loss_to_weight needs at least one loss".into()));
    }
    if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite loss {bad}")));
    }
    let l: Vec<f64> = if scaling {
        let s = scale_unit(losses);
        let constant = s.iter().all(|v| *v == 0.0);
        s.iter().map(|v| if constant { 1.0 } else { SCALE_DELTA + (1.0 - SCALE_DELTA) * v }).collect()
    } else {
        losses.iter().map(|v| v.max(LOSS_FLOOR)).collect()
    };
    let inv: Vec<f64> = l.iter().map(|v| 1.0 / v).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub offset: f64,
    pub raw: f64,
    pub scaled: f64,
}

/// Loss along each `(axis, half_range)` through `x_gt`. `z` places the
/// target when building the swept states. With `scale`, each axis is
/// min-max scaled separately; otherwise `scaled` repeats `raw`.
#[allow(clippy::too_many_arguments)]
pub fn sweep<T: Real>(
    ev: &Evaluator<'_, T>,
    spec: &ScenarioSpec,
    y_obs: &DepthImage,
    x_gt: &ModeledState,
    z: &UnmodeledParams,
    axes: &[(SweepAxis, f64)],
    steps: usize,
    scale: bool,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(axes.len() * steps);
    for &(axis, half) in axes {
        let states = sweep_axis(spec, x_gt, z, axis, half, steps)?;
        let offs = crate::scene::offsets(half, steps)?;
        let raw = ev.losses(y_obs, &states)?;
        let scaled = if scale { scale_unit(&raw) } else { raw.clone() };
        for i in 0..steps {
            rows.push(SweepRow { axis, offset: offs[i], raw: raw[i], scaled: scaled[i] });
        }
    }
    Ok(rows)
}

/// Index of the smallest raw loss in each axis block of a sweep.
pub fn sweep_argmins(rows: &[SweepRow], steps: usize) -> Vec<(SweepAxis, usize)> {
    rows.chunks(steps)
        .map(|c| {
            let i = c
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.raw.total_cmp(&b.1.raw))
                .map(|(i, _)| i)
                .unwrap_or(0);
            (c[0].axis, i)
        })
        .collect()
}
