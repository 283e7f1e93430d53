//! Particle filter whose measurement model is a likelihood [`Evaluator`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::likelihood::{loss_to_weight, Evaluator};
use crate::render::{render_depth, render_segmentation, DepthImage};
use crate::rng::{self, Domain, Rng};
use crate::scene::{canonical_wxyz, presets, quat_from_wxyz, DofKind, Layout, ModeledState, ScenarioSpec, UnmodeledParams, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub state: ModeledState,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    /// Sum of the weights before the last normalization.
    pub eta: f64,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn states(&self) -> Vec<ModeledState> {
        self.particles.iter().map(|p| p.state.clone()).collect()
    }

    /// Weighted mean of every state value. Quaternion blocks are averaged
    /// componentwise, which is only meaningful for concentrated sets.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.particles.first().map_or(0, |p| p.state.len());
        let mut m = vec![0.0; dim];
        for p in &self.particles {
            for (a, v) in m.iter_mut().zip(&p.state.0) {
                *a += p.weight * v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Process noise per bound DOF (radians for a quaternion block).
    pub sigma: Vec<f64>,
    /// Resample when ESS drops below this fraction of the particle count.
    pub ess_fraction: f64,
    /// Min-max scale losses before inverting them.
    pub scaling: bool,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { n_particles: 100, sigma: Vec::new(), ess_fraction: 0.5, scaling: false, seed: 0 }
    }
}

impl FilterConfig {
    pub fn validate(&self, layout: &Layout) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_particles < 2 {
            errs.push(format!("n_particles: {} must be >= 2", self.n_particles));
        }
        if self.sigma.len() != layout.dofs.len() {
            errs.push(format!("sigma: {} values for {} DOFs", self.sigma.len(), layout.dofs.len()));
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            errs.push("sigma: values must be finite and >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.ess_fraction) {
            errs.push(format!("ess_fraction: {} not in [0, 1]", self.ess_fraction));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(errs.join("; ")))
        }
    }
}

/// `n` prior draws with uniform weights.
pub fn init(cfg: &FilterConfig, prior: impl Fn(&mut Rng) -> ModeledState) -> ParticleSet {
    let mut rng = rng::rng_for(cfg.seed, Domain::Filter, &[]);
    let w = 1.0 / cfg.n_particles as f64;
    let particles = (0..cfg.n_particles).map(|_| Particle { state: prior(&mut rng), weight: w }).collect();
    ParticleSet { particles, eta: 1.0 }
}

/// Independent Gaussian diffusion per DOF; quaternions get a right-applied
/// axis-angle perturbation with per-axis standard deviation `σ`.
pub fn predict(ps: &ParticleSet, cfg: &FilterConfig, layout: &Layout, step: u64) -> Result<ParticleSet> {
    cfg.validate(layout)?;
    let mut rng = rng::rng_for(cfg.seed, Domain::Predict, &[step]);
    let mut out = ps.clone();
    for p in &mut out.particles {
        if p.state.len() != layout.len {
            return Err(Error::Binding(format!("particle has {} values, layout needs {}", p.state.len(), layout.len)));
        }
        for (d, (&off, &sigma)) in layout.dofs.iter().zip(layout.offsets.iter().zip(&cfg.sigma)) {
            if sigma == 0.0 {
                continue;
            }
            let n = Normal::new(0.0, sigma).expect("sigma validated");
            let v = &mut p.state.0;
            if d.kind == DofKind::Quat {
                let w = Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
                let q = quat_from_wxyz([v[off], v[off + 1], v[off + 2], v[off + 3]]);
                let dq = nalgebra::UnitQuaternion::from_scaled_axis(w);
                v[off..off + 4].copy_from_slice(&canonical_wxyz(&(q * dq)));
            } else {
                v[off] += n.sample(&mut rng);
            }
        }
    }
    Ok(out)
}

/// Multiplies prior weights by `1/𝓛` likelihoods and renormalizes.
pub fn update_with_losses(ps: &ParticleSet, losses: &[f64], scaling: bool) -> Result<ParticleSet> {
    if ps.is_empty() {
        return Err(Error::InvalidArgument("empty particle set".into()));
    }
    if losses.len() != ps.len() {
        return Err(Error::Dimension { expected: format!("{} losses", ps.len()), actual: format!("{}", losses.len()) });
    }
    let lik = loss_to_weight(losses, scaling)?;
    let raw: Vec<f64> = ps.particles.iter().zip(&lik).map(|(p, l)| p.weight * l).collect();
    let eta: f64 = raw.iter().sum();
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Degenerate(eta));
    }
    let particles = ps
        .particles
        .iter()
        .zip(&raw)
        .map(|(p, w)| Particle { state: p.state.clone(), weight: w / eta })
        .collect();
    Ok(ParticleSet { particles, eta })
}

pub fn measurement_update<T: Real>(ps: &ParticleSet, y_obs: &DepthImage, ev: &Evaluator<'_, T>, scaling: bool) -> Result<ParticleSet> {
    if ps.is_empty() {
        return Err(Error::InvalidArgument("empty particle set".into()));
    }
    let losses = ev.losses(y_obs, &ps.states())?;
    update_with_losses(ps, &losses, scaling)
}

/// Low-variance resampling with one uniform offset.
pub fn resample_systematic(ps: &ParticleSet, seed: u64) -> ParticleSet {
    let n = ps.len();
    if n == 0 {
        return ps.clone();
    }
    let mut rng = rng::rng_for(seed, Domain::Resample, &[]);
    let u0: f64 = rng.random::<f64>() / n as f64;
    let total: f64 = ps.particles.iter().map(|p| p.weight).sum();
    let mut out = Vec::with_capacity(n);
    let mut cum = ps.particles[0].weight / total;
    let mut i = 0;
    for k in 0..n {
        let u = u0 + k as f64 / n as f64;
        while u > cum && i + 1 < n {
            i += 1;
            cum += ps.particles[i].weight / total;
        }
        out.push(Particle { state: ps.particles[i].state.clone(), weight: 1.0 / n as f64 });
    }
    ParticleSet { particles: out, eta: ps.eta }
}

pub fn ess(ps: &ParticleSet) -> f64 {
    1.0 / ps.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub frame: usize,
    /// Particles after the measurement update, before any resampling.
    pub set: ParticleSet,
    pub ess: f64,
    pub resampled: bool,
}

/// Predict, update and (if ESS is low) resample once per frame.
pub fn run_sequence<T: Real>(
    frames: &[DepthImage],
    cfg: &FilterConfig,
    layout: &Layout,
    initial: ParticleSet,
    ev: &Evaluator<'_, T>,
) -> Result<Vec<Snapshot>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("at least one frame is required".into()));
    }
    let mut ps = initial;
    let mut out = Vec::with_capacity(frames.len());
    for (f, y) in frames.iter().enumerate() {
        let predicted = predict(&ps, cfg, layout, f as u64)?;
        let updated = measurement_update(&predicted, y, ev, cfg.scaling).map_err(|e| match e {
            Error::Degenerate(eta) => Error::InvalidArgument(format!("frame {f}: degenerate weights (eta = {eta})")),
            other => other,
        })?;
        let e = ess(&updated);
        let resampled = e < cfg.ess_fraction * updated.len() as f64;
        ps = if resampled { resample_systematic(&updated, rng::derive(cfg.seed, Domain::Resample, &[f as u64])) } else { updated.clone() };
        out.push(Snapshot { frame: f, set: updated, ess: e, resampled });
    }
    Ok(out)
}

/// Weight of particles whose target would be invisible in the scene `z`.
pub fn occluded_mass(spec: &ScenarioSpec, z: &UnmodeledParams, ps: &ParticleSet) -> Result<f64> {
    let targets = spec.target_ids();
    let mut mass = 0.0;
    for p in &ps.particles {
        let scene = spec.bind(&p.state, z)?;
        if render_segmentation(&scene, &targets)?.count() == 0 {
            mass += p.weight;
        }
    }
    Ok(mass)
}

/// Three-phase tabletop script: both obstacles, then only the one hiding
/// the box, then none.
#[derive(Debug, Clone)]
pub struct ScriptedDemo {
    pub spec: ScenarioSpec,
    pub x_gt: ModeledState,
    /// Unmodeled parameters (obstacle count) per frame.
    pub z: Vec<UnmodeledParams>,
    pub phase: Vec<usize>,
    pub frames: Vec<DepthImage>,
    pub config: FilterConfig,
    /// Prior: `ty` fixed, `tx` uniform on this interval.
    pub prior_tx: [f64; 2],
}

pub const OCCLUSION3: &str = "occlusion3";

pub fn occlusion3(frames_per_phase: usize, seed: u64) -> Result<ScriptedDemo> {
    let spec = presets::preset("tabletop").expect("preset exists");
    let x_gt = ModeledState(vec![0.17, 0.15]);
    let mut z = Vec::new();
    let mut phase = Vec::new();
    let mut frames = Vec::new();
    for (ph, count) in [2.0, 1.0, 0.0].into_iter().enumerate() {
        let zc = UnmodeledParams(vec![count]);
        let y = render_depth(&spec.bind(&x_gt, &zc)?);
        for _ in 0..frames_per_phase {
            z.push(zc.clone());
            phase.push(ph);
            frames.push(y.clone());
        }
    }
    let config = FilterConfig { n_particles: 100, sigma: vec![0.01, 0.0], ess_fraction: 0.5, scaling: false, seed };
    Ok(ScriptedDemo { spec, x_gt, z, phase, frames, config, prior_tx: [-0.35, 0.35] })
}

impl ScriptedDemo {
    pub fn initial(&self) -> ParticleSet {
        let [lo, hi] = self.prior_tx;
        let ty = self.x_gt.0[1];
        init(&self.config, |rng| ModeledState(vec![rng.random_range(lo..hi), ty]))
    }

    /// Input&Synthetic evaluator over the whole script.
    pub fn run(&self) -> Result<Vec<Snapshot>> {
        let ev: Evaluator<'_, f64> = Evaluator::InputAndSynthetic { spec: &self.spec, z: self.spec.nominal_unmodeled() };
        self.run_with(&ev)
    }

    pub fn run_with<T: Real>(&self, ev: &Evaluator<'_, T>) -> Result<Vec<Snapshot>> {
        run_sequence(&self.frames, &self.config, &self.spec.state_layout(), self.initial(), ev)
    }

    /// Index of the last frame of each phase.
    pub fn phase_ends(&self) -> Vec<usize> {
        (0..self.phase.len()).filter(|&i| i + 1 == self.phase.len() || self.phase[i + 1] != self.phase[i]).collect()
    }

    /// Translation error of the weighted mean.
    pub fn mean_error(&self, ps: &ParticleSet) -> f64 {
        let m = ps.mean();
        let d: f64 = m.iter().zip(&self.x_gt.0).map(|(a, b)| (a - b) * (a - b)).sum();
        num_traits::Float::sqrt(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::EvaluatorKind;

    fn set(weights: &[f64]) -> ParticleSet {
        ParticleSet {
            particles: weights.iter().enumerate().map(|(i, w)| Particle { state: ModeledState(vec![i as f64]), weight: *w }).collect(),
            eta: 1.0,
        }
    }

    fn line_layout() -> Layout {
        presets::preset("tabletop").unwrap().state_layout()
    }

    #[test]
    fn init_is_uniform_and_deterministic() {
        let demo = occlusion3(1, 3).unwrap();
        let a = demo.initial();
        assert_eq!(a.len(), 100);
        assert!(a.particles.iter().all(|p| p.weight == 0.01));
        assert!(a.particles.iter().all(|p| p.state.0[1] == 0.15));
        assert_eq!(a, demo.initial());
    }

    #[test]
    fn zero_noise_prediction_is_identity() {
        let demo = occlusion3(1, 3).unwrap();
        let ps = demo.initial();
        let cfg = FilterConfig { sigma: vec![0.0, 0.0], ..demo.config.clone() };
        assert_eq!(predict(&ps, &cfg, &line_layout(), 0).unwrap(), ps);
    }

    #[test]
    fn prediction_variance_matches_sigma() {
        let layout = line_layout();
        let n = 100_000;
        let ps = ParticleSet {
            particles: (0..n).map(|_| Particle { state: ModeledState(vec![0.0, 0.0]), weight: 1.0 / n as f64 }).collect(),
            eta: 1.0,
        };
        let cfg = FilterConfig { n_particles: n, sigma: vec![0.02, 0.05], ..Default::default() };
        let out = predict(&ps, &cfg, &layout, 1).unwrap();
        for (k, s) in [0.02f64, 0.05].iter().enumerate() {
            let var = out.particles.iter().map(|p| p.state.0[k] * p.state.0[k]).sum::<f64>() / n as f64;
            assert!((var / (s * s) - 1.0).abs() < 0.1, "{var}");
        }
        assert!(out.particles.iter().all(|p| p.weight == 1.0 / n as f64));
    }

    #[test]
    fn quaternions_stay_unit() {
        let spec = presets::preset("box").unwrap();
        let layout = spec.state_layout();
        let ps = init(&FilterConfig { n_particles: 50, ..Default::default() }, |r| spec.sample_state(r));
        let cfg = FilterConfig { n_particles: 50, sigma: vec![0.01, 0.01, 0.01, 0.2], ..Default::default() };
        let out = predict(&ps, &cfg, &layout, 0).unwrap();
        for p in &out.particles {
            let q = &p.state.0[3..7];
            let n: f64 = q.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_ne!(out, ps);
    }

    #[test]
    fn harmonic_update() {
        let ps = set(&[0.5, 0.5]);
        let out = update_with_losses(&ps, &[0.2, 0.4], false).unwrap();
        assert!((out.particles[0].weight - 2.0 / 3.0).abs() < 1e-12);
        assert!((out.particles[1].weight - 1.0 / 3.0).abs() < 1e-12);
        assert!((out.eta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_losses_keep_the_prior() {
        let ps = set(&[0.1, 0.2, 0.3, 0.4]);
        for scaling in [false, true] {
            let out = update_with_losses(&ps, &[0.7; 4], scaling).unwrap();
            for (a, b) in out.particles.iter().zip(&ps.particles) {
                assert!((a.weight - b.weight).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_update_is_an_error() {
        let ps = set(&[0.0, 0.0]);
        assert!(matches!(update_with_losses(&ps, &[0.1, 0.2], false), Err(Error::Degenerate(_))));
        assert!(update_with_losses(&set(&[]), &[], false).is_err());
    }

    #[test]
    fn systematic_resampling_properties() {
        let uniform = set(&[0.25; 4]);
        let r = resample_systematic(&uniform, 5);
        assert_eq!(r.states(), uniform.states());
        let mut spike = vec![0.0; 10];
        spike[0] = 1.0;
        assert!(resample_systematic(&set(&spike), 5).particles.iter().all(|p| p.state.0[0] == 0.0));

        let mut rng = rng::rng_for(6, Domain::Scene, &[]);
        for trial in 0..200 {
            let n = 1 + trial % 40;
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let out = resample_systematic(&set(&w), trial as u64);
            assert_eq!(out.len(), n);
            assert!(out.particles.iter().all(|p| p.weight == 1.0 / n as f64));
            for (i, wi) in w.iter().enumerate() {
                let c = out.particles.iter().filter(|p| p.state.0[0] == i as f64).count() as f64;
                let e = n as f64 * wi;
                assert!(c >= e.floor() - 1e-9 && c <= e.ceil() + 1e-9, "particle {i}: {c} vs {e}");
            }
        }
    }

    #[test]
    fn ess_formula() {
        assert!((ess(&set(&[0.01; 100])) - 100.0).abs() < 1e-9);
        assert_eq!(ess(&set(&[1.0, 0.0, 0.0])), 1.0);
        assert_eq!(ess(&set(&[0.5, 0.5, 0.0, 0.0])), 2.0);
    }

    #[test]
    fn occluded_particles_outweigh_free_space() {
        let demo = occlusion3(1, 0).unwrap();
        let spec = &demo.spec;
        let z = &demo.z[0];
        let y = &demo.frames[0];
        // Behind either obstacle vs. clearly visible on the table.
        let behind = [ModeledState(vec![0.17, 0.15]), ModeledState(vec![-0.17, 0.15])];
        let free = [ModeledState(vec![0.0, 0.15]), ModeledState(vec![0.32, 0.15]), ModeledState(vec![-0.32, 0.15])];
        let ps = ParticleSet {
            particles: behind.iter().chain(&free).map(|s| Particle { state: s.clone(), weight: 0.2 }).collect(),
            eta: 1.0,
        };
        assert_eq!(occluded_mass(spec, z, &ParticleSet { particles: ps.particles[..2].to_vec(), eta: 1.0 }).unwrap(), 0.4);
        assert_eq!(occluded_mass(spec, z, &ParticleSet { particles: ps.particles[2..].to_vec(), eta: 1.0 }).unwrap(), 0.0);
        let ev: Evaluator<'_, f64> = Evaluator::InputAndSynthetic { spec, z: spec.nominal_unmodeled() };
        assert_eq!(ev.kind(), EvaluatorKind::InputAndSynthetic);
        let out = measurement_update(&ps, y, &ev, false).unwrap();
        let w = out.weights();
        let lowest_behind = w[..2].iter().copied().fold(f64::INFINITY, f64::min);
        assert!(w[2..].iter().all(|v| *v < lowest_behind), "{w:?}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scripted_demo_meets_phase_targets() {
        let demo = occlusion3(4, 0).unwrap();
        let snaps = demo.run().unwrap();
        for s in &snaps {
            assert!((s.set.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let ends = demo.phase_ends();
        let m1 = occluded_mass(&demo.spec, &demo.z[ends[0]], &snaps[ends[0]].set).unwrap();
        let m2 = occluded_mass(&demo.spec, &demo.z[ends[1]], &snaps[ends[1]].set).unwrap();
        let err = demo.mean_error(&snaps[ends[2]].set);
        assert!(m1 >= 0.6, "phase 1 mass {m1}");
        assert!(m2 >= 0.8, "phase 2 mass {m2}");
        assert!(err <= 0.02, "phase 3 error {err}");
        assert_eq!(snaps, demo.run().unwrap());
    }
}
