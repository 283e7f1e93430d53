//! Command-line interface. `main.rs` only parses and maps errors to exit
//! codes; everything else lives here so tests can drive it directly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmu_core::autodiff::Real;
use dmu_core::data::{NoiseConfig, PrimeOptions};
use dmu_core::filter::{self, occluded_mass, OCCLUSION3};
use dmu_core::likelihood::{self, Evaluator, EvaluatorKind, SweepRow};
use dmu_core::render::{render_depth, render_segmentation};
use dmu_core::scene::{sample_scene, DofKind, ModeledState, ScenarioSpec, SweepAxis, UnmodeledParams};
use dmu_core::training::{Profile, TrainConfig};
use serde::Serialize;

use crate::config::{self, OUT_DIR_ENV};
use crate::error::{Error, Result};
use crate::io::checkpoint::{self, AnyModel};
use crate::io::dataset::{self, DatasetManifest, Record};
use crate::io::{self as fio, pfm, pgm};
use crate::stream::{self, Source};
use crate::train::{self, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "dmu", version, about = "Learned depth-image measurement models for Bayes filters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a depth image and target mask for one state.
    Render(RenderArgs),
    /// Write primed training pairs to a dataset directory.
    GenData(GenDataArgs),
    /// Train a conditional autoencoder.
    Train(TrainArgs),
    /// Loss along translation or rotation axes through a ground-truth state.
    Sweep(SweepArgs),
    /// Run a particle filter on a scripted or recorded depth sequence.
    Filter(FilterArgs),
    /// Describe a checkpoint, dataset or scenario.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileArg {
    Desk,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScenarioArgs {
    /// Built-in scenario: box, box-translation, laptop, cabinet, tabletop.
    #[arg(long)]
    pub preset: Option<String>,
    /// Scenario file (TOML); overrides --preset.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Resolution profile; keeps the preset's own camera when omitted.
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        let spec = config::resolve_scenario(self.preset.as_deref(), self.scenario.as_deref())?;
        Ok(match self.profile {
            Some(ProfileArg::Desk) => spec.with_resolution(64, 32)?,
            Some(ProfileArg::Paper) => spec.with_resolution(256, 128)?,
            None => spec,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Output directory; must exist. Defaults to $DMU_OUT_DIR.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// `identity`, `seed`, or comma-separated state values.
    #[arg(long, default_value = "identity")]
    pub state: String,
    /// Hinge angle of an articulated target in degrees; overrides --state.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Seed for `--state seed` and for sampling `z` with --random-z.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample the unmodeled parameters instead of using range midpoints.
    #[arg(long)]
    pub random_z: bool,
    // The manifest sits in the output dir, so the path is left out of it.
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 1050)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Gaussian depth noise in meters.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Also label the footprint the target vacated.
    #[arg(long)]
    pub mask_union: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    // The manifest sits in the output dir, so the path is left out of it.
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Training config (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Read samples from a gen-data directory instead of rendering live.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Producer threads.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Minibatches the producer may run ahead.
    #[arg(long, default_value_t = stream::DEFAULT_BUFFER)]
    pub buffer: usize,
    #[arg(long)]
    pub quiet: bool,
    // The manifest sits in the output dir, so the path is left out of it.
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// learned, insyn or synsyn.
    #[arg(long, default_value = "synsyn")]
    pub evaluator: String,
    /// Checkpoint for the learned evaluator.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Seed of the ground-truth scene.
    #[arg(long, default_value_t = 0)]
    pub scene_seed: u64,
    /// Comma-separated axes: tx, ty, tz, rx, ry, rz, dofN.
    #[arg(long, default_value = "tx,ty,tz")]
    pub axes: String,
    /// Half range in meters (translations) or degrees (rotations).
    #[arg(long, default_value_t = 0.15)]
    pub half_range: f64,
    #[arg(long, default_value_t = 21)]
    pub steps: usize,
    /// Min-max scale each axis; defaults to on for the learned evaluator.
    #[arg(long)]
    pub scale: Option<bool>,
    // The manifest sits in the output dir, so the path is left out of it.
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FilterArgs {
    /// Scripted sequence; only `occlusion3` exists.
    #[arg(long, default_value = OCCLUSION3)]
    pub scripted: String,
    #[arg(long, default_value_t = 4)]
    pub frames_per_phase: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub particles: usize,
    /// Directory of `.pfm` depth frames, used in name order instead of the
    /// scripted renders.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// `insyn` or `learned`.
    #[arg(long, default_value = "insyn")]
    pub evaluator: String,
    /// Checkpoint for the learned evaluator; it must be trained on the
    /// tabletop scenario at the frame resolution.
    #[arg(long)]
    pub model: Option<PathBuf>,
    // The manifest sits in the output dir, so the path is left out of it.
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Print a preset as a scenario file.
    #[arg(long)]
    pub preset: Option<String>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Render(a) => render(&a),
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Filter(a) => filter_cmd(&a),
        Command::Inspect(a) => inspect(&a),
    }
}

fn out_dir(o: &OutArgs) -> Result<&Path> {
    if !o.out.is_dir() {
        return Err(Error::io(&o.out, std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist")));
    }
    Ok(&o.out)
}

/// Identity rotations, translations at range midpoints, other DOFs at
/// zero clamped into range.
pub fn identity_state(spec: &ScenarioSpec) -> ModeledState {
    let mut v = Vec::new();
    for b in &spec.state {
        match (b.dof.kind, b.range) {
            (DofKind::Quat, _) => v.extend_from_slice(&[1.0, 0.0, 0.0, 0.0]),
            (DofKind::Tx | DofKind::Ty | DofKind::Tz, Some([lo, hi])) => v.push((lo + hi) * 0.5),
            (_, Some([lo, hi])) => v.push(0.0f64.clamp(lo, hi)),
            (_, None) => v.push(0.0),
        }
    }
    ModeledState(v)
}

fn parse_state(spec: &ScenarioSpec, s: &str, seed: u64) -> Result<ModeledState> {
    let n = spec.state_layout().len;
    let x = match s {
        "identity" => identity_state(spec),
        "seed" => sample_scene(spec, seed).0,
        _ => ModeledState(
            s.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("--state: `{t}` is not a number"))))
                .collect::<Result<_>>()?,
        ),
    };
    if x.len() != n {
        return Err(Error::Config(format!("--state: scenario `{}` needs {n} values, got {}", spec.name, x.len())));
    }
    Ok(x)
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let out = out_dir(&a.out)?;
    let spec = a.scenario.resolve()?;
    let mut x = parse_state(&spec, &a.state, a.seed)?;
    if let Some(deg) = a.alpha {
        let i = spec
            .state_layout()
            .dofs
            .iter()
            .position(|d| d.kind == DofKind::Angle)
            .ok_or_else(|| Error::Config(format!("--alpha: scenario `{}` has no hinge angle", spec.name)))?;
        x.0[spec.state_layout().offsets[i]] = deg.to_radians();
    }
    let z = if a.random_z { sample_scene(&spec, a.seed).1 } else { spec.nominal_unmodeled() };
    let scene = spec.bind(&x, &z)?;
    let depth = render_depth(&scene);
    let mask = render_segmentation(&scene, &spec.target_ids())?;
    pfm::write(&out.join("depth.pfm"), &depth)?;
    pgm::write_mask(&out.join("mask.pgm"), &mask)?;
    fio::write_atomic(&out.join("depth.pgm"), &pgm::encode_depth_preview(&depth, spec.camera.max_depth))?;
    #[derive(Serialize)]
    struct Echo<'a> {
        args: &'a RenderArgs,
        state: &'a ModeledState,
        unmodeled: &'a UnmodeledParams,
    }
    config::write_manifest(out, "render", a.seed, &Echo { args: a, state: &x, unmodeled: &z })
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let out = out_dir(&a.out)?;
    let spec = a.scenario.resolve()?;
    let noise = NoiseConfig { dropout_prob: a.dropout, gaussian_sigma: a.sigma };
    noise.validate().map_err(|e| Error::Config(e.to_string()))?;
    if a.count == 0 {
        return Err(Error::Config("--count must be positive".into()));
    }
    let source = Source::Live { spec: Arc::new(spec.clone()), opts: PrimeOptions { noise, mask_union: a.mask_union }, seed: a.seed };
    let mut records = Vec::with_capacity(a.count);
    let chunk = 64;
    for start in (0..a.count).step_by(chunk) {
        let ids: Vec<usize> = (start..(start + chunk).min(a.count)).collect();
        for (i, s) in ids.iter().zip(stream::produce(&source, 0, &ids, a.count, a.workers)?) {
            dataset::write_record(out, *i, &Record::from_sample(&s))?;
            records.push(dataset::record_name(*i));
        }
    }
    let m = DatasetManifest {
        scenario: spec.name.clone(),
        width: spec.camera.width,
        height: spec.camera.height,
        state_dim: spec.state_layout().len,
        count: a.count,
        seed: a.seed,
        max_depth: spec.camera.max_depth,
        records,
    };
    dataset::write_manifest(out, &m)?;
    config::write_manifest(out, "gen-data", a.seed, a)
}

pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => config::load_train_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(p) = a.profile {
        cfg.profile = p.into();
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let out = out_dir(&a.out)?;
    let cfg = train_config(a)?;
    config::write_manifest(out, "train", cfg.seed, &cfg)?;
    let opts = TrainOptions { workers: a.workers, buffer: a.buffer, data: a.data.clone(), verbose: !a.quiet };
    let (_, report) = train::train(&cfg, out, &opts)?;
    if !a.quiet {
        eprintln!(
            "trained {} epochs in {:.1}s; loss {:.5} -> {:.5}; checkpoint {}",
            report.epochs.len(),
            report.wall_seconds,
            report.first_total(),
            report.last_total(),
            report.checkpoint.display()
        );
    }
    Ok(())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis,offset,raw_loss,scaled_loss\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.6},{:.9e},{:.9e}", r.axis, r.offset, r.raw, r.scaled);
    }
    s
}

fn parse_axes(s: &str, half: f64) -> Result<Vec<(SweepAxis, f64)>> {
    s.split(',')
        .map(|t| {
            let axis: SweepAxis = t.trim().parse().map_err(|e: dmu_core::Error| Error::Config(format!("--axes: {e}")))?;
            let h = if matches!(axis, SweepAxis::Rotate(_)) { half.to_radians() } else { half };
            Ok((axis, h))
        })
        .collect()
}

fn sweep_with<T: Real>(a: &SweepArgs, ev: &Evaluator<'_, T>, spec: &ScenarioSpec) -> Result<Vec<SweepRow>> {
    let (x, z) = sample_scene(spec, a.scene_seed);
    let y = render_depth(&spec.bind(&x, &z)?);
    let axes = parse_axes(&a.axes, a.half_range)?;
    let scale = a.scale.unwrap_or(ev.default_scaling());
    Ok(likelihood::sweep(ev, spec, &y, &x, &z, &axes, a.steps, scale)?)
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let out = out_dir(&a.out)?;
    let kind = EvaluatorKind::parse(&a.evaluator)
        .ok_or_else(|| Error::Config(format!("--evaluator: `{}` (expected learned, insyn or synsyn)", a.evaluator)))?;
    let rows = if kind == EvaluatorKind::Learned {
        let path = a.model.as_ref().ok_or_else(|| Error::Config("--model is required for the learned evaluator".into()))?;
        let (model, meta) = checkpoint::load(path)?;
        let mut sa = a.scenario.clone();
        if sa.preset.is_none() && sa.scenario.is_none() {
            sa.preset = meta["config"]["scenario"].as_str().map(str::to_owned);
        }
        let d = model.descriptor();
        let spec = sa.resolve()?.with_resolution(d.width, d.height)?;
        let outlier = Some((0.01, 0.99));
        match &model {
            AnyModel::F32(m) => sweep_with(a, &Evaluator::Learned { model: m, outlier }, &spec)?,
            AnyModel::F64(m) => sweep_with(a, &Evaluator::Learned { model: m, outlier }, &spec)?,
        }
    } else {
        let spec = a.scenario.resolve()?;
        let (x, z) = sample_scene(&spec, a.scene_seed);
        let ev: Evaluator<'_, f64> = match kind {
            EvaluatorKind::InputAndSynthetic => Evaluator::InputAndSynthetic { spec: &spec, z },
            _ => Evaluator::SyntheticAndSynthetic { spec: &spec, x_gt: x, z_gt: z },
        };
        sweep_with(a, &ev, &spec)?
    };
    fio::write_text(&out.join("sweep.csv"), &sweep_csv(&rows))?;
    config::write_manifest(out, "sweep", a.scene_seed, a)
}

pub fn filter_cmd(a: &FilterArgs) -> Result<()> {
    let out = out_dir(&a.out)?;
    if a.scripted != OCCLUSION3 {
        return Err(Error::Config(format!("--scripted: unknown sequence `{}` (expected {OCCLUSION3})", a.scripted)));
    }
    if a.frames_per_phase == 0 {
        return Err(Error::Config("--frames-per-phase must be positive".into()));
    }
    let mut demo = filter::occlusion3(a.frames_per_phase, a.seed)?;
    demo.config.n_particles = a.particles;
    let scripted = a.frames.is_none();
    if let Some(dir) = &a.frames {
        demo.frames = load_frames(dir, &demo.spec)?;
    }
    demo.config.validate(&demo.spec.state_layout()).map_err(|e| Error::Config(e.to_string()))?;
    let snaps = match EvaluatorKind::parse(&a.evaluator) {
        Some(EvaluatorKind::InputAndSynthetic) => demo.run()?,
        Some(EvaluatorKind::Learned) => {
            let path = a.model.as_ref().ok_or_else(|| Error::Config("--model is required for the learned evaluator".into()))?;
            let (model, _) = checkpoint::load(path)?;
            let d = model.descriptor();
            let cam = &demo.spec.camera;
            if d.state_dim != demo.spec.state_layout().len || (d.width, d.height) != (cam.width, cam.height) {
                return Err(Error::Config(format!(
                    "--model: expects {}x{} frames and {} state values, the tabletop filter has {}x{} and {}",
                    d.width,
                    d.height,
                    d.state_dim,
                    cam.width,
                    cam.height,
                    demo.spec.state_layout().len
                )));
            }
            let outlier = Some((0.01, 0.99));
            match &model {
                AnyModel::F32(m) => demo.run_with(&Evaluator::Learned { model: m, outlier })?,
                AnyModel::F64(m) => demo.run_with(&Evaluator::Learned { model: m, outlier })?,
            }
        }
        _ => return Err(Error::Config(format!("--evaluator: `{}` (expected insyn or learned)", a.evaluator))),
    };

    let mut particles = String::from("frame,particle,weight,tx,ty\n");
    let mut summary = String::from("frame,phase,obstacles,eta,ess,resampled,weight_sum,occluded_mass,mean_tx,mean_ty,mean_error\n");
    for s in &snaps {
        for (i, p) in s.set.particles.iter().enumerate() {
            let _ = writeln!(particles, "{},{},{:.12e},{:.9},{:.9}", s.frame, i, p.weight, p.state.0[0], p.state.0[1]);
        }
        // Phase, obstacles and occluded mass are only known for scripted frames.
        let (phase, obstacles, mass) = if scripted {
            let z = &demo.z[s.frame];
            let mass = occluded_mass(&demo.spec, z, &s.set)?;
            ((demo.phase[s.frame] + 1).to_string(), z.0[0].to_string(), format!("{mass:.9}"))
        } else {
            (String::new(), String::new(), String::new())
        };
        let m = s.set.mean();
        let _ = writeln!(
            summary,
            "{},{},{},{:.9e},{:.6},{},{:.15},{},{:.9},{:.9},{:.9}",
            s.frame,
            phase,
            obstacles,
            s.set.eta,
            s.ess,
            s.resampled as u8,
            s.set.weights().iter().sum::<f64>(),
            mass,
            m[0],
            m[1],
            demo.mean_error(&s.set)
        );
    }
    fio::write_text(&out.join("particles.csv"), &particles)?;
    fio::write_text(&out.join("summary.csv"), &summary)?;
    config::write_manifest(out, "filter", a.seed, a)
}

fn load_frames(dir: &Path, spec: &ScenarioSpec) -> Result<Vec<dmu_core::render::DepthImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pfm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("--frames: no .pfm files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let img = pfm::read(p)?;
            if (img.width, img.height) != (spec.camera.width, spec.camera.height) {
                return Err(Error::format(
                    p,
                    format!("frame is {}x{}, scenario camera is {}x{}", img.width, img.height, spec.camera.width, spec.camera.height),
                ));
            }
            Ok(img)
        })
        .collect()
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let mut printed = false;
    if let Some(p) = &a.model {
        let (m, meta) = checkpoint::load(p)?;
        let d = m.descriptor();
        let info = serde_json::json!({
            "dtype": m.dtype().name(),
            "parameters": d.parameter_count(),
            "descriptor": d,
            "layers": d.layer_shapes(),
            "meta": meta,
        });
        println!("{}", serde_json::to_string_pretty(&info).map_err(|e| Error::format(p, e.to_string()))?);
        printed = true;
    }
    if let Some(dir) = &a.data {
        let m = dataset::read_manifest(dir)?;
        println!("{}", serde_json::to_string_pretty(&m).map_err(|e| Error::format(dir, e.to_string()))?);
        printed = true;
    }
    if let Some(name) = &a.preset {
        print!("{}", config::scenario_toml(&config::resolve_scenario(Some(name), None)?)?);
        printed = true;
    }
    if !printed {
        return Err(Error::Config("inspect needs --model, --data or --preset".into()));
    }
    Ok(())
}
