//! Training driver: streams minibatches, steps the optimizer, writes
//! metrics and checkpoints.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use dmu_core::autodiff::Real;
use dmu_core::data::PrimeOptions;
use dmu_core::model::CaeModel;
use dmu_core::rng::{self, Domain};
use dmu_core::training::{LossTerms, Precision, TrainConfig, Trainer};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{self, checkpoint};
use crate::stream::{self, BatchStream, Source, DEFAULT_BUFFER};

pub const CHECKPOINT: &str = "model.ckpt";
pub const METRICS: &str = "metrics.csv";
pub const TIMING: &str = "timing.csv";

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub workers: usize,
    pub buffer: usize,
    /// Read samples from a `gen-data` directory instead of rendering live.
    pub data: Option<PathBuf>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { workers: 1, buffer: DEFAULT_BUFFER, data: None, verbose: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub labeled: f64,
    pub unlabeled: f64,
    pub total: f64,
    pub validation: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub wall_seconds: f64,
    pub checkpoint: PathBuf,
}

impl TrainReport {
    pub fn first_total(&self) -> f64 {
        self.epochs.first().map_or(f64::NAN, |e| e.total)
    }

    pub fn last_total(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.total)
    }
}

/// Trained weights in the precision the config asked for.
pub enum Trained {
    F32(CaeModel<f32>),
    F64(CaeModel<f64>),
}

fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,labeled,unlabeled,total,validation\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.9},{:.9},{:.9},{:.9}", r.epoch, r.labeled, r.unlabeled, r.total, r.validation);
    }
    s
}

fn timing_csv(rows: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,seconds\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.3}", r.epoch, r.seconds);
    }
    s
}

/// Runs training per `cfg`, writing into `out`, which must exist.
pub fn train(cfg: &TrainConfig, out: &Path, opts: &TrainOptions) -> Result<(Trained, TrainReport)> {
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    if !out.is_dir() {
        return Err(Error::io(out, std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist")));
    }
    match cfg.precision {
        Precision::F32 => run::<f32>(cfg, out, opts).map(|(m, r)| (Trained::F32(m), r)),
        Precision::F64 => run::<f64>(cfg, out, opts).map(|(m, r)| (Trained::F64(m), r)),
    }
}

fn run<T: Real>(cfg: &TrainConfig, out: &Path, opts: &TrainOptions) -> Result<(CaeModel<T>, TrainReport)> {
    let spec = cfg.scenario_spec()?;
    let desc = cfg.descriptor(&spec);
    let model = CaeModel::<T>::init(desc, rng::derive(cfg.seed, Domain::Init, &[]))?;
    let mut trainer = Trainer::new(model, cfg);

    let n_val = cfg.validation_size();
    let source = match &opts.data {
        Some(dir) => Source::disk(dir.clone(), n_val)?,
        None => Source::Live {
            spec: Arc::new(spec.clone()),
            opts: PrimeOptions { noise: cfg.noise, mask_union: cfg.mask_union },
            seed: cfg.seed,
        },
    };
    let validation = stream::validation_set(&source, n_val, opts.workers)?;
    let val_refs: Vec<_> = validation.iter().collect();

    let stream_cfg = cfg.stream();
    let per_epoch = stream_cfg.batches_per_epoch();
    let batches = BatchStream::spawn(source, stream_cfg, cfg.seed, 0, cfg.epochs, opts.workers, opts.buffer)?;

    let ckpt = out.join(CHECKPOINT);
    let started = Instant::now();
    let mut rows: Vec<EpochMetrics> = Vec::with_capacity(cfg.epochs);
    let mut acc = LossTerms::default();
    let mut count = 0usize;
    let mut epoch_start = Instant::now();
    for b in batches {
        let b = b?;
        let stats = trainer.step(&b.refs()).map_err(|e| {
            let kept = if rows.is_empty() { "no checkpoint written yet".to_string() } else { format!("last good checkpoint {} (epoch {})", ckpt.display(), rows.len() - 1) };
            Error::Numeric(format!("{e} at epoch {} minibatch {}; {kept}", b.epoch, b.index))
        })?;
        if !stats.loss.total().is_finite() {
            return Err(Error::Numeric(format!("loss is not finite at epoch {} minibatch {}", b.epoch, b.index)));
        }
        acc.labeled += stats.loss.labeled;
        acc.unlabeled += stats.loss.unlabeled;
        count += 1;
        if count == per_epoch {
            let validation = if val_refs.is_empty() {
                f64::NAN
            } else {
                val_refs
                    .chunks(cfg.batch)
                    .map(|c| trainer.evaluate(c).map(|l| l.total() * c.len() as f64))
                    .sum::<dmu_core::Result<f64>>()?
                    / val_refs.len() as f64
            };
            let n = count as f64;
            let m = EpochMetrics {
                epoch: b.epoch,
                labeled: acc.labeled / n,
                unlabeled: acc.unlabeled / n,
                total: (acc.labeled + acc.unlabeled) / n,
                validation,
                seconds: epoch_start.elapsed().as_secs_f64(),
            };
            rows.push(m);
            let meta = serde_json::json!({ "epoch": b.epoch, "config": cfg });
            checkpoint::save(&ckpt, &trainer.model, &meta)?;
            io::write_text(&out.join(METRICS), &metrics_csv(&rows))?;
            io::write_text(&out.join(TIMING), &timing_csv(&rows))?;
            if opts.verbose {
                eprintln!("epoch {:>3}  loss {:.5}  val {:.5}  {:.1}s", m.epoch, m.total, m.validation, m.seconds);
            }
            acc = LossTerms::default();
            count = 0;
            epoch_start = Instant::now();
        }
    }
    if rows.len() != cfg.epochs {
        return Err(Error::Numeric(format!("stream ended after {} of {} epochs", rows.len(), cfg.epochs)));
    }
    let report = TrainReport { epochs: rows, wall_seconds: started.elapsed().as_secs_f64(), checkpoint: ckpt };
    Ok((trainer.model, report))
}
