//! Minibatch production for training.
//!
//! A producer thread renders (or loads) the samples of each epoch and pushes
//! finished minibatches into a bounded channel. Within a minibatch, samples
//! are rendered by up to `workers` scoped threads, each filling fixed slots,
//! so the emitted sequence does not depend on the worker count or on how
//! far the producer runs ahead.

use std::path::PathBuf;
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use dmu_core::data::{self, epoch_plan, make_primed_pair_with, PrimeOptions, PrimedSample, StreamConfig};
use dmu_core::scene::ScenarioSpec;

use crate::error::{Error, Result};
use crate::io::dataset::{self, DatasetManifest};

pub const DEFAULT_BUFFER: usize = 4;

/// Where samples come from.
#[derive(Debug, Clone)]
pub enum Source {
    /// Rendered on the fly from seeds.
    Live { spec: Arc<ScenarioSpec>, opts: PrimeOptions, seed: u64 },
    /// Records of a `gen-data` directory. The last `held_out` records are
    /// the validation set; the rest are cycled through epoch by epoch.
    Disk { dir: PathBuf, manifest: Arc<DatasetManifest>, held_out: usize },
}

impl Source {
    pub fn disk(dir: PathBuf, held_out: usize) -> Result<Self> {
        let manifest = dataset::read_manifest(&dir)?;
        if manifest.records.len() <= held_out {
            return Err(Error::Config(format!(
                "dataset {} has {} records, need more than the {held_out} held out for validation",
                dir.display(),
                manifest.records.len()
            )));
        }
        Ok(Source::Disk { dir, manifest: Arc::new(manifest), held_out })
    }

    /// Training sample `i` of `epoch`.
    pub fn sample(&self, epoch: usize, i: usize, epoch_size: usize) -> Result<PrimedSample> {
        match self {
            Source::Live { spec, opts, seed } => Ok(make_primed_pair_with(spec, data::sample_seed(*seed, epoch, i), opts)?),
            Source::Disk { dir, manifest, held_out } => {
                let n = manifest.records.len() - held_out;
                let k = (epoch * epoch_size + i) % n;
                Ok(dataset::read_record(dir, &manifest.records[k])?.into_sample())
            }
        }
    }

    /// Validation sample `i`.
    pub fn validation(&self, i: usize) -> Result<PrimedSample> {
        match self {
            Source::Live { spec, opts, seed } => Ok(make_primed_pair_with(spec, data::validation_seed(*seed, i), opts)?),
            Source::Disk { dir, manifest, held_out } => {
                let n = manifest.records.len();
                let k = n - held_out + i % (*held_out).max(1);
                Ok(dataset::read_record(dir, &manifest.records[k])?.into_sample())
            }
        }
    }
}

/// One minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub epoch: usize,
    pub index: usize,
    pub samples: Vec<Arc<PrimedSample>>,
}

impl Batch {
    pub fn refs(&self) -> Vec<&PrimedSample> {
        self.samples.iter().map(|s| s.as_ref()).collect()
    }
}

/// Renders `indices` with up to `workers` threads; results stay in slot order.
pub fn produce(source: &Source, epoch: usize, indices: &[usize], epoch_size: usize, workers: usize) -> Result<Vec<PrimedSample>> {
    let workers = workers.clamp(1, indices.len().max(1));
    if workers == 1 {
        return indices.iter().map(|&i| source.sample(epoch, i, epoch_size)).collect();
    }
    let mut slots: Vec<Option<Result<PrimedSample>>> = (0..indices.len()).map(|_| None).collect();
    let chunk = indices.len().div_ceil(workers);
    thread::scope(|s| {
        for (idx, out) in indices.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            s.spawn(move || {
                for (i, slot) in idx.iter().zip(out.iter_mut()) {
                    *slot = Some(source.sample(epoch, *i, epoch_size));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot is filled")).collect()
}

/// Handle to a running producer. Iterating yields minibatches in
/// deterministic order; dropping it stops the producer.
pub struct BatchStream {
    rx: Option<Receiver<Result<Batch>>>,
    handle: Option<JoinHandle<()>>,
}

impl BatchStream {
    /// Streams `epochs` epochs starting at `first_epoch`.
    pub fn spawn(source: Source, cfg: StreamConfig, seed: u64, first_epoch: usize, epochs: usize, workers: usize, buffer: usize) -> Result<Self> {
        cfg.validate()?;
        let (tx, rx) = sync_channel(buffer.max(1));
        let handle = thread::spawn(move || {
            for epoch in first_epoch..first_epoch + epochs {
                let plan = match epoch_plan(&cfg, seed, epoch) {
                    Ok(p) => p,
                    Err(e) => {
                        let _ = tx.send(Err(e.into()));
                        return;
                    }
                };
                let mut cache: Vec<Option<Arc<PrimedSample>>> = vec![None; cfg.epoch_size];
                for (index, ids) in plan.iter().enumerate() {
                    let missing: Vec<usize> = ids.iter().copied().filter(|i| cache[*i].is_none()).collect();
                    if !missing.is_empty() {
                        match produce(&source, epoch, &missing, cfg.epoch_size, workers) {
                            Ok(samples) => {
                                for (i, s) in missing.iter().zip(samples) {
                                    cache[*i] = Some(Arc::new(s));
                                }
                            }
                            Err(e) => {
                                let _ = tx.send(Err(e));
                                return;
                            }
                        }
                    }
                    let samples = ids.iter().map(|i| cache[*i].clone().expect("rendered above")).collect();
                    if tx.send(Ok(Batch { epoch, index, samples })).is_err() {
                        return;
                    }
                }
            }
        });
        Ok(BatchStream { rx: Some(rx), handle: Some(handle) })
    }
}

impl Iterator for BatchStream {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        self.rx.as_ref()?.recv().ok()
    }
}

impl Drop for BatchStream {
    fn drop(&mut self) {
        // Disconnect first so a blocked producer wakes up and exits.
        self.rx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// The held-out validation samples, in order.
pub fn validation_set(source: &Source, n: usize, workers: usize) -> Result<Vec<PrimedSample>> {
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 || n < 2 {
        return (0..n).map(|i| source.validation(i)).collect();
    }
    let mut slots: Vec<Option<Result<PrimedSample>>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(workers);
    thread::scope(|s| {
        for (c, out) in slots.chunks_mut(chunk).enumerate() {
            s.spawn(move || {
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = Some(source.validation(c * chunk + j));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot is filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmu_core::scene::presets;

    fn live(seed: u64) -> Source {
        Source::Live { spec: Arc::new(presets::preset("box").unwrap()), opts: PrimeOptions::default(), seed }
    }

    fn collect(workers: usize, buffer: usize) -> Vec<(usize, usize, Vec<PrimedSample>)> {
        let cfg = StreamConfig { epoch_size: 12, reuse: 3, batch: 4 };
        BatchStream::spawn(live(5), cfg, 5, 0, 2, workers, buffer)
            .unwrap()
            .map(|b| {
                let b = b.unwrap();
                (b.epoch, b.index, b.samples.iter().map(|s| (**s).clone()).collect())
            })
            .collect()
    }

    #[test]
    fn batch_count_and_reuse_multiset() {
        let out = collect(1, 4);
        assert_eq!(out.len(), 2 * 9);
        let epoch0: Vec<_> = out.iter().filter(|b| b.0 == 0).collect();
        let pass = |p: usize| {
            let mut xs: Vec<Vec<u64>> = epoch0[p * 3..p * 3 + 3]
                .iter()
                .flat_map(|b| b.2.iter().map(|s| s.x1.0.iter().map(|v| v.to_bits()).collect()))
                .collect();
            xs.sort();
            xs
        };
        assert_eq!(pass(0), pass(1));
        assert_eq!(pass(0), pass(2));
    }

    #[test]
    fn order_independent_of_workers_and_buffer() {
        let a = collect(1, 1);
        assert_eq!(a, collect(3, 4));
        assert_eq!(a, collect(2, 16));
    }

    #[test]
    fn early_drop_stops_producer() {
        let cfg = StreamConfig { epoch_size: 8, reuse: 1, batch: 4 };
        let mut s = BatchStream::spawn(live(1), cfg, 1, 0, 100, 1, 1).unwrap();
        assert!(s.next().unwrap().is_ok());
        drop(s);
    }

    #[test]
    fn divisibility_is_checked() {
        let cfg = StreamConfig { epoch_size: 10, reuse: 1, batch: 4 };
        assert!(BatchStream::spawn(live(1), cfg, 1, 0, 1, 1, 1).is_err());
    }
}
