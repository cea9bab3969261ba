//! Mini-batch teacher-forced training with Adam and global-norm clipping.
//!
//! Per-example forward/backward runs in parallel over fixed-size chunks of a
//! batch; chunk sums are reduced in example order, so results do not depend
//! on the thread count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    accumulate_gradients, count_targets, encode_checkpoint, forward, init_params, Checkpoint, Mode,
    ModelDims, ModelParams, DEFAULT_HIDDEN, TENSOR_NAMES,
};
use crate::numerics::{AdamState, Matrix, NamedTensors, ParamSet};
use crate::text::TokenizedCaption;

/// Examples whose gradients are summed sequentially before the ordered
/// cross-chunk reduction.
pub const GRAD_CHUNK: usize = 8;

pub const TRAIN_STATE_TENSOR: &str = "train.state";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    pub gradient_clip_norm: f64,
    pub seed: u64,
    /// Write `epoch_NNNN.ckpt` every this many epochs; the final epoch is
    /// always written.
    pub checkpoint_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 2e-4,
            batch_size: 64,
            epochs: 50,
            dropout: 0.5,
            hidden: DEFAULT_HIDDEN,
            embed_dim: DEFAULT_HIDDEN,
            gradient_clip_norm: 5.0,
            seed: 0,
            checkpoint_every: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.gradient_clip_norm.is_finite() && self.gradient_clip_norm > 0.0) {
            return bad(format!("gradient_clip_norm must be > 0, got {}", self.gradient_clip_norm));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim),
            ("checkpoint_every", self.checkpoint_every),
        ] {
            if v == 0 {
                return bad(format!("{name} must be > 0"));
            }
        }
        Ok(())
    }

    pub fn dims(&self, vocab_size: usize, pooled_dim: usize) -> ModelDims {
        ModelDims::new(vocab_size, self.embed_dim, self.hidden, pooled_dim)
    }
}

/// One (video, caption) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub video_id: String,
    pub pooled: Arc<[f64]>,
    pub caption: TokenizedCaption,
}

/// SplitMix64 finalizer folded over `parts`.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut z: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Seeded shuffle of `0..n`, cut into batches; the last batch may be short.
pub fn make_batches(n: usize, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::arg("batch_size must be > 0"));
    }
    if n == 0 {
        return Err(Error::arg("no training examples"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
    pub checkpoint_path: Option<String>,
}

/// Model parameters plus optimizer position; serializable as a checkpoint.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainingConfig,
    pub params: ModelParams,
    adam: Vec<AdamState>,
    /// Completed epochs.
    pub epoch: usize,
    pub steps: u64,
}

impl Trainer {
    pub fn new(dims: ModelDims, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let params = init_params(dims, config.seed)?;
        let adam = params.tensors().iter().map(|(_, m)| AdamState::for_param(m)).collect();
        Ok(Trainer {
            config,
            params,
            adam,
            epoch: 0,
            steps: 0,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(checkpoint: Checkpoint, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let dims = checkpoint.params.dims;
        if dims.hidden != config.hidden || dims.embed_dim != config.embed_dim {
            return Err(Error::arg(format!(
                "checkpoint has hidden={} embed_dim={}, config asks for hidden={} embed_dim={}",
                dims.hidden, dims.embed_dim, config.hidden, config.embed_dim
            )));
        }
        let state = checkpoint
            .extra(TRAIN_STATE_TENSOR)
            .ok_or_else(|| Error::arg("checkpoint carries no optimizer state"))?;
        if state.shape() != (1, 2) {
            return Err(Error::State(format!("{TRAIN_STATE_TENSOR} has shape {:?}", state.shape())));
        }
        let (epoch, steps) = (state.get(0, 0) as usize, state.get(0, 1) as u64);
        let mut adam = Vec::with_capacity(TENSOR_NAMES.len());
        for (name, p) in checkpoint.params.tensors() {
            let moment = |kind: &str| {
                let key = format!("adam.{kind}.{name}");
                checkpoint
                    .extra(&key)
                    .filter(|m| m.shape() == p.shape())
                    .cloned()
                    .ok_or_else(|| Error::State(format!("missing or misshapen {key}")))
            };
            adam.push(AdamState {
                first_moment: moment("m")?,
                second_moment: moment("v")?,
                step_count: steps,
            });
        }
        Ok(Trainer {
            config,
            params: checkpoint.params,
            adam,
            epoch,
            steps,
        })
    }

    pub fn extras(&self) -> NamedTensors {
        let mut out = Vec::with_capacity(2 * TENSOR_NAMES.len() + 1);
        for (name, s) in TENSOR_NAMES.iter().zip(&self.adam) {
            out.push((format!("adam.m.{name}"), s.first_moment.clone()));
            out.push((format!("adam.v.{name}"), s.second_moment.clone()));
        }
        let state = Matrix::new(1, 2, vec![self.epoch as f64, self.steps as f64]).expect("finite");
        out.push((TRAIN_STATE_TENSOR.to_string(), state));
        NamedTensors(out)
    }

    pub fn checkpoint(&self) -> Vec<u8> {
        encode_checkpoint(&self.params, &self.extras())
    }

    fn check_examples(&self, examples: &[TrainingExample]) -> Result<()> {
        let dims = self.params.dims;
        for ex in examples {
            if ex.pooled.len() != dims.pooled_dim {
                return Err(Error::arg(format!(
                    "video {} has pooled dimension {}, model expects {}",
                    ex.video_id,
                    ex.pooled.len(),
                    dims.pooled_dim
                )));
            }
            if let Some(&t) = ex.caption.ids().iter().find(|&&t| t >= dims.vocab_size) {
                return Err(Error::arg(format!(
                    "video {} caption uses id {t} outside vocabulary of {}",
                    ex.video_id, dims.vocab_size
                )));
            }
        }
        Ok(())
    }

    /// Sum of token losses and gradient sum for `batch`, reduced in order.
    fn batch_gradients(&self, examples: &[TrainingExample], batch: &[usize], batch_no: usize) -> Result<(Vec<f64>, ModelParams)> {
        let cfg = &self.config;
        let chunks: Vec<(Vec<f64>, ModelParams)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grads = self.params.zeros_like();
                let mut losses = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    let ex = &examples[i];
                    let seed = mix_seed(&[cfg.seed, self.epoch as u64, batch_no as u64, i as u64]);
                    let trace = forward(&self.params, &ex.pooled, ex.caption.inputs(), cfg.dropout, Mode::Train, seed)?;
                    let targets = ex.caption.targets();
                    let n = count_targets(targets) as f64;
                    losses.push(trace.loss(targets)? * n);
                    accumulate_gradients(&trace, &self.params, targets, 1.0, &mut grads)?;
                }
                Ok((losses, grads))
            })
            .collect::<Result<_>>()?;
        let mut iter = chunks.into_iter();
        let (mut losses, mut grads) = iter.next().expect("batch is non-empty");
        for (l, g) in iter {
            losses.extend(l);
            grads.add_scaled(&g, 1.0)?;
        }
        Ok((losses, grads))
    }

    fn diagnostics(&self, batch_no: usize, cause: &str, grads: Option<&ModelParams>) -> Error {
        let norms: Vec<String> = self
            .params
            .tensors()
            .iter()
            .enumerate()
            .map(|(k, (name, p))| match grads {
                Some(g) => format!("{name}: |θ|={:.4e} |g|={:.4e}", p.norm(), g.tensors()[k].1.norm()),
                None => format!("{name}: |θ|={:.4e}", p.norm()),
            })
            .collect();
        Error::Numeric(format!(
            "{cause} at epoch {} batch {batch_no}; parameter norms: {}",
            self.epoch + 1,
            norms.join(", ")
        ))
    }

    /// One pass over `examples`. Returns the token-weighted mean training
    /// loss and per-step records.
    pub fn run_epoch(&mut self, examples: &[TrainingExample]) -> Result<(f64, Vec<StepRecord>)> {
        self.check_examples(examples)?;
        let epoch_seed = mix_seed(&[self.config.seed, self.epoch as u64]);
        let batches = make_batches(examples.len(), self.config.batch_size, epoch_seed)?;
        let mut example_loss = vec![0.0; examples.len()];
        let mut records = Vec::with_capacity(batches.len());
        for (batch_no, batch) in batches.iter().enumerate() {
            let (losses, mut grads) = match self.batch_gradients(examples, batch, batch_no) {
                Err(Error::Numeric(m)) => return Err(self.diagnostics(batch_no, &m, None)),
                other => other?,
            };
            let tokens: usize = batch
                .iter()
                .map(|&i| count_targets(examples[i].caption.targets()))
                .sum();
            let loss = losses.iter().sum::<f64>() / tokens as f64;
            grads.scale(1.0 / tokens as f64);
            let grad_norm = grads.global_norm();
            if !loss.is_finite() || !grad_norm.is_finite() {
                let cause = format!("non-finite loss {loss} (gradient norm {grad_norm})");
                return Err(self.diagnostics(batch_no, &cause, Some(&grads)));
            }
            let clip = self.config.gradient_clip_norm;
            if grad_norm > clip {
                grads.scale(clip / grad_norm);
            }
            let clipped_norm = grads.global_norm();
            for ((p, (_, g)), s) in self
                .params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(&mut self.adam)
            {
                s.update(p, g, self.config.learning_rate)?;
            }
            self.steps += 1;
            for (&i, l) in batch.iter().zip(losses) {
                example_loss[i] = l;
            }
            records.push(StepRecord {
                loss,
                grad_norm,
                clipped_norm,
            });
        }
        self.epoch += 1;
        let tokens: usize = examples.iter().map(|e| count_targets(e.caption.targets())).sum();
        Ok((example_loss.iter().sum::<f64>() / tokens as f64, records))
    }
}

/// Where [`train`] writes checkpoints and the JSON-lines log.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    pub checkpoint_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs `trainer` to `config.epochs`, writing checkpoints and log lines.
/// A resumed trainer appends to an existing log.
pub fn train_with(trainer: &mut Trainer, examples: &[TrainingExample], out: &TrainOutput) -> Result<Vec<EpochRecord>> {
    let mut log = match &out.log_path {
        Some(p) => Some(
            fs::OpenOptions::new()
                .create(true)
                .append(trainer.epoch > 0)
                .write(true)
                .truncate(trainer.epoch == 0)
                .open(p)
                .map_err(|e| Error::io(p, e))?,
        ),
        None => None,
    };
    if let Some(dir) = &out.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut records = Vec::new();
    while trainer.epoch < trainer.config.epochs {
        let start = Instant::now();
        let (mean_loss, _) = trainer.run_epoch(examples)?;
        let epoch = trainer.epoch;
        let mut checkpoint_path = None;
        if let Some(dir) = &out.checkpoint_dir {
            let bytes = trainer.checkpoint();
            if epoch.is_multiple_of(trainer.config.checkpoint_every) || epoch == trainer.config.epochs {
                let p = dir.join(checkpoint_name(epoch));
                write_file(&p, &bytes)?;
                checkpoint_path = Some(p.display().to_string());
            }
            if epoch == trainer.config.epochs {
                write_file(&dir.join("final.ckpt"), &bytes)?;
            }
        }
        let record = EpochRecord {
            epoch,
            mean_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
            checkpoint_path,
        };
        if let (Some(f), Some(p)) = (log.as_mut(), &out.log_path) {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(f, "{line}").map_err(|e| Error::io(p, e))?;
        }
        records.push(record);
    }
    Ok(records)
}

/// Fresh training run: returns the final parameters and per-epoch log.
pub fn train(
    examples: &[TrainingExample],
    dims: ModelDims,
    config: &TrainingConfig,
    out: &TrainOutput,
) -> Result<(ModelParams, Vec<EpochRecord>)> {
    let mut trainer = Trainer::new(dims, config.clone())?;
    let log = train_with(&mut trainer, examples, out)?;
    Ok((trainer.params, log))
}
