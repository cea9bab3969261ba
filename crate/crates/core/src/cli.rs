//! Command-line pipeline: preprocess → train → generate → evaluate, plus
//! gradcheck.
//!
//! Settings resolve as defaults, then `--config` JSON, then flags.
//! Exit codes: 0 success, 1 invalid input, 2 runtime or numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_pooled, preprocess, EncodedDataset};
use crate::decoding::{generate_caption, write_hypotheses, Hypotheses, read_hypotheses};
use crate::error::{Error, Result};
use crate::features::DEFAULT_POOL_WINDOW;
use crate::gradcheck::{run_gradcheck, GradCheckConfig};
use crate::metrics::evaluate;
use crate::model::load_checkpoint;
use crate::text::{read_manifest, Vocabulary, DEFAULT_VOCAB_CAP, MAX_CONTENT_TOKENS};
use crate::training::{train_with, TrainOutput, Trainer, TrainingConfig};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const DATASET_FILE: &str = "dataset.json";
pub const CONFIG_ECHO: &str = "config.json";
pub const TRAIN_LOG: &str = "train_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub training: TrainingConfig,
    pub vocab_cap: usize,
    pub pool_window: usize,
    pub max_len: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            training: TrainingConfig::default(),
            vocab_cap: DEFAULT_VOCAB_CAP,
            pool_window: DEFAULT_POOL_WINDOW,
            max_len: MAX_CONTENT_TOKENS,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            context: path.display().to_string(),
            source: e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.vocab_cap == 0 || self.pool_window == 0 || self.max_len == 0 {
            return Err(Error::arg("vocab_cap, pool_window and max_len must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "dualcap", version, about = "Dual-stream LSTM video captioner")]
pub struct Cli {
    /// Seed for every random draw of this invocation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file overriding default settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the vocabulary and encoded dataset from a caption manifest.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab_cap: Option<usize>,
        #[arg(long)]
        pool_window: Option<usize>,
    },
    /// Train on an encoded dataset, writing checkpoints and a JSON-lines log.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Greedy captions for every manifest video.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        pool_window: Option<usize>,
    },
    /// Score hypotheses against manifest references.
    Evaluate {
        #[arg(long)]
        hypotheses: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include per-video scores.
        #[arg(long)]
        verbose: bool,
    },
    /// Compare analytic gradients with central differences on a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        vocab: usize,
        #[arg(long, default_value_t = 10)]
        embed: usize,
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        #[arg(long, default_value_t = 6)]
        pooled: usize,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 0.5)]
        dropout: f64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub gradient_clip_norm: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, t: &mut TrainingConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { t.$f = v; })* };
        }
        set!(learning_rate, batch_size, epochs, dropout, hidden, embed_dim, gradient_clip_norm, checkpoint_every);
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::arg(format!("{} is not a readable file", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::arg(format!("{} is not a directory", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Echo<'a> {
    command: &'a str,
    paths: BTreeMap<&'a str, String>,
    config: &'a RunConfig,
}

fn echo_config(path: &Path, command: &str, paths: &[(&'static str, &Path)], config: &RunConfig) -> Result<()> {
    let echo = Echo {
        command,
        paths: paths.iter().map(|(k, p)| (*k, p.display().to_string())).collect(),
        config,
    };
    let mut text = serde_json::to_string_pretty(&echo).expect("echo serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Sibling file `<name>.config.json` for single-file outputs.
fn echo_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.training.seed = s;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli)?;
    match &cli.command {
        Command::Preprocess {
            manifest,
            features,
            out,
            vocab_cap,
            pool_window,
        } => {
            cfg.vocab_cap = vocab_cap.unwrap_or(cfg.vocab_cap);
            cfg.pool_window = pool_window.unwrap_or(cfg.pool_window);
            cfg.validate()?;
            require_file(manifest)?;
            require_dir(features)?;
            let records = read_manifest(manifest)?;
            let (vocab, dataset, summary) = preprocess(&records, features, cfg.vocab_cap, cfg.pool_window)?;
            create_dir(out)?;
            vocab.save(&out.join(VOCAB_FILE))?;
            dataset.save(&out.join(DATASET_FILE))?;
            echo_config(
                &out.join(CONFIG_ECHO),
                "preprocess",
                &[("manifest", manifest), ("features", features), ("out", out)],
                &cfg,
            )?;
            if summary.truncated > 0 {
                eprintln!(
                    "warning: {} caption(s) exceeded {MAX_CONTENT_TOKENS} tokens and were truncated",
                    summary.truncated
                );
            }
            println!(
                "videos {} captions {} vocab {} ukn_rate {:.4} truncated {}",
                summary.videos, summary.captions, summary.vocab_size, summary.ukn_rate, summary.truncated
            );
        }
        Command::Train {
            dataset,
            vocab,
            out,
            resume,
            overrides,
        } => {
            overrides.apply(&mut cfg.training);
            cfg.validate()?;
            require_file(dataset)?;
            require_file(vocab)?;
            if let Some(r) = resume {
                require_file(r)?;
            }
            let vocab = Vocabulary::load(vocab)?;
            let data = EncodedDataset::load(dataset)?;
            let examples = data.examples()?;
            let mut trainer = match resume {
                Some(r) => Trainer::resume(load_checkpoint(r)?, cfg.training.clone())?,
                None => Trainer::new(cfg.training.dims(vocab.len(), data.pooled_dim()?), cfg.training.clone())?,
            };
            if trainer.params.dims.vocab_size != vocab.len() {
                return Err(Error::arg(format!(
                    "checkpoint expects vocabulary of {} entries, vocabulary file has {}",
                    trainer.params.dims.vocab_size,
                    vocab.len()
                )));
            }
            create_dir(out)?;
            echo_config(&out.join(CONFIG_ECHO), "train", &[("dataset", dataset), ("out", out)], &cfg)?;
            let output = TrainOutput {
                checkpoint_dir: Some(out.clone()),
                log_path: Some(out.join(TRAIN_LOG)),
            };
            let log = train_with(&mut trainer, &examples, &output)?;
            if let Some(last) = log.last() {
                println!("epoch {} mean_loss {:.6}", last.epoch, last.mean_loss);
            }
        }
        Command::Generate {
            checkpoint,
            vocab,
            features,
            manifest,
            out,
            max_len,
            pool_window,
        } => {
            cfg.max_len = max_len.unwrap_or(cfg.max_len);
            cfg.pool_window = pool_window.unwrap_or(cfg.pool_window);
            cfg.validate()?;
            require_file(checkpoint)?;
            require_file(vocab)?;
            require_file(manifest)?;
            require_dir(features)?;
            let params = load_checkpoint(checkpoint)?.params;
            let vocab = Vocabulary::load(vocab)?;
            if vocab.len() != params.dims.vocab_size {
                return Err(Error::arg(format!(
                    "dimension mismatch: checkpoint expects vocab_size {}, vocabulary has {}",
                    params.dims.vocab_size,
                    vocab.len()
                )));
            }
            let records = read_manifest(manifest)?;
            let pooled = load_pooled(features, records.iter().map(|r| r.video_id.as_str()), cfg.pool_window)?;
            if let Some((id, v)) = pooled.iter().find(|(_, v)| v.len() != params.dims.pooled_dim) {
                return Err(Error::arg(format!(
                    "dimension mismatch: checkpoint expects pooled_dim {}, video {id} has {}",
                    params.dims.pooled_dim,
                    v.len()
                )));
            }
            let hyps: Hypotheses = pooled
                .par_iter()
                .map(|(id, v)| Ok((id.clone(), generate_caption(&params, v, &vocab, cfg.max_len)?)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .collect();
            write_hypotheses(out, &hyps)?;
            echo_config(
                &echo_path(out),
                "generate",
                &[("checkpoint", checkpoint), ("features", features), ("manifest", manifest), ("out", out)],
                &cfg,
            )?;
            println!("captions {}", hyps.len());
        }
        Command::Evaluate {
            hypotheses,
            manifest,
            out,
            verbose,
        } => {
            cfg.validate()?;
            require_file(hypotheses)?;
            require_file(manifest)?;
            let report = evaluate(&read_hypotheses(hypotheses)?, &read_manifest(manifest)?)?;
            let text = report.to_json(*verbose);
            if let Some(o) = out {
                write_text(o, &text)?;
                echo_config(&echo_path(o), "evaluate", &[("hypotheses", hypotheses), ("manifest", manifest), ("out", o)], &cfg)?;
            }
            print!("{text}");
        }
        Command::Gradcheck {
            vocab,
            embed,
            hidden,
            pooled,
            steps,
            dropout,
            epsilon,
        } => {
            let gc = GradCheckConfig {
                vocab_size: *vocab,
                embed_dim: *embed,
                hidden: *hidden,
                pooled_dim: *pooled,
                steps: *steps,
                dropout: *dropout,
                epsilon: *epsilon,
                seed: cfg.training.seed,
                ..GradCheckConfig::default()
            };
            let report = run_gradcheck(&gc)?;
            print!("{}", report.table());
            if !report.passed {
                return Err(Error::Numeric("gradient check failed".into()));
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
