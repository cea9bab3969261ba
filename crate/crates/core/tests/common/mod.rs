#![allow(dead_code)]

use std::path::Path;

use dualcap::dataset::{preprocess, EncodedDataset};
use dualcap::features::DEFAULT_POOL_WINDOW;
use dualcap::synthetic::{synthetic_corpus, SyntheticCorpus};
use dualcap::text::Vocabulary;
use dualcap::training::TrainingConfig;

pub const OVERFIT_POOLED: usize = 8;

/// Settings under which the 4-video corpus is memorized in 1000 steps.
pub fn overfit_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        learning_rate: 2e-3,
        batch_size: 4,
        epochs: 1000,
        dropout: 0.0,
        hidden: 32,
        embed_dim: 32,
        gradient_clip_norm: 5.0,
        seed,
        checkpoint_every: 1000,
    }
}

/// Writes the 4-video synthetic corpus under `dir` and preprocesses it.
pub fn overfit_corpus(dir: &Path, seed: u64) -> (SyntheticCorpus, Vocabulary, EncodedDataset) {
    let corpus = synthetic_corpus(4, OVERFIT_POOLED, 5, 3, seed).unwrap();
    corpus.write(dir).unwrap();
    let (vocab, ds, _) = preprocess(&corpus.records, &dir.join("features"), 15_000, DEFAULT_POOL_WINDOW).unwrap();
    (corpus, vocab, ds)
}

use dualcap::metrics::{EvalCorpus, EvalItem};
use rand::Rng;

pub fn random_sentence<R: Rng>(rng: &mut R) -> Vec<String> {
    let len = rng.gen_range(1..=8);
    (0..len).map(|_| format!("w{}", rng.gen_range(0..6))).collect()
}

/// 1–5 videos, 1–3 references each, sentences of 1–8 tokens over 6 words.
pub fn random_corpus<R: Rng>(rng: &mut R) -> EvalCorpus {
    let videos = rng.gen_range(1..=5);
    let items = (0..videos)
        .map(|k| EvalItem {
            video_id: format!("v{k}"),
            hypothesis: random_sentence(rng),
            references: (0..rng.gen_range(1..=3)).map(|_| random_sentence(rng)).collect(),
        })
        .collect();
    EvalCorpus::new(items).unwrap()
}

/// The same corpus with every hypothesis replaced by its first reference,
/// which becomes the only reference.
pub fn self_corpus(c: &EvalCorpus) -> EvalCorpus {
    EvalCorpus::new(
        c.items()
            .iter()
            .map(|i| EvalItem {
                video_id: i.video_id.clone(),
                hypothesis: i.references[0].clone(),
                references: vec![i.references[0].clone()],
            })
            .collect(),
    )
    .unwrap()
}
