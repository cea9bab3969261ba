mod common;

use common::{overfit_config, overfit_corpus, OVERFIT_POOLED};
use dualcap::decoding::generate_caption;
use dualcap::model::{decode_checkpoint, load_checkpoint};
use dualcap::training::*;
use dualcap::Error;

fn small_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        learning_rate: 5e-3,
        batch_size: 3,
        epochs: 6,
        dropout: 0.5,
        hidden: 8,
        embed_dim: 6,
        seed,
        ..Default::default()
    }
}

fn setup() -> (tempfile::TempDir, dualcap::text::Vocabulary, Vec<TrainingExample>) {
    let dir = tempfile::tempdir().unwrap();
    let (_, vocab, ds) = overfit_corpus(dir.path(), 3);
    let mut examples = ds.examples().unwrap();
    // a second caption per video gives batches of mixed length
    let extra: Vec<TrainingExample> = examples
        .iter()
        .map(|e| {
            let mut content = e.caption.content().to_vec();
            content.truncate(3);
            TrainingExample {
                caption: dualcap::text::TokenizedCaption::from_content(&content),
                ..e.clone()
            }
        })
        .collect();
    examples.extend(extra);
    (dir, vocab, examples)
}

#[test]
fn identical_seeds_give_identical_runs() {
    let (dir, vocab, ex) = setup();
    let run = |name: &str| {
        let out = TrainOutput {
            checkpoint_dir: Some(dir.path().join(name)),
            log_path: Some(dir.path().join(format!("{name}.jsonl"))),
        };
        let cfg = small_config(7);
        let (params, log) = train(&ex, cfg.dims(vocab.len(), OVERFIT_POOLED), &cfg, &out).unwrap();
        let bytes = std::fs::read(dir.path().join(name).join("final.ckpt")).unwrap();
        (params, log.iter().map(|r| r.mean_loss).collect::<Vec<_>>(), bytes)
    };
    let (pa, la, ba) = run("a");
    let (pb, lb, bb) = run("b");
    assert_eq!(pa, pb);
    assert_eq!(la, lb);
    assert_eq!(ba, bb);
    assert_eq!(la.len(), 6);
    let log = std::fs::read_to_string(dir.path().join("a.jsonl")).unwrap();
    let first: EpochRecord = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first.epoch, 1);
    assert!(first.checkpoint_path.unwrap().ends_with("epoch_0001.ckpt"));
    assert_eq!(log.lines().count(), 6);
}

#[test]
fn different_seeds_differ() {
    let (_dir, vocab, ex) = setup();
    let a = train(&ex, small_config(1).dims(vocab.len(), OVERFIT_POOLED), &small_config(1), &TrainOutput::default()).unwrap();
    let b = train(&ex, small_config(2).dims(vocab.len(), OVERFIT_POOLED), &small_config(2), &TrainOutput::default()).unwrap();
    assert_ne!(a.0, b.0);
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let (_dir, vocab, ex) = setup();
    let cfg = TrainingConfig { learning_rate: 0.0, dropout: 0.0, ..small_config(4) };
    let mut t = Trainer::new(cfg.dims(vocab.len(), OVERFIT_POOLED), cfg.clone()).unwrap();
    let before = t.params.clone();
    let losses: Vec<f64> = (0..4).map(|_| t.run_epoch(&ex).unwrap().0).collect();
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
    assert_eq!(t.params, before);
}

#[test]
fn clipping_bounds_every_step() {
    let (_dir, vocab, ex) = setup();
    let cfg = TrainingConfig { gradient_clip_norm: 0.05, ..small_config(5) };
    let mut t = Trainer::new(cfg.dims(vocab.len(), OVERFIT_POOLED), cfg.clone()).unwrap();
    let mut clipped = 0;
    for _ in 0..3 {
        for r in t.run_epoch(&ex).unwrap().1 {
            assert!(r.clipped_norm <= 0.05 + 1e-9, "{r:?}");
            clipped += usize::from(r.grad_norm > 0.05);
        }
    }
    assert!(clipped > 0);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let (dir, vocab, ex) = setup();
    let cfg = small_config(8);
    let dims = cfg.dims(vocab.len(), OVERFIT_POOLED);
    let full_dir = dir.path().join("full");
    let full = train(&ex, dims, &cfg, &TrainOutput { checkpoint_dir: Some(full_dir.clone()), log_path: None }).unwrap();

    let part_dir = dir.path().join("part");
    let first = TrainingConfig { epochs: 3, ..cfg.clone() };
    train(&ex, dims, &first, &TrainOutput { checkpoint_dir: Some(part_dir.clone()), log_path: None }).unwrap();
    let ckpt = load_checkpoint(&part_dir.join("epoch_0003.ckpt")).unwrap();
    let mut resumed = Trainer::resume(ckpt, cfg.clone()).unwrap();
    assert_eq!(resumed.epoch, 3);
    let rest = train_with(&mut resumed, &ex, &TrainOutput { checkpoint_dir: Some(part_dir.clone()), log_path: None }).unwrap();

    let tail: Vec<f64> = full.1[3..].iter().map(|r| r.mean_loss).collect();
    assert_eq!(rest.iter().map(|r| r.mean_loss).collect::<Vec<_>>(), tail);
    assert_eq!(resumed.params, full.0);
    assert_eq!(
        std::fs::read(full_dir.join("final.ckpt")).unwrap(),
        std::fs::read(part_dir.join("final.ckpt")).unwrap()
    );
}

#[test]
fn resume_rejects_mismatched_config_and_plain_checkpoints() {
    let (_dir, vocab, ex) = setup();
    let cfg = small_config(8);
    let mut t = Trainer::new(cfg.dims(vocab.len(), OVERFIT_POOLED), cfg.clone()).unwrap();
    t.run_epoch(&ex).unwrap();
    let ck = decode_checkpoint(&t.checkpoint()).unwrap();
    let wrong = TrainingConfig { hidden: 16, ..cfg.clone() };
    assert!(matches!(Trainer::resume(ck.clone(), wrong), Err(Error::Argument(_))));
    let plain = dualcap::model::Checkpoint { extras: Default::default(), ..ck };
    assert!(Trainer::resume(plain, cfg).is_err());
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let (_dir, vocab, ex) = setup();
    let cfg = small_config(1);
    let mut t = Trainer::new(cfg.dims(vocab.len(), OVERFIT_POOLED), cfg).unwrap();
    t.params.output_projection.values_mut()[0] = f64::NAN;
    match t.run_epoch(&ex) {
        Err(Error::Numeric(msg)) => {
            assert!(msg.contains("epoch 1"), "{msg}");
            assert!(msg.contains("output_projection.weight"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn overfits_memorizable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, vocab, ds) = overfit_corpus(dir.path(), 0);
    assert!(vocab.len() <= 50);
    let ex = ds.examples().unwrap();
    let cfg = overfit_config(0);
    let (params, log) = train(&ex, cfg.dims(vocab.len(), OVERFIT_POOLED), &cfg, &TrainOutput::default()).unwrap();
    let losses: Vec<f64> = log.iter().map(|r| r.mean_loss).collect();
    assert!(*losses.last().unwrap() < 0.05, "{:?}", losses.last());
    // non-increasing after the first three epochs
    for (k, w) in losses.windows(2).enumerate().skip(3) {
        assert!(w[1] <= w[0], "epoch {}: {} -> {}", k + 2, w[0], w[1]);
    }
    for r in &corpus.records {
        let hyp = generate_caption(&params, &ds.pooled[&r.video_id], &vocab, 30).unwrap();
        assert_eq!(hyp, r.en_cap[0]);
    }
}
