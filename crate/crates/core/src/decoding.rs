//! Greedy test-time caption generation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{DecoderState, ModelParams};
use crate::numerics::argmax;
use crate::text::{decode_ids, Vocabulary, BOS, EOS};

/// Argmax over the ids a caption may contain (EOS included, PAD and BOS
/// excluded); ties go to the smallest id.
pub fn decode_argmax(logits: &[f64]) -> usize {
    let allowed = &logits[EOS..];
    EOS + argmax(allowed)
}

/// Feeds BOS, then each emitted token, taking [`decode_argmax`] until EOS or
/// `max_len` content tokens. BOS/EOS are not returned.
pub fn greedy_generate(params: &ModelParams, pooled: &[f64], max_len: usize) -> Result<Vec<usize>> {
    let mut state = DecoderState::new(params, pooled)?;
    let mut out = Vec::with_capacity(max_len);
    let mut token = BOS;
    while out.len() < max_len {
        let step = state.step(params, token, None)?;
        token = decode_argmax(&step.logits);
        if token == EOS {
            break;
        }
        out.push(token);
    }
    Ok(out)
}

/// Greedy caption rendered through the vocabulary.
pub fn generate_caption(
    params: &ModelParams,
    pooled: &[f64],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<String> {
    if vocab.len() != params.dims.vocab_size {
        return Err(Error::arg(format!(
            "checkpoint expects vocabulary of {} entries, vocabulary file has {}",
            params.dims.vocab_size,
            vocab.len()
        )));
    }
    let ids = greedy_generate(params, pooled, max_len)?;
    decode_ids(&ids, vocab)
}

/// `video_id → caption`, serialized with sorted keys.
pub type Hypotheses = BTreeMap<String, String>;

pub fn write_hypotheses(path: &Path, hyps: &Hypotheses) -> Result<()> {
    let mut text = serde_json::to_string_pretty(hyps).expect("string map serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_hypotheses(path: &Path) -> Result<Hypotheses> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })
}
