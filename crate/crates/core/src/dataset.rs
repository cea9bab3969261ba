//! Manifest + feature files → vocabulary and encoded training set.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{average_pool, decode_features, feature_path};
use crate::text::{build_vocab, encode, tokenize, CaptionRecord, TokenizedCaption, Vocabulary, MAX_CONTENT_TOKENS, UKN};
use crate::training::TrainingExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedCaption {
    pub video_id: String,
    pub ids: Vec<usize>,
}

/// Pooled visual summaries and encoded captions, as written by `preprocess`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub pool_window: usize,
    pub pooled: BTreeMap<String, Vec<f64>>,
    pub captions: Vec<EncodedCaption>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub videos: usize,
    pub captions: usize,
    pub vocab_size: usize,
    /// Fraction of content tokens mapped to UKN.
    pub ukn_rate: f64,
    /// Captions longer than the content cap.
    pub truncated: usize,
}

impl EncodedDataset {
    pub fn pooled_dim(&self) -> Result<usize> {
        let mut dims = self.pooled.values().map(Vec::len);
        let d = dims.next().ok_or_else(|| Error::arg("dataset has no videos"))?;
        if dims.any(|x| x != d) {
            return Err(Error::arg("pooled feature dimensions differ across videos"));
        }
        Ok(d)
    }

    pub fn examples(&self) -> Result<Vec<TrainingExample>> {
        let pooled: BTreeMap<&str, Arc<[f64]>> = self
            .pooled
            .iter()
            .map(|(k, v)| (k.as_str(), Arc::from(v.as_slice())))
            .collect();
        self.captions
            .iter()
            .map(|c| {
                let visual = pooled
                    .get(c.video_id.as_str())
                    .ok_or_else(|| Error::arg(format!("caption for unknown video {}", c.video_id)))?;
                Ok(TrainingExample {
                    video_id: c.video_id.clone(),
                    pooled: Arc::clone(visual),
                    caption: TokenizedCaption::from_ids(c.ids.clone())?,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("dataset serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            context: path.display().to_string(),
            source: e,
        })
    }
}

/// Loads and pools the feature file of every listed video. Missing files
/// are reported together.
pub fn load_pooled<'a, I>(feature_dir: &Path, video_ids: I, window: usize) -> Result<BTreeMap<String, Vec<f64>>>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut paths = BTreeMap::new();
    let mut missing = Vec::new();
    for id in video_ids {
        let p = feature_path(feature_dir, id)?;
        if p.is_file() {
            paths.insert(id.to_string(), p);
        } else {
            missing.push(id);
        }
    }
    if !missing.is_empty() {
        return Err(Error::arg(format!(
            "no feature file in {} for video(s): {}",
            feature_dir.display(),
            missing.join(", ")
        )));
    }
    paths
        .into_iter()
        .map(|(id, p)| {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let seq = decode_features(&id, &bytes)?;
            Ok((id, average_pool(&seq, window)?.summary))
        })
        .collect()
}

/// Tokenizes, builds the vocabulary, encodes every caption and pools every
/// video's features.
pub fn preprocess(
    records: &[CaptionRecord],
    feature_dir: &Path,
    vocab_cap: usize,
    pool_window: usize,
) -> Result<(Vocabulary, EncodedDataset, PreprocessSummary)> {
    let tokenized: Vec<(&str, Vec<String>)> = records
        .iter()
        .flat_map(|r| r.en_cap.iter().map(move |c| (r.video_id.as_str(), tokenize(c))))
        .collect();
    if tokenized.is_empty() {
        return Err(Error::arg("manifest contains no captions"));
    }
    let pooled = load_pooled(feature_dir, records.iter().map(|r| r.video_id.as_str()), pool_window)?;
    let vocab = build_vocab(tokenized.iter().map(|(_, t)| t), vocab_cap)?;
    let mut truncated = 0;
    let (mut content_tokens, mut ukn) = (0usize, 0usize);
    let captions = tokenized
        .iter()
        .map(|(id, toks)| {
            truncated += usize::from(toks.len() > MAX_CONTENT_TOKENS);
            let cap = encode(toks, &vocab);
            content_tokens += cap.content_length();
            ukn += cap.content().iter().filter(|&&i| i == UKN).count();
            EncodedCaption {
                video_id: id.to_string(),
                ids: cap.ids().to_vec(),
            }
        })
        .collect::<Vec<_>>();
    let summary = PreprocessSummary {
        videos: pooled.len(),
        captions: captions.len(),
        vocab_size: vocab.len(),
        ukn_rate: if content_tokens == 0 { 0.0 } else { ukn as f64 / content_tokens as f64 },
        truncated,
    };
    let dataset = EncodedDataset {
        pool_window,
        pooled,
        captions,
    };
    dataset.pooled_dim()?;
    Ok((vocab, dataset, summary))
}
