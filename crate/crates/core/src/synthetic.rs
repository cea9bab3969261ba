//! Memorizable toy corpora: videos with orthogonal pooled features and
//! distinct fixed-length captions.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{write_features, FeatureSequence, DEFAULT_POOL_WINDOW};
use crate::numerics::Matrix;
use crate::text::CaptionRecord;

const WORDS: [&str; 24] = [
    "a", "man", "woman", "dog", "cat", "is", "runs", "jumps", "plays", "guitar", "ball", "park",
    "red", "blue", "car", "drives", "fast", "slowly", "child", "eats", "food", "table", "sings", "song",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<CaptionRecord>,
    pub features: Vec<FeatureSequence>,
}

/// `videos` videos whose features pool (window 5) to distinct standard basis
/// vectors of length `pooled_dim`, each with one caption of `caption_len`
/// words; captions are pairwise distinct.
pub fn synthetic_corpus(videos: usize, pooled_dim: usize, caption_len: usize, segments: usize, seed: u64) -> Result<SyntheticCorpus> {
    if videos == 0 || videos > pooled_dim {
        return Err(Error::arg(format!(
            "need 1 <= videos <= pooled_dim for orthogonal features, got {videos} and {pooled_dim}"
        )));
    }
    if caption_len == 0 || segments == 0 {
        return Err(Error::arg("caption_len and segments must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(videos);
    let mut features = Vec::with_capacity(videos);
    let m = pooled_dim * DEFAULT_POOL_WINDOW;
    for k in 0..videos {
        let caption = loop {
            let words: Vec<&str> = (0..caption_len).map(|_| *WORDS.choose(&mut rng).expect("non-empty")).collect();
            let c = words.join(" ");
            if seen.insert(c.clone()) {
                break c;
            }
        };
        let id = format!("video{k}");
        records.push(CaptionRecord {
            video_id: id.clone(),
            en_cap: vec![caption],
        });
        let block = k * DEFAULT_POOL_WINDOW..(k + 1) * DEFAULT_POOL_WINDOW;
        let segs = Matrix::from_fn(segments, m, |_, c| if block.contains(&c) { 1.0 } else { 0.0 });
        features.push(FeatureSequence::new(id, segs)?);
    }
    Ok(SyntheticCorpus { records, features })
}

impl SyntheticCorpus {
    /// Writes `manifest.json` and `features/<id>.vfea` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let fdir = dir.join("features");
        fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
        for f in &self.features {
            write_features(&fdir.join(format!("{}.vfea", f.video_id)), f)?;
        }
        let p = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self.records).expect("records serialize");
        text.push('\n');
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}
