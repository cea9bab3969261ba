//! Corpus-level caption metrics over multi-reference sets.
//!
//! Every metric sorts videos by id before reducing, so scores do not depend
//! on corpus order. Per-video work runs in parallel; reductions are
//! sequential.

mod bleu;
mod cider;
mod meteor;
mod rouge;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::decoding::Hypotheses;
use crate::error::{Error, Result};
use crate::text::{tokenize, CaptionRecord};

pub use bleu::{bleu, bleu_stats, BleuStats};
pub use cider::{cider, cider_video, cider_video_by_order, IdfTable, CIDER_MAX_N, CIDER_SCALE};
pub use meteor::{align, meteor_exact, meteor_pair, meteor_video, Alignment, ALIGNMENT_NODE_BUDGET};
pub use rouge::{lcs_len, rouge_l, rouge_l_pair, rouge_l_video, ROUGE_BETA};

pub const BLEU_MAX_N: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub video_id: String,
    pub hypothesis: Vec<String>,
    pub references: Vec<Vec<String>>,
}

/// Validated evaluation corpus, held sorted by video id.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCorpus {
    items: Vec<EvalItem>,
}

impl EvalCorpus {
    pub fn new(mut items: Vec<EvalItem>) -> Result<Self> {
        if let Some(i) = items.iter().find(|i| i.references.is_empty()) {
            return Err(Error::arg(format!("video {} has no reference captions", i.video_id)));
        }
        items.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        if let Some(w) = items.windows(2).find(|w| w[0].video_id == w[1].video_id) {
            return Err(Error::arg(format!("duplicate video id {}", w[0].video_id)));
        }
        Ok(EvalCorpus { items })
    }

    pub fn items(&self) -> &[EvalItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n > 0 {
        for g in tokens.windows(n) {
            *m.entry(g).or_default() += 1;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

impl Scores {
    fn from_parts(b: &[f64], meteor: f64, rouge_l: f64, cider: f64) -> Self {
        Scores {
            bleu_1: b[0],
            bleu_2: b[1],
            bleu_3: b[2],
            bleu_4: b[3],
            meteor,
            rouge_l,
            cider,
        }
    }

    fn fields(&self) -> [(&'static str, f64); 7] {
        [
            ("bleu_1", self.bleu_1),
            ("bleu_2", self.bleu_2),
            ("bleu_3", self.bleu_3),
            ("bleu_4", self.bleu_4),
            ("meteor", self.meteor),
            ("rouge_l", self.rouge_l),
            ("cider", self.cider),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scores: Scores,
    /// Per-video scores; BLEU here is the sentence-level value.
    pub details: BTreeMap<String, Scores>,
}

impl EvalReport {
    /// JSON with 4-decimal scores; `details` only when `verbose`.
    pub fn to_json(&self, verbose: bool) -> String {
        fn object(out: &mut String, s: &Scores, indent: &str) {
            let fields = s.fields();
            for (k, (name, v)) in fields.iter().enumerate() {
                let sep = if k + 1 < fields.len() || indent.is_empty() { "," } else { "" };
                let _ = writeln!(out, "{indent}  \"{name}\": {v:.4}{sep}");
            }
        }
        let mut out = String::from("{\n");
        object(&mut out, &self.scores, "");
        if verbose {
            out.push_str("  \"details\": {");
            for (k, (id, s)) in self.details.iter().enumerate() {
                out.push_str(if k == 0 { "\n" } else { ",\n" });
                let key = serde_json::to_string(id).expect("string serializes");
                let _ = writeln!(out, "    {key}: {{");
                object(&mut out, s, "    ");
                out.push_str("    }");
            }
            out.push_str(if self.details.is_empty() { "}\n" } else { "\n  }\n" });
        } else {
            // drop the trailing comma left after the last score
            out.truncate(out.len() - 2);
            out.push('\n');
        }
        out.push_str("}\n");
        out
    }
}

/// All four metrics on an assembled corpus.
pub fn score_corpus(corpus: &EvalCorpus) -> Result<EvalReport> {
    let b = bleu(corpus, BLEU_MAX_N)?;
    let scores = Scores::from_parts(&b, meteor_exact(corpus)?, rouge_l(corpus)?, cider(corpus)?);
    let idf = IdfTable::new(corpus);
    let details = corpus
        .items()
        .par_iter()
        .map(|item| {
            let single = EvalCorpus {
                items: vec![item.clone()],
            };
            let b = bleu(&single, BLEU_MAX_N)?;
            let s = Scores::from_parts(
                &b,
                meteor_video(&item.hypothesis, &item.references),
                rouge_l_video(&item.hypothesis, &item.references),
                cider_video(&idf, &item.hypothesis, &item.references),
            );
            Ok((item.video_id.clone(), s))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    Ok(EvalReport { scores, details })
}

/// Tokenizes hypotheses and reference captions and scores them.
pub fn evaluate(hypotheses: &Hypotheses, references: &[CaptionRecord]) -> Result<EvalReport> {
    if hypotheses.is_empty() {
        return Err(Error::arg("no hypotheses to evaluate"));
    }
    let mut refs: BTreeMap<&str, Vec<Vec<String>>> = BTreeMap::new();
    for r in references {
        refs.entry(&r.video_id)
            .or_default()
            .extend(r.en_cap.iter().map(|c| tokenize(c)));
    }
    let missing: Vec<&str> = hypotheses
        .keys()
        .map(String::as_str)
        .filter(|id| refs.get(id).is_none_or(|r| r.is_empty()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::arg(format!(
            "no reference captions for video(s): {}",
            missing.join(", ")
        )));
    }
    let items = hypotheses
        .iter()
        .map(|(id, h)| EvalItem {
            video_id: id.clone(),
            hypothesis: tokenize(h),
            references: refs[id.as_str()].clone(),
        })
        .collect();
    score_corpus(&EvalCorpus::new(items)?)
}
