use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::metrics::{ngram_counts, EvalCorpus};

pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SCALE: f64 = 10.0;

/// Inverse document frequencies: one document per video (the union of its
/// references), `idf = ln(N / max(df, 1))`.
#[derive(Debug, Clone)]
pub struct IdfTable<'a> {
    videos: usize,
    doc_freq: Vec<HashMap<&'a [String], usize>>,
}

impl<'a> IdfTable<'a> {
    pub fn new(corpus: &'a EvalCorpus) -> Self {
        let mut doc_freq = vec![HashMap::new(); CIDER_MAX_N];
        for item in corpus.items() {
            for (n, df) in doc_freq.iter_mut().enumerate() {
                let mut seen: HashSet<&[String]> = HashSet::new();
                for r in &item.references {
                    seen.extend(r.windows(n + 1));
                }
                for g in seen {
                    *df.entry(g).or_default() += 1;
                }
            }
        }
        IdfTable {
            videos: corpus.len(),
            doc_freq,
        }
    }

    pub fn idf(&self, n: usize, gram: &[String]) -> f64 {
        let df = self.doc_freq[n - 1].get(gram).copied().unwrap_or(0).max(1);
        (self.videos as f64 / df as f64).ln()
    }

    fn vector<'s>(&self, n: usize, sentence: &'s [String]) -> BTreeMap<&'s [String], f64> {
        ngram_counts(sentence, n)
            .into_iter()
            .map(|(g, c)| (g, c as f64 * self.idf(n, g)))
            .collect()
    }
}

fn cosine(a: &BTreeMap<&[String], f64>, b: &BTreeMap<&[String], f64>) -> f64 {
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(k, v)| b.get(k).map(|w| v * w)).sum();
    dot / (na * nb)
}

/// Per-order mean cosine of one video's hypothesis against its references.
pub fn cider_video_by_order(idf: &IdfTable, hyp: &[String], references: &[Vec<String>]) -> [f64; CIDER_MAX_N] {
    let mut out = [0.0; CIDER_MAX_N];
    for (n, slot) in out.iter_mut().enumerate() {
        let h = idf.vector(n + 1, hyp);
        let total: f64 = references
            .iter()
            .map(|r| cosine(&h, &idf.vector(n + 1, r)))
            .sum();
        *slot = total / references.len() as f64;
    }
    out
}

/// `10 · mean_n` of per-video CIDEr_n.
pub fn cider_video(idf: &IdfTable, hyp: &[String], references: &[Vec<String>]) -> f64 {
    let by_n = cider_video_by_order(idf, hyp, references);
    CIDER_SCALE * by_n.iter().sum::<f64>() / CIDER_MAX_N as f64
}

pub fn cider(corpus: &EvalCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::arg("CIDEr of an empty corpus"));
    }
    let idf = IdfTable::new(corpus);
    let total: f64 = corpus
        .items()
        .iter()
        .map(|i| cider_video(&idf, &i.hypothesis, &i.references))
        .sum();
    Ok(total / corpus.len() as f64)
}
