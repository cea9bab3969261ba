use crate::error::{Error, Result};
use crate::metrics::EvalCorpus;

pub const ROUGE_BETA: f64 = 1.2;

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure against one reference.
pub fn rouge_l_pair(hyp: &[String], reference: &[String]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(hyp, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / hyp.len() as f64;
    let r = l / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

pub fn rouge_l_video(hyp: &[String], references: &[Vec<String>]) -> f64 {
    references
        .iter()
        .map(|r| rouge_l_pair(hyp, r))
        .fold(0.0, f64::max)
}

/// Mean over videos of the best-reference ROUGE-L.
pub fn rouge_l(corpus: &EvalCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::arg("ROUGE-L of an empty corpus"));
    }
    let total: f64 = corpus
        .items()
        .iter()
        .map(|i| rouge_l_video(&i.hypothesis, &i.references))
        .sum();
    Ok(total / corpus.len() as f64)
}
