use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::metrics::{ngram_counts, EvalCorpus};

/// Corpus-level sufficient statistics for BLEU.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuStats {
    /// Clipped matches per order (index 0 = unigrams).
    pub matched: Vec<usize>,
    /// Hypothesis n-gram totals per order.
    pub total: Vec<usize>,
    pub hyp_len: usize,
    /// Sum over videos of the reference length closest to the hypothesis.
    pub ref_len: usize,
}

impl BleuStats {
    pub fn precision(&self, n: usize) -> f64 {
        let (m, t) = (self.matched[n - 1], self.total[n - 1]);
        if t == 0 {
            0.0
        } else {
            m as f64 / t as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        }
    }

    /// BLEU-1 … BLEU-max_n, unsmoothed.
    pub fn scores(&self) -> Vec<f64> {
        let bp = self.brevity_penalty();
        let mut out = Vec::with_capacity(self.matched.len());
        let mut log_sum = 0.0;
        let mut zero = false;
        for n in 1..=self.matched.len() {
            let p = self.precision(n);
            zero |= p == 0.0;
            if zero {
                out.push(0.0);
            } else {
                log_sum += p.ln();
                out.push(bp * (log_sum / n as f64).exp());
            }
        }
        out
    }
}

/// Closest reference length; ties go to the shorter reference.
fn closest_ref_len(hyp_len: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(hyp_len), r))
        .unwrap_or(0)
}

pub fn bleu_stats(corpus: &EvalCorpus, max_n: usize) -> Result<BleuStats> {
    if corpus.is_empty() {
        return Err(Error::arg("BLEU of an empty corpus"));
    }
    if max_n == 0 {
        return Err(Error::arg("BLEU order must be >= 1"));
    }
    let mut stats = BleuStats {
        matched: vec![0; max_n],
        total: vec![0; max_n],
        hyp_len: 0,
        ref_len: 0,
    };
    for item in corpus.items() {
        stats.hyp_len += item.hypothesis.len();
        stats.ref_len += closest_ref_len(item.hypothesis.len(), &item.references);
        for n in 1..=max_n {
            let hyp = ngram_counts(&item.hypothesis, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &item.references {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_default();
                    *e = (*e).max(c);
                }
            }
            stats.total[n - 1] += item.hypothesis.len().saturating_sub(n - 1);
            stats.matched[n - 1] += hyp
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    Ok(stats)
}

/// Corpus BLEU-1 … BLEU-`max_n`.
pub fn bleu(corpus: &EvalCorpus, max_n: usize) -> Result<Vec<f64>> {
    Ok(bleu_stats(corpus, max_n)?.scores())
}
