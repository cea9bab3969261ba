use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::EvalCorpus;

pub const METEOR_ALPHA_WEIGHT: f64 = 9.0;
pub const METEOR_GAMMA: f64 = 0.5;
pub const METEOR_BETA: f64 = 3.0;

/// Search nodes explored before settling for the best alignment found so far.
pub const ALIGNMENT_NODE_BUDGET: usize = 200_000;

/// Exact-match unigram alignment summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

struct Search<'a> {
    hyp: &'a [String],
    /// For each hyp position, the reference positions holding the same word.
    candidates: Vec<Vec<usize>>,
    /// Matches still required per word to reach the maximum.
    needed: HashMap<&'a str, usize>,
    /// `remaining[i]`: occurrences of `hyp[i - 1]` within `hyp[i..]`.
    remaining: Vec<usize>,
    used: Vec<bool>,
    best_chunks: usize,
    nodes: usize,
}

impl Search<'_> {
    fn run(&mut self, i: usize, prev: Option<(usize, usize)>, chunks: usize) {
        self.nodes += 1;
        if chunks >= self.best_chunks || self.nodes > ALIGNMENT_NODE_BUDGET {
            return;
        }
        if i == self.hyp.len() {
            self.best_chunks = chunks;
            return;
        }
        let word = self.hyp[i].as_str();
        let need = self.needed.get(word).copied().unwrap_or(0);
        if need > 0 {
            let mut order: Vec<usize> = self.candidates[i]
                .iter()
                .copied()
                .filter(|&j| !self.used[j])
                .collect();
            // try extending the current chunk first
            if let Some((_, pj)) = prev.filter(|&(pi, _)| pi + 1 == i) {
                if let Some(pos) = order.iter().position(|&j| j == pj + 1) {
                    order[..=pos].rotate_right(1);
                }
            }
            for j in order {
                let extends = matches!(prev, Some((pi, pj)) if pi + 1 == i && pj + 1 == j);
                self.used[j] = true;
                *self.needed.get_mut(word).unwrap() -= 1;
                self.run(i + 1, Some((i, j)), chunks + usize::from(!extends));
                *self.needed.get_mut(word).unwrap() += 1;
                self.used[j] = false;
            }
        }
        // leaving this occurrence unmatched must keep the maximum reachable
        if self.remaining[i + 1] >= need {
            self.run(i + 1, prev, chunks);
        }
    }
}

fn word_counts(s: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for w in s {
        *m.entry(w.as_str()).or_default() += 1;
    }
    m
}

/// Maximum exact matches, then minimum chunks among maximum alignments.
pub fn align(hyp: &[String], reference: &[String]) -> Alignment {
    let hc = word_counts(hyp);
    let rc = word_counts(reference);
    let needed: HashMap<&str, usize> = hc
        .iter()
        .map(|(w, &c)| (*w, c.min(rc.get(w).copied().unwrap_or(0))))
        .collect();
    let matches: usize = needed.values().sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }
    let mut remaining = vec![0; hyp.len() + 1];
    for i in (1..hyp.len()).rev() {
        remaining[i] = hyp[i..].iter().filter(|w| **w == hyp[i - 1]).count();
    }
    let candidates = hyp
        .iter()
        .map(|w| (0..reference.len()).filter(|&j| reference[j] == *w).collect())
        .collect();
    let mut search = Search {
        hyp,
        candidates,
        needed,
        remaining,
        used: vec![false; reference.len()],
        best_chunks: usize::MAX,
        nodes: 0,
    };
    search.run(0, None, 0);
    Alignment {
        matches,
        chunks: search.best_chunks,
    }
}

pub fn meteor_pair(hyp: &[String], reference: &[String]) -> f64 {
    let a = align(hyp, reference);
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / hyp.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = (1.0 + METEOR_ALPHA_WEIGHT) * p * r / (r + METEOR_ALPHA_WEIGHT * p);
    let penalty = METEOR_GAMMA * (a.chunks as f64 / m).powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

pub fn meteor_video(hyp: &[String], references: &[Vec<String>]) -> f64 {
    references
        .iter()
        .map(|r| meteor_pair(hyp, r))
        .fold(0.0, f64::max)
}

pub fn meteor_exact(corpus: &EvalCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::arg("METEOR of an empty corpus"));
    }
    let per_video: Vec<f64> = corpus
        .items()
        .par_iter()
        .map(|i| meteor_video(&i.hypothesis, &i.references))
        .collect();
    Ok(per_video.iter().sum::<f64>() / corpus.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tests::words;

    fn chunks(h: &str, r: &str) -> Alignment {
        align(&words(h), &words(r))
    }

    #[test]
    fn identical_five_tokens() {
        let s = words("a man is playing guitar");
        assert_eq!(align(&s, &s), Alignment { matches: 5, chunks: 1 });
        assert!((meteor_pair(&s, &s) - 0.996).abs() < 1e-12);
    }

    #[test]
    fn reversed_order_is_all_chunks() {
        let a = chunks("a b c d", "d c b a");
        assert_eq!(a, Alignment { matches: 4, chunks: 4 });
        // P = R = 1 so F_mean = 1, penalty 0.5
        assert!((meteor_pair(&words("a b c d"), &words("d c b a")) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_matches() {
        assert_eq!(meteor_pair(&words("x y"), &words("a b")), 0.0);
        assert_eq!(meteor_pair(&[], &words("a b")), 0.0);
    }

    #[test]
    fn repeated_words_pick_fewest_chunks() {
        // greedy left-to-right would map the first "the" to position 0
        assert_eq!(chunks("the cat", "the dog the cat").chunks, 1);
        assert_eq!(chunks("a b a b", "a b").matches, 2);
        assert_eq!(chunks("a b a b", "a b").chunks, 1);
        assert_eq!(chunks("b a", "a b"), Alignment { matches: 2, chunks: 2 });
    }

    #[test]
    fn brute_force_agreement() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
                let n = rng.gen_range(0..7);
                (0..n).map(|_| ["a", "b", "c"][rng.gen_range(0..3)].to_string()).collect()
            };
            let h = mk(&mut rng);
            let r = mk(&mut rng);
            assert_eq!(align(&h, &r), brute(&h, &r), "{h:?} {r:?}");
        }
    }

    /// Enumerates every partial injective map hyp → ref with equal words.
    fn brute(h: &[String], r: &[String]) -> Alignment {
        fn go(h: &[String], r: &[String], i: usize, used: &mut Vec<bool>, links: &mut Vec<(usize, usize)>, best: &mut (usize, usize)) {
            if i == h.len() {
                let m = links.len();
                let mut c = 0;
                for (k, &(a, b)) in links.iter().enumerate() {
                    if k == 0 || !(links[k - 1].0 + 1 == a && links[k - 1].1 + 1 == b) {
                        c += 1;
                    }
                }
                if m > best.0 || (m == best.0 && c < best.1) {
                    *best = (m, c);
                }
                return;
            }
            go(h, r, i + 1, used, links, best);
            for j in 0..r.len() {
                if !used[j] && r[j] == h[i] {
                    used[j] = true;
                    links.push((i, j));
                    go(h, r, i + 1, used, links, best);
                    links.pop();
                    used[j] = false;
                }
            }
        }
        let mut best = (0, 0);
        go(h, r, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
        Alignment { matches: best.0, chunks: best.1 }
    }
}
