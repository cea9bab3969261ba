mod common;

use approx::assert_abs_diff_eq;
use common::{random_corpus, self_corpus};
use dualcap::metrics::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn item(id: &str, hyp: &str, refs: &[&str]) -> EvalItem {
    EvalItem {
        video_id: id.into(),
        hypothesis: words(hyp),
        references: refs.iter().map(|r| words(r)).collect(),
    }
}

fn corpus_strategy() -> impl Strategy<Value = EvalCorpus> {
    any::<u64>().prop_map(|s| random_corpus(&mut ChaCha8Rng::seed_from_u64(s)))
}

/// Clipped n-gram matches by direct enumeration.
fn brute_clipped(c: &EvalCorpus, n: usize) -> usize {
    let grams = |s: &[String]| -> Vec<Vec<String>> { s.windows(n).map(<[String]>::to_vec).collect() };
    let mut total = 0;
    for it in c.items() {
        let h = grams(&it.hypothesis);
        let mut distinct: Vec<&Vec<String>> = Vec::new();
        for g in &h {
            if !distinct.contains(&g) {
                distinct.push(g);
            }
        }
        for g in distinct {
            let in_hyp = h.iter().filter(|x| *x == g).count();
            let in_ref = it
                .references
                .iter()
                .map(|r| grams(r).iter().filter(|x| *x == g).count())
                .max()
                .unwrap();
            total += in_hyp.min(in_ref);
        }
    }
    total
}

#[test]
fn hand_computed_oracles() {
    let c = EvalCorpus::new(vec![item("v", "the the the the the the the", &["the cat is on the mat"])]).unwrap();
    assert_eq!(bleu_stats(&c, 1).unwrap().precision(1), 2.0 / 7.0);

    let c = EvalCorpus::new(vec![item("v", "a b c", &["a b c d e f"])]).unwrap();
    assert_abs_diff_eq!(bleu(&c, 1).unwrap()[0], (-1f64).exp(), epsilon = 1e-15);

    assert_abs_diff_eq!(rouge_l_pair(&words("a b c d"), &words("a c d")), 0.8798, epsilon = 1e-4);

    let s = words("a dog is running fast");
    assert_abs_diff_eq!(meteor_pair(&s, &s), 0.996, epsilon = 1e-12);

    let c = EvalCorpus::new(vec![
        item("v1", "a man rides a horse", &["a man rides a horse"]),
        item("v2", "two dogs play in snow", &["two dogs play in snow"]),
    ])
    .unwrap();
    assert_abs_diff_eq!(cider(&c).unwrap(), 10.0, epsilon = 1e-12);

    let c = EvalCorpus::new(vec![item("v", "a dog runs", &["a dog runs", "the dog runs fast"])]).unwrap();
    assert_eq!(cider(&c).unwrap(), 0.0);
}

#[test]
fn meteor_reversed_order_halves_fmean() {
    let h = words("a b c d e");
    let r = words("e d c b a");
    assert_eq!(align(&h, &r), Alignment { matches: 5, chunks: 5 });
    assert_abs_diff_eq!(meteor_pair(&h, &r), 0.5, epsilon = 1e-15);
    // unequal lengths: P = 1, R = 5/6
    let r6 = words("e d c b a z");
    let (p, rc) = (1.0, 5.0 / 6.0);
    let f = 10.0 * p * rc / (rc + 9.0 * p);
    assert_abs_diff_eq!(meteor_pair(&h, &r6), f * 0.5, epsilon = 1e-15);
}

#[test]
fn empty_corpus_is_an_argument_error() {
    let c = EvalCorpus::new(vec![]).unwrap();
    assert!(matches!(bleu(&c, 4), Err(dualcap::Error::Argument(_))));
    assert!(rouge_l(&c).is_err());
    assert!(cider(&c).is_err());
    assert!(meteor_exact(&c).is_err());
}

/// Corpus-level BLEU need not decrease with n: a short unmatched hypothesis
/// drags p₁ below a perfectly matched p₂.
#[test]
fn corpus_bleu_order_can_invert() {
    let c = EvalCorpus::new(vec![
        item("a", "z", &["y"]),
        item("b", "a b c d e", &["a b c d e"]),
    ])
    .unwrap();
    let s = bleu_stats(&c, 2).unwrap();
    assert_eq!((s.precision(1), s.precision(2)), (5.0 / 6.0, 1.0));
    let b = bleu(&c, 2).unwrap();
    assert!(b[1] > b[0], "{b:?}");
}

proptest! {
    #[test]
    fn scores_are_bounded(c in corpus_strategy()) {
        for b in bleu(&c, 4).unwrap() {
            prop_assert!((0.0..=1.0).contains(&b));
        }
        let r = rouge_l(&c).unwrap();
        let m = meteor_exact(&c).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert!(cider(&c).unwrap() >= 0.0);
    }

    #[test]
    fn video_order_does_not_matter(c in corpus_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut items = c.items().to_vec();
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let d = EvalCorpus::new(items).unwrap();
        prop_assert_eq!(score_corpus(&c).unwrap(), score_corpus(&d).unwrap());
    }

    #[test]
    fn clipped_counts_match_brute_force_and_grow_with_references(c in corpus_strategy(), seed in any::<u64>()) {
        let s = bleu_stats(&c, 4).unwrap();
        for n in 1..=4 {
            prop_assert_eq!(s.matched[n - 1], brute_clipped(&c, n));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let more = EvalCorpus::new(
            c.items()
                .iter()
                .map(|i| {
                    let mut j = i.clone();
                    j.references.push(common::random_sentence(&mut rng));
                    j
                })
                .collect(),
        )
        .unwrap();
        let t = bleu_stats(&more, 4).unwrap();
        for n in 0..4 {
            prop_assert!(t.matched[n] >= s.matched[n]);
            prop_assert_eq!(t.total[n], s.total[n]);
        }
    }

    #[test]
    fn self_evaluation(c in corpus_strategy()) {
        let s = self_corpus(&c);
        let longest = s.items().iter().map(|i| i.hypothesis.len()).max().unwrap();
        let b = bleu(&s, 4).unwrap();
        for n in 1..=longest.min(4) {
            prop_assert_eq!(b[n - 1], 1.0);
        }
        prop_assert_eq!(rouge_l(&s).unwrap(), 1.0);
        let want: f64 = s
            .items()
            .iter()
            .map(|i| 1.0 - 0.5 / (i.hypothesis.len() as f64).powi(3))
            .sum::<f64>()
            / s.len() as f64;
        prop_assert!((meteor_exact(&s).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn single_video_cider_is_zero_when_covered(c in corpus_strategy()) {
        let i = &c.items()[0];
        let one = EvalCorpus::new(vec![EvalItem {
            video_id: "only".into(),
            hypothesis: i.references[0].clone(),
            references: i.references.clone(),
        }])
        .unwrap();
        prop_assert_eq!(cider(&one).unwrap(), 0.0);
    }

    #[test]
    fn meteor_alignment_never_exceeds_bounds(h in proptest::collection::vec(0u8..4, 0..9), r in proptest::collection::vec(0u8..4, 0..9)) {
        let h: Vec<String> = h.iter().map(|x| x.to_string()).collect();
        let r: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        let a = align(&h, &r);
        prop_assert!(a.matches <= h.len().min(r.len()));
        prop_assert!(a.chunks <= a.matches);
        prop_assert_eq!(a.chunks == 0, a.matches == 0);
    }
}

#[test]
fn bleu_order_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut inverted = Vec::new();
    for k in 0..100 {
        let b = bleu(&random_corpus(&mut rng), 4).unwrap();
        if b.windows(2).any(|w| w[1] > w[0]) {
            inverted.push((k, b));
        }
    }
    assert!(inverted.is_empty(), "{inverted:?}");
}
