use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
    lines.iter().map(|l| toks(l)).collect()
}

/// Clipped unigram matches by sorting both sides and merging.
fn merge_clipped_unigrams(hyp: &[String], reference: &[String]) -> u64 {
    let (mut h, mut r) = (hyp.to_vec(), reference.to_vec());
    h.sort();
    r.sort();
    let (mut i, mut j, mut m) = (0, 0, 0);
    while i < h.len() && j < r.len() {
        match h[i].cmp(&r[j]) {
            std::cmp::Ordering::Equal => {
                m += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    m
}

#[test]
fn identity_corpus_scores_100() {
    let c = corpus(&["the cat sat on the mat", "a b c d e"]);
    let r = corpus_bleu(&c, &c).unwrap();
    assert_eq!(r.bleu, 100.0);
    assert_eq!(r.brevity_penalty, 1.0);
    assert_eq!(format!("{:.2}", r.bleu), "100.00");
}

#[test]
fn disjoint_corpus_scores_zero() {
    let r = corpus_bleu(&corpus(&["a b c d"]), &corpus(&["w x y z"])).unwrap();
    assert_eq!(r.bleu, 0.0);
    assert_eq!(r.precisions, [0.0; 4]);
}

#[test]
fn clipped_unigram_precision_fixture() {
    let h = corpus(&["the the the the the the the"]);
    let r = corpus(&["the cat is on the mat"]);
    let rep = corpus_bleu(&h, &r).unwrap();
    assert!((rep.precisions[0] - 2.0 / 7.0).abs() < 1e-9);
    assert_eq!(rep.matches[0], merge_clipped_unigrams(&h[0], &r[0]));
    assert_eq!(rep.totals[0], 7);
    // "the the" never occurs in the reference
    assert_eq!(rep.matches[1], 0);
    assert_eq!(rep.bleu, 0.0);
}

#[test]
fn brevity_penalty_for_short_output() {
    let rep = corpus_bleu(&corpus(&["a b c d"]), &corpus(&["a b c d e f g h"])).unwrap();
    assert!((rep.brevity_penalty - (-1.0f64).exp()).abs() < 1e-15);
    assert!((rep.bleu - 100.0 * (-1.0f64).exp()).abs() < 1e-9);
}

#[test]
fn hand_computed_bleu() {
    // first pair: 5/6, 3/5, 2/4, 1/3; second pair matches fully: 4/4, 3/3, 2/2, 1/1
    let h = corpus(&["a b c d x e", "p q r s"]);
    let r = corpus(&["a b c d e", "p q r s"]);
    let rep = corpus_bleu(&h, &r).unwrap();
    assert_eq!(rep.matches, [9, 6, 4, 2]);
    assert_eq!(rep.brevity_penalty, 1.0);
    assert_eq!(rep.totals, [10, 8, 6, 4]);
    let want = 100.0 * (0.25 * ((0.9f64).ln() + (0.75f64).ln() + (4.0f64 / 6.0).ln() + (0.5f64).ln())).exp();
    assert!((rep.bleu - want).abs() < 1e-9);
}

#[test]
fn empty_and_mismatched_corpora_are_errors() {
    let empty: Vec<Vec<String>> = vec![];
    assert!(corpus_bleu(&empty, &empty).is_err());
    assert!(matches!(
        corpus_bleu(&corpus(&["a"]), &corpus(&["a", "b"])),
        Err(Error::LineCountMismatch { left: 1, right: 2 })
    ));
    assert!(bag_overlap(&corpus(&["a"]), &empty).is_err());
}

#[test]
fn bleu_is_invariant_to_pair_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let words = ["a", "b", "c", "d", "e"];
    let mut pairs: Vec<(Vec<String>, Vec<String>)> = (0..30)
        .map(|i| {
            let mk = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| words.choose(rng).unwrap().to_string()).collect();
            (mk(4 + i % 5, &mut rng), mk(5 + i % 3, &mut rng))
        })
        .collect();
    let score = |p: &[(Vec<String>, Vec<String>)]| {
        let (h, r): (Vec<_>, Vec<_>) = p.iter().cloned().unzip();
        corpus_bleu(&h, &r).unwrap()
    };
    let base = score(&pairs);
    for _ in 0..10 {
        pairs.shuffle(&mut rng);
        assert_eq!(score(&pairs), base);
    }
}

#[test]
fn sentence_bleu_is_smoothed() {
    let s = sentence_bleu(&toks("a b x"), &toks("a b c"));
    // p1 = 2/3, p2 = (1+1)/(2+1), p3 = (0+1)/(1+1), p4 = (0+1)/(0+1)
    let want = 100.0 * (0.25 * ((2.0f64 / 3.0).ln() + (2.0f64 / 3.0).ln() + (0.5f64).ln())).exp();
    assert!((s - want).abs() < 1e-9);
    assert_eq!(sentence_bleu(&toks("a b c d"), &toks("a b c d")), 100.0);
}

#[test]
fn bag_overlap_examples() {
    let same = corpus(&["a b c", "d"]);
    let r = bag_overlap(&same, &same).unwrap();
    assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    let r = bag_overlap(&corpus(&["a b"]), &corpus(&["c d"])).unwrap();
    assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    let r = bag_overlap(&corpus(&["a b b"]), &corpus(&["a c"])).unwrap();
    assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
}

#[test]
fn empty_hypothesis_counts_toward_recall() {
    let r = bag_overlap(&corpus(&["", "a"]), &corpus(&["x y", "a"])).unwrap();
    assert_eq!(r.precision, 1.0);
    assert!((r.recall - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn report_format() {
    let c = corpus(&["a b c d"]);
    let text = format_report(&corpus_bleu(&c, &c).unwrap(), &bag_overlap(&c, &c).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bleu\t100.00");
    assert!(lines.contains(&"bag_f1\t1.0000"));
    assert!(lines.iter().all(|l| l.split('\t').count() == 2));
}

proptest! {
    #[test]
    fn bleu_bounded_and_identity_exact(
        lines in prop::collection::vec(prop::collection::vec(0u8..6, 4..10), 1..8),
        other in prop::collection::vec(prop::collection::vec(0u8..6, 0..10), 1..8),
    ) {
        let h: Vec<Vec<String>> = lines.iter().map(|l| l.iter().map(|t| t.to_string()).collect()).collect();
        prop_assert_eq!(corpus_bleu(&h, &h).unwrap().bleu, 100.0);
        let n = h.len().min(other.len());
        let o: Vec<Vec<String>> = other[..n].iter().map(|l| l.iter().map(|t| t.to_string()).collect()).collect();
        let b = corpus_bleu(&h[..n], &o).unwrap().bleu;
        prop_assert!((0.0..=100.0).contains(&b));
    }

    #[test]
    fn bag_overlap_ignores_hypothesis_order(
        line in prop::collection::vec(0u8..8, 0..12),
        reference in prop::collection::vec(0u8..8, 1..12),
        seed in any::<u64>(),
    ) {
        let h: Vec<String> = line.iter().map(|t| t.to_string()).collect();
        let r: Vec<String> = reference.iter().map(|t| t.to_string()).collect();
        let mut shuffled = h.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = bag_overlap(&[h], std::slice::from_ref(&r)).unwrap();
        let b = bag_overlap(&[shuffled], &[r]).unwrap();
        prop_assert_eq!(a.clone(), b);
        prop_assert!((0.0..=1.0).contains(&a.f1));
    }
}
