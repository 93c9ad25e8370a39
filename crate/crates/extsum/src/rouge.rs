//! ROUGE-1, ROUGE-2, ROUGE-L precision/recall/F1 and the scalar training
//! reward: the mean of the three F1 scores.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::policy::IndexSequence;
use crate::text::{Document, ReferenceSummary};

/// Precision, recall and their unweighted harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }

    pub const ZERO: RougeScore = RougeScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
}

/// All three ROUGE variants plus the scalar reward: the mean of their F1s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeReward {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub reward: f64,
}

impl RougeReward {
    pub fn new(rouge1: RougeScore, rouge2: RougeScore, rouge_l: RougeScore) -> Self {
        let reward = (rouge1.f1 + rouge2.f1 + rouge_l.f1) / 3.0;
        RougeReward {
            rouge1,
            rouge2,
            rouge_l,
            reward,
        }
    }
}

/// Clipped n-gram overlap. Precision divides by the hypothesis n-gram count,
/// recall by the reference n-gram count; sequences shorter than `n` yield
/// zero counts and zero scores.
pub fn rouge_n(hypothesis: &[String], reference: &[String], n: usize) -> RougeScore {
    assert!(n >= 1, "n-gram order must be at least 1");
    let hyp_total = hypothesis.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);

    let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
    if reference.len() >= n {
        for gram in reference.windows(n) {
            *ref_counts.entry(gram).or_insert(0) += 1;
        }
    }

    let mut hyp_counts: HashMap<&[String], usize> = HashMap::new();
    if hypothesis.len() >= n {
        for gram in hypothesis.windows(n) {
            *hyp_counts.entry(gram).or_insert(0) += 1;
        }
    }

    let mut overlap = 0usize;
    for (gram, count) in &hyp_counts {
        if let Some(rc) = ref_counts.get(gram) {
            overlap += (*count).min(*rc);
        }
    }

    let precision = overlap as f64 / hyp_total.max(1) as f64;
    let recall = overlap as f64 / ref_total.max(1) as f64;
    RougeScore::from_pr(precision, recall)
}

/// Length of the longest common subsequence.
fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Sequence-level ROUGE-L over the whole concatenated token sequences.
pub fn rouge_l(hypothesis: &[String], reference: &[String]) -> RougeScore {
    let l = lcs_len(hypothesis, reference) as f64;
    let precision = if hypothesis.is_empty() {
        0.0
    } else {
        l / hypothesis.len() as f64
    };
    let recall = if reference.is_empty() {
        0.0
    } else {
        l / reference.len() as f64
    };
    RougeScore::from_pr(precision, recall)
}

/// Positions in `rf` matched by some LCS of `hyp` and `rf`.
fn lcs_match_positions(hyp: &[String], rf: &[String]) -> Vec<usize> {
    if hyp.is_empty() || rf.is_empty() {
        return Vec::new();
    }
    let n = hyp.len();
    let m = rf.len();
    let mut table = vec![0usize; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in 1..=n {
        for j in 1..=m {
            table[at(i, j)] = if hyp[i - 1] == rf[j - 1] {
                table[at(i - 1, j - 1)] + 1
            } else {
                table[at(i - 1, j)].max(table[at(i, j - 1)])
            };
        }
    }
    let mut positions = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        if hyp[i - 1] == rf[j - 1] {
            positions.push(j - 1);
            i -= 1;
            j -= 1;
        } else if table[at(i - 1, j)] >= table[at(i, j - 1)] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    positions.reverse();
    positions
}

/// Summary-level union-LCS ROUGE-L, exposed for comparison against the
/// sequence-level default.
///
/// For each reference sentence, the union of LCS matches against every
/// hypothesis sentence is counted once; totals divide by hypothesis and
/// reference token counts.
pub fn rouge_l_union(
    hypothesis_sentences: &[Vec<String>],
    reference_sentences: &[Vec<String>],
) -> RougeScore {
    let hyp_total: usize = hypothesis_sentences.iter().map(|s| s.len()).sum();
    let ref_total: usize = reference_sentences.iter().map(|s| s.len()).sum();
    if hyp_total == 0 || ref_total == 0 {
        return RougeScore::ZERO;
    }
    let mut union_total = 0usize;
    for rf in reference_sentences {
        let mut matched = vec![false; rf.len()];
        for hyp in hypothesis_sentences {
            for p in lcs_match_positions(hyp, rf) {
                matched[p] = true;
            }
        }
        union_total += matched.iter().filter(|&&m| m).count();
    }
    let precision = union_total as f64 / hyp_total as f64;
    let recall = union_total as f64 / ref_total as f64;
    RougeScore::from_pr(precision, recall)
}

/// Scores the summary induced by `indices` against the reference.
///
/// The hypothesis is the concatenation, in index-sequence order, of the
/// selected sentences' tokens.
pub fn reward(
    indices: &IndexSequence,
    document: &Document,
    reference: &ReferenceSummary,
) -> Result<RougeReward> {
    let n = document.len();
    let mut hypothesis = Vec::new();
    for &i in indices.as_slice() {
        if i >= n {
            return Err(Error::IndexOutOfRange {
                index: i,
                n_sentences: n,
            });
        }
        hypothesis.extend(document.sentences[i].tokens.iter().cloned());
    }
    let reference_tokens = reference.tokens();
    Ok(score_tokens(&hypothesis, &reference_tokens))
}

/// Scores a hypothesis token sequence against a reference token sequence.
pub fn score_tokens(hypothesis: &[String], reference: &[String]) -> RougeReward {
    RougeReward::new(
        rouge_n(hypothesis, reference, 1),
        rouge_n(hypothesis, reference, 2),
        rouge_l(hypothesis, reference),
    )
}

/// Porter-stems every token; used behind the `--stem` scoring flag.
pub fn stem_tokens(tokens: &[String]) -> Vec<String> {
    let stemmer = rust_stemmers::Stemmer::create(rust_stemmers::Algorithm::English);
    tokens
        .iter()
        .map(|t| stemmer.stem(t).into_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn identical_sequences_score_one() {
        let t = toks("a small brown fox");
        assert_eq!(rouge_n(&t, &t, 1).f1, 1.0);
        assert_eq!(rouge_n(&t, &t, 2).f1, 1.0);
        assert_eq!(rouge_l(&t, &t).f1, 1.0);
    }

    #[test]
    fn disjoint_sequences_score_zero() {
        let a = toks("alpha beta gamma");
        let b = toks("delta epsilon zeta");
        assert_eq!(rouge_n(&a, &b, 1).f1, 0.0);
        assert_eq!(rouge_n(&a, &b, 2).f1, 0.0);
        assert_eq!(rouge_l(&a, &b).f1, 0.0);
    }

    #[test]
    fn rouge_1_hand_counted() {
        // clipped unigram overlap: the(min(2,1)) + cat + sat = 3
        let hyp = toks("the cat sat on the mat");
        let rf = toks("the cat sat");
        let s = rouge_n(&hyp, &rf, 1);
        assert!((s.precision - 0.5).abs() < 1e-12);
        assert!((s.recall - 1.0).abs() < 1e-12);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_2_hand_counted() {
        // bigram overlap: "the cat", "cat sat" = 2 of 5 hypothesis bigrams
        let hyp = toks("the cat sat on the mat");
        let rf = toks("the cat sat");
        let s = rouge_n(&hyp, &rf, 2);
        assert!((s.precision - 0.4).abs() < 1e-12);
        assert!((s.recall - 1.0).abs() < 1e-12);
        assert!((s.f1 - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_hand_counted() {
        let hyp = toks("the cat sat on the mat");
        let rf = toks("the cat sat");
        let s = rouge_l(&hyp, &rf);
        assert!((s.precision - 0.5).abs() < 1e-12);
        assert!((s.recall - 1.0).abs() < 1e-12);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_order_sensitive() {
        let s = rouge_l(&toks("a b"), &toks("b a"));
        assert!((s.precision - 0.5).abs() < 1e-12);
        assert!((s.recall - 0.5).abs() < 1e-12);
        assert!((s.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn short_sequences_yield_zero_bigrams() {
        let s = rouge_n(&toks("one"), &toks("one"), 2);
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let empty: Vec<String> = Vec::new();
        let rf = toks("a b c");
        assert_eq!(rouge_n(&empty, &rf, 1).f1, 0.0);
        assert_eq!(rouge_l(&empty, &rf).f1, 0.0);
    }

    #[test]
    fn reward_matches_hand_mean() {
        // (2/3 + 4/7 + 2/3)/3 = 40/63
        let r = score_tokens(&toks("the cat sat on the mat"), &toks("the cat sat"));
        assert!((r.reward - 40.0 / 63.0).abs() < 1e-12);
        assert!((r.reward - 0.6349).abs() < 1e-4);
    }

    #[test]
    fn reward_selects_in_sequence_order() {
        use crate::text::{Document, ReferenceSummary, Sentence};
        let doc = Document::new(
            "d",
            vec![
                Sentence::new("b a").unwrap(),
                Sentence::new("a b").unwrap(),
            ],
        )
        .unwrap();
        let rf = ReferenceSummary::new(vec![Sentence::new("a b").unwrap()]).unwrap();
        let r = reward(&IndexSequence::new(vec![1]), &doc, &rf).unwrap();
        assert_eq!(r.reward, 1.0);
        let r = reward(&IndexSequence::new(vec![0]), &doc, &rf).unwrap();
        assert!(r.rouge_l.f1 < 1.0);
    }

    #[test]
    fn reward_rejects_out_of_range_index() {
        use crate::text::{Document, ReferenceSummary, Sentence};
        let doc = Document::new("d", vec![Sentence::new("a").unwrap()]).unwrap();
        let rf = ReferenceSummary::new(vec![Sentence::new("a").unwrap()]).unwrap();
        assert!(reward(&IndexSequence::new(vec![3]), &doc, &rf).is_err());
    }

    #[test]
    fn union_lcs_counts_each_reference_token_once() {
        let hyp = vec![toks("a b"), toks("b c")];
        let rf = vec![toks("a b c")];
        let s = rouge_l_union(&hyp, &rf);
        // all three reference tokens matched, 4 hypothesis tokens emitted
        assert!((s.recall - 1.0).abs() < 1e-12);
        assert!((s.precision - 0.75).abs() < 1e-12);
    }

    #[test]
    fn stemming_conflates_inflections() {
        let stemmed = stem_tokens(&toks("running runs run"));
        assert_eq!(stemmed[0], stemmed[1]);
        assert_eq!(stemmed[1], stemmed[2]);
    }
}
