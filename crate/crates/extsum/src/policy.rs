//! The action distribution over index sequences given sentence affinities:
//! repeated sampling-without-replacement with per-step epsilon exploration,
//! its exact probability, the log-probability gradient with respect to the
//! affinities, and greedy decoding.
//!
//! With affinities `pi` (floored to `[affinity_floor, 1]`), `z = sum(pi)`,
//! and `N` sentences, the probability of picking index `i_j` at step `j`
//! (0-based) is
//!
//! ```text
//! q_j = eps / (N - j) + (1 - eps) * pi[i_j] / (z - sum of already-picked pi)
//! ```
//!
//! and the sequence probability is the product of the `q_j`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Per-sentence inclusion propensities in `[0, 1]`, one entry per document
/// sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityVector {
    values: Vec<f64>,
}

impl AffinityVector {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(
            values.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)),
            "affinities must lie in [0, 1]"
        );
        AffinityVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// An ordered sequence of sentence indices: the bandit action.
///
/// Sampling and decoding always produce distinct in-range indices of length
/// `min(M, N)`; sequences violating that are representable so `log_prob` can
/// assign them probability zero.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexSequence {
    indices: Vec<usize>,
}

impl IndexSequence {
    pub fn new(indices: Vec<usize>) -> Self {
        IndexSequence { indices }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indices in ascending document order.
    pub fn in_document_order(&self) -> IndexSequence {
        let mut sorted = self.indices.clone();
        sorted.sort_unstable();
        IndexSequence::new(sorted)
    }

    fn has_duplicates(&self) -> bool {
        let mut seen = self.indices.clone();
        seen.sort_unstable();
        seen.windows(2).any(|w| w[0] == w[1])
    }
}

/// Summary length, exploration probability, and the affinity floor that
/// keeps the normalizer positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    /// Sentences per summary; documents with fewer sentences select all.
    pub m: usize,
    /// Per-step probability of sampling uniformly among unselected indices.
    pub epsilon: f64,
    /// Lower clamp applied to affinities inside the distribution.
    pub affinity_floor: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            m: 3,
            epsilon: 0.1,
            affinity_floor: 1e-6,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Invalid("summary length M must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Invalid("epsilon must lie in [0, 1]".into()));
        }
        if !(self.affinity_floor > 0.0 && self.affinity_floor <= 1e-3) {
            return Err(Error::Invalid(
                "affinity_floor must lie in (0, 1e-3]".into(),
            ));
        }
        Ok(())
    }

    fn m_eff(&self, n: usize) -> usize {
        self.m.min(n)
    }
}

fn floored(affinities: &AffinityVector, cfg: &PolicyConfig) -> Vec<f64> {
    affinities
        .as_slice()
        .iter()
        .map(|&v| v.clamp(cfg.affinity_floor, 1.0))
        .collect()
}

/// Draws an index sequence by repeated sampling-without-replacement.
///
/// Each round picks uniformly among unselected indices with probability
/// `epsilon`, otherwise proportionally to the floored affinities of the
/// unselected indices. Selection order is preserved.
pub fn sample<R: Rng + ?Sized>(
    affinities: &AffinityVector,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> IndexSequence {
    let n = affinities.len();
    let pi = floored(affinities, cfg);
    let m_eff = cfg.m_eff(n);

    let mut selected = vec![false; n];
    let mut remaining_mass: f64 = pi.iter().sum();
    let mut out = Vec::with_capacity(m_eff);

    for j in 0..m_eff {
        let uniform = rng.gen::<f64>() < cfg.epsilon;
        let pick = if uniform {
            let k = rng.gen_range(0..n - j);
            nth_unselected(&selected, k)
        } else {
            let u = rng.gen::<f64>() * remaining_mass;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &mass) in pi.iter().enumerate() {
                if selected[i] {
                    continue;
                }
                acc += mass;
                if u < acc {
                    chosen = Some(i);
                    break;
                }
            }
            // Floating-point shortfall: fall back to the last unselected index.
            chosen.unwrap_or_else(|| last_unselected(&selected))
        };
        selected[pick] = true;
        remaining_mass -= pi[pick];
        out.push(pick);
    }
    IndexSequence::new(out)
}

fn nth_unselected(selected: &[bool], mut k: usize) -> usize {
    for (i, &s) in selected.iter().enumerate() {
        if !s {
            if k == 0 {
                return i;
            }
            k -= 1;
        }
    }
    unreachable!("fewer unselected indices than requested")
}

fn last_unselected(selected: &[bool]) -> usize {
    selected
        .iter()
        .rposition(|&s| !s)
        .expect("at least one unselected index")
}

fn check_in_range(indices: &IndexSequence, n: usize) -> Result<()> {
    for &i in indices.as_slice() {
        if i >= n {
            return Err(Error::IndexOutOfRange {
                index: i,
                n_sentences: n,
            });
        }
    }
    Ok(())
}

/// Log of the exact sequence probability.
///
/// Sequences with duplicate indices or of the wrong length have probability
/// zero; their log-probability is negative infinity.
pub fn log_prob(
    indices: &IndexSequence,
    affinities: &AffinityVector,
    cfg: &PolicyConfig,
) -> Result<f64> {
    let n = affinities.len();
    check_in_range(indices, n)?;
    if indices.len() != cfg.m_eff(n) || indices.has_duplicates() {
        return Ok(f64::NEG_INFINITY);
    }
    let pi = floored(affinities, cfg);
    let mut denom: f64 = pi.iter().sum();
    let mut lp = 0.0;
    for (j, &i) in indices.as_slice().iter().enumerate() {
        let q = cfg.epsilon / (n - j) as f64 + (1.0 - cfg.epsilon) * pi[i] / denom;
        lp += q.ln();
        denom -= pi[i];
    }
    Ok(lp)
}

/// Exact gradient of `log_prob` with respect to each affinity entry.
///
/// Entries clamped by the floor (or the upper bound 1) receive zero
/// gradient. With `epsilon = 1` the probability does not depend on the
/// affinities and the gradient is the zero vector.
pub fn log_prob_grad(
    indices: &IndexSequence,
    affinities: &AffinityVector,
    cfg: &PolicyConfig,
) -> Result<Vec<f64>> {
    let n = affinities.len();
    check_in_range(indices, n)?;
    if indices.len() != cfg.m_eff(n) || indices.has_duplicates() {
        return Err(Error::NonFiniteLogProb);
    }
    let pi = floored(affinities, cfg);
    let mut grad = vec![0.0; n];
    let mut selected = vec![false; n];
    let mut denom: f64 = pi.iter().sum();
    let one_minus_eps = 1.0 - cfg.epsilon;

    for (j, &i) in indices.as_slice().iter().enumerate() {
        let q = cfg.epsilon / (n - j) as f64 + one_minus_eps * pi[i] / denom;
        // d q_j / d pi[i_j] contributes through the numerator ...
        grad[i] += one_minus_eps / (q * denom);
        // ... and every not-yet-selected entry contributes through the
        // denominator z - sum(picked), including i_j itself.
        let denominator_term = one_minus_eps * pi[i] / (q * denom * denom);
        for (t, g) in grad.iter_mut().enumerate() {
            if !selected[t] {
                *g -= denominator_term;
            }
        }
        selected[i] = true;
        denom -= pi[i];
    }

    // The clamp has zero slope outside [floor, 1].
    for (t, &raw) in affinities.as_slice().iter().enumerate() {
        if raw < cfg.affinity_floor || raw > 1.0 {
            grad[t] = 0.0;
        }
    }
    Ok(grad)
}

/// Evaluation-mode decode: the `min(M, N)` highest-affinity indices in
/// descending affinity order, ties broken toward the smaller index.
/// Exploration is ignored.
pub fn greedy_decode(affinities: &AffinityVector, cfg: &PolicyConfig) -> IndexSequence {
    let n = affinities.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        affinities.as_slice()[b]
            .partial_cmp(&affinities.as_slice()[a])
            .expect("affinities are finite")
            .then(a.cmp(&b))
    });
    order.truncate(cfg.m_eff(n));
    IndexSequence::new(order)
}

/// Maximum document length accepted by [`enumerate_probabilities`].
pub const ENUMERATION_LIMIT: usize = 8;

/// Exact probability of every valid index sequence, by direct expansion of
/// the sampling process. Probabilities sum to one.
pub fn enumerate_probabilities(
    affinities: &AffinityVector,
    cfg: &PolicyConfig,
) -> Result<BTreeMap<IndexSequence, f64>> {
    let n = affinities.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            n_sentences: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let pi = floored(affinities, cfg);
    let m_eff = cfg.m_eff(n);
    let mut map = BTreeMap::new();
    let mut prefix = Vec::with_capacity(m_eff);
    let mut selected = vec![false; n];
    let z: f64 = pi.iter().sum();
    expand(
        &pi,
        cfg.epsilon,
        m_eff,
        &mut prefix,
        &mut selected,
        1.0,
        z,
        &mut map,
    );
    Ok(map)
}

#[allow(clippy::too_many_arguments)]
fn expand(
    pi: &[f64],
    epsilon: f64,
    m_eff: usize,
    prefix: &mut Vec<usize>,
    selected: &mut Vec<bool>,
    prob: f64,
    remaining_mass: f64,
    map: &mut BTreeMap<IndexSequence, f64>,
) {
    if prefix.len() == m_eff {
        map.insert(IndexSequence::new(prefix.clone()), prob);
        return;
    }
    let n = pi.len();
    let j = prefix.len();
    for i in 0..n {
        if selected[i] {
            continue;
        }
        let q = epsilon / (n - j) as f64 + (1.0 - epsilon) * pi[i] / remaining_mass;
        prefix.push(i);
        selected[i] = true;
        expand(
            pi,
            epsilon,
            m_eff,
            prefix,
            selected,
            prob * q,
            remaining_mass - pi[i],
            map,
        );
        selected[i] = false;
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn aff(values: &[f64]) -> AffinityVector {
        AffinityVector::new(values.to_vec())
    }

    fn cfg(m: usize, epsilon: f64) -> PolicyConfig {
        PolicyConfig {
            m,
            epsilon,
            affinity_floor: 1e-6,
        }
    }

    #[test]
    fn single_sentence_always_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = aff(&[0.3]);
        for _ in 0..10 {
            let s = sample(&a, &cfg(3, 0.5), &mut rng);
            assert_eq!(s.as_slice(), &[0]);
        }
    }

    #[test]
    fn epsilon_one_is_uniform_without_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = aff(&[0.9, 0.05, 0.7]);
        let c = cfg(2, 1.0);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let trials = 100_000;
        for _ in 0..trials {
            let s = sample(&a, &c, &mut rng);
            *counts.entry(s.as_slice().to_vec()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (_, n) in counts {
            let freq = n as f64 / trials as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn symmetric_affinities_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = aff(&[0.5, 0.5, 0.5]);
        let c = cfg(2, 0.0);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let trials = 100_000;
        for _ in 0..trials {
            let s = sample(&a, &c, &mut rng);
            *counts.entry(s.as_slice().to_vec()).or_insert(0) += 1;
        }
        for (_, n) in counts {
            let freq = n as f64 / trials as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn log_prob_symmetric_case() {
        let a = aff(&[0.5, 0.5, 0.5]);
        let lp = log_prob(&IndexSequence::new(vec![0, 1]), &a, &cfg(2, 0.0)).unwrap();
        assert!((lp - (1.0f64 / 6.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_prob_hand_evaluated() {
        // (0.8/2.0) * (0.6/1.2) = 0.2
        let a = aff(&[0.8, 0.4, 0.2, 0.6]);
        let lp = log_prob(&IndexSequence::new(vec![0, 3]), &a, &cfg(2, 0.0)).unwrap();
        assert!((lp - 0.2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_prob_uniform_branch() {
        let a = aff(&[0.9, 0.1, 0.4]);
        for seq in [vec![0, 1], vec![2, 0], vec![1, 2]] {
            let lp = log_prob(&IndexSequence::new(seq), &a, &cfg(2, 1.0)).unwrap();
            assert!((lp - (1.0f64 / 6.0).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn log_prob_duplicate_is_minus_infinity() {
        let a = aff(&[0.5, 0.5, 0.5]);
        let lp = log_prob(&IndexSequence::new(vec![1, 1]), &a, &cfg(2, 0.1)).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
    }

    #[test]
    fn log_prob_wrong_length_is_minus_infinity() {
        let a = aff(&[0.5, 0.5, 0.5]);
        let lp = log_prob(&IndexSequence::new(vec![1]), &a, &cfg(2, 0.1)).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
    }

    #[test]
    fn log_prob_out_of_range_is_error() {
        let a = aff(&[0.5, 0.5]);
        assert!(log_prob(&IndexSequence::new(vec![0, 7]), &a, &cfg(2, 0.0)).is_err());
    }

    #[test]
    fn grad_zero_under_pure_exploration() {
        let a = aff(&[0.2, 0.9, 0.6]);
        let g = log_prob_grad(&IndexSequence::new(vec![2, 0]), &a, &cfg(2, 1.0)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_hand_differentiated() {
        // d/d pi of log(pi_0 / (pi_0 + pi_1)) at (0.5, 0.5): (1/0.5 - 1/1.0, -1/1.0)
        let a = aff(&[0.5, 0.5]);
        let g = log_prob_grad(&IndexSequence::new(vec![0]), &a, &cfg(1, 0.0)).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12);
        assert!((g[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let step = 1e-5;
        for case in 0..100 {
            let n = rng.gen_range(2..=8);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let a = aff(&values);
            let epsilon = [0.0, 0.1, 0.5][case % 3];
            let c = cfg(rng.gen_range(1..=3.min(n)), epsilon);
            let idx = sample(&a, &c, &mut rng);
            let analytic = log_prob_grad(&idx, &a, &c).unwrap();
            for t in 0..n {
                let mut plus = values.clone();
                plus[t] += step;
                let mut minus = values.clone();
                minus[t] -= step;
                let lp_plus = log_prob(&idx, &aff(&plus), &c).unwrap();
                let lp_minus = log_prob(&idx, &aff(&minus), &c).unwrap();
                let numeric = (lp_plus - lp_minus) / (2.0 * step);
                let denom = analytic[t].abs().max(numeric.abs());
                let ok = (analytic[t] - numeric).abs() <= 1e-4 * denom
                    || (analytic[t] - numeric).abs() <= 1e-8;
                assert!(
                    ok,
                    "case {case} coord {t}: analytic {} vs numeric {}",
                    analytic[t], numeric
                );
            }
        }
    }

    #[test]
    fn floored_entries_get_zero_gradient() {
        let a = aff(&[0.0, 0.8]);
        let g = log_prob_grad(&IndexSequence::new(vec![1]), &a, &cfg(1, 0.0)).unwrap();
        assert_eq!(g[0], 0.0);
        assert!(g[1] != 0.0);
    }

    #[test]
    fn greedy_picks_top_affinities_descending() {
        let a = aff(&[0.1, 0.9, 0.3]);
        assert_eq!(greedy_decode(&a, &cfg(2, 0.3)).as_slice(), &[1, 2]);
    }

    #[test]
    fn greedy_breaks_ties_toward_smaller_index() {
        let a = aff(&[0.4, 0.4, 0.4]);
        assert_eq!(greedy_decode(&a, &cfg(2, 0.0)).as_slice(), &[0, 1]);
    }

    #[test]
    fn greedy_maximizes_probability_at_zero_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=6);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
            let a = aff(&values);
            let c = cfg(rng.gen_range(1..=3), 0.0);
            let table = enumerate_probabilities(&a, &c).unwrap();
            let best = table
                .values()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let greedy = greedy_decode(&a, &c);
            let greedy_prob = table[&greedy];
            assert!(
                greedy_prob >= best - 1e-12,
                "greedy {greedy_prob} < best {best}"
            );
        }
    }

    #[test]
    fn enumeration_sums_to_one_and_matches_log_prob() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 1..=8usize {
            for m in 1..=n {
                for &epsilon in &[0.0, 0.1, 1.0] {
                    let values: Vec<f64> =
                        (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let a = aff(&values);
                    let c = cfg(m, epsilon);
                    let table = enumerate_probabilities(&a, &c).unwrap();
                    let total: f64 = table.values().sum();
                    assert!(
                        (total - 1.0).abs() < 1e-12,
                        "n={n} m={m} eps={epsilon}: total {total}"
                    );
                    for (seq, &p) in &table {
                        let lp = log_prob(seq, &a, &c).unwrap();
                        assert!(
                            (lp.exp() - p).abs() < 1e-12,
                            "n={n} m={m}: {p} vs {}",
                            lp.exp()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn enumeration_degenerate_affinity() {
        let c = PolicyConfig {
            m: 2,
            epsilon: 0.0,
            affinity_floor: 1e-6,
        };
        let a = aff(&[1.0, 0.0]);
        let table = enumerate_probabilities(&a, &c).unwrap();
        let p = table[&IndexSequence::new(vec![0, 1])];
        assert!((p - 1.0).abs() < 1e-5);
    }

    #[test]
    fn enumeration_rejects_large_documents() {
        let a = aff(&vec![0.5; 9]);
        assert!(enumerate_probabilities(&a, &cfg(2, 0.0)).is_err());
    }

    #[test]
    fn enumeration_matches_sample_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let values = vec![0.8, 0.15, 0.45, 0.6];
        let a = aff(&values);
        let c = cfg(2, 0.1);
        let table = enumerate_probabilities(&a, &c).unwrap();
        let trials = 100_000usize;
        let mut counts: HashMap<IndexSequence, usize> = HashMap::new();
        for _ in 0..trials {
            *counts.entry(sample(&a, &c, &mut rng)).or_insert(0) += 1;
        }
        for (seq, &p) in &table {
            let observed = *counts.get(seq).unwrap_or(&0) as f64 / trials as f64;
            let stderr = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(
                (observed - p).abs() <= 3.0 * stderr.max(1e-9),
                "{seq:?}: observed {observed}, expected {p}"
            );
        }
    }

    #[test]
    fn scale_covariance_of_probabilities() {
        let values = vec![0.9, 0.3, 0.55, 0.7];
        let c = cfg(2, 0.0);
        let base = enumerate_probabilities(&aff(&values), &c).unwrap();
        for &scale in &[0.5, 0.1] {
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let table = enumerate_probabilities(&aff(&scaled), &c).unwrap();
            for (seq, &p) in &base {
                assert!((table[seq] - p).abs() < 1e-9, "scale {scale}");
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let values = vec![0.9, 0.3, 0.55];
        let c = cfg(2, 0.0);
        let base = enumerate_probabilities(&aff(&values), &c).unwrap();
        // swap entries 0 and 2
        let permuted = vec![0.55, 0.3, 0.9];
        let table = enumerate_probabilities(&aff(&permuted), &c).unwrap();
        let map = |i: usize| match i {
            0 => 2,
            2 => 0,
            other => other,
        };
        for (seq, &p) in &base {
            let mapped = IndexSequence::new(seq.as_slice().iter().map(|&i| map(i)).collect());
            assert!((table[&mapped] - p).abs() < 1e-12);
        }
    }
}
