//! Bag-of-words affinity model: mean word embedding per sentence, one tanh
//! hidden layer, sigmoid output. Cheap enough for exhaustive gradient checks
//! and desk-scale training runs.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::param::{GradVector, LayoutBuilder, ParamVector};
use crate::model::{
    init_uniform, matvec_add, matvec_t_add, outer_add, sigmoid, AffinityModel, EncoderState,
    ModelSpec, Vocab,
};
use crate::policy::AffinityVector;
use crate::text::Document;

/// Forward-pass cache for [`BagOfWordsModel`].
#[derive(Debug, Clone)]
pub struct BowState {
    pub(crate) token_ids: Vec<Vec<usize>>,
    pub(crate) features: Vec<Vec<f64>>,
    pub(crate) hidden: Vec<Vec<f64>>,
    pub(crate) affinities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BagOfWordsModel {
    vocab: Vocab,
    embed_dim: usize,
    hidden_dim: usize,
    seed: u64,
    params: ParamVector,
    frozen: BTreeSet<String>,
}

impl BagOfWordsModel {
    /// Deterministic initialization: uniform [-0.1, 0.1] weights, zero biases.
    pub fn new(vocab: Vocab, embed_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        assert!(embed_dim >= 1 && hidden_dim >= 1, "dims must be at least 1");
        let mut builder = LayoutBuilder::new();
        builder
            .add("embed", vocab.len() * embed_dim)
            .add("w1", hidden_dim * embed_dim)
            .add("b1", hidden_dim)
            .add("w2", hidden_dim)
            .add("b2", 1);
        let mut params = ParamVector::zeros(builder.build());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_uniform(params.segment_mut("embed"), &mut rng);
        init_uniform(params.segment_mut("w1"), &mut rng);
        init_uniform(params.segment_mut("w2"), &mut rng);
        BagOfWordsModel {
            vocab,
            embed_dim,
            hidden_dim,
            seed,
            params,
            frozen: BTreeSet::new(),
        }
    }
}

impl AffinityModel for BagOfWordsModel {
    fn forward(&self, document: &Document) -> (AffinityVector, EncoderState) {
        let e = self.embed_dim;
        let h = self.hidden_dim;
        let embed = self.params.segment("embed");
        let w1 = self.params.segment("w1");
        let b1 = self.params.segment("b1");
        let w2 = self.params.segment("w2");
        let b2 = self.params.segment("b2")[0];

        let mut token_ids = Vec::with_capacity(document.len());
        let mut features = Vec::with_capacity(document.len());
        let mut hidden = Vec::with_capacity(document.len());
        let mut affinities = Vec::with_capacity(document.len());

        for sentence in &document.sentences {
            let ids: Vec<usize> = sentence.tokens.iter().map(|t| self.vocab.id(t)).collect();
            let mut feat = vec![0.0; e];
            for &id in &ids {
                let row = &embed[id * e..(id + 1) * e];
                for (f, v) in feat.iter_mut().zip(row) {
                    *f += v;
                }
            }
            let inv = 1.0 / ids.len() as f64;
            for f in &mut feat {
                *f *= inv;
            }

            let mut pre = b1.to_vec();
            matvec_add(w1, &feat, &mut pre, h, e);
            let hid: Vec<f64> = pre.iter().map(|z| z.tanh()).collect();

            let mut logit = b2;
            for (w, v) in w2.iter().zip(&hid) {
                logit += w * v;
            }
            affinities.push(sigmoid(logit));
            token_ids.push(ids);
            features.push(feat);
            hidden.push(hid);
        }

        (
            AffinityVector::new(affinities.clone()),
            EncoderState::BagOfWords(BowState {
                token_ids,
                features,
                hidden,
                affinities,
            }),
        )
    }

    fn backward(&self, state: &EncoderState, d_affinities: &[f64]) -> Result<GradVector> {
        let state = match state {
            EncoderState::BagOfWords(s) => s,
            _ => return Err(Error::StateMismatch),
        };
        if d_affinities.len() != state.affinities.len() {
            return Err(Error::ShapeMismatch(format!(
                "d_affinities has {} entries for {} sentences",
                d_affinities.len(),
                state.affinities.len()
            )));
        }
        let e = self.embed_dim;
        let h = self.hidden_dim;
        let w1 = self.params.segment("w1");
        let w2 = self.params.segment("w2");

        let mut grad = GradVector::zeros(self.params.layout().clone());
        for (s, &da) in d_affinities.iter().enumerate() {
            if da == 0.0 {
                continue;
            }
            let a = state.affinities[s];
            let d_logit = da * a * (1.0 - a);

            for ((gw, hv), _) in grad
                .segment_mut("w2")
                .iter_mut()
                .zip(&state.hidden[s])
                .zip(0..h)
            {
                *gw += d_logit * hv;
            }
            grad.segment_mut("b2")[0] += d_logit;

            // through tanh
            let d_hidden: Vec<f64> = w2
                .iter()
                .zip(&state.hidden[s])
                .map(|(w, hv)| d_logit * w * (1.0 - hv * hv))
                .collect();

            outer_add(grad.segment_mut("w1"), &d_hidden, &state.features[s]);
            for (gb, dv) in grad.segment_mut("b1").iter_mut().zip(&d_hidden) {
                *gb += dv;
            }

            let mut d_feat = vec![0.0; e];
            matvec_t_add(w1, &d_hidden, &mut d_feat, h, e);

            let inv = 1.0 / state.token_ids[s].len() as f64;
            let g_embed = grad.segment_mut("embed");
            for &id in &state.token_ids[s] {
                let row = &mut g_embed[id * e..(id + 1) * e];
                for (g, dv) in row.iter_mut().zip(&d_feat) {
                    *g += dv * inv;
                }
            }
        }

        for name in &self.frozen {
            grad.zero_segment(name);
        }
        Ok(grad)
    }

    fn params(&self) -> &ParamVector {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn spec(&self) -> ModelSpec {
        ModelSpec::BagOfWords {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            seed: self.seed,
        }
    }

    fn frozen_segments(&self) -> Vec<String> {
        self.frozen.iter().cloned().collect()
    }

    fn set_frozen(&mut self, segment: &str, frozen: bool) {
        if frozen {
            self.frozen.insert(segment.to_string());
        } else {
            self.frozen.remove(segment);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{generate_synthetic_corpus, Sentence};

    fn tiny_doc() -> Document {
        Document::new(
            "t",
            vec![
                Sentence::new("w00001 w00002 w00003").unwrap(),
                Sentence::new("w00004 w00001").unwrap(),
                Sentence::new("w00005 w00006 w00007 w00002").unwrap(),
            ],
        )
        .unwrap()
    }

    fn tiny_vocab() -> Vocab {
        Vocab::from_words((1..=8).map(|i| format!("w{i:05}")))
    }

    #[test]
    fn same_seed_gives_identical_params() {
        let a = BagOfWordsModel::new(tiny_vocab(), 4, 3, 42);
        let b = BagOfWordsModel::new(tiny_vocab(), 4, 3, 42);
        assert_eq!(a.params().values(), b.params().values());
        let c = BagOfWordsModel::new(tiny_vocab(), 4, 3, 43);
        assert_ne!(a.params().values(), c.params().values());
    }

    #[test]
    fn param_count_matches_architecture() {
        let vocab = tiny_vocab();
        let v = vocab.len();
        let model = BagOfWordsModel::new(vocab, 4, 3, 0);
        assert_eq!(model.params().len(), v * 4 + 4 * 3 + 3 + 3 + 1);
    }

    #[test]
    fn zeroed_output_layer_gives_half_affinities() {
        let mut model = BagOfWordsModel::new(tiny_vocab(), 4, 3, 1);
        for v in model.params_mut().segment_mut("w2") {
            *v = 0.0;
        }
        model.params_mut().segment_mut("b2")[0] = 0.0;
        let (aff, _) = model.forward(&tiny_doc());
        for &a in aff.as_slice() {
            assert_eq!(a, 0.5);
        }
    }

    #[test]
    fn forward_length_matches_document() {
        let model = BagOfWordsModel::new(tiny_vocab(), 4, 3, 2);
        let (aff, _) = model.forward(&tiny_doc());
        assert_eq!(aff.len(), 3);
        for &a in aff.as_slice() {
            assert!(a > 0.0 && a < 1.0);
        }
    }

    #[test]
    fn permuting_sentences_permutes_affinities() {
        let model = BagOfWordsModel::new(tiny_vocab(), 4, 3, 3);
        let doc = tiny_doc();
        let mut reversed_sents = doc.sentences.clone();
        reversed_sents.reverse();
        let reversed = Document::new("r", reversed_sents).unwrap();
        let (a, _) = model.forward(&doc);
        let (b, _) = model.forward(&reversed);
        let mut b_rev = b.as_slice().to_vec();
        b_rev.reverse();
        assert_eq!(a.as_slice(), b_rev.as_slice());
    }

    #[test]
    fn unknown_tokens_use_reserved_embedding() {
        let model = BagOfWordsModel::new(tiny_vocab(), 4, 3, 4);
        let doc = Document::new(
            "u",
            vec![Sentence::new("entirely novel words").unwrap()],
        )
        .unwrap();
        let (aff, _) = model.forward(&doc);
        assert_eq!(aff.len(), 1);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grad() {
        let model = BagOfWordsModel::new(tiny_vocab(), 4, 3, 5);
        let (_, state) = model.forward(&tiny_doc());
        let grad = model.backward(&state, &[0.0, 0.0, 0.0]).unwrap();
        assert!(grad.values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_rejects_shape_mismatch() {
        let model = BagOfWordsModel::new(tiny_vocab(), 4, 3, 5);
        let (_, state) = model.forward(&tiny_doc());
        assert!(model.backward(&state, &[1.0]).is_err());
    }

    #[test]
    fn frozen_embeddings_get_zero_gradient() {
        let mut model = BagOfWordsModel::new(tiny_vocab(), 4, 3, 6);
        model.set_frozen("embed", true);
        let (_, state) = model.forward(&tiny_doc());
        let grad = model.backward(&state, &[1.0, -0.5, 0.25]).unwrap();
        assert!(grad.segment("embed").iter().all(|&g| g == 0.0));
        assert!(grad.segment("w1").iter().any(|&g| g != 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let corpus = generate_synthetic_corpus(20, 4, &[1], 20, 8).unwrap();
        let vocab = Vocab::from_corpus(&corpus, 32);
        let model = BagOfWordsModel::new(vocab, 3, 3, 7);
        let step = 1e-5;
        for ex in &corpus {
            let doc = &ex.document;
            let d_aff: Vec<f64> = (0..doc.len())
                .map(|i| ((i * 7 + 3) % 5) as f64 / 2.0 - 1.0)
                .collect();
            let (_, state) = model.forward(doc);
            let analytic = model.backward(&state, &d_aff).unwrap();

            let scalar = |m: &BagOfWordsModel| -> f64 {
                let (aff, _) = m.forward(doc);
                aff.as_slice()
                    .iter()
                    .zip(&d_aff)
                    .map(|(a, d)| a * d)
                    .sum()
            };

            for k in 0..model.params().len() {
                let mut plus = model.clone();
                plus.params_mut().values_mut()[k] += step;
                let mut minus = model.clone();
                minus.params_mut().values_mut()[k] -= step;
                let numeric = (scalar(&plus) - scalar(&minus)) / (2.0 * step);
                let a = analytic.values()[k];
                let ok = (a - numeric).abs() <= 1e-4 * a.abs().max(numeric.abs())
                    || (a - numeric).abs() <= 1e-8;
                assert!(ok, "param {k}: analytic {a} vs numeric {numeric}");
            }
        }
    }
}
