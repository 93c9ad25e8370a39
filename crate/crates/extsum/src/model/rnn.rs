//! Recurrent affinity model: a word-level BiLSTM whose hidden states are
//! averaged over words to form sentence features, a stacked sentence-level
//! BiLSTM that lets each sentence representation depend on the whole
//! document, and a one-hidden-layer perceptron decoder ending in a sigmoid.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::lstm::{
    bilstm_backward, bilstm_forward, BiLstmCache, LstmWeights,
};
use crate::model::param::{GradVector, LayoutBuilder, ParamVector};
use crate::model::{
    init_uniform, matvec_add, matvec_t_add, outer_add, sigmoid, AffinityModel, EncoderState,
    ModelSpec, Vocab,
};
use crate::policy::AffinityVector;
use crate::text::Document;

/// Forward-pass cache for [`RecurrentModel`].
#[derive(Debug, Clone)]
pub struct RnnState {
    token_ids: Vec<Vec<usize>>,
    word_inputs: Vec<Vec<Vec<f64>>>,
    word_caches: Vec<BiLstmCache>,
    sent_layer_inputs: Vec<Vec<Vec<f64>>>,
    sent_caches: Vec<BiLstmCache>,
    mlp_hidden_acts: Vec<Vec<f64>>,
    pub(crate) affinities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RecurrentModel {
    vocab: Vocab,
    embed_dim: usize,
    word_hidden: usize,
    sent_hidden: usize,
    sent_layers: usize,
    mlp_hidden: usize,
    seed: u64,
    params: ParamVector,
    frozen: BTreeSet<String>,
}

fn lstm_segment_names(prefix: &str) -> [String; 3] {
    [
        format!("{prefix}_w"),
        format!("{prefix}_u"),
        format!("{prefix}_b"),
    ]
}

impl RecurrentModel {
    /// Deterministic initialization: uniform [-0.1, 0.1] weights, zero
    /// biases except forget-gate biases, which start at 1.
    pub fn new(
        vocab: Vocab,
        embed_dim: usize,
        word_hidden: usize,
        sent_hidden: usize,
        sent_layers: usize,
        mlp_hidden: usize,
        seed: u64,
    ) -> Self {
        assert!(
            embed_dim >= 1
                && word_hidden >= 1
                && sent_hidden >= 1
                && sent_layers >= 1
                && mlp_hidden >= 1,
            "dims must be at least 1"
        );
        let mut builder = LayoutBuilder::new();
        builder.add("embed", vocab.len() * embed_dim);
        for dir in ["word_fwd", "word_bwd"] {
            let [w, u, b] = lstm_segment_names(dir);
            builder
                .add(w, 4 * word_hidden * embed_dim)
                .add(u, 4 * word_hidden * word_hidden)
                .add(b, 4 * word_hidden);
        }
        for layer in 0..sent_layers {
            let input = if layer == 0 {
                2 * word_hidden
            } else {
                2 * sent_hidden
            };
            for dir in ["fwd", "bwd"] {
                let [w, u, b] = lstm_segment_names(&format!("sent{layer}_{dir}"));
                builder
                    .add(w, 4 * sent_hidden * input)
                    .add(u, 4 * sent_hidden * sent_hidden)
                    .add(b, 4 * sent_hidden);
            }
        }
        builder
            .add("dec_w1", mlp_hidden * 2 * sent_hidden)
            .add("dec_b1", mlp_hidden)
            .add("dec_w2", mlp_hidden)
            .add("dec_b2", 1);

        let mut params = ParamVector::zeros(builder.build());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight_segments: Vec<String> = params
            .layout()
            .segments()
            .iter()
            .filter(|s| !s.name.ends_with("_b") && !s.name.starts_with("dec_b"))
            .map(|s| s.name.clone())
            .collect();
        for name in weight_segments {
            init_uniform(params.segment_mut(&name), &mut rng);
        }
        // forget-gate bias starts at 1 for stable early training
        let bias_segments: Vec<(String, usize)> = params
            .layout()
            .segments()
            .iter()
            .filter(|s| s.name.ends_with("_b") && !s.name.starts_with("dec_"))
            .map(|s| (s.name.clone(), s.len / 4))
            .collect();
        for (name, hidden) in bias_segments {
            let b = params.segment_mut(&name);
            for v in &mut b[hidden..2 * hidden] {
                *v = 1.0;
            }
        }

        RecurrentModel {
            vocab,
            embed_dim,
            word_hidden,
            sent_hidden,
            sent_layers,
            mlp_hidden,
            seed,
            params,
            frozen: BTreeSet::new(),
        }
    }

    fn lstm_weights(&self, prefix: &str) -> LstmWeights<'_> {
        let [w, u, b] = lstm_segment_names(prefix);
        LstmWeights {
            w: self.params.segment(&w),
            u: self.params.segment(&u),
            b: self.params.segment(&b),
        }
    }
}

impl AffinityModel for RecurrentModel {
    fn forward(&self, document: &Document) -> (AffinityVector, EncoderState) {
        let e = self.embed_dim;
        let wh = self.word_hidden;
        let sh = self.sent_hidden;
        let embed = self.params.segment("embed");
        let word_fw = self.lstm_weights("word_fwd");
        let word_bw = self.lstm_weights("word_bwd");

        let n = document.len();
        let mut token_ids = Vec::with_capacity(n);
        let mut word_inputs = Vec::with_capacity(n);
        let mut word_caches = Vec::with_capacity(n);
        let mut sent_features = Vec::with_capacity(n);

        for sentence in &document.sentences {
            let ids: Vec<usize> = sentence.tokens.iter().map(|t| self.vocab.id(t)).collect();
            let xs: Vec<Vec<f64>> = ids
                .iter()
                .map(|&id| embed[id * e..(id + 1) * e].to_vec())
                .collect();
            let (outs, cache) = bilstm_forward(word_fw, word_bw, wh, &xs);
            // sentence feature: hidden states averaged over words
            let mut feat = vec![0.0; 2 * wh];
            for out in &outs {
                for (f, v) in feat.iter_mut().zip(out) {
                    *f += v;
                }
            }
            let inv = 1.0 / outs.len() as f64;
            for f in &mut feat {
                *f *= inv;
            }
            token_ids.push(ids);
            word_inputs.push(xs);
            word_caches.push(cache);
            sent_features.push(feat);
        }

        let mut sent_layer_inputs = Vec::with_capacity(self.sent_layers);
        let mut sent_caches = Vec::with_capacity(self.sent_layers);
        let mut current = sent_features;
        for layer in 0..self.sent_layers {
            let fw = self.lstm_weights(&format!("sent{layer}_fwd"));
            let bw = self.lstm_weights(&format!("sent{layer}_bwd"));
            let (outs, cache) = bilstm_forward(fw, bw, sh, &current);
            sent_layer_inputs.push(current);
            sent_caches.push(cache);
            current = outs;
        }

        let dec_w1 = self.params.segment("dec_w1");
        let dec_b1 = self.params.segment("dec_b1");
        let dec_w2 = self.params.segment("dec_w2");
        let dec_b2 = self.params.segment("dec_b2")[0];
        let mut mlp_hidden_acts = Vec::with_capacity(n);
        let mut affinities = Vec::with_capacity(n);
        for rep in &current {
            let mut pre = dec_b1.to_vec();
            matvec_add(dec_w1, rep, &mut pre, self.mlp_hidden, 2 * sh);
            let hid: Vec<f64> = pre.iter().map(|z| z.tanh()).collect();
            let mut logit = dec_b2;
            for (w, v) in dec_w2.iter().zip(&hid) {
                logit += w * v;
            }
            affinities.push(sigmoid(logit));
            mlp_hidden_acts.push(hid);
        }
        // the toplevel layer outputs feed the decoder; keep them for backward
        sent_layer_inputs.push(current);

        (
            AffinityVector::new(affinities.clone()),
            EncoderState::Recurrent(RnnState {
                token_ids,
                word_inputs,
                word_caches,
                sent_layer_inputs,
                sent_caches,
                mlp_hidden_acts,
                affinities,
            }),
        )
    }

    fn backward(&self, state: &EncoderState, d_affinities: &[f64]) -> Result<GradVector> {
        let state = match state {
            EncoderState::Recurrent(s) => s,
            _ => return Err(Error::StateMismatch),
        };
        let n = state.affinities.len();
        if d_affinities.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "d_affinities has {} entries for {} sentences",
                d_affinities.len(),
                n
            )));
        }
        let e = self.embed_dim;
        let wh = self.word_hidden;
        let sh = self.sent_hidden;
        let mut grad = GradVector::zeros(self.params.layout().clone());

        // decoder
        let dec_w1 = self.params.segment("dec_w1");
        let dec_w2 = self.params.segment("dec_w2");
        let reps = &state.sent_layer_inputs[self.sent_layers];
        let mut d_reps = vec![vec![0.0; 2 * sh]; n];
        for s in 0..n {
            let da = d_affinities[s];
            if da == 0.0 {
                continue;
            }
            let a = state.affinities[s];
            let d_logit = da * a * (1.0 - a);
            let hid = &state.mlp_hidden_acts[s];
            for (gw, hv) in grad.segment_mut("dec_w2").iter_mut().zip(hid) {
                *gw += d_logit * hv;
            }
            grad.segment_mut("dec_b2")[0] += d_logit;
            let d_hid: Vec<f64> = dec_w2
                .iter()
                .zip(hid)
                .map(|(w, hv)| d_logit * w * (1.0 - hv * hv))
                .collect();
            outer_add(grad.segment_mut("dec_w1"), &d_hid, &reps[s]);
            for (gb, v) in grad.segment_mut("dec_b1").iter_mut().zip(&d_hid) {
                *gb += v;
            }
            matvec_t_add(dec_w1, &d_hid, &mut d_reps[s], self.mlp_hidden, 2 * sh);
        }

        // sentence-level stack, top down
        let mut d_out = d_reps;
        for layer in (0..self.sent_layers).rev() {
            let fw = self.lstm_weights(&format!("sent{layer}_fwd"));
            let bw = self.lstm_weights(&format!("sent{layer}_bwd"));
            let inputs = &state.sent_layer_inputs[layer];
            let grads = bilstm_backward(fw, bw, sh, inputs, &state.sent_caches[layer], &d_out);
            for (dir, g) in [("fwd", &grads.fwd), ("bwd", &grads.bwd)] {
                let [w, u, b] = lstm_segment_names(&format!("sent{layer}_{dir}"));
                add_into(grad.segment_mut(&w), &g.w);
                add_into(grad.segment_mut(&u), &g.u);
                add_into(grad.segment_mut(&b), &g.b);
            }
            d_out = grads.inputs;
        }

        // word level: the sentence feature is the mean of word outputs
        let word_fw = self.lstm_weights("word_fwd");
        let word_bw = self.lstm_weights("word_bwd");
        for (s, d_feat) in d_out.iter().enumerate() {
            let t_len = state.word_inputs[s].len();
            let inv = 1.0 / t_len as f64;
            let per_step: Vec<f64> = d_feat.iter().map(|v| v * inv).collect();
            let d_word_out: Vec<Vec<f64>> = (0..t_len).map(|_| per_step.clone()).collect();
            let grads = bilstm_backward(
                word_fw,
                word_bw,
                wh,
                &state.word_inputs[s],
                &state.word_caches[s],
                &d_word_out,
            );
            for (dir, g) in [("fwd", &grads.fwd), ("bwd", &grads.bwd)] {
                let [w, u, b] = lstm_segment_names(&format!("word_{dir}"));
                add_into(grad.segment_mut(&w), &g.w);
                add_into(grad.segment_mut(&u), &g.u);
                add_into(grad.segment_mut(&b), &g.b);
            }
            let g_embed = grad.segment_mut("embed");
            for (t, &id) in state.token_ids[s].iter().enumerate() {
                let row = &mut g_embed[id * e..(id + 1) * e];
                for (g, v) in row.iter_mut().zip(&grads.inputs[t]) {
                    *g += v;
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
        ModelSpec::Recurrent {
            embed_dim: self.embed_dim,
            word_hidden: self.word_hidden,
            sent_hidden: self.sent_hidden,
            sent_layers: self.sent_layers,
            mlp_hidden: self.mlp_hidden,
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

fn add_into(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
