//! Trainable affinity networks: document in, per-sentence affinities out,
//! with exact hand-written backward passes, plus the Adam optimizer and
//! checkpointing.

pub mod adam;
mod bow;
mod checkpoint;
mod lstm;
pub mod param;
mod rnn;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use bow::{BagOfWordsModel, BowState};
pub use checkpoint::{load_model, save_model};
pub use param::{GradVector, Layout, LayoutBuilder, ParamVector, Segment};
pub use rnn::{RecurrentModel, RnnState};

use crate::error::{Error, Result};
use crate::policy::AffinityVector;
use crate::text::{CorpusExample, Document};

/// Reserved id-0 token used for words outside the vocabulary.
pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Token-to-id table with a reserved unknown token at id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from explicit words; the unknown token is
    /// prepended automatically.
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Vocab {
        let mut all = vec![UNKNOWN_TOKEN.to_string()];
        all.extend(words);
        let index = all
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words: all, index }
    }

    /// Builds a vocabulary of at most `max_size` entries (including the
    /// unknown token) from document tokens, most frequent first; ties break
    /// alphabetically for determinism.
    pub fn from_corpus(examples: &[CorpusExample], max_size: usize) -> Vocab {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for ex in examples {
            for s in &ex.document.sentences {
                for t in &s.tokens {
                    *counts.entry(t).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(max_size.saturating_sub(1));
        Vocab::from_words(ranked.into_iter().map(|(w, _)| w.to_string()))
    }

    /// The id for a token, falling back to the unknown id 0.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    /// The id for a token only if it is actually in the vocabulary.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Table size, including the unknown token.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Builder configuration of a model, stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    BagOfWords {
        embed_dim: usize,
        hidden_dim: usize,
        seed: u64,
    },
    Recurrent {
        embed_dim: usize,
        word_hidden: usize,
        sent_hidden: usize,
        sent_layers: usize,
        mlp_hidden: usize,
        seed: u64,
    },
}

/// Cached activations from a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub enum EncoderState {
    BagOfWords(BowState),
    Recurrent(RnnState),
}

impl EncoderState {
    /// Number of sentences the forward pass saw.
    pub fn n_sentences(&self) -> usize {
        match self {
            EncoderState::BagOfWords(s) => s.affinities.len(),
            EncoderState::Recurrent(s) => s.affinities.len(),
        }
    }
}

/// A trainable document-to-affinities network with an exact backward pass.
pub trait AffinityModel {
    /// Computes per-sentence affinities in (0, 1) and caches everything the
    /// backward pass needs. Unknown tokens map to the reserved embedding.
    fn forward(&self, document: &Document) -> (AffinityVector, EncoderState);

    /// Gradient of `sum_t d_affinities[t] * affinity_t` with respect to all
    /// parameters. Frozen segments receive zero gradient.
    fn backward(&self, state: &EncoderState, d_affinities: &[f64]) -> Result<GradVector>;

    fn params(&self) -> &ParamVector;

    fn params_mut(&mut self) -> &mut ParamVector;

    fn vocab(&self) -> &Vocab;

    fn embed_dim(&self) -> usize;

    fn spec(&self) -> ModelSpec;

    fn frozen_segments(&self) -> Vec<String>;

    /// Marks a parameter segment as non-trainable.
    fn set_frozen(&mut self, segment: &str, frozen: bool);
}

/// Overwrites embedding rows from a text file of `word v1 .. vD` lines.
///
/// Words absent from the model vocabulary are skipped; returns the number of
/// rows written.
pub fn load_embeddings(model: &mut dyn AffinityModel, path: impl AsRef<Path>) -> Result<usize> {
    let embed_dim = model.embed_dim();
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut loaded = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().ok_or_else(|| Error::EmbeddingFile {
            line: lineno + 1,
            message: "missing word".into(),
        })?;
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|e| Error::EmbeddingFile {
                    line: lineno + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != embed_dim {
            return Err(Error::EmbeddingFile {
                line: lineno + 1,
                message: format!(
                    "expected {embed_dim} values, found {}",
                    values.len()
                ),
            });
        }
        if let Some(id) = model.vocab().lookup(word) {
            let embed = model.params_mut().segment_mut("embed");
            embed[id * embed_dim..(id + 1) * embed_dim].copy_from_slice(&values);
            loaded += 1;
        }
    }
    Ok(loaded)
}

/// y += A x for a row-major `rows x cols` matrix.
pub(crate) fn matvec_add(a: &[f64], x: &[f64], y: &mut [f64], rows: usize, cols: usize) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(y.len(), rows);
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (w, v) in row.iter().zip(x) {
            acc += w * v;
        }
        y[r] += acc;
    }
}

/// y += A^T x for a row-major `rows x cols` matrix.
pub(crate) fn matvec_t_add(a: &[f64], x: &[f64], y: &mut [f64], rows: usize, cols: usize) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), rows);
    debug_assert_eq!(y.len(), cols);
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        let xv = x[r];
        for (w, yv) in row.iter().zip(y.iter_mut()) {
            *yv += w * xv;
        }
    }
}

/// A += x y^T for a row-major matrix.
pub(crate) fn outer_add(a: &mut [f64], x: &[f64], y: &[f64]) {
    debug_assert_eq!(a.len(), x.len() * y.len());
    for (r, xv) in x.iter().enumerate() {
        let row = &mut a[r * y.len()..(r + 1) * y.len()];
        for (w, yv) in row.iter_mut().zip(y) {
            *w += xv * yv;
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    // Clamp keeps the output strictly inside (0, 1) in f64.
    let z = z.clamp(-30.0, 30.0);
    1.0 / (1.0 + (-z).exp())
}

/// Fills `values` uniformly from [-0.1, 0.1].
pub(crate) fn init_uniform(values: &mut [f64], rng: &mut impl rand::Rng) {
    for v in values {
        *v = rng.gen_range(-0.1..0.1);
    }
}
