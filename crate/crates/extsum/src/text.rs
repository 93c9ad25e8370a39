//! Document and corpus data model: tokenization, JSONL corpus ingestion,
//! and synthetic corpus generation for desk-scale experiments.
//!
//! The corpus interchange format is JSONL, one object per line:
//! `{"id": string, "sentences": [string], "abstract": [string]}`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
///
/// Empty input yields an empty list; the split is deterministic and idempotent
/// (re-tokenizing the joined tokens returns the same tokens).
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// A tokenized sentence paired with its original surface form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub original: String,
}

impl Sentence {
    /// Tokenizes `original`. Returns `None` when no token survives.
    pub fn new(original: &str) -> Option<Self> {
        let tokens = tokenize(original);
        if tokens.is_empty() {
            None
        } else {
            Some(Sentence {
                tokens,
                original: original.to_string(),
            })
        }
    }
}

/// A document: the bandit context. Sentences are non-empty and each
/// sentence carries at least one token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub raw_text: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>) -> Result<Self> {
        let id = id.into();
        if sentences.is_empty() {
            return Err(Error::EmptyDocument(id));
        }
        Ok(Document {
            id,
            sentences,
            raw_text: None,
        })
    }

    /// Number of sentences.
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// The gold-standard abstractive summary paired with a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSummary {
    pub sentences: Vec<Sentence>,
}

impl ReferenceSummary {
    pub fn new(sentences: Vec<Sentence>) -> Option<Self> {
        if sentences.is_empty() {
            None
        } else {
            Some(ReferenceSummary { sentences })
        }
    }

    /// All reference tokens concatenated in sentence order.
    pub fn tokens(&self) -> Vec<String> {
        self.sentences
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect()
    }
}

/// One training or evaluation example: a document and its reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusExample {
    pub document: Document,
    pub reference: ReferenceSummary,
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    id: String,
    sentences: Vec<String>,
    #[serde(rename = "abstract")]
    summary: Vec<String>,
}

fn example_from_line(line: CorpusLine) -> Result<CorpusExample> {
    if line.sentences.is_empty() {
        return Err(Error::EmptyDocument(line.id));
    }
    if line.summary.is_empty() {
        return Err(Error::EmptyReference(line.id));
    }
    let mut sentences = Vec::with_capacity(line.sentences.len());
    for (index, original) in line.sentences.iter().enumerate() {
        match Sentence::new(original) {
            Some(s) => sentences.push(s),
            None => {
                return Err(Error::EmptySentence {
                    id: line.id,
                    index,
                })
            }
        }
    }
    let mut reference = Vec::with_capacity(line.summary.len());
    for (index, original) in line.summary.iter().enumerate() {
        match Sentence::new(original) {
            Some(s) => reference.push(s),
            None => {
                return Err(Error::EmptySentence {
                    id: line.id,
                    index,
                })
            }
        }
    }
    Ok(CorpusExample {
        document: Document::new(line.id, sentences)?,
        reference: ReferenceSummary { sentences: reference },
    })
}

/// Loads a JSONL corpus. Line order is preserved; ids must be unique.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusExample>> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        if !seen.insert(parsed.id.clone()) {
            return Err(Error::DuplicateId(parsed.id));
        }
        examples.push(example_from_line(parsed)?);
    }
    Ok(examples)
}

/// Writes a corpus back to JSONL using the original sentence strings.
pub fn save_corpus(path: impl AsRef<Path>, examples: &[CorpusExample]) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    for ex in examples {
        let line = CorpusLine {
            id: ex.document.id.clone(),
            sentences: ex
                .document
                .sentences
                .iter()
                .map(|s| s.original.clone())
                .collect(),
            summary: ex
                .reference
                .sentences
                .iter()
                .map(|s| s.original.clone())
                .collect(),
        };
        serde_json::to_writer(&mut writer, &line)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Generates a corpus of documents with known-optimal summaries.
///
/// Every document has `n_sentences` sentences and the reference equals the
/// concatenation of the sentences at `planted_positions`. The vocabulary is
/// partitioned into one contiguous slice per sentence position and each
/// sentence draws only from its position's slice, so sentence content
/// identifies sentence position and the planted selection is learnable by a
/// content-only model. Sentences at different positions share no tokens.
///
/// Deterministic given `seed`.
pub fn generate_synthetic_corpus(
    n_docs: usize,
    n_sentences: usize,
    planted_positions: &[usize],
    vocab_size: usize,
    seed: u64,
) -> Result<Vec<CorpusExample>> {
    if n_sentences == 0 {
        return Err(Error::Invalid("n_sentences must be at least 1".into()));
    }
    if planted_positions.is_empty() {
        return Err(Error::Invalid(
            "at least one planted position is required".into(),
        ));
    }
    for &p in planted_positions {
        if p >= n_sentences {
            return Err(Error::PlantedOutOfRange {
                position: p,
                n_sentences,
            });
        }
    }
    if vocab_size < n_sentences {
        return Err(Error::Invalid(format!(
            "vocab_size {vocab_size} must be at least n_sentences {n_sentences}"
        )));
    }

    let words: Vec<String> = (0..vocab_size).map(|i| format!("w{i:05}")).collect();
    let slice_for = |position: usize| -> &[String] {
        let lo = position * vocab_size / n_sentences;
        let hi = (position + 1) * vocab_size / n_sentences;
        &words[lo..hi]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let mut sentences = Vec::with_capacity(n_sentences);
        for p in 0..n_sentences {
            let slice = slice_for(p);
            let len = rng.gen_range(4..=8);
            let tokens: Vec<String> = (0..len)
                .map(|_| slice[rng.gen_range(0..slice.len())].clone())
                .collect();
            let original = format!("{}.", tokens.join(" "));
            sentences.push(Sentence { tokens, original });
        }
        let reference = ReferenceSummary {
            sentences: planted_positions
                .iter()
                .map(|&p| sentences[p].clone())
                .collect(),
        };
        let document = Document::new(format!("synth-{d:05}"), sentences)?;
        examples.push(CorpusExample {
            document,
            reference,
        });
    }
    Ok(examples)
}
