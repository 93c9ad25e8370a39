//! REINFORCE training loop: per-document sampling, reward computation,
//! baseline subtraction, gradient estimation, and optimizer stepping.
//!
//! Each update handles one document: forward once, draw `B` index sequences,
//! score each against the reference, subtract the baseline, and ascend along
//! `(1/B) * sum_b grad log p(i_b | d) * (R(i_b) - baseline)`.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::harness::evaluate;
use crate::model::{adam_step, AdamConfig, AdamState, AffinityModel};
use crate::policy::{greedy_decode, log_prob_grad, sample, AffinityVector, PolicyConfig};
use crate::rouge;
use crate::text::CorpusExample;

/// Which quantity is subtracted from sampled rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// No baseline; raw rewards.
    None,
    /// Reward of the current model's greedy decode (self-critical).
    GreedySelfCritical,
    /// Mean of the current document's sampled rewards.
    BatchAverage,
    /// Running mean over every sampled reward seen so far.
    GlobalAverage,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BaselineKind::None => "none",
            BaselineKind::GreedySelfCritical => "greedy_self_critical",
            BaselineKind::BatchAverage => "batch_average",
            BaselineKind::GlobalAverage => "global_average",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(BaselineKind::None),
            "greedy_self_critical" => Ok(BaselineKind::GreedySelfCritical),
            "batch_average" => Ok(BaselineKind::BatchAverage),
            "global_average" => Ok(BaselineKind::GlobalAverage),
            other => Err(Error::Config(format!("unknown baseline kind {other}"))),
        }
    }
}

/// Running statistics backing the global-average baseline.
#[derive(Debug, Clone)]
pub struct BaselineState {
    pub kind: BaselineKind,
    pub running_mean: f64,
    pub running_count: u64,
}

impl BaselineState {
    pub fn new(kind: BaselineKind) -> Self {
        BaselineState {
            kind,
            running_mean: 0.0,
            running_count: 0,
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Index sequences sampled per document to estimate the gradient.
    pub b: usize,
    /// Sentences per summary.
    pub m: usize,
    /// Exploration probability during training.
    pub epsilon: f64,
    pub affinity_floor: f64,
    pub baseline: BaselineKind,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Documents between validation passes.
    pub validation_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            b: 20,
            m: 3,
            epsilon: 0.1,
            affinity_floor: 1e-6,
            baseline: BaselineKind::GreedySelfCritical,
            epochs: 2,
            seed: 0,
            adam: AdamConfig::default(),
            validation_interval: 100,
        }
    }
}

impl TrainConfig {
    pub fn policy(&self) -> PolicyConfig {
        PolicyConfig {
            m: self.m,
            epsilon: self.epsilon,
            affinity_floor: self.affinity_floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 1 {
            return Err(Error::Invalid("B must be at least 1".into()));
        }
        if self.validation_interval < 1 {
            return Err(Error::Invalid(
                "validation_interval must be at least 1".into(),
            ));
        }
        self.policy().validate()
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMetrics {
    pub documents_seen: usize,
    /// Mean sampled reward since the previous row: the running estimate of
    /// the expected-reward objective.
    pub mean_sample_reward: f64,
    /// Mean greedy-decode reward since the previous row.
    pub greedy_reward: f64,
    /// Mean ROUGE-1/2/L F1 of greedy decoding on the validation corpus.
    pub validation_mean_rouge_f1: f64,
    pub wall_clock: f64,
}

/// Per-step rewards returned by [`train_step`].
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub mean_sample_reward: f64,
    pub greedy_reward: f64,
}

/// Computes the baseline for one update.
///
/// The global average is used before it is updated, so the current batch
/// never sees its own contribution.
pub fn compute_baseline(
    state: &mut BaselineState,
    affinities: &AffinityVector,
    example: &CorpusExample,
    rewards: &[f64],
    pcfg: &PolicyConfig,
) -> Result<f64> {
    let value = match state.kind {
        BaselineKind::None => 0.0,
        BaselineKind::GreedySelfCritical => {
            let greedy = greedy_decode(affinities, pcfg);
            rouge::reward(&greedy, &example.document, &example.reference)?.reward
        }
        BaselineKind::BatchAverage => {
            rewards.iter().sum::<f64>() / rewards.len().max(1) as f64
        }
        BaselineKind::GlobalAverage => {
            if state.running_count == 0 {
                0.0
            } else {
                state.running_mean
            }
        }
    };
    let total = state.running_mean * state.running_count as f64
        + rewards.iter().sum::<f64>();
    state.running_count += rewards.len() as u64;
    if state.running_count > 0 {
        state.running_mean = total / state.running_count as f64;
    }
    Ok(value)
}

/// One REINFORCE update on a single document.
pub fn train_step<M, R>(
    model: &mut M,
    example: &CorpusExample,
    cfg: &TrainConfig,
    baseline: &mut BaselineState,
    adam: &mut AdamState,
    rng: &mut R,
) -> Result<StepOutcome>
where
    M: AffinityModel + ?Sized,
    R: Rng + ?Sized,
{
    let pcfg = cfg.policy();
    let (affinities, state) = model.forward(&example.document);

    let mut sequences = Vec::with_capacity(cfg.b);
    let mut rewards = Vec::with_capacity(cfg.b);
    for _ in 0..cfg.b {
        let seq = sample(&affinities, &pcfg, rng);
        let r = rouge::reward(&seq, &example.document, &example.reference)?.reward;
        sequences.push(seq);
        rewards.push(r);
    }

    let baseline_value = compute_baseline(baseline, &affinities, example, &rewards, &pcfg)?;
    let greedy_reward = if baseline.kind == BaselineKind::GreedySelfCritical {
        baseline_value
    } else {
        let greedy = greedy_decode(&affinities, &pcfg);
        rouge::reward(&greedy, &example.document, &example.reference)?.reward
    };

    let n = affinities.len();
    let mut d_affinities = vec![0.0; n];
    let inv_b = 1.0 / cfg.b as f64;
    for (seq, &r) in sequences.iter().zip(&rewards) {
        let advantage = r - baseline_value;
        if advantage == 0.0 {
            continue;
        }
        let g = log_prob_grad(seq, &affinities, &pcfg)?;
        for (d, gv) in d_affinities.iter_mut().zip(&g) {
            *d += gv * advantage * inv_b;
        }
    }

    let grad = model.backward(&state, &d_affinities)?;
    adam_step(model.params_mut(), &grad, adam)?;

    Ok(StepOutcome {
        mean_sample_reward: rewards.iter().sum::<f64>() / cfg.b as f64,
        greedy_reward,
    })
}

/// Full training run; returns the validation curve.
pub fn train<M>(
    model: &mut M,
    corpus: &[CorpusExample],
    validation: &[CorpusExample],
    cfg: &TrainConfig,
) -> Result<Vec<TrainingMetrics>>
where
    M: AffinityModel + ?Sized,
{
    train_with_hook(model, corpus, validation, cfg, |_, _| Ok(()))
}

/// Like [`train`], invoking `hook` after every validation row is appended
/// (used for checkpointing).
pub fn train_with_hook<M, F>(
    model: &mut M,
    corpus: &[CorpusExample],
    validation: &[CorpusExample],
    cfg: &TrainConfig,
    mut hook: F,
) -> Result<Vec<TrainingMetrics>>
where
    M: AffinityModel + ?Sized,
    F: FnMut(&TrainingMetrics, &M) -> Result<()>,
{
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Invalid("training corpus is empty".into()));
    }
    if validation.is_empty() {
        return Err(Error::Invalid("validation corpus is empty".into()));
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params().len(), cfg.adam);
    let mut baseline = BaselineState::new(cfg.baseline);

    let mut metrics = Vec::new();
    let mut documents_seen = 0usize;
    let mut interval_sample_sum = 0.0;
    let mut interval_greedy_sum = 0.0;
    let mut interval_docs = 0usize;

    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng);
        for &idx in &order {
            let outcome =
                train_step(model, &corpus[idx], cfg, &mut baseline, &mut adam, &mut rng)?;
            documents_seen += 1;
            interval_docs += 1;
            interval_sample_sum += outcome.mean_sample_reward;
            interval_greedy_sum += outcome.greedy_reward;

            if documents_seen % cfg.validation_interval == 0 {
                let row = validation_row(
                    model,
                    validation,
                    cfg,
                    documents_seen,
                    interval_sample_sum / interval_docs as f64,
                    interval_greedy_sum / interval_docs as f64,
                    start,
                )?;
                hook(&row, model)?;
                metrics.push(row);
                interval_docs = 0;
                interval_sample_sum = 0.0;
                interval_greedy_sum = 0.0;
            }
        }
    }

    // trailing row so short runs still report a final validation point
    if interval_docs > 0 {
        let row = validation_row(
            model,
            validation,
            cfg,
            documents_seen,
            interval_sample_sum / interval_docs as f64,
            interval_greedy_sum / interval_docs as f64,
            start,
        )?;
        hook(&row, model)?;
        metrics.push(row);
    }
    Ok(metrics)
}

fn validation_row<M>(
    model: &M,
    validation: &[CorpusExample],
    cfg: &TrainConfig,
    documents_seen: usize,
    mean_sample_reward: f64,
    greedy_reward: f64,
    start: Instant,
) -> Result<TrainingMetrics>
where
    M: AffinityModel + ?Sized,
{
    let report = evaluate(model, validation, cfg.m)?;
    Ok(TrainingMetrics {
        documents_seen,
        mean_sample_reward,
        greedy_reward,
        validation_mean_rouge_f1: report.mean_reward,
        wall_clock: start.elapsed().as_secs_f64(),
    })
}

/// Writes the learning curve as CSV.
///
/// The wall-clock column is zeroed unless `include_timing` is set, so that
/// repeated seeded runs produce byte-identical files.
pub fn write_metrics_csv(
    path: impl AsRef<Path>,
    rows: &[TrainingMetrics],
    include_timing: bool,
) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "documents_seen,mean_sample_reward,greedy_reward,validation_mean_rouge_f1,wall_clock"
    )?;
    for row in rows {
        let wall = if include_timing { row.wall_clock } else { 0.0 };
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.3}",
            row.documents_seen,
            row.mean_sample_reward,
            row.greedy_reward,
            row.validation_mean_rouge_f1,
            wall
        )?;
    }
    w.flush()?;
    Ok(())
}
