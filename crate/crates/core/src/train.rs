//! Balanced negative sampling, the cross-entropy loss, Recall@k, the
//! training loop and the ablation suite.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{self, ModelConfig, ModelError, ModelParams, ModelRng};
use crate::relation::{self, CandidateRelation, IntervalBounds, RelationError, RelationMatrices};
use crate::tensor::{log_sigmoid, Adam, AdamConfig, Graph, Var};
use crate::trajectory::{Dataset, ExampleRef, TrajectorySequence};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss became {loss} at epoch {epoch}, step {step}")]
    Divergent { epoch: usize, step: usize, loss: f64 },
    #[error("dataset has no {0} examples")]
    NoExamples(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Negatives drawn per step by the balanced sampler.
    pub neg_samples: usize,
    /// When false every non-label candidate is a negative.
    pub balanced_sampler: bool,
    /// Examples whose gradients are summed before one optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub eval_k: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 50,
            adam: AdamConfig::default(),
            neg_samples: 10,
            balanced_sampler: true,
            batch_size: 1,
            seed: 0,
            eval_k: vec![5, 10],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_locations: usize) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.model.d == 0 || self.model.n == 0 {
            return bad(format!("d = {} and n = {} must be at least 1", self.model.d, self.model.n));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.model.dropout));
        }
        if num_locations < 2 {
            return bad(format!("need at least 2 locations, have {num_locations}"));
        }
        if self.balanced_sampler && (self.neg_samples == 0 || self.neg_samples > num_locations - 1) {
            return bad(format!(
                "neg_samples = {} must lie in [1, {}]",
                self.neg_samples,
                num_locations - 1
            ));
        }
        if self.eval_k.is_empty() || self.eval_k.contains(&0) {
            return bad("eval_k must list positive cutoffs".into());
        }
        Ok(())
    }
}

/// Ablation variants; `BS` is the balanced sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Stan,
    NoTim,
    NoSim,
    NoTimNoBs,
    NoSimNoBs,
    NoBs,
    NoAll,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Stan,
        Variant::NoTimNoBs,
        Variant::NoTim,
        Variant::NoSimNoBs,
        Variant::NoSim,
        Variant::NoBs,
        Variant::NoAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Stan => "STAN",
            Variant::NoTim => "-TIM",
            Variant::NoSim => "-SIM",
            Variant::NoTimNoBs => "-TIM-BS",
            Variant::NoSimNoBs => "-SIM-BS",
            Variant::NoBs => "-BS",
            Variant::NoAll => "-ALL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|v| v.name().chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>() == key)
    }

    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        let (tim, sim, bs) = match self {
            Variant::Stan => (true, true, true),
            Variant::NoTim => (false, true, true),
            Variant::NoSim => (true, false, true),
            Variant::NoTimNoBs => (false, true, false),
            Variant::NoSimNoBs => (true, false, false),
            Variant::NoBs => (true, true, false),
            Variant::NoAll => (false, false, false),
        };
        c.model.use_tim = tim;
        c.model.use_sim = sim;
        c.balanced_sampler = bs;
        c
    }
}

/// `s` distinct location ids drawn uniformly from `1..=num_locations`
/// excluding `label`.
pub fn balanced_sample<R: Rng + ?Sized>(
    num_locations: usize,
    label: u32,
    s: usize,
    rng: &mut R,
) -> Result<Vec<u32>, TrainError> {
    if num_locations == 0 || s > num_locations - 1 {
        return Err(TrainError::Config(format!(
            "cannot draw {s} negatives from {num_locations} locations"
        )));
    }
    Ok(rand::seq::index::sample(rng, num_locations - 1, s)
        .into_iter()
        .map(|i| skip_label(i as u32 + 1, label))
        .collect())
}

fn skip_label(id: u32, label: u32) -> u32 {
    if id >= label {
        id + 1
    } else {
        id
    }
}

/// Every id in `1..=num_locations` except `label`.
pub fn all_negatives(num_locations: usize, label: u32) -> Vec<u32> {
    (1..=num_locations as u32).filter(|&id| id != label).collect()
}

/// `-[ln σ(A[label]) + Σ ln(1 - σ(A[j]))]` over the given negatives.
pub fn loss_value(scores: &[f64], label: u32, negatives: &[u32]) -> f64 {
    let pos = log_sigmoid(scores[label as usize - 1]);
    let neg: f64 = negatives.iter().map(|&j| log_sigmoid(-scores[j as usize - 1])).sum();
    -(pos + neg)
}

/// Graph form of [`loss_value`] on an `L x 1` score node.
pub fn loss_graph(g: &mut Graph, scores: Var, label: u32, negatives: &[u32]) -> Var {
    let pos = g.gather_rows(scores, &[label as usize - 1]);
    let pos = g.log_sigmoid(pos);
    let mut total = g.sum(pos);
    if !negatives.is_empty() {
        let idx: Vec<usize> = negatives.iter().map(|&j| j as usize - 1).collect();
        let neg = g.gather_rows(scores, &idx);
        let flipped = g.neg(neg);
        let ls = g.log_sigmoid(flipped);
        let neg_sum = g.sum(ls);
        total = g.add(total, neg_sum);
    }
    g.neg(total)
}

/// 0-based rank of `label` in descending score order, ties broken by the
/// lower location id.
pub fn rank_of(scores: &[f64], label: u32) -> usize {
    let li = label as usize - 1;
    let target = scores[li];
    scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > target || (s == target && i < li))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAtK {
    pub k: usize,
    pub recall: f64,
}

pub fn recall_from_ranks(ranks: &[usize], ks: &[usize]) -> Vec<RecallAtK> {
    ks.iter()
        .map(|&k| RecallAtK {
            k,
            recall: if ranks.is_empty() {
                0.0
            } else {
                ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len() as f64
            },
        })
        .collect()
}

/// Relation inputs for one window; skipped when the config ignores them.
pub fn relation_inputs(
    config: &ModelConfig,
    locations: &[relation::Gps],
    seq: &TrajectorySequence,
) -> Result<(RelationMatrices, CandidateRelation), TrainError> {
    let n = seq.n();
    let any = config.use_tim || config.use_sim;
    let rel = if any {
        relation::trajectory_relation(seq)
    } else {
        RelationMatrices { n, valid_len: seq.valid_len, delta_t: Vec::new(), delta_s: Vec::new() }
    };
    let cand = if any && config.use_candidate_intervals {
        relation::candidate_relation(locations, seq, seq.label_time)?
    } else {
        CandidateRelation { candidates: locations.len(), n, valid_len: seq.valid_len, n_t: Vec::new(), n_s: Vec::new() }
    };
    Ok((rel, cand))
}

/// Scores for one materialized example in evaluation mode.
pub fn score_example(params: &ModelParams, config: &ModelConfig, locations: &[relation::Gps], seq: &TrajectorySequence) -> Result<Vec<f64>, TrainError> {
    let (rel, cand) = relation_inputs(config, locations, seq)?;
    Ok(model::forward(params, config, seq, &rel, &cand)?)
}

/// Rank of the label for every example, in order.
pub fn rank_examples(params: &ModelParams, config: &ModelConfig, dataset: &Dataset, examples: &[ExampleRef]) -> Result<Vec<usize>, TrainError> {
    examples
        .iter()
        .map(|&ex| {
            let seq = dataset.materialize(ex);
            let scores = score_example(params, config, dataset.locations(), &seq)?;
            Ok(rank_of(&scores, seq.label_location))
        })
        .collect()
}

pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    dataset: &Dataset,
    examples: &[ExampleRef],
    ks: &[usize],
) -> Result<Vec<RecallAtK>, TrainError> {
    let ranks = rank_examples(params, config, dataset, examples)?;
    Ok(recall_from_ranks(&ranks, ks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_recall: Vec<RecallAtK>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub config: TrainConfig,
    /// Test recall of the selected snapshot.
    pub recall: Vec<RecallAtK>,
    /// Validation recall of the selected snapshot.
    pub val_recall: Vec<RecallAtK>,
    pub best_epoch: usize,
    pub epochs: Vec<EpochSummary>,
    /// Score entries that receive a loss gradient per training step.
    pub score_gradients_per_step: f64,
    pub train_examples: usize,
    pub wall_clock_secs: f64,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.iter().find(|r| r.k == k).map(|r| r.recall)
    }

    pub fn train_loss(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

/// Independent random streams derived from the run seed.
pub(crate) struct Streams {
    pub init: ChaCha8Rng,
    pub shuffle: ChaCha8Rng,
    pub sampler: ChaCha8Rng,
    pub dropout: ModelRng,
}

impl Streams {
    pub(crate) fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self { init: stream(1), shuffle: stream(2), sampler: stream(3), dropout: stream(4) }
    }
}

/// Bounds for the interpolation embedding, taken from the training windows.
pub fn training_bounds(dataset: &Dataset, config: &ModelConfig) -> Result<Option<IntervalBounds>, TrainError> {
    match dataset.interval_bounds() {
        Ok(b) => Ok(Some(b)),
        Err(e) if config.interval_mode == model::IntervalMode::Interpolation && (config.use_tim || config.use_sim) => Err(e.into()),
        Err(_) => Ok(None),
    }
}

/// One optimization step's worth of work: forward, loss, backward.
/// Returns the loss and the number of scores that received a gradient.
pub(crate) fn example_gradients(
    params: &ModelParams,
    config: &TrainConfig,
    dataset: &Dataset,
    seq: &TrajectorySequence,
    streams: &mut Streams,
    grads: &mut [Vec<f64>],
) -> Result<(f64, usize), TrainError> {
    let (rel, cand) = relation_inputs(&config.model, dataset.locations(), seq)?;
    let mut g = Graph::new();
    let pv = params.register(&mut g);
    let dropout = if config.model.dropout > 0.0 { Some(&mut streams.dropout) } else { None };
    let scores = model::forward_graph(&mut g, &pv, &config.model, params.bounds, seq, &rel, &cand, dropout)?;
    let label = seq.label_location;
    let negatives = if config.balanced_sampler {
        balanced_sample(dataset.num_locations(), label, config.neg_samples, &mut streams.sampler)?
    } else {
        all_negatives(dataset.num_locations(), label)
    };
    let loss = loss_graph(&mut g, scores, label, &negatives);
    g.backward(loss).expect("loss is a scalar");
    for (acc, var) in grads.iter_mut().zip(pv.vars()) {
        if let Some(gv) = g.grad(var) {
            for (a, &x) in acc.iter_mut().zip(gv) {
                *a += x;
            }
        }
    }
    Ok((g.scalar(loss), negatives.len() + 1))
}

fn zero_padding_rows(grads: &mut [Vec<f64>], d: usize) {
    // user_emb and loc_emb are the first two slots; row 0 is padding
    for slot in &mut grads[..2] {
        slot[..d].fill(0.0);
    }
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(ModelParams, EvalReport), TrainError> {
    train_with(dataset, config, |_, _| {})
}

/// Train, calling `observer` with the current parameters after every epoch. The snapshot with the best
/// validation Recall@5 (or the first configured cutoff) is evaluated on test.
pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochSummary, &ModelParams),
) -> Result<(ModelParams, EvalReport), TrainError> {
    config.validate(dataset.num_locations())?;
    if config.model.n != dataset.n {
        return Err(TrainError::Config(format!(
            "model n = {} but dataset windows have n = {}",
            config.model.n, dataset.n
        )));
    }
    if dataset.train.is_empty() {
        return Err(TrainError::NoExamples("train"));
    }
    let bounds = training_bounds(dataset, &config.model)?;
    let mut streams = Streams::new(config.seed);
    let mut params = ModelParams::init(&config.model, dataset.num_users(), dataset.num_locations(), bounds, &mut streams.init);
    let mut adam = Adam::new(config.adam);
    let d = config.model.d;
    let select_k = if config.eval_k.contains(&5) { 5 } else { config.eval_k[0] };

    let mut order: Vec<ExampleRef> = dataset.train.clone();
    let mut grads: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams, Vec<RecallAtK>)> = None;
    let mut score_grads = 0usize;
    let mut steps = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut streams.shuffle);
        let mut loss_sum = 0.0;
        let mut pending = 0;
        for (step, &ex) in order.iter().enumerate() {
            let seq = dataset.materialize(ex);
            let (loss, count) = example_gradients(&params, config, dataset, &seq, &mut streams, &mut grads)?;
            if !loss.is_finite() {
                return Err(TrainError::Divergent { epoch, step, loss });
            }
            loss_sum += loss;
            score_grads += count;
            steps += 1;
            pending += 1;
            if pending == config.batch_size || step + 1 == order.len() {
                zero_padding_rows(&mut grads, d);
                adam.step(params.tensors_mut().into_iter().zip(grads.iter().map(Vec::as_slice)));
                for gv in &mut grads {
                    gv.fill(0.0);
                }
                pending = 0;
            }
        }
        let val_recall = if dataset.val.is_empty() {
            Vec::new()
        } else {
            evaluate(&params, &config.model, dataset, &dataset.val, &config.eval_k)?
        };
        let key = val_recall.iter().find(|r| r.k == select_k).map_or(0.0, |r| r.recall);
        if best.as_ref().is_none_or(|(b, ..)| key > *b) {
            best = Some((key, epoch, params.clone(), val_recall.clone()));
        }
        let summary = EpochSummary { epoch, mean_loss: loss_sum / order.len() as f64, val_recall };
        observer(&summary, &params);
        epochs.push(summary);
    }

    let (_, best_epoch, best_params, best_val) = best.expect("at least one epoch ran");
    let recall = evaluate(&best_params, &config.model, dataset, &dataset.test, &config.eval_k)?;
    let report = EvalReport {
        seed: config.seed,
        config: config.clone(),
        recall,
        val_recall: best_val,
        best_epoch,
        epochs,
        score_gradients_per_step: score_grads as f64 / steps.max(1) as f64,
        train_examples: dataset.train.len(),
        wall_clock_secs: 0.0,
    };
    Ok((best_params, report))
}

/// Train every variant on the same data from the same seed.
pub fn ablation_suite(
    dataset: &Dataset,
    base: &TrainConfig,
    variants: &[Variant],
) -> Result<Vec<(Variant, EvalReport)>, TrainError> {
    variants
        .iter()
        .map(|&v| train(dataset, &v.apply(base)).map(|(_, r)| (v, r)))
        .collect()
}
