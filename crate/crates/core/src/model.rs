//! The bi-layer spatiotemporal attention network.
//!
//! A window of check-ins is embedded as user + location + hour-of-week
//! vectors. A self-attention layer, biased by the pairwise time and distance
//! intervals of the window, aggregates the check-ins into updated
//! representations. A matching layer then scores every candidate location
//! against each updated check-in, normalizes over candidates per position,
//! and sums over positions so that repeated visits accumulate.

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::relation::{hour_of_week, CandidateRelation, IntervalBounds, RelationError, RelationMatrices, HOURS_PER_WEEK};
use crate::tensor::{Graph, Tensor, Var};
use crate::trajectory::TrajectorySequence;

pub type ModelRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalMode {
    /// Interval times a learned per-unit vector.
    Unit,
    /// Linear blend of learned vectors anchored at the interval bounds.
    Interpolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Softmax over all `n` columns, then multiply by the validity mask.
    Paper,
    /// Masked logits set to `-inf` before the softmax.
    Presoftmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub n: usize,
    pub interval_mode: IntervalMode,
    pub mask_mode: MaskMode,
    /// Temporal intervals contribute to the attention biases.
    pub use_tim: bool,
    /// Spatial intervals contribute to the attention biases.
    pub use_sim: bool,
    /// The matching layer receives the candidate interval bias.
    pub use_candidate_intervals: bool,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 50,
            n: 100,
            interval_mode: IntervalMode::Interpolation,
            mask_mode: MaskMode::Paper,
            use_tim: true,
            use_sim: true,
            use_candidate_intervals: true,
            dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{kind} id {id} out of range (vocabulary size {size})")]
    IdOutOfRange { kind: &'static str, id: u32, size: usize },
    #[error("matching needs at least one valid check-in")]
    EmptyTrajectory,
    #[error("interpolation mode needs interval bounds")]
    MissingBounds,
    #[error("window length {got} does not match model n = {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ParamShape { name: &'static str, expected: Vec<usize>, found: Vec<usize> },
    #[error("missing parameter {0}")]
    MissingParam(&'static str),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

pub const PARAM_NAMES: [&str; 16] = [
    "user_emb", "loc_emb", "time_emb", "unit_t", "unit_s", "sup_t", "inf_t", "sup_s", "inf_s", "w_query", "w_key",
    "w_value", "reduce_t", "reduce_s", "reduce_nt", "reduce_ns",
];

/// Name of the non-trainable array holding the interval bounds in checkpoints.
pub const BOUNDS_NAME: &str = "interval_bounds";

/// All learnable arrays. Row 0 of the user and location tables is padding
/// and stays zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub user_emb: Tensor,
    pub loc_emb: Tensor,
    pub time_emb: Tensor,
    pub unit_t: Tensor,
    pub unit_s: Tensor,
    pub sup_t: Tensor,
    pub inf_t: Tensor,
    pub sup_s: Tensor,
    pub inf_s: Tensor,
    pub w_query: Tensor,
    pub w_key: Tensor,
    pub w_value: Tensor,
    pub reduce_t: Tensor,
    pub reduce_s: Tensor,
    pub reduce_nt: Tensor,
    pub reduce_ns: Tensor,
    pub bounds: Option<IntervalBounds>,
}

impl ModelParams {
    /// All-zero parameters for `num_users` users and `num_locations` locations.
    pub fn zeros(d: usize, num_users: usize, num_locations: usize) -> Self {
        let v = || Tensor::zeros(&[d]);
        Self {
            user_emb: Tensor::zeros(&[num_users + 1, d]),
            loc_emb: Tensor::zeros(&[num_locations + 1, d]),
            time_emb: Tensor::zeros(&[HOURS_PER_WEEK, d]),
            unit_t: v(),
            unit_s: v(),
            sup_t: v(),
            inf_t: v(),
            sup_s: v(),
            inf_s: v(),
            w_query: Tensor::zeros(&[d, d]),
            w_key: Tensor::zeros(&[d, d]),
            w_value: Tensor::zeros(&[d, d]),
            reduce_t: v(),
            reduce_s: v(),
            reduce_nt: v(),
            reduce_ns: v(),
            bounds: None,
        }
    }

    /// Uniform `[-1/sqrt(d), 1/sqrt(d)]` for embeddings, projections and the
    /// interval vectors; reduction vectors start at zero so the initial model
    /// ignores intervals.
    pub fn init<R: Rng + ?Sized>(
        config: &ModelConfig,
        num_users: usize,
        num_locations: usize,
        bounds: Option<IntervalBounds>,
        rng: &mut R,
    ) -> Self {
        let d = config.d;
        let scale = 1.0 / sqrt(d as f64);
        let mut p = Self::zeros(d, num_users, num_locations);
        p.bounds = bounds;
        let mut fill = |t: &mut Tensor| {
            for x in t.data_mut() {
                *x = rng.gen_range(-scale..=scale);
            }
        };
        fill(&mut p.user_emb);
        fill(&mut p.loc_emb);
        fill(&mut p.time_emb);
        fill(&mut p.unit_t);
        fill(&mut p.unit_s);
        fill(&mut p.sup_t);
        fill(&mut p.inf_t);
        fill(&mut p.sup_s);
        fill(&mut p.inf_s);
        fill(&mut p.w_query);
        fill(&mut p.w_key);
        fill(&mut p.w_value);
        p.user_emb.row_mut(0).fill(0.0);
        p.loc_emb.row_mut(0).fill(0.0);
        p
    }

    pub fn d(&self) -> usize {
        self.w_query.dims2().0
    }

    pub fn num_users(&self) -> usize {
        self.user_emb.dims2().0 - 1
    }

    pub fn num_locations(&self) -> usize {
        self.loc_emb.dims2().0 - 1
    }

    pub fn tensors(&self) -> [&Tensor; 16] {
        [
            &self.user_emb,
            &self.loc_emb,
            &self.time_emb,
            &self.unit_t,
            &self.unit_s,
            &self.sup_t,
            &self.inf_t,
            &self.sup_s,
            &self.inf_s,
            &self.w_query,
            &self.w_key,
            &self.w_value,
            &self.reduce_t,
            &self.reduce_s,
            &self.reduce_nt,
            &self.reduce_ns,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.user_emb,
            &mut self.loc_emb,
            &mut self.time_emb,
            &mut self.unit_t,
            &mut self.unit_s,
            &mut self.sup_t,
            &mut self.inf_t,
            &mut self.sup_s,
            &mut self.inf_s,
            &mut self.w_query,
            &mut self.w_key,
            &mut self.w_value,
            &mut self.reduce_t,
            &mut self.reduce_s,
            &mut self.reduce_nt,
            &mut self.reduce_ns,
        ]
    }

    /// Named arrays for checkpointing, bounds last when present.
    pub fn named_arrays(&self) -> Vec<(&'static str, Tensor)> {
        let mut out: Vec<_> = PARAM_NAMES.iter().copied().zip(self.tensors().into_iter().cloned()).collect();
        if let Some(b) = self.bounds {
            out.push((BOUNDS_NAME, Tensor::vector(vec![b.t_min, b.t_max, b.s_min, b.s_max])));
        }
        out
    }

    /// Rebuild from named arrays; shapes are checked against the user and
    /// location tables found.
    pub fn from_named_arrays<'a, I>(arrays: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a str, &'a Tensor)>,
    {
        let arrays: Vec<_> = arrays.into_iter().collect();
        let find = |name: &'static str| {
            arrays
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| (*t).clone())
                .ok_or(ModelError::MissingParam(name))
        };
        let user_emb = find("user_emb")?;
        let loc_emb = find("loc_emb")?;
        let (users, d) = user_emb.dims2();
        let (locs, _) = loc_emb.dims2();
        let mut p = Self::zeros(d, users.saturating_sub(1), locs.saturating_sub(1));
        for (name, slot) in PARAM_NAMES.iter().zip(p.tensors_mut()) {
            let t = find(name)?;
            if t.shape() != slot.shape() {
                return Err(ModelError::ParamShape {
                    name,
                    expected: slot.shape().to_vec(),
                    found: t.shape().to_vec(),
                });
            }
            *slot = t;
        }
        if let Some((_, b)) = arrays.iter().find(|(n, _)| *n == BOUNDS_NAME) {
            let v = b.data();
            if v.len() != 4 {
                return Err(ModelError::ParamShape {
                    name: BOUNDS_NAME,
                    expected: vec![4],
                    found: b.shape().to_vec(),
                });
            }
            p.bounds = Some(IntervalBounds {
                t_min: v[0],
                t_max: v[1],
                s_min: v[2],
                s_max: v[3],
            });
        }
        Ok(p)
    }

    pub fn register(&self, g: &mut Graph) -> ParamVars {
        ParamVars {
            user_emb: g.param(&self.user_emb),
            loc_emb: g.param(&self.loc_emb),
            time_emb: g.param(&self.time_emb),
            unit_t: g.param(&self.unit_t),
            unit_s: g.param(&self.unit_s),
            sup_t: g.param(&self.sup_t),
            inf_t: g.param(&self.inf_t),
            sup_s: g.param(&self.sup_s),
            inf_s: g.param(&self.inf_s),
            w_query: g.param(&self.w_query),
            w_key: g.param(&self.w_key),
            w_value: g.param(&self.w_value),
            reduce_t: g.param(&self.reduce_t),
            reduce_s: g.param(&self.reduce_s),
            reduce_nt: g.param(&self.reduce_nt),
            reduce_ns: g.param(&self.reduce_ns),
        }
    }
}

/// Parameters registered as leaves on one graph.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub user_emb: Var,
    pub loc_emb: Var,
    pub time_emb: Var,
    pub unit_t: Var,
    pub unit_s: Var,
    pub sup_t: Var,
    pub inf_t: Var,
    pub sup_s: Var,
    pub inf_s: Var,
    pub w_query: Var,
    pub w_key: Var,
    pub w_value: Var,
    pub reduce_t: Var,
    pub reduce_s: Var,
    pub reduce_nt: Var,
    pub reduce_ns: Var,
}

impl ParamVars {
    pub fn vars(&self) -> [Var; 16] {
        [
            self.user_emb,
            self.loc_emb,
            self.time_emb,
            self.unit_t,
            self.unit_s,
            self.sup_t,
            self.inf_t,
            self.sup_s,
            self.inf_s,
            self.w_query,
            self.w_key,
            self.w_value,
            self.reduce_t,
            self.reduce_s,
            self.reduce_nt,
            self.reduce_ns,
        ]
    }
}

/// Which reduction vectors an interval matrix uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalSource {
    /// The trajectory matrix feeding self-attention.
    Trajectory,
    /// The candidate matrix feeding the matching layer.
    Candidate,
}

/// Training-time randomness. `None` everywhere means evaluation mode.
pub type Dropout<'a> = Option<&'a mut ModelRng>;

fn check_id(kind: &'static str, id: u32, size: usize) -> Result<usize, ModelError> {
    if id == 0 || id as usize > size {
        Err(ModelError::IdOutOfRange { kind, id, size })
    } else {
        Ok(id as usize)
    }
}

/// `E(u)`: one row per window slot, zero rows for padding.
pub fn embed_trajectory(g: &mut Graph, pv: &ParamVars, seq: &TrajectorySequence) -> Result<Var, ModelError> {
    let n = seq.n();
    let d = g.shape(pv.w_query).0;
    let v = seq.valid_len;
    if v == 0 {
        return Ok(g.constant_matrix(n, d, vec![0.0; n * d]));
    }
    let users = g.shape(pv.user_emb).0 - 1;
    let locs = g.shape(pv.loc_emb).0 - 1;
    let user = check_id("user", seq.user_id, users)?;
    let mut loc_idx = Vec::with_capacity(v);
    let mut slot_idx = Vec::with_capacity(v);
    for c in seq.valid() {
        loc_idx.push(check_id("location", c.location_id, locs)?);
        slot_idx.push(hour_of_week(c.timestamp));
    }
    let loc = g.gather_rows(pv.loc_emb, &loc_idx);
    let time = g.gather_rows(pv.time_emb, &slot_idx);
    let user = g.gather_rows(pv.user_emb, &[user]);
    let sum = g.add(loc, time);
    let sum = g.add_row(sum, user);
    Ok(g.pad_rows(sum, n))
}

fn inner(g: &mut Graph, a: Var, b: Var) -> Var {
    let bt = g.transpose(b);
    g.matmul(a, bt)
}

/// Interpolation weights of the lower-bound (`sup`) and upper-bound (`inf`)
/// vectors for one interval value. Values are clamped into the bounds; equal
/// bounds select the `sup` vector.
pub fn interpolation_weights(value: f64, lower: f64, upper: f64) -> (f64, f64) {
    if upper <= lower {
        return (1.0, 0.0);
    }
    let x = value.clamp(lower, upper);
    let span = upper - lower;
    ((upper - x) / span, (x - lower) / span)
}

/// Per-entry interval embedding vectors (`values.len() x d`, row-major),
/// before the reduction over `d`.
pub fn interval_vectors(values: &[f64], unit: &[f64], sup: &[f64], inf: &[f64], mode: IntervalMode, range: (f64, f64)) -> Vec<f64> {
    let d = unit.len();
    let mut out = Vec::with_capacity(values.len() * d);
    for &x in values {
        match mode {
            IntervalMode::Unit => out.extend(unit.iter().map(|u| x * u)),
            IntervalMode::Interpolation => {
                let (a, b) = interpolation_weights(x, range.0, range.1);
                out.extend(sup.iter().zip(inf).map(|(s, i)| a * s + b * i));
            }
        }
    }
    out
}

/// Reduce per-entry vectors to scalars with a weight vector.
pub fn reduce_vectors(vectors: &[f64], weights: &[f64]) -> Vec<f64> {
    vectors
        .chunks_exact(weights.len())
        .map(|e| e.iter().zip(weights).map(|(x, w)| x * w).sum())
        .collect()
}

/// Scalar bias from one interval matrix (`rows x cols`), zero outside the
/// `valid` mask.
///
/// Both embedding modes are affine in the interval, so the weighted sum over
/// `d` collapses to a handful of scalar inner products times constant
/// coefficient matrices; [`interval_vectors`] builds the full `d`-vectors for
/// inspection.
#[allow(clippy::too_many_arguments)]
fn interval_term(
    g: &mut Graph,
    values: &[f64],
    valid: &dyn Fn(usize) -> bool,
    rows: usize,
    cols: usize,
    mode: IntervalMode,
    range: Option<(f64, f64)>,
    vectors: (Var, Var, Var),
    reduce: Var,
) -> Result<Var, ModelError> {
    let (unit, sup, inf) = vectors;
    match mode {
        IntervalMode::Unit => {
            let coef = inner(g, unit, reduce);
            let x: Vec<f64> = (0..rows * cols).map(|k| if valid(k) { values[k] } else { 0.0 }).collect();
            let x = g.constant_matrix(rows, cols, x);
            Ok(g.scale_by(x, coef))
        }
        IntervalMode::Interpolation => {
            let (lower, upper) = range.ok_or(ModelError::MissingBounds)?;
            let mut wa = vec![0.0; rows * cols];
            let mut wb = vec![0.0; rows * cols];
            for k in 0..rows * cols {
                if valid(k) {
                    let (a, b) = interpolation_weights(values[k], lower, upper);
                    wa[k] = a;
                    wb[k] = b;
                }
            }
            let c_sup = inner(g, sup, reduce);
            let wa = g.constant_matrix(rows, cols, wa);
            let term = g.scale_by(wa, c_sup);
            if upper <= lower {
                return Ok(term);
            }
            let c_inf = inner(g, inf, reduce);
            let wb = g.constant_matrix(rows, cols, wb);
            let term_b = g.scale_by(wb, c_inf);
            Ok(g.add(term, term_b))
        }
    }
}

/// Reduced interval bias: temporal plus spatial term, each switched off by
/// its ablation flag. `None` when both are off.
#[allow(clippy::too_many_arguments)]
pub fn embed_intervals(
    g: &mut Graph,
    pv: &ParamVars,
    config: &ModelConfig,
    bounds: Option<IntervalBounds>,
    source: IntervalSource,
    delta_t: &[f64],
    delta_s: &[f64],
    rows: usize,
    cols: usize,
    valid: &dyn Fn(usize) -> bool,
) -> Result<Option<Var>, ModelError> {
    let (reduce_t, reduce_s) = match source {
        IntervalSource::Trajectory => (pv.reduce_t, pv.reduce_s),
        IntervalSource::Candidate => (pv.reduce_nt, pv.reduce_ns),
    };
    let mut total = None;
    if config.use_tim {
        let range = bounds.map(|b| (b.t_min, b.t_max));
        let vecs = (pv.unit_t, pv.sup_t, pv.inf_t);
        let t = interval_term(g, delta_t, valid, rows, cols, config.interval_mode, range, vecs, reduce_t)?;
        total = Some(t);
    }
    if config.use_sim {
        let range = bounds.map(|b| (b.s_min, b.s_max));
        let vecs = (pv.unit_s, pv.sup_s, pv.inf_s);
        let s = interval_term(g, delta_s, valid, rows, cols, config.interval_mode, range, vecs, reduce_s)?;
        total = Some(match total {
            Some(t) => g.add(t, s),
            None => s,
        });
    }
    Ok(total)
}

fn valid_mask(n: usize, valid_len: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..valid_len {
        m[i * n..i * n + valid_len].fill(1.0);
    }
    m
}

/// Attention weights `M * softmax((QK^T + bias) / sqrt(d))`, `n x n`.
#[allow(clippy::too_many_arguments)]
pub fn attention_weights(
    g: &mut Graph,
    pv: &ParamVars,
    e: Var,
    bias: Option<Var>,
    valid_len: usize,
    mask_mode: MaskMode,
    dropout_rate: f64,
    dropout: Dropout<'_>,
) -> Var {
    let (n, d) = g.shape(e);
    let q = g.matmul(e, pv.w_query);
    let k = g.matmul(e, pv.w_key);
    let kt = g.transpose(k);
    let mut logits = g.matmul(q, kt);
    if let Some(b) = bias {
        logits = g.add(logits, b);
    }
    let logits = g.scale(logits, 1.0 / sqrt(d as f64));
    let weights = match mask_mode {
        MaskMode::Paper => {
            let soft = g.softmax(logits, 1);
            let mask = g.constant_matrix(n, n, valid_mask(n, valid_len));
            g.mul(soft, mask)
        }
        MaskMode::Presoftmax => {
            let keep = valid_mask(n, valid_len).into_iter().map(|x| x != 0.0).collect();
            let masked = g.masked_fill(logits, keep, f64::NEG_INFINITY);
            g.softmax(masked, 1)
        }
    };
    match dropout {
        Some(rng) => g.dropout(weights, dropout_rate, rng, true),
        None => weights,
    }
}

/// `S(u)`: updated check-in representations, `n x d`.
#[allow(clippy::too_many_arguments)]
pub fn self_attention_aggregate(
    g: &mut Graph,
    pv: &ParamVars,
    e: Var,
    bias: Option<Var>,
    valid_len: usize,
    mask_mode: MaskMode,
    dropout_rate: f64,
    dropout: Dropout<'_>,
) -> Var {
    let (n, d) = g.shape(e);
    if valid_len == 0 {
        return g.constant_matrix(n, d, vec![0.0; n * d]);
    }
    let weights = attention_weights(g, pv, e, bias, valid_len, mask_mode, dropout_rate, dropout);
    let v = g.matmul(e, pv.w_value);
    g.matmul(weights, v)
}

/// Candidate scores `A`, `L x 1`: softmax over candidates at each valid
/// position, summed over positions.
///
/// `candidates` is `L x d`, `s` is `n x d`, `bias` (when present) is
/// `L x valid_len`.
pub fn attention_match(g: &mut Graph, candidates: Var, s: Var, bias: Option<Var>, valid_len: usize) -> Result<Var, ModelError> {
    if valid_len == 0 {
        return Err(ModelError::EmptyTrajectory);
    }
    let d = g.shape(candidates).1;
    let s_valid = g.slice_rows(s, 0, valid_len);
    let st = g.transpose(s_valid);
    let mut logits = g.matmul(candidates, st);
    if let Some(b) = bias {
        logits = g.add(logits, b);
    }
    let logits = g.scale(logits, 1.0 / sqrt(d as f64));
    let weights = g.softmax(logits, 0);
    Ok(g.sum_axis(weights, 1))
}

/// Full forward pass for one window, returning the `L x 1` score node.
#[allow(clippy::too_many_arguments)]
pub fn forward_graph(
    g: &mut Graph,
    pv: &ParamVars,
    config: &ModelConfig,
    bounds: Option<IntervalBounds>,
    seq: &TrajectorySequence,
    relations: &RelationMatrices,
    candidates: &CandidateRelation,
    mut dropout: Dropout<'_>,
) -> Result<Var, ModelError> {
    let n = seq.n();
    if n != config.n {
        return Err(ModelError::WindowLength { expected: config.n, got: n });
    }
    let v = seq.valid_len;
    if v == 0 {
        return Err(ModelError::EmptyTrajectory);
    }
    let mut e = embed_trajectory(g, pv, seq)?;
    if let Some(rng) = dropout.as_deref_mut() {
        e = g.dropout(e, config.dropout, rng, true);
    }
    let in_block = |k: usize| k / n < v && k % n < v;
    let bias = embed_intervals(
        g,
        pv,
        config,
        bounds,
        IntervalSource::Trajectory,
        &relations.delta_t,
        &relations.delta_s,
        n,
        n,
        &in_block,
    )?;
    let s = self_attention_aggregate(g, pv, e, bias, v, config.mask_mode, config.dropout, dropout);

    let big_l = g.shape(pv.loc_emb).0 - 1;
    let cand_bias = if config.use_candidate_intervals && (config.use_tim || config.use_sim) {
        let nt = valid_columns(&candidates.n_t, big_l, candidates.n, v);
        let ns = valid_columns(&candidates.n_s, big_l, candidates.n, v);
        let all = |_: usize| true;
        embed_intervals(g, pv, config, bounds, IntervalSource::Candidate, &nt, &ns, big_l, v, &all)?
    } else {
        None
    };
    let cand = g.slice_rows(pv.loc_emb, 1, big_l + 1);
    attention_match(g, cand, s, cand_bias, v)
}

fn valid_columns(m: &[f64], rows: usize, cols: usize, keep: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * keep);
    for r in 0..rows {
        out.extend_from_slice(&m[r * cols..r * cols + keep]);
    }
    out
}

/// Evaluation-mode scores for every candidate; `A[i]` scores location `i + 1`.
pub fn forward(
    params: &ModelParams,
    config: &ModelConfig,
    seq: &TrajectorySequence,
    relations: &RelationMatrices,
    candidates: &CandidateRelation,
) -> Result<Vec<f64>, ModelError> {
    let mut g = Graph::new();
    let pv = params.register(&mut g);
    let a = forward_graph(&mut g, &pv, config, params.bounds, seq, relations, candidates, None)?;
    Ok(g.value(a).to_vec())
}

/// The aggregation layer's correlation matrix for one window, `n x n`
/// row-major, in evaluation mode.
pub fn export_attention(
    params: &ModelParams,
    config: &ModelConfig,
    seq: &TrajectorySequence,
    relations: &RelationMatrices,
) -> Result<Vec<f64>, ModelError> {
    let n = seq.n();
    let mut g = Graph::new();
    let pv = params.register(&mut g);
    let v = seq.valid_len;
    let e = embed_trajectory(&mut g, &pv, seq)?;
    let in_block = |k: usize| k / n < v && k % n < v;
    let bias = embed_intervals(
        &mut g,
        &pv,
        config,
        params.bounds,
        IntervalSource::Trajectory,
        &relations.delta_t,
        &relations.delta_s,
        n,
        n,
        &in_block,
    )?;
    let w = attention_weights(&mut g, &pv, e, bias, v, config.mask_mode, 0.0, None);
    Ok(g.value(w).to_vec())
}

#[cfg(test)]
mod tests;
