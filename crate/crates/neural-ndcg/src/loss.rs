//! Differentiable ranking losses.
//!
//! The headline losses build a smooth NDCG surrogate from the relaxed
//! sorting operator: multiply the (Sinkhorn-scaled) relaxed permutation with
//! the gain vector to obtain quasi-sorted gains, discount them, normalize by
//! the ideal DCG and negate. The transposed variant scales P̂ᵀ instead and
//! weights per-document gains by smoothed discounts, which lets the sum run
//! over all documents even under a rank cutoff.
//!
//! Alongside them: ApproxNDCG (sigmoid-approximated positions), ListNet,
//! ListMLE, RankNet, an RMSE regression baseline, and LambdaRank (which has
//! no scalar loss — it produces gradients directly).
//!
//! Padded documents are dropped before any loss: each builder selects the
//! real documents with a constant 0/1 matrix, so variable-length queries are
//! processed at their true length and padding never influences a gradient.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, NodeId, Tape};
use crate::error::{Error, Result};
use crate::metrics::{self, RankCutoff, RelevanceVector};
use crate::scalar::Scalar;
use crate::sorting::{
    gumbel_offsets, neural_sort_node, sinkhorn_scale_node, underflow_floor, GumbelNoise,
    SINKHORN_MAX_ITER, SINKHORN_TOL,
};

/// Relevance levels assumed by the RMSE regression baseline.
pub const RMSE_LEVELS: u32 = 4;

/// Available training losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    NeuralNdcg,
    NeuralNdcgT,
    ApproxNdcg,
    Listnet,
    Listmle,
    Ranknet,
    Lambdarank,
    Rmse,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::NeuralNdcg,
        LossKind::NeuralNdcgT,
        LossKind::ApproxNdcg,
        LossKind::Listnet,
        LossKind::Listmle,
        LossKind::Ranknet,
        LossKind::Lambdarank,
        LossKind::Rmse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::NeuralNdcg => "neural_ndcg",
            LossKind::NeuralNdcgT => "neural_ndcg_t",
            LossKind::ApproxNdcg => "approx_ndcg",
            LossKind::Listnet => "listnet",
            LossKind::Listmle => "listmle",
            LossKind::Ranknet => "ranknet",
            LossKind::Lambdarank => "lambdarank",
            LossKind::Rmse => "rmse",
        }
    }

    /// Whether the loss is a scalar on the tape. LambdaRank is the lone
    /// exception: it injects gradients directly.
    pub fn has_scalar_loss(self) -> bool {
        self != LossKind::Lambdarank
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = LossKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!(
                    "unknown loss {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Loss selection plus its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    #[serde(default = "default_cutoff")]
    pub k: RankCutoff,
    /// Temperature τ of the sorting relaxation.
    #[serde(default = "default_unit")]
    pub temperature: f64,
    /// Sigmoid sharpness α of ApproxNDCG.
    #[serde(default = "default_unit")]
    pub alpha: f64,
    /// Monte-Carlo Gumbel sampling for the NeuralNDCG variants.
    #[serde(default)]
    pub stochastic: Option<GumbelNoise>,
}

fn default_cutoff() -> RankCutoff {
    RankCutoff::Max
}

fn default_unit() -> f64 {
    1.0
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            k: RankCutoff::Max,
            temperature: 1.0,
            alpha: 1.0,
            stochastic: None,
        }
    }

    pub fn with_k(mut self, k: RankCutoff) -> Self {
        self.k = k;
        self
    }

    pub fn with_temperature(mut self, tau: f64) -> Self {
        self.temperature = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid("loss: temperature must be positive"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("loss: alpha must be positive"));
        }
        if let Some(noise) = &self.stochastic {
            if noise.samples == 0 {
                return Err(Error::invalid("loss: stochastic samples must be at least 1"));
            }
            if !(noise.scale > 0.0) || !noise.scale.is_finite() {
                return Err(Error::invalid("loss: stochastic scale must be positive"));
            }
            if !matches!(self.kind, LossKind::NeuralNdcg | LossKind::NeuralNdcgT) {
                return Err(Error::invalid(
                    "loss: stochastic sampling only applies to the neural_ndcg variants",
                ));
            }
        }
        Ok(())
    }
}

/// Positional discounts with the cutoff applied: 1/log₂(j+2) for zero-based
/// rank j below the effective cutoff, 0 beyond it.
pub fn discount_vector<F: Scalar>(n: usize, k: RankCutoff) -> Vec<F> {
    let eff = k.effective(n);
    (0..n)
        .map(|j| {
            if j < eff {
                F::cast(1.0 / ((j + 2) as f64).log2())
            } else {
                F::zero()
            }
        })
        .collect()
}

/// Real-document scores and labels extracted from a possibly padded list.
struct Selected<F> {
    scores: NodeId,
    labels: Vec<u32>,
    _marker: std::marker::PhantomData<F>,
}

fn select_real<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
) -> Result<Selected<F>> {
    let shape = tape.value(scores).shape();
    if shape != [y.len(), 1] {
        return Err(Error::invalid(format!(
            "loss: scores have shape {:?} but labels have length {}",
            shape,
            y.len()
        )));
    }
    let real: Vec<usize> = (0..y.len()).filter(|&i| y.mask()[i]).collect();
    if real.is_empty() {
        return Err(Error::invalid("loss: no real documents in query"));
    }
    let labels: Vec<u32> = real.iter().map(|&i| y.labels()[i]).collect();
    let selected = if real.len() == y.len() {
        scores
    } else {
        let mut sel = Array::zeros(real.len(), y.len());
        for (row, &i) in real.iter().enumerate() {
            sel.set(row, i, F::one());
        }
        let sel = tape.leaf(sel);
        tape.matmul(sel, scores)?
    };
    Ok(Selected {
        scores: selected,
        labels,
        _marker: std::marker::PhantomData,
    })
}

fn require_nonempty_query(labels: &[u32], what: &str) -> Result<()> {
    if labels.iter().all(|&l| l == 0) {
        return Err(Error::invalid(format!(
            "{what}: empty query (all labels zero); callers must skip it"
        )));
    }
    Ok(())
}

fn gain_vector<F: Scalar>(labels: &[u32]) -> Vec<F> {
    labels.iter().map(|&l| metrics::gain(l)).collect()
}

fn max_dcg_of<F: Scalar>(labels: &[u32], k: RankCutoff) -> F {
    metrics::max_dcg(&RelevanceVector::from_labels(labels.to_vec()), k)
}

/// Broadcast a 1×1 node to an n×1 column.
fn broadcast_col<F: Scalar>(tape: &mut Tape<F>, scalar: NodeId, n: usize) -> Result<NodeId> {
    let ones = tape.leaf(Array::ones(n, 1));
    tape.matmul(ones, scalar)
}

fn neural_ndcg_impl<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    labels: &[u32],
    tau: F,
    k: RankCutoff,
    transposed: bool,
    apply_sinkhorn: bool,
) -> Result<NodeId> {
    require_nonempty_query(labels, "neural_ndcg")?;
    let m = labels.len();
    let relaxed = neural_sort_node(tape, scores, tau)?;
    let oriented = if transposed {
        tape.transpose(relaxed)?
    } else {
        relaxed
    };
    let scaled = if apply_sinkhorn {
        // Strictly positive in exact arithmetic, but softmax underflows to
        // exact zeros at small τ; floor before the log-based normalization.
        let floored = tape.clamp(oriented, underflow_floor::<F>(), F::one())?;
        sinkhorn_scale_node(tape, floored, SINKHORN_MAX_ITER, F::cast(SINKHORN_TOL))?.0
    } else {
        oriented
    };
    let gains = tape.leaf(Array::col(&gain_vector::<F>(labels))?);
    let discounts = tape.leaf(Array::col(&discount_vector::<F>(m, k))?);
    let weighted = if transposed {
        // Per-document smoothed discounts: scale(P̂ᵀ)·d̄, then weight gains.
        let doc_discounts = tape.matmul(scaled, discounts)?;
        tape.mul(gains, doc_discounts)?
    } else {
        // Quasi-sorted gains: scale(P̂)·g, then discount by rank.
        let sorted_gains = tape.matmul(scaled, gains)?;
        tape.mul(sorted_gains, discounts)?
    };
    let total = tape.sum(weighted)?;
    let max_dcg = max_dcg_of::<F>(labels, k);
    tape.scalar_mul(total, -F::one() / max_dcg)
}

/// NeuralNDCG: −(1/maxDCG@k)·Σ_{j≤k} (scale(P̂)·g(y))_j · d(j).
pub fn neural_ndcg_node<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
    tau: F,
    k: RankCutoff,
) -> Result<NodeId> {
    let sel = select_real(tape, scores, y)?;
    neural_ndcg_impl(tape, sel.scores, &sel.labels, tau, k, false, true)
}

/// NeuralNDCG without Sinkhorn scaling (ablation used by the sweeps).
pub fn neural_ndcg_raw_node<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
    tau: F,
    k: RankCutoff,
) -> Result<NodeId> {
    let sel = select_real(tape, scores, y)?;
    neural_ndcg_impl(tape, sel.scores, &sel.labels, tau, k, false, false)
}

/// NeuralNDCG Transposed: −(1/maxDCG@k)·Σ_i g(y_i)·(scale(P̂ᵀ)·d̄)_i with
/// discounts beyond the cutoff zeroed; the sum runs over all documents.
pub fn neural_ndcg_transposed_node<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
    tau: F,
    k: RankCutoff,
) -> Result<NodeId> {
    let sel = select_real(tape, scores, y)?;
    neural_ndcg_impl(tape, sel.scores, &sel.labels, tau, k, true, true)
}

/// Sigmoid-approximated positions of ApproxNDCG:
/// π̂(i) = 1 + Σ_{j≠i} σ(−α(s_i − s_j)).
pub fn approx_positions<F: Scalar>(s: &[F], alpha: F) -> Result<Vec<F>> {
    if s.is_empty() {
        return Err(Error::invalid("approx_ndcg: empty score vector"));
    }
    if !(alpha > F::zero()) {
        return Err(Error::invalid("approx_ndcg: alpha must be positive"));
    }
    let sigmoid = crate::autodiff::sigmoid_value::<F>;
    Ok((0..s.len())
        .map(|i| {
            let mut acc = F::one();
            for j in 0..s.len() {
                if j != i {
                    acc += sigmoid(-alpha * (s[i] - s[j]));
                }
            }
            acc
        })
        .collect())
}

fn approx_ndcg_impl<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    labels: &[u32],
    alpha: F,
) -> Result<NodeId> {
    require_nonempty_query(labels, "approx_ndcg")?;
    if !(alpha > F::zero()) || !alpha.is_finite() {
        return Err(Error::invalid("approx_ndcg: alpha must be positive"));
    }
    let m = labels.len();
    let ones_row = tape.leaf(Array::ones(1, m));
    let ones_col = tape.leaf(Array::ones(m, 1));
    let s_row = tape.transpose(scores)?;
    let s_cols = tape.matmul(scores, ones_row)?;
    let s_rows = tape.matmul(ones_col, s_row)?;
    let diffs = tape.sub(s_cols, s_rows)?;
    let neg = tape.scalar_mul(diffs, -alpha)?;
    let sig = tape.sigmoid(neg)?;
    // Row sums include the diagonal σ(0) = 1/2; π̂ = rowsum + 1 − 1/2.
    let row_sums = tape.sum_axis(sig, 1)?;
    let half = tape.leaf(Array::new_unchecked(m, 1, vec![F::cast(0.5); m]));
    let positions = tape.add(row_sums, half)?;
    let shifted = tape.add(positions, ones_col)?;
    // 1/log₂(1+π̂) as exp(−ln(log₂(1+π̂))); π̂ ≥ 1 keeps both logs in range.
    let log_pos = tape.log2(shifted)?;
    let log_log = tape.log2(log_pos)?;
    let neg_log = tape.scalar_mul(log_log, -F::ln_2())?;
    let inv_log = tape.exp(neg_log)?;
    let gains = tape.leaf(Array::col(&gain_vector::<F>(labels))?);
    let weighted = tape.mul(gains, inv_log)?;
    let total = tape.sum(weighted)?;
    let max_dcg = max_dcg_of::<F>(labels, RankCutoff::Max);
    tape.scalar_mul(total, -F::one() / max_dcg)
}

/// ApproxNDCG loss: −(1/maxDCG)·Σ_i g(y_i)/log₂(1 + π̂(i)).
pub fn approx_ndcg_node<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
    alpha: F,
) -> Result<NodeId> {
    let sel = select_real(tape, scores, y)?;
    approx_ndcg_impl(tape, sel.scores, &sel.labels, alpha)
}

fn listnet_impl<F: Scalar>(tape: &mut Tape<F>, scores: NodeId, labels: &[u32]) -> Result<NodeId> {
    let m = labels.len();
    // Ground-truth top-one distribution: softmax of the raw labels.
    let reals: Vec<F> = labels.iter().map(|&l| F::from_count(l as usize)).collect();
    let targets =
        crate::autodiff::softmax_rows_values(&Array::row(&reals)?).transpose();
    let targets = tape.leaf(targets);

    // log softmax(s) via a shifted log-sum-exp; the shift keeps exp in range
    // and the sum at least 1, so the logarithm never sees a tiny value.
    let max = tape
        .value(scores)
        .data()
        .iter()
        .cloned()
        .fold(F::neg_infinity(), F::max);
    let shift = tape.leaf(Array::new_unchecked(m, 1, vec![max; m]));
    let z = tape.sub(scores, shift)?;
    let e = tape.exp(z)?;
    let sum = tape.sum(e)?;
    let log2_sum = tape.log2(sum)?;
    let ln_sum = tape.scalar_mul(log2_sum, F::ln_2())?;
    let ln_sum_col = broadcast_col(tape, ln_sum, m)?;
    let log_softmax = tape.sub(z, ln_sum_col)?;
    let cross = tape.mul(targets, log_softmax)?;
    let total = tape.sum(cross)?;
    tape.scalar_mul(total, -F::one())
}

/// ListNet: cross-entropy between top-one distributions,
/// −Σ_i softmax(y)_i · log softmax(s)_i.
pub fn listnet_node<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
) -> Result<NodeId> {
    let sel = select_real(tape, scores, y)?;
    listnet_impl(tape, sel.scores, &sel.labels)
}

fn listmle_impl<F: Scalar>(tape: &mut Tape<F>, scores: NodeId, labels: &[u32]) -> Result<NodeId> {
    let m = labels.len();
    // Ground-truth order: labels descending, ties by original index.
    let label_scores: Vec<F> = labels.iter().map(|&l| F::from_count(l as usize)).collect();
    let order = metrics::ranking_permutation(
        &label_scores,
        &RelevanceVector::from_labels(labels.to_vec()),
    )?;
    let mut perm = Array::zeros(m, m);
    for (rank, &doc) in order.iter().enumerate() {
        perm.set(rank, doc, F::one());
    }
    let perm = tape.leaf(perm);
    let ordered = tape.matmul(perm, scores)?;

    let max = tape
        .value(ordered)
        .data()
        .iter()
        .cloned()
        .fold(F::neg_infinity(), F::max);
    let shift = tape.leaf(Array::new_unchecked(m, 1, vec![max; m]));
    let z = tape.sub(ordered, shift)?;
    let e = tape.exp(z)?;
    // Row r of the triangular mask selects the suffix j ≥ r.
    let mut suffix = Array::zeros(m, m);
    for r in 0..m {
        for j in r..m {
            suffix.set(r, j, F::one());
        }
    }
    let suffix = tape.leaf(suffix);
    let suffix_sums = tape.matmul(suffix, e)?;
    let log2_sums = tape.log2(suffix_sums)?;
    let ln_sums = tape.scalar_mul(log2_sums, F::ln_2())?;
    let terms = tape.sub(ln_sums, z)?;
    tape.sum(terms)
}

/// ListMLE: negative log Plackett-Luce likelihood of the ground-truth order,
/// Σ_i [log Σ_{j≥i} exp(s_{π(j)}) − s_{π(i)}].
pub fn listmle_node<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
) -> Result<NodeId> {
    let sel = select_real(tape, scores, y)?;
    listmle_impl(tape, sel.scores, &sel.labels)
}

fn ranknet_impl<F: Scalar>(tape: &mut Tape<F>, scores: NodeId, labels: &[u32]) -> Result<NodeId> {
    let m = labels.len();
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if labels[i] > labels[j] {
                rows.push((i, j));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid(
            "ranknet: no pair with differing labels; callers must skip it",
        ));
    }
    let p = rows.len();
    let mut selector = Array::zeros(p, m);
    for (r, &(i, j)) in rows.iter().enumerate() {
        selector.set(r, i, F::one());
        selector.set(r, j, -F::one());
    }
    let selector = tape.leaf(selector);
    let margins = tape.matmul(selector, scores)?;
    // Stable softplus(−x) = max(−x, 0) + log(1 + exp(−|x|)).
    let neg = tape.scalar_mul(margins, -F::one())?;
    let relu = tape.clamp(neg, F::zero(), F::infinity())?;
    let mag = tape.abs(margins)?;
    let neg_mag = tape.scalar_mul(mag, -F::one())?;
    let e = tape.exp(neg_mag)?;
    let ones = tape.leaf(Array::ones(p, 1));
    let one_plus = tape.add(ones, e)?;
    let log2_term = tape.log2(one_plus)?;
    let ln_term = tape.scalar_mul(log2_term, F::ln_2())?;
    let softplus = tape.add(relu, ln_term)?;
    let total = tape.sum(softplus)?;
    tape.scalar_mul(total, F::one() / F::from_count(p))
}

/// RankNet: mean over pairs with y_i > y_j of log(1 + exp(−(s_i − s_j))).
pub fn ranknet_node<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
) -> Result<NodeId> {
    let sel = select_real(tape, scores, y)?;
    ranknet_impl(tape, sel.scores, &sel.labels)
}

fn rmse_impl<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    labels: &[u32],
    levels: u32,
) -> Result<NodeId> {
    if let Some(&bad) = labels.iter().find(|&&l| l > levels) {
        return Err(Error::invalid(format!(
            "rmse: label {bad} exceeds {levels} relevance levels"
        )));
    }
    let m = labels.len();
    let reals: Vec<F> = labels.iter().map(|&l| F::from_count(l as usize)).collect();
    let targets = tape.leaf(Array::col(&reals)?);
    let sig = tape.sigmoid(scores)?;
    let predictions = tape.scalar_mul(sig, F::from_count(levels as usize))?;
    let diff = tape.sub(predictions, targets)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq)?;
    let mean = tape.scalar_mul(total, F::one() / F::from_count(m))?;
    if tape.value(mean).item() == F::zero() {
        // Perfect fit: the square root is not differentiable at 0, and the
        // subgradient convention used everywhere else picks 0.
        return Ok(tape.leaf(Array::scalar(F::zero())));
    }
    let log_mean = tape.log2(mean)?;
    let half_log = tape.scalar_mul(log_mean, F::cast(0.5) * F::ln_2())?;
    tape.exp(half_log)
}

/// RMSE regression baseline: √(mean_i (levels·σ(s_i) − y_i)²).
pub fn rmse_node<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
    levels: u32,
) -> Result<NodeId> {
    let sel = select_real(tape, scores, y)?;
    rmse_impl(tape, sel.scores, &sel.labels, levels)
}

/// LambdaRank gradients with respect to the scores (minimization
/// convention: a gradient-descent step on these raises the scores of
/// under-ranked relevant documents).
///
/// λ_i = Σ_{j: y_j≠y_i} −sign(y_i − y_j) · |ΔNDCG@k(i,j)| ·
/// σ(−sign(y_i−y_j)·(s_i − s_j)), where ΔNDCG@k(i,j) is the exact NDCG@k
/// change from swapping documents i and j in the current ranking. Padded
/// documents receive zero gradient.
pub fn lambdarank_gradients<F: Scalar>(
    s: &[F],
    y: &RelevanceVector,
    k: RankCutoff,
) -> Result<Vec<F>> {
    if s.len() != y.len() {
        return Err(Error::invalid(format!(
            "lambdarank: {} scores vs {} labels",
            s.len(),
            y.len()
        )));
    }
    if y.is_empty_query() {
        return Err(Error::invalid(
            "lambdarank: empty query (all labels zero); callers must skip it",
        ));
    }
    let order = metrics::ranking_permutation(s, y)?;
    let mut position = vec![0usize; s.len()];
    for (rank, &doc) in order.iter().enumerate() {
        position[doc] = rank;
    }
    let real = y.unmasked_len();
    let eff = k.effective(real);
    let max_dcg: F = metrics::max_dcg(y, k);
    let rank_discount = |pos: usize| -> F {
        if pos < eff {
            F::cast(1.0 / ((pos + 2) as f64).log2())
        } else {
            F::zero()
        }
    };
    let sigmoid = crate::autodiff::sigmoid_value::<F>;
    let mut grad = vec![F::zero(); s.len()];
    for i in 0..s.len() {
        if !y.mask()[i] {
            continue;
        }
        for j in (i + 1)..s.len() {
            if !y.mask()[j] || y.labels()[i] == y.labels()[j] {
                continue;
            }
            let sgn = if y.labels()[i] > y.labels()[j] {
                F::one()
            } else {
                -F::one()
            };
            let gain_gap: F = metrics::gain::<F>(y.labels()[i]) - metrics::gain::<F>(y.labels()[j]);
            let discount_gap = rank_discount(position[i]) - rank_discount(position[j]);
            let delta = (gain_gap * discount_gap / max_dcg).abs();
            let weight = sigmoid(-sgn * (s[i] - s[j]));
            grad[i] += -sgn * delta * weight;
            grad[j] += sgn * delta * weight;
        }
    }
    Ok(grad)
}

/// Build the configured loss from a score node. Dispatches on
/// [`LossConfig::kind`] and averages over Gumbel samples when the stochastic
/// variant is requested.
pub fn loss_node<F: Scalar>(
    tape: &mut Tape<F>,
    scores: NodeId,
    y: &RelevanceVector,
    config: &LossConfig,
) -> Result<NodeId> {
    config.validate()?;
    let tau = F::cast(config.temperature);
    let alpha = F::cast(config.alpha);
    match config.kind {
        LossKind::NeuralNdcg | LossKind::NeuralNdcgT => {
            let transposed = config.kind == LossKind::NeuralNdcgT;
            let sel = select_real(tape, scores, y)?;
            match &config.stochastic {
                None => neural_ndcg_impl(tape, sel.scores, &sel.labels, tau, config.k, transposed, true),
                Some(noise) => {
                    let offsets = gumbel_offsets::<F>(sel.labels.len(), noise)?;
                    let mut acc: Option<NodeId> = None;
                    for off in &offsets {
                        let off_node = tape.leaf(Array::col(off)?);
                        let perturbed = tape.add(sel.scores, off_node)?;
                        let sample = neural_ndcg_impl(
                            tape,
                            perturbed,
                            &sel.labels,
                            tau,
                            config.k,
                            transposed,
                            true,
                        )?;
                        acc = Some(match acc {
                            None => sample,
                            Some(a) => tape.add(a, sample)?,
                        });
                    }
                    let total = acc.expect("at least one sample");
                    tape.scalar_mul(total, F::one() / F::from_count(offsets.len()))
                }
            }
        }
        LossKind::ApproxNdcg => approx_ndcg_node(tape, scores, y, alpha),
        LossKind::Listnet => listnet_node(tape, scores, y),
        LossKind::Listmle => listmle_node(tape, scores, y),
        LossKind::Ranknet => ranknet_node(tape, scores, y),
        LossKind::Rmse => rmse_node(tape, scores, y, RMSE_LEVELS),
        LossKind::Lambdarank => Err(Error::invalid(
            "lambdarank has no scalar loss; use lambdarank_gradients",
        )),
    }
}

/// Evaluate the configured loss on plain values.
pub fn loss_value<F: Scalar>(s: &[F], y: &RelevanceVector, config: &LossConfig) -> Result<F> {
    let mut tape = Tape::new();
    let leaf = tape.leaf(Array::col(s)?);
    let node = loss_node(&mut tape, leaf, y, config)?;
    Ok(tape.value(node).item())
}

/// NeuralNDCG surrogate value (positive, comparable to NDCG): the negated
/// loss, with or without Sinkhorn scaling.
pub fn neural_ndcg_surrogate<F: Scalar>(
    s: &[F],
    y: &RelevanceVector,
    tau: F,
    k: RankCutoff,
    apply_sinkhorn: bool,
) -> Result<F> {
    let mut tape = Tape::new();
    let leaf = tape.leaf(Array::col(s)?);
    let node = if apply_sinkhorn {
        neural_ndcg_node(&mut tape, leaf, y, tau, k)?
    } else {
        neural_ndcg_raw_node(&mut tape, leaf, y, tau, k)?
    };
    Ok(-tape.value(node).item())
}
