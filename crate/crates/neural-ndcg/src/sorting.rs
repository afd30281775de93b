//! Temperature-controlled relaxation of the sorting operator.
//!
//! For scores s ∈ ℝⁿ the relaxed permutation matrix has rows
//!
//! ```text
//! P̂[i, :] = softmax( ((n + 1 − 2i)·s − A_s·1) / τ ),   i = 1..n
//! ```
//!
//! where `A_s[j, k] = |s_j − s_k|`. Each row is a soft one-hot pointing at
//! the document occupying rank i; as τ → 0 the matrix converges to the exact
//! descending-sort permutation. Multiplying P̂ by the gain vector yields
//! "quasi-sorted" gains — the differentiable core of the NDCG surrogate.
//!
//! Sinkhorn scaling pushes the row-stochastic P̂ toward a doubly stochastic
//! matrix by alternating row and column normalization, stopping at a
//! tolerance of 1e-6 or after 30 iterations, whichever happens first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows_values, Array, NodeId, Tape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Iteration cap of the Sinkhorn procedure.
pub const SINKHORN_MAX_ITER: usize = 30;
/// Convergence tolerance on |row-or-column sum − 1| for Sinkhorn scaling.
pub const SINKHORN_TOL: f64 = 1e-6;

/// Mean of the standard Gumbel distribution (Euler–Mascheroni constant);
/// subtracted so that score perturbations have zero mean.
pub const GUMBEL_MEAN: f64 = 0.577_215_664_901_532_9;

/// Entries of a relaxed permutation are floored here before log-based
/// normalization: theoretically they are strictly positive, but at small τ
/// the softmax underflows double precision to exact zeros.
pub(crate) fn underflow_floor<F: Scalar>() -> F {
    F::min_positive_value().sqrt()
}

/// Relaxed permutation matrix at a given temperature.
#[derive(Clone, Debug)]
pub struct RelaxedPermutation<F> {
    matrix: Array<F>,
    temperature: F,
    scaled: bool,
}

impl<F: Scalar> RelaxedPermutation<F> {
    pub fn matrix(&self) -> &Array<F> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array<F> {
        self.matrix
    }

    pub fn temperature(&self) -> F {
        self.temperature
    }

    /// Whether Sinkhorn scaling has been applied.
    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    /// Sinkhorn-scale toward a doubly stochastic matrix. Underflowed entries
    /// are floored to keep the procedure defined at very small temperatures.
    pub fn scale(self, max_iter: usize, tol: F) -> Result<(Self, SinkhornReport<F>)> {
        let floor = underflow_floor::<F>();
        let clamped = self.matrix.map(|v| v.max(floor).min(F::one()));
        let (matrix, report) = sinkhorn_scale_report(&clamped, max_iter, tol)?;
        Ok((
            Self {
                matrix,
                temperature: self.temperature,
                scaled: true,
            },
            report,
        ))
    }
}

/// Matrix of absolute pairwise score differences: A[i,j] = |s_i − s_j|.
pub fn pairwise_abs_diff<F: Scalar>(s: &[F]) -> Result<Array<F>> {
    check_scores(s)?;
    let n = s.len();
    let mut a = Array::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, (s[i] - s[j]).abs());
        }
    }
    Ok(a)
}

fn check_scores<F: Scalar>(s: &[F]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::invalid("relaxed sort: empty score vector"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("relaxed sort: non-finite score"));
    }
    Ok(())
}

fn check_temperature<F: Scalar>(tau: F) -> Result<()> {
    if !(tau > F::zero()) || !tau.is_finite() {
        return Err(Error::invalid("relaxed sort: temperature must be positive"));
    }
    Ok(())
}

/// Relaxed descending-sort permutation of `s` at temperature `tau`.
///
/// Plain-value path: O(n²) time and memory, no tape involved.
pub fn neural_sort<F: Scalar>(s: &[F], tau: F) -> Result<RelaxedPermutation<F>> {
    check_scores(s)?;
    check_temperature(tau)?;
    let n = s.len();
    let mut col_shift = vec![F::zero(); n];
    for (j, shift) in col_shift.iter_mut().enumerate() {
        let mut acc = F::zero();
        for k in 0..n {
            acc += (s[j] - s[k]).abs();
        }
        *shift = acc;
    }
    let mut logits = Array::zeros(n, n);
    for i in 0..n {
        let row_scale = F::cast((n as f64) + 1.0 - 2.0 * ((i + 1) as f64));
        for j in 0..n {
            logits.set(i, j, (row_scale * s[j] - col_shift[j]) / tau);
        }
    }
    Ok(RelaxedPermutation {
        matrix: softmax_rows_values(&logits),
        temperature: tau,
        scaled: false,
    })
}

/// Tape version of [`neural_sort`]: builds the relaxed permutation from a
/// score node so gradients flow back to the scores.
pub fn neural_sort_node<F: Scalar>(tape: &mut Tape<F>, s: NodeId, tau: F) -> Result<NodeId> {
    check_temperature(tau)?;
    let [n, one] = tape.value(s).shape();
    if one != 1 || n == 0 {
        return Err(Error::invalid(
            "relaxed sort: scores must be a non-empty column vector",
        ));
    }
    let ones_row = tape.leaf(Array::ones(1, n));
    let ones_col = tape.leaf(Array::ones(n, 1));
    let row_scales: Vec<F> = (0..n)
        .map(|i| F::cast((n as f64) + 1.0 - 2.0 * ((i + 1) as f64)))
        .collect();
    let scales = tape.leaf(Array::col(&row_scales)?);

    let s_row = tape.transpose(s)?;
    let s_cols = tape.matmul(s, ones_row)?;
    let s_rows = tape.matmul(ones_col, s_row)?;
    let diffs = tape.sub(s_cols, s_rows)?;
    let abs_diffs = tape.abs(diffs)?;
    let col_shift = tape.sum_axis(abs_diffs, 1)?;
    let shift_row = tape.transpose(col_shift)?;
    let shifts = tape.matmul(ones_col, shift_row)?;
    let scaled_scores = tape.matmul(scales, s_row)?;
    let raw = tape.sub(scaled_scores, shifts)?;
    let logits = tape.scalar_mul(raw, F::one() / tau)?;
    tape.softmax_rows(logits)
}

/// Exact descending-sort permutation matrix of `s` (ties by original index):
/// row i carries a 1 at the index of the i-th largest score.
pub fn exact_permutation_matrix<F: Scalar>(s: &[F]) -> Result<Array<F>> {
    check_scores(s)?;
    let n = s.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite scores").then(a.cmp(&b)));
    let mut p = Array::zeros(n, n);
    for (rank, &doc) in order.iter().enumerate() {
        p.set(rank, doc, F::one());
    }
    Ok(p)
}

/// Reproducible zero-mean Gumbel perturbation of scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelNoise {
    /// Scale β applied to the zero-mean Gumbel draw.
    pub scale: f64,
    pub seed: u64,
    /// Number of Monte-Carlo samples.
    pub samples: usize,
}

/// Per-sample additive score offsets β·(g − γ) with g standard Gumbel.
///
/// Draw order is fixed (sample-major, then document index), so a given seed
/// always produces the same offsets.
pub fn gumbel_offsets<F: Scalar>(n: usize, noise: &GumbelNoise) -> Result<Vec<Vec<F>>> {
    if noise.samples == 0 {
        return Err(Error::invalid("gumbel noise: samples must be at least 1"));
    }
    if !(noise.scale > 0.0) || !noise.scale.is_finite() {
        return Err(Error::invalid("gumbel noise: scale must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut all = Vec::with_capacity(noise.samples);
    for _ in 0..noise.samples {
        let mut offsets = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.gen::<f64>().clamp(1e-12, 1.0 - 1e-12);
            let gumbel = -(-u.ln()).ln();
            offsets.push(F::cast(noise.scale * (gumbel - GUMBEL_MEAN)));
        }
        all.push(offsets);
    }
    Ok(all)
}

/// Monte-Carlo samples of the relaxed permutation under Gumbel-perturbed
/// scores. Gradients flow through the scores via reparametrization: the
/// noise is an additive constant.
pub fn stochastic_neural_sort<F: Scalar>(
    s: &[F],
    tau: F,
    noise: &GumbelNoise,
) -> Result<Vec<RelaxedPermutation<F>>> {
    check_scores(s)?;
    check_temperature(tau)?;
    let offsets = gumbel_offsets::<F>(s.len(), noise)?;
    offsets
        .into_iter()
        .map(|off| {
            let perturbed: Vec<F> = s.iter().zip(&off).map(|(&v, &o)| v + o).collect();
            neural_sort(&perturbed, tau)
        })
        .collect()
}

/// Outcome of a Sinkhorn run.
#[derive(Clone, Copy, Debug)]
pub struct SinkhornReport<F> {
    /// Normalization rounds actually executed.
    pub iterations: usize,
    /// True when the residual dropped below tolerance.
    pub converged: bool,
    /// Final max |row-or-column sum − 1|.
    pub residual: F,
}

fn sinkhorn_residual<F: Scalar>(m: &Array<F>) -> F {
    let mut worst = F::zero();
    for i in 0..m.rows() {
        let mut acc = F::zero();
        for j in 0..m.cols() {
            acc += m.get(i, j);
        }
        worst = worst.max((acc - F::one()).abs());
    }
    for j in 0..m.cols() {
        let mut acc = F::zero();
        for i in 0..m.rows() {
            acc += m.get(i, j);
        }
        worst = worst.max((acc - F::one()).abs());
    }
    worst
}

fn check_sinkhorn_shape<F: Scalar>(m: &Array<F>) -> Result<()> {
    if m.rows() != m.cols() || m.rows() == 0 {
        return Err(Error::invalid(format!(
            "sinkhorn: expected a non-empty square matrix, got {:?}",
            m.shape()
        )));
    }
    if m.data().iter().any(|&v| v < F::zero()) {
        return Err(Error::invalid("sinkhorn: entries must be strictly positive"));
    }
    Ok(())
}

// Doubly stochastic inputs (which may contain zeros, e.g. an exact
// permutation matrix) pass through untouched; strict positivity is required
// only once normalization actually runs, where a zero row or column would be
// fatal.
fn check_sinkhorn_positive<F: Scalar>(m: &Array<F>) -> Result<()> {
    if m.data().iter().any(|&v| v <= F::zero()) {
        return Err(Error::invalid("sinkhorn: entries must be strictly positive"));
    }
    Ok(())
}

/// Alternating row/column normalization toward a doubly stochastic matrix.
pub fn sinkhorn_scale<F: Scalar>(m: &Array<F>, max_iter: usize, tol: F) -> Result<Array<F>> {
    Ok(sinkhorn_scale_report(m, max_iter, tol)?.0)
}

/// [`sinkhorn_scale`] together with its convergence report.
pub fn sinkhorn_scale_report<F: Scalar>(
    m: &Array<F>,
    max_iter: usize,
    tol: F,
) -> Result<(Array<F>, SinkhornReport<F>)> {
    check_sinkhorn_shape(m)?;
    let n = m.rows();
    let mut out = m.clone();
    let mut iterations = 0;
    let mut residual = sinkhorn_residual(&out);
    if residual >= tol {
        check_sinkhorn_positive(m)?;
    }
    while residual >= tol && iterations < max_iter {
        for i in 0..n {
            let mut acc = F::zero();
            for j in 0..n {
                acc += out.get(i, j);
            }
            for j in 0..n {
                out.set(i, j, out.get(i, j) / acc);
            }
        }
        for j in 0..n {
            let mut acc = F::zero();
            for i in 0..n {
                acc += out.get(i, j);
            }
            for i in 0..n {
                out.set(i, j, out.get(i, j) / acc);
            }
        }
        iterations += 1;
        residual = sinkhorn_residual(&out);
    }
    Ok((
        out,
        SinkhornReport {
            iterations,
            converged: residual < tol,
            residual,
        },
    ))
}

/// Tape version of Sinkhorn scaling: the executed iterations are unrolled
/// onto the tape, so the gradient is exact for the finite procedure run.
/// Convergence is decided on the eagerly computed values.
pub fn sinkhorn_scale_node<F: Scalar>(
    tape: &mut Tape<F>,
    m: NodeId,
    max_iter: usize,
    tol: F,
) -> Result<(NodeId, SinkhornReport<F>)> {
    check_sinkhorn_shape(tape.value(m))?;
    let n = tape.value(m).rows();
    let ones_row = tape.leaf(Array::ones(1, n));
    let ones_col = tape.leaf(Array::ones(n, 1));
    let neg_ln2 = -F::ln_2();

    let mut current = m;
    let mut iterations = 0;
    let mut residual = sinkhorn_residual(tape.value(current));
    if residual >= tol {
        check_sinkhorn_positive(tape.value(m))?;
    }
    while residual >= tol && iterations < max_iter {
        let row_sums = tape.sum_axis(current, 1)?;
        let row_log = tape.log2(row_sums)?;
        let row_neg = tape.scalar_mul(row_log, neg_ln2)?;
        let row_inv = tape.exp(row_neg)?;
        let row_factors = tape.matmul(row_inv, ones_row)?;
        current = tape.mul(current, row_factors)?;

        let col_sums = tape.sum_axis(current, 0)?;
        let col_log = tape.log2(col_sums)?;
        let col_neg = tape.scalar_mul(col_log, neg_ln2)?;
        let col_inv = tape.exp(col_neg)?;
        let col_factors = tape.matmul(ones_col, col_inv)?;
        current = tape.mul(current, col_factors)?;

        iterations += 1;
        residual = sinkhorn_residual(tape.value(current));
    }
    Ok((
        current,
        SinkhornReport {
            iterations,
            converged: residual < tol,
            residual,
        },
    ))
}
