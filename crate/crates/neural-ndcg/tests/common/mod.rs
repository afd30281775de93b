//! Shared helpers for the integration suites: random ranking instances and
//! independent straight-line re-implementations of every quantity under
//! test, written in plain `f64` loops with no use of the library's autodiff
//! engine or matrix helpers.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

/// Scores with a guaranteed pairwise gap and labels in 0..=4 with at least
/// one positive label.
pub fn separated_instance(
    rng: &mut ChaCha8Rng,
    n_min: usize,
    n_max: usize,
    min_gap: f64,
) -> (Vec<f64>, Vec<u32>) {
    let n = rng.gen_range(n_min..=n_max);
    // Distinct scores: spread a shuffled base grid with jitter below gap/2.
    let mut base: Vec<f64> = (0..n).map(|i| i as f64 * min_gap * 2.0).collect();
    for v in base.iter_mut() {
        *v += rng.gen_range(0.0..min_gap * 0.5);
    }
    // Shuffle positions so the ranking is non-trivial.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        base.swap(i, j);
    }
    let labels = loop {
        let candidate: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=4)).collect();
        if candidate.iter().any(|&l| l > 0) {
            break candidate;
        }
    };
    (base, labels)
}

/// Scores drawn uniformly from (lo, hi) with no separation guarantee.
pub fn uniform_scores(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

// ---------------------------------------------------------------------------
// Exact ranking metrics
// ---------------------------------------------------------------------------

pub fn oracle_gain(r: u32) -> f64 {
    2f64.powi(r as i32) - 1.0
}

/// Discount of 1-based rank j: 1/log2(j + 1).
pub fn oracle_discount(j: usize) -> f64 {
    1.0 / ((j + 1) as f64).log2()
}

/// Document indices sorted by descending score, ties broken by original
/// index (stable).
pub fn oracle_ranking(s: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
    idx
}

fn effective_k(k: Option<usize>, n: usize) -> usize {
    match k {
        Some(k) => k.min(n),
        None => n,
    }
}

pub fn oracle_dcg(ranked_labels: &[u32], k: Option<usize>) -> f64 {
    let eff = effective_k(k, ranked_labels.len());
    (0..eff)
        .map(|r| oracle_gain(ranked_labels[r]) * oracle_discount(r + 1))
        .sum()
}

pub fn oracle_max_dcg(labels: &[u32], k: Option<usize>) -> f64 {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    oracle_dcg(&sorted, k)
}

/// Exact NDCG@k; all-zero labels score 1 by convention.
pub fn oracle_ndcg(s: &[f64], labels: &[u32], k: Option<usize>) -> f64 {
    let max = oracle_max_dcg(labels, k);
    if max == 0.0 {
        return 1.0;
    }
    let ranked: Vec<u32> = oracle_ranking(s).into_iter().map(|i| labels[i]).collect();
    oracle_dcg(&ranked, k) / max
}

// ---------------------------------------------------------------------------
// Relaxed sorting and Sinkhorn scaling
// ---------------------------------------------------------------------------

/// Relaxed permutation matrix computed directly from its definition: row i
/// (1-based) is softmax(((n + 1 - 2i)·s - A_s·1)/tau) where
/// A_s·1[j] = sum_k |s_j - s_k|.
pub fn oracle_relaxed(s: &[f64], tau: f64) -> Vec<Vec<f64>> {
    let n = s.len();
    let abs_sums: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|k| (s[j] - s[k]).abs()).sum())
        .collect();
    (1..=n)
        .map(|i| {
            let coeff = (n + 1) as f64 - 2.0 * i as f64;
            let logits: Vec<f64> = (0..n).map(|j| (coeff * s[j] - abs_sums[j]) / tau).collect();
            softmax(&logits)
        })
        .collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Worst |row-or-column sum - 1| of a square matrix.
pub fn oracle_sinkhorn_residual(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut worst = 0f64;
    for row in m {
        let sum: f64 = row.iter().sum();
        worst = worst.max((sum - 1.0).abs());
    }
    for j in 0..n {
        let sum: f64 = m.iter().map(|row| row[j]).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    worst
}

/// Alternating row-then-column normalization; the residual is checked before
/// every round, so an input already within tolerance runs zero rounds.
/// Returns the scaled matrix and the number of rounds executed.
pub fn oracle_sinkhorn(mut m: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> (Vec<Vec<f64>>, usize) {
    let n = m.len();
    let mut iterations = 0;
    while oracle_sinkhorn_residual(&m) >= tol && iterations < max_iter {
        for row in m.iter_mut() {
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        for j in 0..n {
            let sum: f64 = m.iter().map(|row| row[j]).sum();
            for row in m.iter_mut() {
                row[j] /= sum;
            }
        }
        iterations += 1;
    }
    (m, iterations)
}

/// Positivity floor applied before Sinkhorn scaling inside the losses.
pub fn oracle_underflow_floor() -> f64 {
    f64::MIN_POSITIVE.sqrt()
}

// ---------------------------------------------------------------------------
// Straight-line loss values
// ---------------------------------------------------------------------------

/// Rank discounts with the cutoff applied: position j (0-based) gets
/// 1/log2(j + 2) below the effective cutoff and 0 beyond it.
pub fn oracle_discount_vector(n: usize, k: Option<usize>) -> Vec<f64> {
    let eff = effective_k(k, n);
    (0..n)
        .map(|j| if j < eff { oracle_discount(j + 1) } else { 0.0 })
        .collect()
}

/// Smooth NDCG surrogate loss evaluated straight-line: relaxed matrix,
/// optional transpose, optional floor + Sinkhorn, quasi-sorted gains,
/// discounted sum, normalized by maxDCG@k, negated.
pub fn oracle_neural_ndcg_loss(
    s: &[f64],
    labels: &[u32],
    tau: f64,
    k: Option<usize>,
    transposed: bool,
    apply_sinkhorn: bool,
) -> f64 {
    let n = s.len();
    let mut p = oracle_relaxed(s, tau);
    if transposed {
        let mut t = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                t[j][i] = p[i][j];
            }
        }
        p = t;
    }
    if apply_sinkhorn {
        let floor = oracle_underflow_floor();
        for row in p.iter_mut() {
            for v in row.iter_mut() {
                *v = v.clamp(floor, 1.0);
            }
        }
        p = oracle_sinkhorn(p, 30, 1e-6).0;
    }
    let gains: Vec<f64> = labels.iter().map(|&l| oracle_gain(l)).collect();
    let discounts = oracle_discount_vector(n, k);
    let total: f64 = if transposed {
        // Per-document expected discount times the document's gain.
        (0..n)
            .map(|i| gains[i] * (0..n).map(|j| p[i][j] * discounts[j]).sum::<f64>())
            .sum()
    } else {
        // Quasi-sorted gain at each rank times the rank discount.
        (0..n)
            .map(|j| (0..n).map(|i| p[j][i] * gains[i]).sum::<f64>() * discounts[j])
            .sum()
    };
    -total / oracle_max_dcg(labels, k)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smoothed 1-based positions: pi(i) = 1 + sum_{j != i} sigma(-alpha (s_i - s_j)).
pub fn oracle_approx_positions(s: &[f64], alpha: f64) -> Vec<f64> {
    (0..s.len())
        .map(|i| {
            1.0 + (0..s.len())
                .filter(|&j| j != i)
                .map(|j| sigmoid(-alpha * (s[i] - s[j])))
                .sum::<f64>()
        })
        .collect()
}

pub fn oracle_approx_ndcg_loss(s: &[f64], labels: &[u32], alpha: f64) -> f64 {
    let positions = oracle_approx_positions(s, alpha);
    let total: f64 = labels
        .iter()
        .zip(&positions)
        .map(|(&l, &p)| oracle_gain(l) / (1.0 + p).log2())
        .sum();
    -total / oracle_max_dcg(labels, None)
}

pub fn oracle_listnet_loss(s: &[f64], labels: &[u32]) -> f64 {
    let targets = softmax(&labels.iter().map(|&l| l as f64).collect::<Vec<_>>());
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = s.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    -targets
        .iter()
        .zip(s)
        .map(|(&t, &v)| t * (v - max - log_sum))
        .sum::<f64>()
}

/// Negative log Plackett-Luce likelihood of the label-descending order,
/// computed as the explicit product of per-position choice probabilities.
pub fn oracle_listmle_loss(s: &[f64], labels: &[u32]) -> f64 {
    let order = oracle_ranking(&labels.iter().map(|&l| l as f64).collect::<Vec<_>>());
    let ordered: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let mut total = 0.0;
    for i in 0..ordered.len() {
        let suffix = &ordered[i..];
        let max = suffix.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + suffix.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += lse - ordered[i];
    }
    total
}

pub fn oracle_ranknet_loss(s: &[f64], labels: &[u32]) -> Option<f64> {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if labels[i] > labels[j] {
                let margin = s[i] - s[j];
                // softplus(-margin), stable in both tails
                total += (-margin).max(0.0) + (1.0 + (-margin.abs()).exp()).ln();
                pairs += 1;
            }
        }
    }
    (pairs > 0).then(|| total / pairs as f64)
}

pub fn oracle_rmse_loss(s: &[f64], labels: &[u32], levels: u32) -> f64 {
    let mse: f64 = s
        .iter()
        .zip(labels)
        .map(|(&v, &l)| {
            let p = levels as f64 * sigmoid(v);
            (p - l as f64).powi(2)
        })
        .sum::<f64>()
        / s.len() as f64;
    mse.sqrt()
}

// ---------------------------------------------------------------------------
// Pairwise swap deltas
// ---------------------------------------------------------------------------

/// |NDCG@k change| from swapping the ranked positions of documents i and j,
/// found by physically swapping them in the ranking and recomputing DCG.
pub fn oracle_swap_delta(s: &[f64], labels: &[u32], k: Option<usize>, i: usize, j: usize) -> f64 {
    let max = oracle_max_dcg(labels, k);
    if max == 0.0 {
        return 0.0;
    }
    let ranking = oracle_ranking(s);
    let ranked: Vec<u32> = ranking.iter().map(|&d| labels[d]).collect();
    let before = oracle_dcg(&ranked, k);
    let mut swapped = ranked.clone();
    let pos_i = ranking.iter().position(|&d| d == i).unwrap();
    let pos_j = ranking.iter().position(|&d| d == j).unwrap();
    swapped.swap(pos_i, pos_j);
    let after = oracle_dcg(&swapped, k);
    ((after - before) / max).abs()
}

// ---------------------------------------------------------------------------
// Plackett-Luce enumeration
// ---------------------------------------------------------------------------

/// All permutations of 0..n in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    heap_permute(&mut items, n, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

/// Plackett-Luce probability of drawing `perm` (first element first) from
/// strengths exp(s).
pub fn pl_probability(s: &[f64], perm: &[usize]) -> f64 {
    let mut remaining: Vec<usize> = (0..s.len()).collect();
    let mut p = 1.0;
    for &chosen in perm {
        let denom: f64 = remaining.iter().map(|&i| s[i].exp()).sum();
        p *= s[chosen].exp() / denom;
        remaining.retain(|&i| i != chosen);
    }
    p
}
