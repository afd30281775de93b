//! Exact, non-differentiable ranking metrics: gain, discount, DCG@k, NDCG@k.
//!
//! Conventions used throughout the crate: ranking is by descending score with
//! ties broken by original index; padded (masked) documents sort after all
//! real ones and never contribute to a metric; a query whose real documents
//! all have label 0 evaluates to NDCG = 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Graded relevance labels plus a padding mask (`true` = real document).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelevanceVector {
    labels: Vec<u32>,
    mask: Vec<bool>,
}

impl RelevanceVector {
    /// Labels with an explicit mask. Masked-out entries must carry label 0.
    pub fn new(labels: Vec<u32>, mask: Vec<bool>) -> Result<Self> {
        if labels.len() != mask.len() {
            return Err(Error::invalid(format!(
                "relevance: {} labels vs {} mask entries",
                labels.len(),
                mask.len()
            )));
        }
        if labels.iter().zip(&mask).any(|(&l, &m)| !m && l != 0) {
            return Err(Error::invalid("relevance: masked entry with nonzero label"));
        }
        Ok(Self { labels, mask })
    }

    /// All-real labels (mask entirely true).
    pub fn from_labels(labels: Vec<u32>) -> Self {
        let mask = vec![true; labels.len()];
        Self { labels, mask }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn unmasked_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// True when no real document has a positive label — the "empty query"
    /// of the evaluation convention.
    pub fn is_empty_query(&self) -> bool {
        self.labels
            .iter()
            .zip(&self.mask)
            .all(|(&l, &m)| !m || l == 0)
    }
}

/// Rank cutoff: a fixed position or the full list length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CutoffRepr", into = "CutoffRepr")]
pub enum RankCutoff {
    At(usize),
    Max,
}

impl RankCutoff {
    pub fn at(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("cutoff: k must be at least 1"));
        }
        Ok(RankCutoff::At(k))
    }

    /// Cutoff actually applied to a list with `real` unmasked documents.
    pub fn effective(self, real: usize) -> usize {
        match self {
            RankCutoff::At(k) => k.min(real),
            RankCutoff::Max => real,
        }
    }
}

impl std::fmt::Display for RankCutoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RankCutoff::At(k) => write!(f, "{k}"),
            RankCutoff::Max => write!(f, "max"),
        }
    }
}

impl std::str::FromStr for RankCutoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(RankCutoff::Max);
        }
        let k: usize = s
            .parse()
            .map_err(|_| Error::invalid(format!("cutoff: expected integer or 'max', got {s:?}")))?;
        RankCutoff::at(k)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CutoffRepr {
    Int(u64),
    Str(String),
}

impl TryFrom<CutoffRepr> for RankCutoff {
    type Error = String;

    fn try_from(r: CutoffRepr) -> std::result::Result<Self, String> {
        match r {
            CutoffRepr::Int(k) => RankCutoff::at(k as usize).map_err(|e| e.to_string()),
            CutoffRepr::Str(s) => s.parse().map_err(|e: Error| e.to_string()),
        }
    }
}

impl From<RankCutoff> for CutoffRepr {
    fn from(k: RankCutoff) -> Self {
        match k {
            RankCutoff::At(k) => CutoffRepr::Int(k as u64),
            RankCutoff::Max => CutoffRepr::Str("max".into()),
        }
    }
}

/// Gain of a relevance label: 2^r − 1.
pub fn gain<F: Scalar>(r: u32) -> F {
    F::cast((r as f64).exp2() - 1.0)
}

/// Positional discount 1/log₂(j+1) for a 1-based rank j.
pub fn discount<F: Scalar>(j: usize) -> Result<F> {
    if j < 1 {
        return Err(Error::invalid("discount: rank must be at least 1"));
    }
    Ok(F::cast(1.0 / ((j + 1) as f64).log2()))
}

/// Order of document indices induced by descending scores: stable, ties by
/// original index, masked documents after all real ones.
pub fn ranking_permutation<F: Scalar>(s: &[F], y: &RelevanceVector) -> Result<Vec<usize>> {
    if s.len() != y.len() {
        return Err(Error::invalid(format!(
            "ranking: {} scores vs {} labels",
            s.len(),
            y.len()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("ranking: non-finite score"));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| {
        y.mask[b]
            .cmp(&y.mask[a])
            .then(s[b].partial_cmp(&s[a]).expect("finite scores"))
            .then(a.cmp(&b))
    });
    Ok(order)
}

/// Relevance labels rearranged into descending-score order.
pub fn sort_by_scores<F: Scalar>(s: &[F], y: &RelevanceVector) -> Result<RelevanceVector> {
    let order = ranking_permutation(s, y)?;
    let labels = order.iter().map(|&i| y.labels[i]).collect();
    let mask = order.iter().map(|&i| y.mask[i]).collect();
    Ok(RelevanceVector { labels, mask })
}

/// DCG over the first `k` (effective) ranks of an already-ordered list.
pub fn dcg_at_k<F: Scalar>(ranked: &RelevanceVector, k: RankCutoff) -> F {
    let eff = k.effective(ranked.unmasked_len());
    let mut acc = F::zero();
    for j in 1..=eff {
        let d: F = discount(j).expect("rank >= 1");
        acc = acc + gain::<F>(ranked.labels[j - 1]) * d;
    }
    acc
}

/// DCG of the ideal ordering of `y` (labels sorted descending).
pub fn max_dcg<F: Scalar>(y: &RelevanceVector, k: RankCutoff) -> F {
    let mut labels: Vec<u32> = y
        .labels
        .iter()
        .zip(&y.mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .collect();
    labels.sort_unstable_by(|a, b| b.cmp(a));
    let n = labels.len();
    dcg_at_k(
        &RelevanceVector {
            labels,
            mask: vec![true; n],
        },
        k,
    )
}

/// NDCG@k of the ranking induced by `s`. Empty queries score 1.
pub fn ndcg_at_k<F: Scalar>(s: &[F], y: &RelevanceVector, k: RankCutoff) -> Result<F> {
    if y.is_empty_query() {
        return Ok(F::one());
    }
    let ranked = sort_by_scores(s, y)?;
    let ideal: F = max_dcg(y, k);
    Ok(dcg_at_k::<F>(&ranked, k) / ideal)
}
