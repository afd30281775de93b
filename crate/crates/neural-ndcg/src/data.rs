//! Dataset IO and preparation.
//!
//! Reads the standard SVMlight-style ranking format: one document per line,
//! `<label> qid:<query> <feature>:<value> ...`, with `#` starting a comment.
//! Feature ids are 1-based and sparse; the dataset's width is the largest id
//! seen anywhere, absent features are 0. Gzipped files are detected by their
//! magic bytes and decompressed transparently.
//!
//! Also here: per-feature standardization (with automatic log-compression of
//! wide-ranged features), padding/subsampling of queries to a fixed list
//! length, seeded query-level splits, and a synthetic dataset generator used
//! by the smoke-training tests.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use flate2::bufread::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::metrics::RelevanceVector;
use crate::scalar::Scalar;

/// Features above this magnitude get log-compressed before standardizing.
pub const LOG_SCALE_THRESHOLD: f64 = 1e3;

/// Standard deviations below this floor count as constant features.
pub const STD_FLOOR: f64 = 1e-12;

/// One query: an n×d feature matrix and n graded labels.
#[derive(Clone, Debug)]
pub struct Query<F> {
    pub qid: String,
    pub features: Array<F>,
    pub labels: Vec<u32>,
}

impl<F: Scalar> Query<F> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A list of queries sharing one feature width.
#[derive(Clone, Debug)]
pub struct Dataset<F> {
    pub queries: Vec<Query<F>>,
    pub feature_count: usize,
}

impl<F: Scalar> Dataset<F> {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn total_documents(&self) -> usize {
        self.queries.iter().map(Query::len).sum()
    }
}

struct RawDoc {
    label: u32,
    features: Vec<(u32, f64)>,
}

fn parse_line(line_no: usize, line: &str) -> Result<Option<(String, RawDoc)>> {
    let body = line.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let err = |msg: String| Error::Parse {
        line: line_no,
        msg,
    };
    let mut tokens = body.split_whitespace();
    let label_tok = tokens.next().expect("non-empty body");
    let label: u32 = label_tok
        .parse()
        .map_err(|_| err(format!("label {label_tok:?} is not a non-negative integer")))?;
    let qid_tok = tokens
        .next()
        .ok_or_else(|| err("missing qid field".into()))?;
    let qid = qid_tok
        .strip_prefix("qid:")
        .ok_or_else(|| err(format!("expected qid:<id>, found {qid_tok:?}")))?;
    if qid.is_empty() {
        return Err(err("empty qid".into()));
    }
    let mut features = Vec::new();
    let mut seen = HashMap::new();
    for tok in tokens {
        let (fid, val) = tok
            .split_once(':')
            .ok_or_else(|| err(format!("expected <feature>:<value>, found {tok:?}")))?;
        let fid: u32 = fid
            .parse()
            .map_err(|_| err(format!("feature id {fid:?} is not an integer")))?;
        if fid == 0 {
            return Err(err("feature ids are 1-based".into()));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| err(format!("feature value {val:?} is not a number")))?;
        if !val.is_finite() {
            return Err(err(format!("feature {fid} has non-finite value")));
        }
        if seen.insert(fid, ()).is_some() {
            return Err(err(format!("feature {fid} repeated")));
        }
        features.push((fid, val));
    }
    Ok(Some((qid.to_string(), RawDoc { label, features })))
}

/// Parse the ranking format from any reader. Queries keep their
/// first-appearance order even when a qid's lines are interleaved.
pub fn parse_letor<F: Scalar, R: BufRead>(reader: R) -> Result<Dataset<F>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<RawDoc>> = HashMap::new();
    let mut width: u32 = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some((qid, doc)) = parse_line(i + 1, &line)? {
            for &(fid, _) in &doc.features {
                width = width.max(fid);
            }
            groups
                .entry(qid)
                .or_insert_with_key(|k| {
                    order.push(k.clone());
                    Vec::new()
                })
                .push(doc);
        }
    }
    let d = width as usize;
    let mut queries = Vec::with_capacity(order.len());
    for qid in order {
        let docs = groups.remove(&qid).expect("every ordered qid has a group");
        let n = docs.len();
        let mut data = vec![F::zero(); n * d];
        let mut labels = Vec::with_capacity(n);
        for (row, doc) in docs.into_iter().enumerate() {
            labels.push(doc.label);
            for (fid, val) in doc.features {
                data[row * d + (fid as usize - 1)] = F::cast(val);
            }
        }
        queries.push(Query {
            qid,
            features: Array::from_vec(n, d, data)?,
            labels,
        });
    }
    Ok(Dataset {
        queries,
        feature_count: d,
    })
}

/// Read a dataset from a file, decompressing gzip when the magic bytes match.
pub fn read_letor<F: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<F>> {
    let path = path.as_ref();
    let mut reader = BufReader::new(crate::error::io_context(File::open(path), path)?);
    let magic = reader.fill_buf()?;
    if magic.len() >= 2 && magic[0] == 0x1f && magic[1] == 0x8b {
        parse_letor(BufReader::new(GzDecoder::new(reader)))
    } else {
        parse_letor(reader)
    }
}

/// Write a dataset in the same format, densely (every feature id 1..=d).
pub fn write_letor<F: Scalar>(dataset: &Dataset<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(crate::error::io_context(File::create(path), path)?);
    for query in &dataset.queries {
        for row in 0..query.len() {
            write!(out, "{} qid:{}", query.labels[row], query.qid)?;
            for j in 0..dataset.feature_count {
                let v: f64 = num_traits::NumCast::from(query.features.get(row, j))
                    .expect("finite feature");
                write!(out, " {}:{}", j + 1, v)?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Widen a dataset to `d` features by appending zero columns; sparse files
/// can come out narrower than the width a model was trained with. Datasets
/// wider than `d` are rejected.
pub fn widen_features<F: Scalar>(dataset: &mut Dataset<F>, d: usize) -> Result<()> {
    if dataset.feature_count > d {
        return Err(Error::invalid(format!(
            "data: {} features where at most {d} are expected",
            dataset.feature_count
        )));
    }
    if dataset.feature_count == d {
        return Ok(());
    }
    let old = dataset.feature_count;
    for q in &mut dataset.queries {
        let n = q.len();
        let mut data = Vec::with_capacity(n * d);
        for row in 0..n {
            data.extend_from_slice(&q.features.data()[row * old..(row + 1) * old]);
            data.extend(std::iter::repeat(F::zero()).take(d - old));
        }
        q.features = Array::from_vec(n, d, data)?;
    }
    dataset.feature_count = d;
    Ok(())
}

/// Per-feature standardization fitted on a training split and reapplied at
/// evaluation time. Wide-ranged features (|value| beyond
/// [`LOG_SCALE_THRESHOLD`]) are first compressed with sign(x)·ln(1+|x|);
/// constant features standardize to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub log_scale: Vec<bool>,
}

fn log_compress(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

impl FeatureStats {
    pub fn fit<F: Scalar>(dataset: &Dataset<F>) -> Result<Self> {
        if dataset.total_documents() == 0 {
            return Err(Error::invalid("standardize: no documents to fit on"));
        }
        let d = dataset.feature_count;
        let mut log_scale = vec![false; d];
        for q in &dataset.queries {
            for row in 0..q.len() {
                for j in 0..d {
                    let v: f64 = num_traits::NumCast::from(q.features.get(row, j)).unwrap();
                    if v.abs() > LOG_SCALE_THRESHOLD {
                        log_scale[j] = true;
                    }
                }
            }
        }
        let n = dataset.total_documents().max(1) as f64;
        let mut mean = vec![0.0; d];
        for q in &dataset.queries {
            for row in 0..q.len() {
                for j in 0..d {
                    let v: f64 = num_traits::NumCast::from(q.features.get(row, j)).unwrap();
                    mean[j] += if log_scale[j] { log_compress(v) } else { v };
                }
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for q in &dataset.queries {
            for row in 0..q.len() {
                for j in 0..d {
                    let v: f64 = num_traits::NumCast::from(q.features.get(row, j)).unwrap();
                    let t = if log_scale[j] { log_compress(v) } else { v };
                    var[j] += (t - mean[j]) * (t - mean[j]);
                }
            }
        }
        let std = var
            .iter()
            .map(|&s| {
                let sd = (s / n).sqrt();
                if sd < STD_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self {
            mean,
            std,
            log_scale,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.mean.len()
    }

    /// Standardize a dataset in place.
    pub fn apply<F: Scalar>(&self, dataset: &mut Dataset<F>) -> Result<()> {
        if dataset.feature_count != self.feature_count() {
            return Err(Error::invalid(format!(
                "standardize: stats cover {} features, dataset has {}",
                self.feature_count(),
                dataset.feature_count
            )));
        }
        for q in &mut dataset.queries {
            let [rows, cols] = q.features.shape();
            let mut data = q.features.data().to_vec();
            for (idx, slot) in data.iter_mut().enumerate() {
                let j = idx % cols;
                let v: f64 = num_traits::NumCast::from(*slot).unwrap();
                let t = if self.log_scale[j] { log_compress(v) } else { v };
                *slot = F::cast((t - self.mean[j]) / self.std[j]);
            }
            q.features = Array::from_vec(rows, cols, data)?;
        }
        Ok(())
    }
}

/// A query forced to a fixed list length: padded with masked zero rows when
/// short, subsampled without replacement when long.
pub fn pad_or_sample<F: Scalar>(
    query: &Query<F>,
    list_length: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Array<F>, RelevanceVector)> {
    if list_length == 0 {
        return Err(Error::invalid("pad_or_sample: list length must be positive"));
    }
    let n = query.len();
    let d = query.features.shape()[1];
    let take: Vec<usize> = if n > list_length {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let mut chosen = idx[..list_length].to_vec();
        chosen.sort_unstable();
        chosen
    } else {
        (0..n).collect()
    };
    let mut data = Vec::with_capacity(list_length * d);
    let mut labels = Vec::with_capacity(list_length);
    let mut mask = Vec::with_capacity(list_length);
    for &i in &take {
        data.extend_from_slice(&query.features.data()[i * d..(i + 1) * d]);
        labels.push(query.labels[i]);
        mask.push(true);
    }
    while labels.len() < list_length {
        data.extend(std::iter::repeat(F::zero()).take(d));
        labels.push(0);
        mask.push(false);
    }
    Ok((
        Array::from_vec(list_length, d, data)?,
        RelevanceVector::new(labels, mask)?,
    ))
}

/// Split a dataset at the query level into train/validation/test parts with
/// the given fractions (test takes the remainder), shuffled by seed.
pub fn split<F: Scalar>(
    dataset: &Dataset<F>,
    train_fraction: f64,
    valid_fraction: f64,
    seed: u64,
) -> Result<(Dataset<F>, Dataset<F>, Dataset<F>)> {
    if !(0.0..=1.0).contains(&train_fraction)
        || !(0.0..=1.0).contains(&valid_fraction)
        || train_fraction + valid_fraction > 1.0
    {
        return Err(Error::invalid(format!(
            "split: fractions {train_fraction}/{valid_fraction} out of range"
        )));
    }
    let n = dataset.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "split: need at least 3 queries to form train/valid/test, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = (n as f64 * train_fraction).round() as usize;
    let n_valid = ((n as f64 * valid_fraction).round() as usize).min(n - n_train);
    let pick = |range: &[usize]| Dataset {
        queries: range.iter().map(|&i| dataset.queries[i].clone()).collect(),
        feature_count: dataset.feature_count,
    };
    Ok((
        pick(&idx[..n_train]),
        pick(&idx[n_train..n_train + n_valid]),
        pick(&idx[n_train + n_valid..]),
    ))
}

/// Shape of a generated dataset.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub queries: usize,
    pub docs_per_query: usize,
    pub features: usize,
    /// Top relevance grade; labels cover 0..=levels.
    pub levels: u32,
    /// Uniform noise half-width added to the planted utility before grading.
    pub noise: f64,
    pub seed: u64,
}

/// Generate a dataset with a planted linear utility: features are uniform in
/// [−1, 1], each document's utility is w·x plus noise, and labels grade the
/// noisy utility into `levels + 1` per-query quantile bins.
pub fn generate_synthetic<F: Scalar>(spec: &SyntheticSpec) -> Result<(Dataset<F>, Vec<f64>)> {
    if spec.queries == 0 || spec.docs_per_query == 0 || spec.features == 0 {
        return Err(Error::invalid("synthetic: all dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = (0..spec.features)
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    let mut queries = Vec::with_capacity(spec.queries);
    for qi in 0..spec.queries {
        let n = spec.docs_per_query;
        let mut data = Vec::with_capacity(n * spec.features);
        let mut utilities = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..spec.features)
                .map(|_| rng.gen_range(-1.0..=1.0))
                .collect();
            let u: f64 = x.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
                + spec.noise * rng.gen_range(-1.0..=1.0);
            utilities.push(u);
            data.extend(x.into_iter().map(F::cast));
        }
        // Grade by per-query rank quantile: the top bin gets the top grade.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| utilities[b].total_cmp(&utilities[a]));
        let bins = spec.levels as usize + 1;
        let mut labels = vec![0u32; n];
        for (rank, &doc) in order.iter().enumerate() {
            let bin = rank * bins / n;
            labels[doc] = (spec.levels as usize - bin.min(spec.levels as usize)) as u32;
        }
        queries.push(Query {
            qid: format!("{}", qi + 1),
            features: Array::from_vec(n, spec.features, data)?,
            labels,
        });
    }
    Ok((
        Dataset {
            queries,
            feature_count: spec.features,
        },
        weights,
    ))
}
