//! Training loop, Adam optimizer, checkpoints, and evaluation.
//!
//! Everything a run touches is seeded: model initialization, epoch
//! shuffling, and query subsampling all draw from generators derived from
//! the config seed, so two runs of the same config produce bit-identical
//! parameters and numeric histories (wall-clock timings aside).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Tape};
use crate::data::{self, Dataset, FeatureStats};
use crate::error::{Error, Result};
use crate::fmt::format_significant;
use crate::loss::{lambdarank_gradients, loss_node, LossConfig, LossKind};
use crate::metrics::{ndcg_at_k, RankCutoff, RelevanceVector};
use crate::model::{register_params, score_documents, MlpParams, OutputActivation};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Where the data comes from: three explicit files, or one file split into
/// train/validation/test at the query level (60/20/20 by default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub valid: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Single-file mode: split this file instead.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_valid_fraction")]
    pub valid_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.6
}

fn default_valid_fraction() -> f64 {
    0.2
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.path, &self.train, &self.valid) {
            (Some(_), None, None) => {
                if self.test.is_some() {
                    return Err(Error::Config(
                        "data: single-file mode derives its own test split; drop `test`".into(),
                    ));
                }
                Ok(())
            }
            (None, Some(_), Some(_)) => Ok(()),
            _ => Err(Error::Config(
                "data: give either `path` (single file, split automatically) \
                 or both `train` and `valid` (plus optional `test`)"
                    .into(),
            )),
        }
    }
}

/// Model section of the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Full layer widths, input → hidden… → 1. The input width must match
    /// the dataset's feature count.
    pub dims: Vec<usize>,
    /// Output squashing; defaults to tanh for the sorting-relaxation losses
    /// (whose temperature assumes bounded scores) and to none otherwise.
    #[serde(default)]
    pub activation: Option<OutputActivation>,
}

/// Full training configuration, loaded from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Multiplier applied to the learning rate once, after `decay_epoch`.
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "default_decay_epoch")]
    pub decay_epoch: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Every query is padded or subsampled to this many documents.
    #[serde(default = "default_list_length")]
    pub list_length: usize,
    /// Optional L2-norm ceiling applied to each averaged batch gradient.
    /// Clipping is off when absent.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub out_dir: PathBuf,
    pub loss: LossConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
}

fn default_lr() -> f64 {
    0.001
}

fn default_decay_factor() -> f64 {
    0.1
}

fn default_decay_epoch() -> usize {
    50
}

fn default_epochs() -> usize {
    100
}

fn default_batch_size() -> usize {
    16
}

fn default_list_length() -> usize {
    240
}

fn default_seed() -> u64 {
    crate::DEFAULT_SEED
}

impl TrainConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = crate::error::io_context(std::fs::read_to_string(path), path)?;
        let config: TrainConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config("decay_factor must be in (0, 1]".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.list_length == 0 {
            return Err(Error::Config("list_length must be at least 1".into()));
        }
        if self.decay_epoch > self.epochs {
            return Err(Error::Config(format!(
                "decay_epoch ({}) must not exceed epochs ({})",
                self.decay_epoch, self.epochs
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        self.data.validate()?;
        crate::model::validate_dims(&self.model.dims).map_err(|e| Error::Config(e.to_string()))?;
        self.loss.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// The learning rate in force during a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch > self.decay_epoch {
            self.lr * self.decay_factor
        } else {
            self.lr
        }
    }

    /// Output activation after applying the loss-dependent default.
    pub fn resolved_activation(&self) -> OutputActivation {
        self.activation_or_default(self.loss.kind)
    }

    fn activation_or_default(&self, kind: LossKind) -> OutputActivation {
        self.model.activation.unwrap_or(match kind {
            LossKind::NeuralNdcg | LossKind::NeuralNdcgT => OutputActivation::Tanh,
            _ => OutputActivation::None,
        })
    }
}

/// Adam with bias correction (β₁ = 0.9, β₂ = 0.999, ε = 1e-8). Moment
/// buffers mirror [`MlpParams::arrays`] order.
pub struct Adam<F> {
    pub lr: F,
    beta1: F,
    beta2: F,
    epsilon: F,
    step_count: u64,
    m: Vec<Array<F>>,
    v: Vec<Array<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: F, params: &MlpParams<F>) -> Self {
        let zeros: Vec<Array<F>> = params
            .arrays()
            .map(|a| Array::zeros(a.shape()[0], a.shape()[1]))
            .collect();
        Self {
            lr,
            beta1: F::cast(0.9),
            beta2: F::cast(0.999),
            epsilon: F::cast(1e-8),
            step_count: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update; `grads` must mirror the parameter order.
    pub fn step(&mut self, params: &mut MlpParams<F>, grads: &[Array<F>]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "adam: {} gradient arrays for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = F::one() - self.beta1.powi(t);
        let bc2 = F::one() - self.beta2.powi(t);
        for (i, param) in params.arrays_mut().enumerate() {
            if grads[i].shape() != param.shape() {
                return Err(Error::invalid(format!(
                    "adam: gradient {i} has shape {:?}, parameter has {:?}",
                    grads[i].shape(),
                    param.shape()
                )));
            }
            let [rows, cols] = param.shape();
            let mut data = param.data().to_vec();
            let mut m = self.m[i].data().to_vec();
            let mut v = self.v[i].data().to_vec();
            for (j, g) in grads[i].data().iter().enumerate() {
                m[j] = self.beta1 * m[j] + (F::one() - self.beta1) * *g;
                v[j] = self.beta2 * v[j] + (F::one() - self.beta2) * *g * *g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            *param = Array::from_vec(rows, cols, data)?;
            self.m[i] = Array::from_vec(rows, cols, m)?;
            self.v[i] = Array::from_vec(rows, cols, v)?;
        }
        Ok(())
    }
}

/// One epoch of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss; for LambdaRank (which has no scalar loss) this is
    /// the negated mean training NDCG at the configured cutoff.
    pub loss: f64,
    pub ndcg_at_5: f64,
    pub ndcg_at_10: f64,
    pub ndcg_at_max: f64,
    pub lr: f64,
    pub seconds: f64,
}

/// Outcome of a training run: parameters of the best validation epoch.
#[derive(Debug)]
pub struct TrainOutcome<F> {
    pub params: MlpParams<F>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_ndcg_at_5: f64,
}

fn loss_applicable(kind: LossKind, y: &RelevanceVector) -> bool {
    match kind {
        LossKind::NeuralNdcg
        | LossKind::NeuralNdcgT
        | LossKind::ApproxNdcg
        | LossKind::Lambdarank => !y.is_empty_query(),
        LossKind::Ranknet => {
            let real: Vec<u32> = (0..y.len())
                .filter(|&i| y.mask()[i])
                .map(|i| y.labels()[i])
                .collect();
            real.iter().any(|&l| l != real[0])
        }
        LossKind::Listnet | LossKind::Listmle | LossKind::Rmse => y.unmasked_len() > 0,
    }
}

/// Rescale `grads` in place so their global L2 norm is at most `ceiling`.
fn clip_gradient_norm<F: Scalar>(grads: &mut [Array<F>], ceiling: F) {
    let mut sq = F::zero();
    for g in grads.iter() {
        for &v in g.data() {
            sq = sq + v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > ceiling {
        let scale = ceiling / norm;
        for g in grads.iter_mut() {
            *g = g.map(|v| v * scale);
        }
    }
}

/// Mean NDCG at a cutoff over full-length (unpadded, unsampled) queries.
pub fn mean_ndcg<F: Scalar>(
    params: &MlpParams<F>,
    dataset: &Dataset<F>,
    k: RankCutoff,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("evaluate: dataset has no queries"));
    }
    let mut total = 0.0;
    for q in &dataset.queries {
        let scores = crate::model::score_values(params, &q.features)?;
        let rv = RelevanceVector::from_labels(q.labels.to_vec());
        let v: F = ndcg_at_k(&scores, &rv, k)?;
        let v: f64 = num_traits::NumCast::from(v).expect("finite ndcg");
        total += v;
    }
    Ok(total / dataset.len() as f64)
}

/// Train on in-memory datasets (already standardized). The file-based
/// entry point is [`train`].
pub fn train_on<F: Scalar>(
    config: &TrainConfig,
    train_set: &Dataset<F>,
    valid_set: &Dataset<F>,
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::invalid("train: empty training or validation set"));
    }
    let has_relevant = train_set
        .queries
        .iter()
        .any(|q| q.labels.iter().any(|&l| l > 0));
    if !has_relevant {
        return Err(Error::invalid(
            "train: every training query is empty (all labels zero); nothing to learn",
        ));
    }
    if train_set.feature_count != config.model.dims[0] {
        return Err(Error::Config(format!(
            "model dims start at {} but the data has {} features",
            config.model.dims[0], train_set.feature_count
        )));
    }
    let activation = config.resolved_activation();
    let mut params = MlpParams::<F>::init(&config.model.dims, activation, config.seed)?;
    let mut best = params.clone();
    let mut best_ndcg = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut optimizer = Adam::new(F::cast(config.lr), &params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let lr = config.lr_at(epoch);
        optimizer.lr = F::cast(lr);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let in_batch = |e: Error| Error::Training {
                epoch,
                batch: batch_index,
                msg: e.to_string(),
            };
            let mut grad_acc: Vec<Array<F>> = params
                .arrays()
                .map(|a| Array::zeros(a.shape()[0], a.shape()[1]))
                .collect();
            let mut contributed = 0usize;
            for &qi in batch {
                let query = &train_set.queries[qi];
                if query.is_empty() {
                    continue;
                }
                let (features, rv) =
                    data::pad_or_sample(query, config.list_length, &mut shuffle_rng)?;
                if !loss_applicable(config.loss.kind, &rv) {
                    continue;
                }
                let mut tape = Tape::new();
                let nodes = register_params(&mut tape, &params);
                let scores = score_documents(&mut tape, &params, &nodes, &features).map_err(in_batch)?;
                let (objective, reported) = match config.loss.kind {
                    LossKind::Lambdarank => {
                        let s = tape.value(scores).data().to_vec();
                        let lambdas = lambdarank_gradients(&s, &rv, config.loss.k).map_err(in_batch)?;
                        // Score-space gradients enter the tape as a constant
                        // inner product, so backward composes them with the
                        // model Jacobian.
                        let lam = tape.leaf(Array::col(&lambdas)?);
                        let pseudo = tape.mul(scores, lam)?;
                        let objective = tape.sum(pseudo)?;
                        let ndcg: F = ndcg_at_k(&s, &rv, config.loss.k)?;
                        let ndcg: f64 = num_traits::NumCast::from(ndcg).expect("finite");
                        (objective, -ndcg)
                    }
                    _ => {
                        let node = loss_node(&mut tape, scores, &rv, &config.loss).map_err(in_batch)?;
                        let value: f64 = num_traits::NumCast::from(tape.value(node).item())
                            .unwrap_or(f64::NAN);
                        (node, value)
                    }
                };
                if !reported.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        batch: batch_index,
                        msg: format!("non-finite loss {reported}"),
                    });
                }
                let grads = tape.backward(objective).map_err(|e| Error::Training {
                    epoch,
                    batch: batch_index,
                    msg: e.to_string(),
                })?;
                for (acc, &node) in grad_acc.iter_mut().zip(&nodes.nodes) {
                    acc.add_assign(&grads.wrt(node)?);
                }
                loss_sum += reported;
                loss_count += 1;
                contributed += 1;
            }
            if contributed == 0 {
                continue;
            }
            let scale = F::one() / F::from_count(contributed);
            let mut grads: Vec<Array<F>> = grad_acc.iter().map(|a| a.map(|v| v * scale)).collect();
            if let Some(ceiling) = config.clip_norm {
                clip_gradient_norm(&mut grads, F::cast(ceiling));
            }
            optimizer.step(&mut params, &grads)?;
        }
        let ndcg_at_5 = mean_ndcg(&params, valid_set, RankCutoff::At(5))?;
        let ndcg_at_10 = mean_ndcg(&params, valid_set, RankCutoff::At(10))?;
        let ndcg_at_max = mean_ndcg(&params, valid_set, RankCutoff::Max)?;
        if ndcg_at_5 > best_ndcg {
            best_ndcg = ndcg_at_5;
            best = params.clone();
            best_epoch = epoch;
        }
        history.push(EpochRecord {
            epoch,
            loss: if loss_count > 0 {
                loss_sum / loss_count as f64
            } else {
                f64::NAN
            },
            ndcg_at_5,
            ndcg_at_10,
            ndcg_at_max,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
        best_valid_ndcg_at_5: best_ndcg,
    })
}

/// A trained model plus everything needed to score raw feature files.
#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar + Deserialize<'de>"))]
pub struct Checkpoint<F> {
    pub version: u32,
    #[serde(flatten)]
    pub params: MlpParams<F>,
    pub feature_stats: FeatureStats,
}

pub fn save_checkpoint<F: Scalar + Serialize>(
    path: impl AsRef<Path>,
    params: &MlpParams<F>,
    stats: &FeatureStats,
) -> Result<()> {
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        params: params.clone(),
        feature_stats: stats.clone(),
    };
    let json = serde_json::to_string_pretty(&checkpoint)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    crate::error::io_context(std::fs::write(path.as_ref(), json), path.as_ref())?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar + for<'de> Deserialize<'de>>(
    path: impl AsRef<Path>,
) -> Result<(MlpParams<F>, FeatureStats)> {
    let path = path.as_ref();
    let text = crate::error::io_context(std::fs::read_to_string(path), path)?;
    let checkpoint: Checkpoint<F> = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: version {} (this build reads {})",
            path.display(),
            checkpoint.version,
            CHECKPOINT_VERSION
        )));
    }
    checkpoint
        .params
        .check()
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if checkpoint.feature_stats.feature_count() != checkpoint.params.feature_count() {
        return Err(Error::Checkpoint(format!(
            "{}: stats cover {} features, model expects {}",
            path.display(),
            checkpoint.feature_stats.feature_count(),
            checkpoint.params.feature_count()
        )));
    }
    Ok((checkpoint.params, checkpoint.feature_stats))
}

/// Write the history CSV: one row per epoch, numeric columns at six
/// significant digits, wall time at millisecond resolution.
pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,loss,ndcg_at_5,ndcg_at_10,ndcg_at_max,lr,seconds\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3}\n",
            r.epoch,
            format_significant(r.loss, 6),
            format_significant(r.ndcg_at_5, 6),
            format_significant(r.ndcg_at_10, 6),
            format_significant(r.ndcg_at_max, 6),
            format_significant(r.lr, 6),
            r.seconds
        ));
    }
    crate::error::io_context(std::fs::write(path.as_ref(), out), path.as_ref())?;
    Ok(())
}

/// Everything produced by a file-based training run.
pub struct TrainArtifacts {
    pub outcome: TrainOutcome<f64>,
    pub stats: FeatureStats,
    pub model_path: PathBuf,
    pub history_path: PathBuf,
    /// Test-set NDCG at 5/10/max when a test split exists.
    pub test_ndcg: Option<[(RankCutoff, f64); 3]>,
}

/// Load data per the config, standardize, train, and write the model
/// checkpoint and history CSV into `out_dir`.
pub fn train(config: &TrainConfig) -> Result<TrainArtifacts> {
    config.validate()?;
    let (mut train_set, mut valid_set, mut test_set): (Dataset<f64>, Dataset<f64>, Option<Dataset<f64>>) =
        match &config.data.path {
            Some(path) => {
                let all = data::read_letor(path)?;
                let (tr, va, te) = data::split(
                    &all,
                    config.data.train_fraction,
                    config.data.valid_fraction,
                    config.seed,
                )?;
                (tr, va, Some(te))
            }
            None => {
                let tr = data::read_letor(config.data.train.as_ref().expect("validated"))?;
                let va = data::read_letor(config.data.valid.as_ref().expect("validated"))?;
                let te = match &config.data.test {
                    Some(p) => Some(data::read_letor(p)?),
                    None => None,
                };
                (tr, va, te)
            }
        };
    if train_set.feature_count != config.model.dims[0] {
        return Err(Error::Config(format!(
            "model dims start at {} but the data has {} features",
            config.model.dims[0], train_set.feature_count
        )));
    }
    let stats = FeatureStats::fit(&train_set)?;
    stats.apply(&mut train_set)?;
    // Sparse files can come out narrower than the training width; features
    // absent from training (a wider file) are an error inside widen.
    data::widen_features(&mut valid_set, train_set.feature_count)?;
    stats.apply(&mut valid_set)?;
    if let Some(te) = &mut test_set {
        data::widen_features(te, train_set.feature_count)?;
        stats.apply(te)?;
    }

    let outcome = train_on(config, &train_set, &valid_set)?;

    std::fs::create_dir_all(&config.out_dir)?;
    let model_path = config.out_dir.join("model.json");
    let history_path = config.out_dir.join("history.csv");
    save_checkpoint(&model_path, &outcome.params, &stats)?;
    write_history(&history_path, &outcome.history)?;

    let test_ndcg = match &test_set {
        Some(te) if !te.is_empty() => Some([
            (
                RankCutoff::At(5),
                mean_ndcg(&outcome.params, te, RankCutoff::At(5))?,
            ),
            (
                RankCutoff::At(10),
                mean_ndcg(&outcome.params, te, RankCutoff::At(10))?,
            ),
            (
                RankCutoff::Max,
                mean_ndcg(&outcome.params, te, RankCutoff::Max)?,
            ),
        ]),
        _ => None,
    };

    Ok(TrainArtifacts {
        outcome,
        stats,
        model_path,
        history_path,
        test_ndcg,
    })
}
