//! Feed-forward scoring model.
//!
//! A small MLP maps each document's feature vector to a scalar score. The
//! whole list is scored in one batched pass: features enter as an n×d
//! matrix, every layer is a matmul plus a broadcast bias, hidden layers use
//! ReLU, and the output layer optionally squashes through tanh (useful for
//! the sorting-based losses, whose temperature assumes bounded scores).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, NodeId, Tape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output-layer squashing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    None,
    Tanh,
}

/// One dense layer: weights are fan_in×fan_out, bias is 1×fan_out.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar + Deserialize<'de>"))]
pub struct Layer<F> {
    pub weights: Array<F>,
    pub bias: Array<F>,
}

/// MLP parameters: layer dims run input→hidden…→1.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar + Deserialize<'de>"))]
pub struct MlpParams<F> {
    pub dims: Vec<usize>,
    pub output_activation: OutputActivation,
    pub layers: Vec<Layer<F>>,
}

/// Check a dims chain: at least [d, 1], all positive, output width 1.
pub fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid(format!(
            "model: dims {dims:?} needs an input and an output width"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!("model: zero width in dims {dims:?}")));
    }
    if *dims.last().unwrap() != 1 {
        return Err(Error::invalid(format!(
            "model: dims {dims:?} must end in an output width of 1"
        )));
    }
    Ok(())
}

impl<F: Scalar> MlpParams<F> {
    /// Xavier-uniform weights (±√(6/(fan_in+fan_out))), zero biases, drawn
    /// from a seeded generator so identical seeds give identical models.
    pub fn init(dims: &[usize], output_activation: OutputActivation, seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<F> = (0..fan_in * fan_out)
                .map(|_| F::cast(rng.gen_range(-bound..=bound)))
                .collect();
            layers.push(Layer {
                weights: Array::from_vec(fan_in, fan_out, data)?,
                bias: Array::zeros(1, fan_out),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            output_activation,
            layers,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.dims[0]
    }

    /// Walk every parameter array in a fixed order (weights then bias, layer
    /// by layer) — the optimizer relies on this order being stable.
    pub fn arrays(&self) -> impl Iterator<Item = &Array<F>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias])
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut Array<F>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    pub fn parameter_count(&self) -> usize {
        self.arrays().map(|a| a.data().len()).sum()
    }

    /// Validate shapes after deserialization.
    pub fn check(&self) -> Result<()> {
        validate_dims(&self.dims)?;
        if self.layers.len() != self.dims.len() - 1 {
            return Err(Error::invalid(format!(
                "model: {} layers but dims {:?}",
                self.layers.len(),
                self.dims
            )));
        }
        for (i, (layer, pair)) in self.layers.iter().zip(self.dims.windows(2)).enumerate() {
            if layer.weights.shape() != [pair[0], pair[1]] || layer.bias.shape() != [1, pair[1]] {
                return Err(Error::invalid(format!(
                    "model: layer {i} shapes {:?}/{:?} do not match dims {:?}",
                    layer.weights.shape(),
                    layer.bias.shape(),
                    self.dims
                )));
            }
        }
        Ok(())
    }
}

/// Parameter nodes registered on a tape, mirroring [`MlpParams::arrays`].
pub struct ModelNodes {
    pub nodes: Vec<NodeId>,
}

/// Put every parameter on the tape as a leaf.
pub fn register_params<F: Scalar>(tape: &mut Tape<F>, params: &MlpParams<F>) -> ModelNodes {
    ModelNodes {
        nodes: params.arrays().map(|a| tape.leaf(a.clone())).collect(),
    }
}

/// Score an n×d feature matrix, producing an n×1 column of scores.
pub fn score_documents<F: Scalar>(
    tape: &mut Tape<F>,
    params: &MlpParams<F>,
    nodes: &ModelNodes,
    features: &Array<F>,
) -> Result<NodeId> {
    params.check()?;
    if features.shape()[1] != params.feature_count() {
        return Err(Error::ShapeMismatch {
            op: "score",
            lhs: features.shape().to_vec(),
            rhs: vec![features.shape()[0], params.feature_count()],
        });
    }
    let n = features.shape()[0];
    let ones = tape.leaf(Array::ones(n, 1));
    let mut x = tape.leaf(features.clone());
    let last = params.layers.len() - 1;
    for (i, pair) in nodes.nodes.chunks(2).enumerate() {
        let (w, b) = (pair[0], pair[1]);
        let wx = tape.matmul(x, w)?;
        let bias_rows = tape.matmul(ones, b)?;
        let z = tape.add(wx, bias_rows)?;
        x = if i < last {
            tape.clamp(z, F::zero(), F::infinity())?
        } else {
            match params.output_activation {
                OutputActivation::None => z,
                OutputActivation::Tanh => tape.tanh(z)?,
            }
        };
    }
    Ok(x)
}

/// Score documents without building a tape (evaluation path).
pub fn score_values<F: Scalar>(params: &MlpParams<F>, features: &Array<F>) -> Result<Vec<F>> {
    let mut tape = Tape::new();
    let nodes = register_params(&mut tape, params);
    let out = score_documents(&mut tape, params, &nodes, features)?;
    Ok(tape.value(out).data().to_vec())
}
