//! Message-passing models built from a propagation operator and a chain
//! of dense layers, plus the structure-free view obtained by swapping
//! the operator for the identity.

mod checkpoint;
mod forward;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub(crate) use checkpoint::{read_layers, write_layers};
pub use forward::{
    forward, forward_on_tape, mlp_forward, split_extractor_classifier, Classifier, Extractor, ForwardOutput, Mode,
    ParamVars, TapeForward,
};

use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{identity_propagation, normalize_gcn, normalize_mean, Graph};
use crate::rng::{self, streams, SeededRng};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, SparseCsr};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub has_activation: bool,
    pub dropout_p: f64,
}

impl LayerSpec {
    /// `in_dim -> hidden[0] -> ... -> out_dim`, ReLU on every layer but the last.
    pub fn chain(in_dim: usize, hidden: &[usize], out_dim: usize, dropout_p: f64) -> Vec<LayerSpec> {
        let dims: Vec<usize> = std::iter::once(in_dim).chain(hidden.iter().copied()).chain([out_dim]).collect();
        let last = dims.len() - 2;
        dims.windows(2)
            .enumerate()
            .map(|(l, w)| LayerSpec {
                in_dim: w[0],
                out_dim: w[1],
                has_activation: l != last,
                dropout_p,
            })
            .collect()
    }

    pub fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
        let Some(last) = specs.last() else {
            return Err(Error::Structure("model needs at least one layer".into()));
        };
        if last.has_activation {
            return Err(Error::Structure("final layer must not have an activation".into()));
        }
        for (l, s) in specs.iter().enumerate() {
            if !(0.0..1.0).contains(&s.dropout_p) {
                return Err(Error::Range(format!("layer {l} dropout {} outside [0, 1)", s.dropout_p)));
            }
            if s.in_dim == 0 || s.out_dim == 0 {
                return Err(Error::Structure(format!("layer {l} has a zero dimension")));
            }
        }
        for (l, w) in specs.windows(2).enumerate() {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Structure(format!(
                    "layer {l} emits {} features but layer {} expects {}",
                    w[0].out_dim,
                    l + 1,
                    w[1].in_dim
                )));
            }
        }
        Ok(())
    }
}

/// Weights `in_dim x out_dim` and `1 x out_dim` biases for every layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub specs: Vec<LayerSpec>,
    pub weights: Vec<Matrix<T>>,
    pub biases: Vec<Matrix<T>>,
}

/// Glorot-uniform weights and zero biases.
pub fn init_params<T: Scalar>(specs: &[LayerSpec], seed: u64) -> Result<ModelParams<T>> {
    LayerSpec::validate_chain(specs)?;
    let mut r = rng::stream(seed, streams::INIT);
    Ok(ModelParams::glorot(specs, &mut r))
}

impl<T: Scalar> ModelParams<T> {
    pub(crate) fn glorot<R: Rng + ?Sized>(specs: &[LayerSpec], r: &mut R) -> Self {
        let weights = specs
            .iter()
            .map(|s| {
                let bound = (6.0 / (s.in_dim + s.out_dim) as f64).sqrt();
                rng::uniform(r, s.in_dim, s.out_dim, -bound, bound)
            })
            .collect();
        let biases = specs.iter().map(|s| Matrix::zeros(1, s.out_dim)).collect();
        Self {
            specs: specs.to_vec(),
            weights,
            biases,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.specs.len()
    }

    pub fn in_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].out_dim
    }

    /// Width of the classifier input.
    pub fn repr_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].in_dim
    }

    pub fn validate(&self) -> Result<()> {
        LayerSpec::validate_chain(&self.specs)?;
        if self.weights.len() != self.specs.len() || self.biases.len() != self.specs.len() {
            return Err(Error::Structure("parameter count does not match layer count".into()));
        }
        for (l, s) in self.specs.iter().enumerate() {
            if self.weights[l].shape() != (s.in_dim, s.out_dim) || self.biases[l].shape() != (1, s.out_dim) {
                return Err(Error::Structure(format!("layer {l} parameters do not match its spec")));
            }
        }
        Ok(())
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        for s in &mut self.specs {
            s.dropout_p = p;
        }
        self
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(Matrix::all_finite)
    }

    /// Weights and biases flattened layer by layer, weights first.
    pub fn tensors(&self) -> impl Iterator<Item = &Matrix<T>> {
        self.weights.iter().chain(&self.biases)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Matrix<T>> {
        self.weights.iter_mut().chain(&mut self.biases)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationKind {
    GcnSym,
    Mean,
    Identity,
}

/// A resolved propagation operator.
#[derive(Clone, Debug)]
pub struct Propagation<T> {
    pub kind: PropagationKind,
    pub op: Arc<SparseCsr<T>>,
}

impl<T: Scalar> Propagation<T> {
    pub fn build(kind: PropagationKind, g: &Graph<T>) -> Self {
        let op = match kind {
            PropagationKind::GcnSym => normalize_gcn(g),
            PropagationKind::Mean => normalize_mean(g),
            PropagationKind::Identity => identity_propagation(g.n()),
        };
        Self { kind, op: Arc::new(op) }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            kind: PropagationKind::Identity,
            op: Arc::new(identity_propagation(n)),
        }
    }

    pub fn n(&self) -> usize {
        self.op.rows()
    }
}

pub type SharedParams<T> = Arc<RwLock<ModelParams<T>>>;

/// Parameters together with the operator they propagate over. Clones and
/// derived models share the same parameter object.
#[derive(Clone, Debug)]
pub struct Model<T> {
    params: SharedParams<T>,
    pub prop: Propagation<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(params: ModelParams<T>, prop: Propagation<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: Arc::new(RwLock::new(params)),
            prop,
        })
    }

    pub fn shared(&self) -> &SharedParams<T> {
        &self.params
    }

    pub fn params(&self) -> RwLockReadGuard<'_, ModelParams<T>> {
        self.params.read().expect("parameter lock poisoned")
    }

    pub fn params_mut(&self) -> RwLockWriteGuard<'_, ModelParams<T>> {
        self.params.write().expect("parameter lock poisoned")
    }

    pub fn snapshot(&self) -> ModelParams<T> {
        self.params().clone()
    }

    pub fn shares_params_with(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.params, &other.params)
    }

    /// Same parameters, identity propagation.
    pub fn derive_mlp(&self) -> Self {
        Self {
            params: Arc::clone(&self.params),
            prop: Propagation::identity(self.prop.n()),
        }
    }

    /// Same parameters over a different operator.
    pub fn with_propagation(&self, prop: Propagation<T>) -> Self {
        Self {
            params: Arc::clone(&self.params),
            prop,
        }
    }

    pub fn forward(&self, x: &Matrix<T>, mode: Mode<'_>) -> Result<ForwardOutput<T>> {
        forward(&self.params(), &self.prop, x, mode)
    }

    pub fn eval(&self, x: &Matrix<T>) -> Result<ForwardOutput<T>> {
        self.forward(x, Mode::Eval)
    }
}

pub(crate) fn dropout_mask<T: Scalar>(r: &mut SeededRng, rows: usize, cols: usize, p: f64) -> Matrix<T> {
    let keep = T::lit(1.0 / (1.0 - p));
    let data = (0..rows * cols)
        .map(|_| if r.random::<f64>() < p { T::zero() } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("mask shape")
}

#[cfg(test)]
mod tests;
