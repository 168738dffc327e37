use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::{dropout_mask, ModelParams, Propagation};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::{kernels, Matrix, SparseCsr, Tape, Var};

pub enum Mode<'r> {
    Eval,
    /// Dropout active, masks drawn from the given stream.
    Train(&'r mut SeededRng),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<T> {
    /// Classifier input: the propagated output of the penultimate layer.
    pub representations: Matrix<T>,
    pub logits: Matrix<T>,
    pub probabilities: Matrix<T>,
}

/// Tape handles for every weight and bias.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

impl ParamVars {
    /// Registers trainable parameters.
    pub fn trainable<T: Scalar>(tape: &mut Tape<T>, p: &ModelParams<T>) -> Self {
        Self {
            weights: p.weights.iter().map(|w| tape.param(w.clone())).collect(),
            biases: p.biases.iter().map(|b| tape.param(b.clone())).collect(),
        }
    }

    /// Registers parameters as constants.
    pub fn frozen<T: Scalar>(tape: &mut Tape<T>, p: &ModelParams<T>) -> Self {
        Self {
            weights: p.weights.iter().map(|w| tape.constant(w.clone())).collect(),
            biases: p.biases.iter().map(|b| tape.constant(b.clone())).collect(),
        }
    }

    /// Handles in the order of [`ModelParams::tensors`].
    pub fn all(&self) -> Vec<Var> {
        self.weights.iter().chain(&self.biases).copied().collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TapeForward {
    pub representations: Var,
    pub logits: Var,
}

pub fn forward_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    vars: &ParamVars,
    prop: &Arc<SparseCsr<T>>,
    x: Var,
    mut dropout: Option<&mut SeededRng>,
) -> Result<TapeForward> {
    let (n, d) = tape.value(x).shape();
    if d != params.in_dim() {
        return Err(Error::Dimension {
            op: "forward",
            lhs: (n, d),
            rhs: (params.in_dim(), params.out_dim()),
        });
    }
    let last = params.num_layers() - 1;
    let mut z = x;
    let mut representations = x;
    for (l, spec) in params.specs.iter().enumerate() {
        let mut h = tape.spmm(prop, z)?;
        if l == last {
            representations = h;
        }
        if let Some(r) = dropout.as_deref_mut() {
            if spec.dropout_p > 0.0 {
                let (rows, cols) = tape.value(h).shape();
                h = tape.mask(h, dropout_mask(r, rows, cols, spec.dropout_p))?;
            }
        }
        let lin = tape.matmul(h, vars.weights[l])?;
        z = tape.add_bias(lin, vars.biases[l])?;
        if spec.has_activation {
            z = tape.relu(z);
        }
    }
    Ok(TapeForward {
        representations,
        logits: z,
    })
}

pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    prop: &Propagation<T>,
    x: &Matrix<T>,
    mode: Mode<'_>,
) -> Result<ForwardOutput<T>> {
    if prop.n() != x.rows() {
        return Err(Error::Dimension {
            op: "forward",
            lhs: (prop.n(), prop.n()),
            rhs: x.shape(),
        });
    }
    let mut tape = Tape::new();
    let vars = ParamVars::frozen(&mut tape, params);
    let xv = tape.constant(x.clone());
    let rng = match mode {
        Mode::Eval => None,
        Mode::Train(r) => Some(r),
    };
    let out = forward_on_tape(&mut tape, params, &vars, &prop.op, xv, rng)?;
    let logits = tape.value(out.logits).clone();
    Ok(ForwardOutput {
        representations: tape.value(out.representations).clone(),
        probabilities: kernels::softmax_rows(&logits),
        logits,
    })
}

/// Dense evaluation chain with no propagation step.
pub fn mlp_forward<T: Scalar>(params: &ModelParams<T>, x: &Matrix<T>) -> Result<ForwardOutput<T>> {
    let mut z = x.clone();
    let mut representations = z.clone();
    for (l, spec) in params.specs.iter().enumerate() {
        if l + 1 == params.num_layers() {
            representations = z.clone();
        }
        z = kernels::add_bias(&kernels::matmul(&z, &params.weights[l])?, &params.biases[l])?;
        if spec.has_activation {
            z = kernels::relu(&z);
        }
    }
    Ok(ForwardOutput {
        representations,
        probabilities: kernels::softmax_rows(&z),
        logits: z,
    })
}

/// Every layer up to and including the final propagation step.
#[derive(Clone, Copy, Debug)]
pub struct Extractor<'a, T> {
    params: &'a ModelParams<T>,
}

/// The final linear map from representations to logits.
#[derive(Clone, Copy, Debug)]
pub struct Classifier<'a, T> {
    pub weight: &'a Matrix<T>,
    pub bias: &'a Matrix<T>,
}

pub fn split_extractor_classifier<T: Scalar>(
    params: &ModelParams<T>,
) -> Result<(Extractor<'_, T>, Classifier<'_, T>)> {
    let l = params.num_layers();
    if l < 2 {
        return Err(Error::Structure("a single-layer model has no extractor/classifier split".into()));
    }
    Ok((
        Extractor { params },
        Classifier {
            weight: &params.weights[l - 1],
            bias: &params.biases[l - 1],
        },
    ))
}

impl<T: Scalar> Extractor<'_, T> {
    pub fn out_dim(&self) -> usize {
        self.params.repr_dim()
    }

    /// Eval-mode representations.
    pub fn apply(&self, prop: &Propagation<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
        let l = self.params.num_layers();
        let mut z = x.clone();
        for (spec, (w, b)) in self.params.specs[..l - 1]
            .iter()
            .zip(self.params.weights.iter().zip(&self.params.biases))
        {
            z = kernels::add_bias(&kernels::matmul(&prop.op.spmm(&z)?, w)?, b)?;
            if spec.has_activation {
                z = kernels::relu(&z);
            }
        }
        prop.op.spmm(&z)
    }
}

impl<T: Scalar> Classifier<'_, T> {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weight.cols()
    }

    pub fn apply(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        kernels::add_bias(&kernels::matmul(z, self.weight)?, self.bias)
    }

    /// Logits on the tape given handles for the classifier weight and bias.
    pub fn on_tape(tape: &mut Tape<T>, weight: Var, bias: Var, z: Var) -> Result<Var> {
        let lin = tape.matmul(z, weight)?;
        tape.add_bias(lin, bias)
    }
}
