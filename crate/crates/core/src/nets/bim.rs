use crate::classical::BeliefVector;
use crate::error::{Error, Result};
use crate::tensor::{Activation, Real, Tape, Tensor, Var};

/// Weights of one belief gate: `S = outer(W2 inner(W1 I + b1) + b2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BimParams {
    /// `[n_r, hidden]`
    pub w1: Tensor<f64>,
    pub b1: Tensor<f64>,
    /// `[hidden, c]`
    pub w2: Tensor<f64>,
    pub b2: Tensor<f64>,
    pub inner_act: Activation,
    pub outer_act: Activation,
    /// `(mean_db, std_db)`
    pub input_norm: (f64, f64),
}

impl BimParams {
    pub fn zeros(n_r: usize, hidden: usize, c: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[n_r, hidden]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[hidden, c]),
            b2: Tensor::zeros(&[c]),
            inner_act: Activation::Relu,
            outer_act: Activation::Sigmoid,
            input_norm: (-10.0, 6.0),
        }
    }

    pub fn channels(&self) -> usize {
        self.b2.len()
    }
}

/// dB-domain z-score of the belief.
pub fn standardize_belief(mu_db: &[f64], (mean_db, std_db): (f64, f64)) -> Vec<f64> {
    mu_db.iter().map(|m| (m - mean_db) / std_db).collect()
}

fn act(kind: Activation, v: f64) -> f64 {
    match kind {
        Activation::Relu => v.max(0.0),
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
    }
}

/// Gate vector for a single belief.
pub fn bim_forward(belief: &BeliefVector, p: &BimParams) -> Result<Vec<f64>> {
    let (n_r, hidden) = match p.w1.shape() {
        [a, b] => (*a, *b),
        s => return Err(Error::dim("bim_forward", format!("W1 {s:?}"))),
    };
    let c = p.b2.len();
    if belief.len() != n_r
        || p.b1.shape() != [hidden]
        || p.w2.shape() != [hidden, c]
    {
        return Err(Error::dim(
            "bim_forward",
            format!(
                "belief {}, W1 {:?}, b1 {:?}, W2 {:?}, b2 {:?}",
                belief.len(),
                p.w1.shape(),
                p.b1.shape(),
                p.w2.shape(),
                p.b2.shape()
            ),
        ));
    }
    let x = standardize_belief(&belief.mu_db(), p.input_norm);
    let (w1, w2) = (p.w1.data(), p.w2.data());
    let h: Vec<f64> = (0..hidden)
        .map(|j| {
            let z = p.b1.data()[j] + (0..n_r).map(|i| x[i] * w1[i * hidden + j]).sum::<f64>();
            act(p.inner_act, z)
        })
        .collect();
    Ok((0..c)
        .map(|k| {
            let z = p.b2.data()[k] + (0..hidden).map(|j| h[j] * w2[j * c + k]).sum::<f64>();
            act(p.outer_act, z)
        })
        .collect())
}

/// Batched gate on a tape: `belief` is the standardised `[B, n_r]` input,
/// the result is `[B, c]`.
#[allow(clippy::too_many_arguments)]
pub fn bim_tape<T: Real>(
    tape: &mut Tape<T>,
    belief: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    inner: Activation,
    outer: Activation,
) -> Result<Var> {
    let h = tape.linear(belief, w1, b1)?;
    let h = tape.activation(h, inner)?;
    let s = tape.linear(h, w2, b2)?;
    tape.activation(s, outer)
}

/// Per-channel rescaling of `[B, c, ..]` features by a `[B, c]` gate.
pub fn bim_scale<T: Real>(tape: &mut Tape<T>, features: Var, gate: Var) -> Result<Var> {
    tape.gate(features, gate, 1)
}
