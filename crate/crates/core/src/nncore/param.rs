use serde::{Deserialize, Serialize};

use super::{Rng, Tensor};

/// Weights are regularized, biases are not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Bias,
}

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn zeros(name: impl Into<String>, kind: ParamKind, shape: &[usize]) -> Self {
        Param {
            name: name.into(),
            kind,
            value: Tensor::zeros(shape),
            grad: Tensor::zeros(shape),
        }
    }

    /// Xavier-uniform weight: entries drawn from `U(-b, b)` with
    /// `b = sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut p = Param::zeros(name, ParamKind::Weight, shape);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for x in p.value.data_mut() {
            *x = rng.uniform(-bound, bound);
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that owns a fixed, ordered list of parameters.
///
/// The order returned by `params` and `params_mut` must agree; checkpoints,
/// the optimizer and the gradient checker all rely on it.
pub trait ParamSet {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn scalar_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

impl ParamSet for Vec<Param> {
    fn params(&self) -> Vec<&Param> {
        self.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.iter_mut().collect()
    }
}
