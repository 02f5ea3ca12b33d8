use crate::error::{Error, Result};

use super::Param;

/// `W x + b` for `W: [m, n]`, `x: [n]`, `b: [m]`.
pub fn affine(x: &[f64], w: &Param, b: &Param) -> Result<Vec<f64>> {
    let (m, n) = matrix_dims(w)?;
    if x.len() != n {
        return Err(Error::ShapeMismatch {
            expected: vec![m, n],
            actual: vec![x.len()],
        });
    }
    if b.value.shape() != [m] {
        return Err(Error::ShapeMismatch {
            expected: vec![m],
            actual: b.value.shape().to_vec(),
        });
    }
    let wd = w.value.data();
    let bd = b.value.data();
    Ok((0..m)
        .map(|i| {
            let row = &wd[i * n..(i + 1) * n];
            row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bd[i]
        })
        .collect())
}

/// Accumulates `dL/dW` and `dL/db` and returns `dL/dx`.
pub fn affine_backward(x: &[f64], w: &mut Param, b: &mut Param, dout: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = dout.len();
    debug_assert_eq!(w.value.shape(), [m, n]);
    let mut dx = vec![0.0; n];
    let wd = w.value.data();
    let gw = w.grad.data_mut();
    for i in 0..m {
        let g = dout[i];
        if g == 0.0 {
            continue;
        }
        let row = &wd[i * n..(i + 1) * n];
        let grow = &mut gw[i * n..(i + 1) * n];
        for j in 0..n {
            grow[j] += g * x[j];
            dx[j] += g * row[j];
        }
    }
    for (gb, g) in b.grad.data_mut().iter_mut().zip(dout) {
        *gb += g;
    }
    dx
}

fn matrix_dims(w: &Param) -> Result<(usize, usize)> {
    match *w.value.shape() {
        [m, n] => Ok((m, n)),
        ref other => Err(Error::ShapeMismatch {
            expected: vec![0, 0],
            actual: other.to_vec(),
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn forward(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply(v)).collect()
    }

    /// Derivative expressed through the activation's output. For relu the
    /// subgradient at 0 is 0.
    pub fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn backward(self, out: &[f64], dout: &[f64]) -> Vec<f64> {
        out.iter()
            .zip(dout)
            .map(|(&y, &g)| g * self.derivative_at_output(y))
            .collect()
    }
}

/// Max-shifted softmax.
pub fn softmax_vec(x: &[f64]) -> Vec<f64> {
    assert!(!x.is_empty(), "softmax of an empty vector");
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Pull `dL/dp` back through `p = softmax(s)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, gi)| pi * (gi - dot)).collect()
}

/// Merge confidence `q = 1 / (1 + exp(h))`, evaluated without overflow.
pub fn merge_q(h: f64) -> f64 {
    if h > 0.0 {
        let e = (-h).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + h.exp())
    }
}

/// `dq/dh` for [`merge_q`], from the already computed `q`.
pub fn merge_q_backward(q: f64) -> f64 {
    -q * (1.0 - q)
}
