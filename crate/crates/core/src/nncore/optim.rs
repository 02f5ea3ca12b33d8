use crate::error::{Error, Result};

use super::Param;

/// SGD with heavy-ball momentum: `v <- momentum * v + g`, `w <- w - lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {momentum}")));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Forget the accumulated velocity.
    pub fn reset(&mut self) {
        self.velocity.clear();
    }

    /// Apply one update and zero the gradients. Nothing is modified if any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if let Some(p) = params.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        }
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            let grad = p.grad.data().to_vec();
            for ((w, vi), g) in p.value.data_mut().iter_mut().zip(v.iter_mut()).zip(grad) {
                *vi = self.momentum * *vi + g;
                *w -= self.lr * *vi;
            }
            p.zero_grad();
        }
        Ok(())
    }
}
