//! The recursive merge network and tree construction.
//!
//! Four sub-networks share a semantic space of width `d_sem`:
//! the semantic mapper (entity feature -> node feature), the combiner
//! (two node features -> parent feature), the categorizer (parent feature
//! -> relation distribution) and the scorer (parent feature -> merge
//! confidence `q = 1 / (1 + exp(h))`).

mod parse;
mod tree;

use crate::nncore::{
    affine, affine_backward, merge_q, merge_q_backward, softmax_backward, softmax_vec, Activation,
    Param, ParamKind, ParamSet, Rng,
};

pub use parse::{
    constrained_parse, constrained_trace, greedy_parse, greedy_trace, Candidate, GreedyStep, MergePlan,
    MergeStep, NodeSource, ParseTrace, StepGrads, TraceNode,
};
pub use tree::{ParseNode, ParseTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RnnConfig {
    /// Entity feature width `D`.
    pub input_dim: usize,
    /// Semantic space width `d_sem`.
    pub hidden: usize,
    /// Relation count `S`.
    pub relations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rnn {
    pub sem_w: Param,
    pub sem_b: Param,
    pub com_w: Param,
    pub com_b: Param,
    pub cat_w: Param,
    pub cat_b: Param,
    pub score_w: Param,
    pub score_b: Param,
}

const ACT: Activation = Activation::Tanh;

impl Rnn {
    pub fn new(config: &RnnConfig, rng: &mut Rng) -> Self {
        let RnnConfig {
            input_dim: d_in,
            hidden: d,
            relations: s,
        } = *config;
        let bias = |name: &str, n| Param::zeros(name, ParamKind::Bias, &[n]);
        Rnn {
            sem_w: Param::xavier("rnn.sem.weight", &[d, d_in], d_in, d, rng),
            sem_b: bias("rnn.sem.bias", d),
            com_w: Param::xavier("rnn.com.weight", &[d, 2 * d], 2 * d, d, rng),
            com_b: bias("rnn.com.bias", d),
            cat_w: Param::xavier("rnn.cat.weight", &[s, d], d, s, rng),
            cat_b: bias("rnn.cat.bias", s),
            score_w: Param::xavier("rnn.score.weight", &[1, d], d, 1, rng),
            score_b: bias("rnn.score.bias", 1),
        }
    }

    pub fn config(&self) -> RnnConfig {
        let shape = self.sem_w.value.shape();
        RnnConfig {
            input_dim: shape[1],
            hidden: shape[0],
            relations: self.cat_w.value.shape()[0],
        }
    }

    pub fn relation_count(&self) -> usize {
        self.cat_w.value.shape()[0]
    }

    /// `x = tanh(W_sem v + b)`.
    pub fn semantic_map(&self, v: &[f64]) -> Vec<f64> {
        ACT.forward(&affine(v, &self.sem_w, &self.sem_b).expect("entity feature width"))
    }

    /// `x_kl = tanh(W_com [x_k; x_l] + b)`. Order matters.
    pub fn combine(&self, xk: &[f64], xl: &[f64]) -> Vec<f64> {
        let input = [xk, xl].concat();
        ACT.forward(&affine(&input, &self.com_w, &self.com_b).expect("node feature width"))
    }

    /// Relation distribution `softmax(W_cat x + b)`.
    pub fn categorize(&self, x: &[f64]) -> Vec<f64> {
        softmax_vec(&affine(x, &self.cat_w, &self.cat_b).expect("node feature width"))
    }

    /// `(h, q)` with `h = w . x + b` and `q = 1 / (1 + exp(h))`.
    pub fn merge_score(&self, x: &[f64]) -> (f64, f64) {
        let h = affine(x, &self.score_w, &self.score_b).expect("node feature width")[0];
        (h, merge_q(h))
    }

    /// Returns `dL/dv`.
    pub fn semantic_map_backward(&mut self, v: &[f64], x: &[f64], dx: &[f64]) -> Vec<f64> {
        let dpre = ACT.backward(x, dx);
        affine_backward(v, &mut self.sem_w, &mut self.sem_b, &dpre)
    }

    /// Returns `(dL/dx_k, dL/dx_l)`.
    pub fn combine_backward(
        &mut self,
        xk: &[f64],
        xl: &[f64],
        x: &[f64],
        dx: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let dpre = ACT.backward(x, dx);
        let input = [xk, xl].concat();
        let mut din = affine_backward(&input, &mut self.com_w, &mut self.com_b, &dpre);
        let dxl = din.split_off(xk.len());
        (din, dxl)
    }

    /// Given `dL/dprobs`, returns `dL/dx`.
    pub fn categorize_backward(&mut self, x: &[f64], probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
        let dlogits = softmax_backward(probs, dprobs);
        affine_backward(x, &mut self.cat_w, &mut self.cat_b, &dlogits)
    }

    /// Given `dL/dq`, returns `dL/dx`.
    pub fn merge_score_backward(&mut self, x: &[f64], q: f64, dq: f64) -> Vec<f64> {
        let dh = dq * merge_q_backward(q);
        affine_backward(x, &mut self.score_w, &mut self.score_b, &[dh])
    }
}

impl ParamSet for Rnn {
    fn params(&self) -> Vec<&Param> {
        vec![
            &self.sem_w,
            &self.sem_b,
            &self.com_w,
            &self.com_b,
            &self.cat_w,
            &self.cat_b,
            &self.score_w,
            &self.score_b,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.sem_w,
            &mut self.sem_b,
            &mut self.com_w,
            &mut self.com_b,
            &mut self.cat_w,
            &mut self.cat_b,
            &mut self.score_w,
            &mut self.score_b,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::finite_diff_check;

    fn config() -> RnnConfig {
        RnnConfig {
            input_dim: 5,
            hidden: 6,
            relations: 3,
        }
    }

    fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    fn zeroed() -> Rnn {
        let mut rnn = Rnn::new(&config(), &mut Rng::new(0));
        for p in rnn.params_mut() {
            p.value.fill(0.0);
        }
        rnn
    }

    #[test]
    fn zero_weights() {
        let rnn = zeroed();
        assert!(rnn.semantic_map(&[1.0; 5]).iter().all(|&x| x == 0.0));
        assert!(rnn.combine(&[0.5; 6], &[-0.5; 6]).iter().all(|&x| x == 0.0));
        let probs = rnn.categorize(&[0.3; 6]);
        assert!(probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(rnn.merge_score(&[0.9; 6]), (0.0, 0.5));
    }

    #[test]
    fn ranges_and_shapes() {
        let mut rng = Rng::new(3);
        for d in [1, 4, 32] {
            let rnn = Rnn::new(&RnnConfig { input_dim: 5, hidden: d, relations: 3 }, &mut rng);
            let x = rnn.semantic_map(&[10.0, -20.0, 3.0, 4.0, 5.0]);
            assert_eq!(x.len(), d);
            assert!(x.iter().all(|v| v.abs() < 1.0));
            assert_eq!(rnn.combine(&x, &x).len(), d);
            let p = rnn.categorize(&x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let (_, q) = rnn.merge_score(&x);
            assert!(q > 0.0 && q < 1.0);
        }
    }

    #[test]
    fn combine_is_order_sensitive() {
        let mut rng = Rng::new(4);
        let rnn = Rnn::new(&config(), &mut rng);
        let a = random_vec(&mut rng, 6);
        let b = random_vec(&mut rng, 6);
        assert_ne!(rnn.combine(&a, &b), rnn.combine(&b, &a));
    }

    #[test]
    fn fixed_seed_regression() {
        let mut rng = Rng::new(42);
        let rnn = Rnn::new(&config(), &mut rng);
        let v = [0.1, -0.2, 0.3, -0.4, 0.5];
        let again = Rnn::new(&config(), &mut Rng::new(42));
        assert_eq!(rnn.semantic_map(&v), again.semantic_map(&v));
        let x = rnn.semantic_map(&v);
        assert_eq!(rnn.categorize(&x), again.categorize(&x));
    }

    /// A scalar loss over all four sub-networks with a depth-3 combine chain.
    fn chain_loss(rnn: &mut Rnn, leaves: &[Vec<f64>], w: &[f64]) -> f64 {
        let xs: Vec<Vec<f64>> = leaves.iter().map(|v| rnn.semantic_map(v)).collect();
        let x01 = rnn.combine(&xs[0], &xs[1]);
        let x012 = rnn.combine(&x01, &xs[2]);
        let x0123 = rnn.combine(&xs[3], &x012);
        let probs = rnn.categorize(&x0123);
        let (_, q) = rnn.merge_score(&x012);
        let loss = probs.iter().zip(w).map(|(p, w)| p * w).sum::<f64>() + 2.0 * q;

        let d0123 = rnn.categorize_backward(&x0123, &probs, w);
        let (dx3, d012_a) = rnn.combine_backward(&xs[3], &x012, &x0123, &d0123);
        let mut d012 = rnn.merge_score_backward(&x012, q, 2.0);
        for (a, b) in d012.iter_mut().zip(&d012_a) {
            *a += b;
        }
        let (d01, dx2) = rnn.combine_backward(&x01, &xs[2], &x012, &d012);
        let (dx0, dx1) = rnn.combine_backward(&xs[0], &xs[1], &x01, &d01);
        for (i, dx) in [dx0, dx1, dx2, dx3].iter().enumerate() {
            rnn.semantic_map_backward(&leaves[i], &xs[i], dx);
        }
        loss
    }

    #[test]
    fn all_sub_networks_pass_gradient_check() {
        let mut rng = Rng::new(10);
        let rnn = Rnn::new(&config(), &mut rng);
        let leaves: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 5)).collect();
        let w = random_vec(&mut rng, 3);
        let report = finite_diff_check(&rnn, 1e-5, |m: &mut Rnn| chain_loss(m, &leaves, &w)).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
