//! Semantic labeling, structure and relation losses with their gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::{pixel_softmax_backward, LabelMap, ProbMaps};
use crate::nncore::{Param, ParamKind};
use crate::rnn::{MergePlan, ParseTrace, StepGrads};

pub const PROB_CLAMP: f64 = 1e-12;
pub const DEFAULT_MARGIN: f64 = 0.1;
pub const DEFAULT_LAMBDA: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub j_c: f64,
    pub j_struc: f64,
    pub j_rel: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.j_c, self.j_struc, self.j_rel, self.reg, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Binary cross-entropy of one probability against a 0/1 target and its
/// derivative. The probability is clamped away from 0 and 1, and the
/// derivative is zero where the clamp is active.
fn bce(p: f64, target: bool) -> (f64, f64) {
    let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let inside = p > PROB_CLAMP && p < 1.0 - PROB_CLAMP;
    if target {
        (-pc.ln(), if inside { -1.0 / pc } else { 0.0 })
    } else {
        (-(1.0 - pc).ln(), if inside { 1.0 / (1.0 - pc) } else { 0.0 })
    }
}

/// Per-pixel BCE over every class, averaged over pixels. Returns the loss
/// and its gradient with respect to the probabilities.
pub fn semantic_label_loss(probs: &ProbMaps, target: &LabelMap) -> Result<(f64, Vec<f64>)> {
    let m = probs.pixel_count();
    if target.height != probs.height || target.width != probs.width {
        return Err(Error::ShapeMismatch {
            expected: vec![probs.height, probs.width],
            actual: vec![target.height, target.width],
        });
    }
    target.validate(probs.classes)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.data.len()];
    for k in 0..probs.classes {
        for (j, &label) in target.labels.iter().enumerate() {
            let (l, g) = bce(probs.get(k, j), label == k);
            loss += l;
            grad[k * m + j] = g / m as f64;
        }
    }
    Ok((loss / m as f64, grad))
}

/// [`semantic_label_loss`] with the gradient pulled back to the raw scores.
pub fn semantic_label_loss_scores(probs: &ProbMaps, target: &LabelMap) -> Result<(f64, Vec<f64>)> {
    let (loss, dprobs) = semantic_label_loss(probs, target)?;
    Ok((loss, pixel_softmax_backward(probs, &dprobs)))
}

/// Mean clamped hinge between each violator and the correct merge.
/// Returns the loss and its gradients with respect to the correct and
/// violator scores of every step.
pub fn structure_loss(plan: &MergePlan, margin: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if plan.is_empty() {
        return Err(Error::EmptyTree);
    }
    let p = plan.len() as f64;
    let mut loss = 0.0;
    let mut dc = vec![0.0; plan.len()];
    let mut dv = vec![0.0; plan.len()];
    for (i, step) in plan.steps.iter().enumerate() {
        let vq = step.violator.as_ref().map_or(0.0, |v| v.q);
        // compare against the same rounded target the hinge subtracts from,
        // so a zero loss means exactly `correct_q >= vq + margin`
        let target = vq + margin;
        if step.correct_q < target {
            loss += target - step.correct_q;
            dc[i] = -1.0 / p;
            if step.violator.is_some() {
                dv[i] = 1.0 / p;
            }
        }
    }
    Ok((loss / p, dc, dv))
}

/// Per-step BCE of the relation distribution against the tree's relation,
/// averaged over steps. Returns the loss and per-step probability gradients.
pub fn relation_loss(plan: &MergePlan, relation_probs: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)> {
    if plan.is_empty() {
        return Err(Error::EmptyTree);
    }
    if relation_probs.len() != plan.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![plan.len()],
            actual: vec![relation_probs.len()],
        });
    }
    let p = plan.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(plan.len());
    for (step, probs) in plan.steps.iter().zip(relation_probs) {
        let s = probs.len();
        if step.relation == 0 || step.relation > s {
            return Err(Error::InvalidRelation {
                relation: step.relation,
                max: s,
            });
        }
        let mut g = vec![0.0; s];
        for (k, &pk) in probs.iter().enumerate() {
            let (l, d) = bce(pk, k + 1 == step.relation);
            loss += l;
            g[k] = d / p;
        }
        grads.push(g);
    }
    Ok((loss / p, grads))
}

/// Structure and relation losses of a teacher-forced parse, with the step
/// gradients ready for [`ParseTrace::backward`].
pub fn parse_losses(trace: &ParseTrace, margin: f64) -> Result<(f64, f64, StepGrads)> {
    let (j_struc, d_correct_q, d_violator_q) = structure_loss(&trace.plan, margin)?;
    let (j_rel, d_relation_probs) = relation_loss(&trace.plan, &trace.relation_probs())?;
    Ok((
        j_struc,
        j_rel,
        StepGrads {
            d_correct_q,
            d_violator_q,
            d_relation_probs,
        },
    ))
}

/// `(λ/2)·Σ‖W‖²` over weight parameters.
pub fn weight_decay<'a>(params: impl IntoIterator<Item = &'a Param>, lambda: f64) -> f64 {
    0.5 * lambda
        * params
            .into_iter()
            .filter(|p| p.kind == ParamKind::Weight)
            .map(|p| p.value.sum_squares())
            .sum::<f64>()
}

/// Add `λ·W` to the gradient of every weight parameter.
pub fn weight_decay_backward<'a>(params: impl IntoIterator<Item = &'a mut Param>, lambda: f64) {
    for p in params.into_iter().filter(|p| p.kind == ParamKind::Weight) {
        for (g, w) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
            *g += lambda * w;
        }
    }
}

pub fn total_loss<'a>(
    j_c: f64,
    j_struc: f64,
    j_rel: f64,
    params: impl IntoIterator<Item = &'a Param>,
    lambda: f64,
) -> Result<LossBreakdown> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let reg = weight_decay(params, lambda);
    Ok(LossBreakdown {
        j_c,
        j_struc,
        j_rel,
        reg,
        total: j_c + j_struc + j_rel + reg,
    })
}
