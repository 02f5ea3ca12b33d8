use crate::error::{Error, Result};
use crate::exec::Exec;

use super::ParamSet;

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Sequential [`finite_diff_check_with`].
pub fn finite_diff_check<M, F>(model: &M, eps: f64, loss_fn: F) -> Result<GradCheckReport>
where
    M: ParamSet + Clone + Send + Sync,
    F: Fn(&mut M) -> f64 + Sync + Send,
{
    finite_diff_check_with(Exec::Sequential, model, eps, loss_fn)
}

/// Compare every scalar parameter's analytic gradient against
/// `(L(theta + eps) - L(theta - eps)) / (2 eps)`.
///
/// `loss_fn` must be deterministic, return the loss, and accumulate
/// gradients into the model's params (which start zeroed for the analytic
/// pass). `model` itself is left untouched.
pub fn finite_diff_check_with<M, F>(
    exec: Exec,
    model: &M,
    eps: f64,
    loss_fn: F,
) -> Result<GradCheckReport>
where
    M: ParamSet + Clone + Send + Sync,
    F: Fn(&mut M) -> f64 + Sync + Send,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("eps must be in [1e-6, 1e-3], got {eps}")));
    }
    let mut base = model.clone();
    base.zero_grads();
    loss_fn(&mut base);

    let mut index = Vec::new();
    let mut analytic = Vec::new();
    for (pi, p) in base.params().iter().enumerate() {
        for (ei, g) in p.grad.data().iter().enumerate() {
            index.push((pi, ei));
            analytic.push(*g);
        }
    }

    const CHUNKS: usize = 64;
    let chunk = index.len().div_ceil(CHUNKS).max(1);
    let n_chunks = index.len().div_ceil(chunk);
    let numeric: Vec<f64> = exec
        .map(n_chunks, |c| {
            let mut work = base.clone();
            let lo = c * chunk;
            let hi = (lo + chunk).min(index.len());
            index[lo..hi]
                .iter()
                .map(|&(pi, ei)| {
                    let orig = work.params()[pi].value.data()[ei];
                    work.params_mut()[pi].value.data_mut()[ei] = orig + eps;
                    let plus = loss_fn(&mut work);
                    work.params_mut()[pi].value.data_mut()[ei] = orig - eps;
                    let minus = loss_fn(&mut work);
                    work.params_mut()[pi].value.data_mut()[ei] = orig;
                    (plus - minus) / (2.0 * eps)
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();

    let names: Vec<String> = base.params().iter().map(|p| p.name.clone()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: index.len(),
    };
    for (k, &(pi, ei)) in index.iter().enumerate() {
        let err = rel_error(analytic[k], numeric[k]);
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = err;
            report.worst_param = names[pi].clone();
            report.worst_index = ei;
            report.analytic = analytic[k];
            report.numeric = numeric[k];
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{softmax_backward, softmax_vec, Param, ParamKind, Rng};

    #[test]
    fn quadratic_is_exact() {
        let mut p = Param::zeros("theta", ParamKind::Weight, &[1]);
        p.value.data_mut()[0] = 3.0;
        let model = vec![p];
        let report = finite_diff_check(&model, 1e-4, |m: &mut Vec<Param>| {
            let t = m[0].value.data()[0];
            m[0].grad.data_mut()[0] += 2.0 * t;
            t * t
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.checked, 1);
    }

    #[test]
    fn softmax_cross_entropy_self_test() {
        let mut rng = Rng::new(11);
        let mut p = Param::zeros("logits", ParamKind::Weight, &[5]);
        for x in p.value.data_mut() {
            *x = rng.uniform(-2.0, 2.0);
        }
        let model = vec![p];
        let target = 2;
        let report = finite_diff_check(&model, 1e-5, |m: &mut Vec<Param>| {
            let probs = softmax_vec(m[0].value.data());
            let mut dp = vec![0.0; 5];
            dp[target] = -1.0 / probs[target];
            let ds = softmax_backward(&probs, &dp);
            for (g, d) in m[0].grad.data_mut().iter_mut().zip(ds) {
                *g += d;
            }
            -probs[target].ln()
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut p = Param::zeros("theta", ParamKind::Weight, &[1]);
        p.value.data_mut()[0] = 1.0;
        let model = vec![p];
        let report = finite_diff_check(&model, 1e-4, |m: &mut Vec<Param>| {
            let t = m[0].value.data()[0];
            m[0].grad.data_mut()[0] += 3.0 * t;
            t * t
        })
        .unwrap();
        assert!(report.max_rel_error > 0.3);
        assert_eq!(report.worst_param, "theta");
    }

    #[test]
    fn eps_out_of_range_rejected() {
        let model: Vec<Param> = vec![];
        assert!(finite_diff_check(&model, 1e-2, |_m: &mut Vec<Param>| 0.0).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut rng = Rng::new(2);
        let mut p = Param::zeros("w", ParamKind::Weight, &[40]);
        for x in p.value.data_mut() {
            *x = rng.uniform(-1.0, 1.0);
        }
        let model = vec![p];
        let f = |m: &mut Vec<Param>| {
            let mut loss = 0.0;
            for (x, g) in m[0].value.data().to_vec().iter().zip(m[0].grad.data_mut()) {
                loss += x.sin();
                *g += x.cos();
            }
            loss
        };
        let a = finite_diff_check_with(Exec::Sequential, &model, 1e-5, f).unwrap();
        let b = finite_diff_check_with(Exec::Parallel, &model, 1e-5, f).unwrap();
        assert_eq!(a, b);
        assert!(a.max_rel_error < 1e-8);
    }
}
