//! Biased relabeling for the E-step.
//!
//! The per-class bias is realized as a hard quota: every class that the
//! description mentions claims the `ceil(rho * M)` unclaimed pixels where it
//! is most probable, and all other pixels take the most probable allowed
//! class.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

use super::{argmax, LabelMap, ProbMaps};

/// `ceil(rho * m)`, robust to `rho * m` landing a hair above an integer.
pub fn quota_size(rho: f64, m: usize) -> usize {
    (rho * m as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Relabel with quotas for foreground categories `present` (background is
/// always allowed but has no quota).
pub fn estep_labels(probs: &ProbMaps, present: &BTreeSet<usize>, rho_fg: f64) -> Result<LabelMap> {
    if present.is_empty() {
        return Err(Error::Config("E-step needs at least one present category".into()));
    }
    if let Some(&k) = present.iter().find(|&&k| k == 0 || k >= probs.classes) {
        return Err(Error::Config(format!(
            "present category {k} outside 1..={}",
            probs.classes - 1
        )));
    }
    let quota: Vec<usize> = present.iter().copied().collect();
    quota_labels(probs, &quota, rho_fg)
}

/// Quota relabeling for an arbitrary class list (background may be among
/// them). Labels are restricted to `quota ∪ {0}`.
pub fn quota_labels(probs: &ProbMaps, quota: &[usize], rho: f64) -> Result<LabelMap> {
    let m = probs.pixel_count();
    let classes: BTreeSet<usize> = quota.iter().copied().collect();
    if !(rho > 0.0 && rho <= 1.0 / (classes.len() + 1) as f64) {
        return Err(Error::Config(format!(
            "rho_fg must be in (0, 1/{}], got {rho}",
            classes.len() + 1
        )));
    }
    let per_class = quota_size(rho, m);
    let quotas: Vec<(usize, usize)> = classes.iter().map(|&k| (k, per_class)).collect();
    claim_quotas(probs, &quotas)
}

/// Relabel with an explicit pixel count per class. Classes claim their
/// most probable unclaimed pixels in descending order of peak probability;
/// the remaining pixels take the most probable class among the listed ones
/// and background.
pub fn claim_quotas(probs: &ProbMaps, quotas: &[(usize, usize)]) -> Result<LabelMap> {
    let m = probs.pixel_count();
    let classes: BTreeSet<usize> = quotas.iter().map(|q| q.0).collect();
    if classes.len() != quotas.len() {
        return Err(Error::Config("a class is listed twice in the quotas".into()));
    }
    if let Some(&(k, _)) = quotas.iter().find(|q| q.0 >= probs.classes) {
        return Err(Error::Config(format!("quota class {k} outside 0..{}", probs.classes)));
    }
    let claimed: usize = quotas.iter().map(|q| q.1).sum();
    if claimed > m {
        return Err(Error::OverConstrained {
            quota: quotas.iter().map(|q| q.1).max().unwrap_or(0),
            classes: quotas.len(),
            pixels: m,
        });
    }

    let peak = |k: usize| (0..m).map(|j| probs.get(k, j)).fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<(usize, usize, f64)> = quotas.iter().map(|&(k, n)| (k, n, peak(k))).collect();
    order.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    let mut labels: Vec<Option<usize>> = vec![None; m];
    for (k, n, _) in order {
        let mut free: Vec<usize> = (0..m).filter(|&j| labels[j].is_none()).collect();
        free.sort_by(|&a, &b| probs.get(k, b).total_cmp(&probs.get(k, a)).then(a.cmp(&b)));
        for &j in free.iter().take(n) {
            labels[j] = Some(k);
        }
    }

    let mut allowed = classes;
    allowed.insert(0);
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(j, l)| l.unwrap_or_else(|| argmax(allowed.iter().map(|&k| (k, probs.get(k, j))))))
        .collect();
    Ok(LabelMap {
        height: probs.height,
        width: probs.width,
        labels,
    })
}
