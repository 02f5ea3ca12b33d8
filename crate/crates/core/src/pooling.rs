//! Log-Sum-Exp pooling of labeled pixel features into one vector per
//! category.
//!
//! For category `k` with pixel set `P_k` (`|P_k| = Q`), each dimension is
//! `v[d] = (1/pi) * ln((1/Q) * sum_{j in P_k} exp(pi * f_j[d]))`, which sits
//! between the mean (`pi -> 0`) and the max (`pi -> inf`) of the pooled
//! values. Pooling is per category over every pixel carrying that label,
//! not per connected component.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::labeler::{LabelMap, PixelFeatures};

#[derive(Clone, Debug, PartialEq)]
pub struct EntityFeature {
    pub category: usize,
    pub v: Vec<f64>,
    pub pixel_count: usize,
}

/// Pooled entities in ascending category order, plus the requested
/// categories that had no pixels.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EntityFeatureSet {
    pub entities: Vec<EntityFeature>,
    pub missing: BTreeSet<usize>,
}

impl EntityFeatureSet {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn categories(&self) -> Vec<usize> {
        self.entities.iter().map(|e| e.category).collect()
    }

    pub fn position(&self, category: usize) -> Option<usize> {
        self.entities.iter().position(|e| e.category == category)
    }
}

fn check_pi(pi: f64) -> Result<()> {
    if pi > 0.0 && pi.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("pi must be positive, got {pi}")))
    }
}

fn pixels_of(labels: &LabelMap, k: usize) -> Vec<usize> {
    labels
        .labels
        .iter()
        .enumerate()
        .filter_map(|(j, &c)| (c == k).then_some(j))
        .collect()
}

/// Shifted exponentials of one dimension and their sum. Terms are summed in
/// ascending order so the result depends only on the multiset of values.
fn shifted_exps(features: &PixelFeatures, d: usize, pixels: &[usize], pi: f64) -> (f64, Vec<f64>, f64) {
    let max = pixels
        .iter()
        .map(|&j| features.get(d, j))
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = pixels
        .iter()
        .map(|&j| (pi * (features.get(d, j) - max)).exp())
        .collect();
    let mut sorted = exps.clone();
    sorted.sort_by(f64::total_cmp);
    let sum = sorted.iter().sum();
    (max, exps, sum)
}

pub fn lse_pool(features: &PixelFeatures, labels: &LabelMap, k: usize, pi: f64) -> Result<EntityFeature> {
    check_pi(pi)?;
    let pixels = pixels_of(labels, k);
    if pixels.is_empty() {
        return Err(Error::MissingEntity(k));
    }
    let q = pixels.len() as f64;
    let v = (0..features.dim)
        .map(|d| {
            let (max, _, sum) = shifted_exps(features, d, &pixels, pi);
            max + (sum / q).ln() / pi
        })
        .collect();
    Ok(EntityFeature {
        category: k,
        v,
        pixel_count: pixels.len(),
    })
}

/// Accumulate `dL/dfeatures` given `dL/dv` for category `k`. The gradient
/// of each pooled dimension is the softmax of `pi * f_j[d]` over the
/// category's pixels.
pub fn lse_pool_backward(
    features: &PixelFeatures,
    labels: &LabelMap,
    k: usize,
    pi: f64,
    dv: &[f64],
    dfeatures: &mut [f64],
) {
    let pixels = pixels_of(labels, k);
    let m = features.pixel_count();
    for (d, &g) in dv.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let (_, exps, sum) = shifted_exps(features, d, &pixels, pi);
        for (&j, e) in pixels.iter().zip(exps) {
            dfeatures[d * m + j] += g * e / sum;
        }
    }
}

/// Pool every category of `present` that has at least one pixel.
pub fn entity_features(
    features: &PixelFeatures,
    labels: &LabelMap,
    present: &BTreeSet<usize>,
    pi: f64,
) -> Result<EntityFeatureSet> {
    check_pi(pi)?;
    let mut out = EntityFeatureSet::default();
    for &k in present {
        match lse_pool(features, labels, k, pi) {
            Ok(e) => out.entities.push(e),
            Err(Error::MissingEntity(k)) => {
                out.missing.insert(k);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
