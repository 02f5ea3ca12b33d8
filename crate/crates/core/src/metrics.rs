//! Pixel IoU and recursive parse-tree accuracies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::LabelMap;
use crate::rnn::{ParseNode, ParseTree};
use crate::treeconv::SemanticTree;

/// Intersection and union pixel counts per class.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IouCounts {
    pub intersection: BTreeMap<usize, u64>,
    pub union: BTreeMap<usize, u64>,
}

impl IouCounts {
    pub fn from_maps(pred: &LabelMap, gt: &LabelMap, classes: &BTreeSet<usize>) -> Result<Self> {
        if pred.height != gt.height || pred.width != gt.width {
            return Err(Error::ShapeMismatch {
                expected: vec![gt.height, gt.width],
                actual: vec![pred.height, pred.width],
            });
        }
        let mut counts = IouCounts::default();
        for &c in classes {
            let (mut inter, mut uni) = (0u64, 0u64);
            for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
                inter += u64::from(p == c && g == c);
                uni += u64::from(p == c || g == c);
            }
            counts.intersection.insert(c, inter);
            counts.union.insert(c, uni);
        }
        Ok(counts)
    }

    pub fn merge(&mut self, other: &IouCounts) {
        for (c, n) in &other.intersection {
            *self.intersection.entry(*c).or_default() += n;
        }
        for (c, n) in &other.union {
            *self.union.entry(*c).or_default() += n;
        }
    }

    /// IoU of every class with a nonempty union.
    pub fn per_class(&self) -> BTreeMap<usize, f64> {
        self.union
            .iter()
            .filter(|(_, &u)| u > 0)
            .map(|(c, &u)| (*c, self.intersection.get(c).copied().unwrap_or(0) as f64 / u as f64))
            .collect()
    }

    pub fn mean(&self) -> f64 {
        mean(self.per_class().values().copied())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-class IoU (classes with an empty union are left out) and their mean.
pub fn iou(pred: &LabelMap, gt: &LabelMap, classes: &BTreeSet<usize>) -> Result<(BTreeMap<usize, f64>, f64)> {
    let counts = IouCounts::from_maps(pred, gt, classes)?;
    Ok((counts.per_class(), counts.mean()))
}

fn subtree_accuracy(pred: &ParseNode, gt: &SemanticTree, with_relation: bool) -> f64 {
    let gt_leaves: BTreeSet<usize> = gt.leaves().into_iter().collect();
    let gt_nodes = gt.internal_nodes();
    let mut correct = 0usize;
    let mut total = 0usize;

    fn walk(
        node: &ParseNode,
        gt_leaves: &BTreeSet<usize>,
        gt_nodes: &[(Vec<usize>, usize)],
        with_relation: bool,
        correct: &mut usize,
        total: &mut usize,
    ) -> (bool, Vec<usize>) {
        *total += 1;
        let (ok, leaves) = match node {
            ParseNode::Leaf { category, .. } => (gt_leaves.contains(category), vec![*category]),
            ParseNode::Internal {
                left,
                right,
                relation,
                ..
            } => {
                let (lok, mut leaves) = walk(left, gt_leaves, gt_nodes, with_relation, correct, total);
                let (rok, rl) = walk(right, gt_leaves, gt_nodes, with_relation, correct, total);
                leaves.extend(rl);
                leaves.sort_unstable();
                let matched = gt_nodes
                    .iter()
                    .any(|(set, rel)| *set == leaves && (!with_relation || rel == relation));
                (lok && rok && matched, leaves)
            }
        };
        *correct += usize::from(ok);
        (ok, leaves)
    }

    walk(pred, &gt_leaves, &gt_nodes, with_relation, &mut correct, &mut total);
    correct as f64 / total as f64
}

/// Fraction of predicted subtrees that are correct, relations included.
pub fn relation_accuracy(pred: &ParseTree, gt: &SemanticTree) -> f64 {
    subtree_accuracy(&pred.root, gt, true)
}

/// Fraction of predicted subtrees whose grouping is correct.
pub fn structure_accuracy(pred: &ParseTree, gt: &SemanticTree) -> f64 {
    subtree_accuracy(&pred.root, gt, false)
}

/// Whether a ground-truth tree counts toward corpus accuracies: trees with
/// a single object are skipped.
pub fn counts_for_accuracy(gt: &SemanticTree) -> bool {
    gt.categories().len() > 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_iou: BTreeMap<usize, f64>,
    pub mean_iou: f64,
    pub structure_accuracy: f64,
    pub relation_accuracy: f64,
    pub samples: usize,
    /// Samples that contributed to the accuracies.
    pub parsed_samples: usize,
}

/// Corpus-level accumulator: IoU from global counts, accuracies averaged
/// per image.
#[derive(Clone, Debug, Default)]
pub struct Evaluator {
    counts: IouCounts,
    structure: Vec<f64>,
    relation: Vec<f64>,
    samples: usize,
}

/// Metrics of one evaluated sample, ready to merge into an [`Evaluator`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleEval {
    pub counts: IouCounts,
    pub accuracies: Option<(f64, f64)>,
}

impl SampleEval {
    pub fn new(
        pred_labels: &LabelMap,
        gt_labels: &LabelMap,
        classes: &BTreeSet<usize>,
        pred_tree: Option<&ParseTree>,
        gt_tree: &SemanticTree,
    ) -> Result<Self> {
        let counts = IouCounts::from_maps(pred_labels, gt_labels, classes)?;
        let accuracies = pred_tree
            .filter(|_| counts_for_accuracy(gt_tree))
            .map(|p| (structure_accuracy(p, gt_tree), relation_accuracy(p, gt_tree)));
        Ok(SampleEval { counts, accuracies })
    }
}

impl Evaluator {
    pub fn add(&mut self, sample: &SampleEval) {
        self.samples += 1;
        self.counts.merge(&sample.counts);
        if let Some((s, r)) = sample.accuracies {
            self.structure.push(s);
            self.relation.push(r);
        }
    }

    pub fn report(&self) -> EvalReport {
        EvalReport {
            per_class_iou: self.counts.per_class(),
            mean_iou: self.counts.mean(),
            structure_accuracy: mean(self.structure.iter().copied()),
            relation_accuracy: mean(self.relation.iter().copied()),
            samples: self.samples,
            parsed_samples: self.structure.len(),
        }
    }
}
