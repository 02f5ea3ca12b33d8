//! Greedy inference-time parsing and teacher-forced training-time parsing.
//!
//! Node ids: the `n` entity leaves are `0..n` in entity-set order; the
//! merge created at step `p` gets id `n + p`. Candidate merges are ordered
//! pairs `(left, right)` of distinct active nodes, enumerated in ascending
//! lexicographic order so that the first maximum wins ties.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::labeler::argmax;
use crate::pooling::EntityFeatureSet;
use crate::treeconv::SemanticTree;

use super::{ParseNode, ParseTree, Rnn};

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub left: usize,
    pub right: usize,
    pub q: f64,
}

/// One merge of the description tree, replayed against the model.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeStep {
    /// Ordered node ids of the correct merge.
    pub correct: (usize, usize),
    pub correct_q: f64,
    /// Ground-truth relation id (1-based).
    pub relation: usize,
    /// Id given to the merged node.
    pub merged: usize,
    /// Every ordered pair available at this step, correct one included.
    pub candidates: Vec<Candidate>,
    /// Highest-scoring candidate that is not a correct merge of the tree.
    pub violator: Option<Candidate>,
}

/// The correct merges of a description tree in replay order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MergePlan {
    pub steps: Vec<MergeStep>,
}

impl MergePlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeSource {
    Leaf {
        /// Index into the entity set.
        entity: usize,
        category: usize,
    },
    Merge {
        left: usize,
        right: usize,
        relation_probs: Vec<f64>,
        q: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceNode {
    pub source: NodeSource,
    pub x: Vec<f64>,
}

/// A violator's parent feature, kept so its score can be differentiated.
#[derive(Clone, Debug, PartialEq)]
struct ViolatorNode {
    left: usize,
    right: usize,
    x: Vec<f64>,
}

/// Teacher-forced parse with everything needed for backpropagation.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseTrace {
    pub nodes: Vec<TraceNode>,
    pub plan: MergePlan,
    violators: Vec<Option<ViolatorNode>>,
}

/// Gradients of the training losses with respect to the per-step outputs
/// of a [`ParseTrace`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StepGrads {
    pub d_correct_q: Vec<f64>,
    pub d_violator_q: Vec<f64>,
    pub d_relation_probs: Vec<Vec<f64>>,
}

impl ParseTrace {
    /// Relation distribution the categorizer gave each correct merge.
    pub fn relation_probs(&self) -> Vec<&[f64]> {
        self.plan
            .steps
            .iter()
            .map(|s| match &self.nodes[s.merged].source {
                NodeSource::Merge { relation_probs, .. } => relation_probs.as_slice(),
                NodeSource::Leaf { .. } => unreachable!("merged id points at a leaf"),
            })
            .collect()
    }

    pub fn tree(&self) -> ParseTree {
        let root = self.nodes.len() - 1;
        let leaves = self
            .nodes
            .iter()
            .filter_map(|n| match n.source {
                NodeSource::Leaf { category, .. } => Some(category),
                NodeSource::Merge { .. } => None,
            })
            .collect();
        ParseTree {
            root: build_node(&self.nodes, root),
            leaves,
        }
    }

    /// Accumulate parameter gradients and return `dL/dv` per entity of the
    /// entity set the trace was built from.
    pub fn backward(&self, rnn: &mut Rnn, entities: &EntityFeatureSet, grads: &StepGrads) -> Vec<Vec<f64>> {
        let d = rnn.config().hidden;
        let mut dx: Vec<Vec<f64>> = vec![vec![0.0; d]; self.nodes.len()];

        for (p, step) in self.plan.steps.iter().enumerate() {
            let node = &self.nodes[step.merged];
            if let NodeSource::Merge { relation_probs, q, .. } = &node.source {
                if let Some(dq) = grads.d_correct_q.get(p).filter(|g| **g != 0.0) {
                    add(&mut dx[step.merged], &rnn.merge_score_backward(&node.x, *q, *dq));
                }
                if let Some(dp) = grads.d_relation_probs.get(p) {
                    add(&mut dx[step.merged], &rnn.categorize_backward(&node.x, relation_probs, dp));
                }
            }
            let dq = grads.d_violator_q.get(p).copied().unwrap_or(0.0);
            if let (Some(v), Some(cand)) = (&self.violators[p], &step.violator) {
                if dq != 0.0 {
                    let dxv = rnn.merge_score_backward(&v.x, cand.q, dq);
                    let (dl, dr) = rnn.combine_backward(
                        &self.nodes[v.left].x,
                        &self.nodes[v.right].x,
                        &v.x,
                        &dxv,
                    );
                    add(&mut dx[v.left], &dl);
                    add(&mut dx[v.right], &dr);
                }
            }
        }

        let mut dv = vec![vec![0.0; rnn.config().input_dim]; entities.len()];
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            let g = std::mem::take(&mut dx[id]);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            match &node.source {
                NodeSource::Merge { left, right, .. } => {
                    let (dl, dr) =
                        rnn.combine_backward(&self.nodes[*left].x, &self.nodes[*right].x, &node.x, &g);
                    add(&mut dx[*left], &dl);
                    add(&mut dx[*right], &dr);
                }
                NodeSource::Leaf { entity, .. } => {
                    let v = &entities.entities[*entity].v;
                    add(&mut dv[*entity], &rnn.semantic_map_backward(v, &node.x, &g));
                }
            }
        }
        dv
    }
}

fn add(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn build_node(nodes: &[TraceNode], id: usize) -> ParseNode {
    let node = &nodes[id];
    match &node.source {
        NodeSource::Leaf { category, .. } => ParseNode::Leaf {
            category: *category,
            feature: node.x.clone(),
        },
        NodeSource::Merge {
            left,
            right,
            relation_probs,
            q,
        } => ParseNode::Internal {
            left: Box::new(build_node(nodes, *left)),
            right: Box::new(build_node(nodes, *right)),
            feature: node.x.clone(),
            relation: argmax(relation_probs.iter().copied().enumerate()) + 1,
            relation_probs: relation_probs.clone(),
            merge_score: *q,
        },
    }
}

fn leaf_nodes(entities: &EntityFeatureSet, rnn: &Rnn, keep: impl Fn(usize) -> bool) -> Vec<TraceNode> {
    entities
        .entities
        .iter()
        .enumerate()
        .filter(|(_, e)| keep(e.category))
        .map(|(i, e)| TraceNode {
            source: NodeSource::Leaf {
                entity: i,
                category: e.category,
            },
            x: rnn.semantic_map(&e.v),
        })
        .collect()
}

fn merge_node(nodes: &[TraceNode], rnn: &Rnn, left: usize, right: usize) -> TraceNode {
    let x = rnn.combine(&nodes[left].x, &nodes[right].x);
    let relation_probs = rnn.categorize(&x);
    let (_, q) = rnn.merge_score(&x);
    TraceNode {
        source: NodeSource::Merge {
            left,
            right,
            relation_probs,
            q,
        },
        x,
    }
}

/// All ordered pairs of distinct active nodes with their merge scores and
/// parent features.
fn enumerate(nodes: &[TraceNode], active: &[usize], rnn: &Rnn) -> Vec<(Candidate, Vec<f64>)> {
    let mut out = Vec::with_capacity(active.len() * active.len().saturating_sub(1));
    for &l in active {
        for &r in active {
            if l == r {
                continue;
            }
            let x = rnn.combine(&nodes[l].x, &nodes[r].x);
            let (_, q) = rnn.merge_score(&x);
            out.push((Candidate { left: l, right: r, q }, x));
        }
    }
    out
}

/// One step of greedy parsing.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyStep {
    pub chosen: Candidate,
    pub candidates: Vec<Candidate>,
}

/// Greedily merge the highest-`q` ordered pair until one root remains.
pub fn greedy_parse(entities: &EntityFeatureSet, rnn: &Rnn) -> Result<ParseTree> {
    greedy_trace(entities, rnn).map(|(tree, _)| tree)
}

/// [`greedy_parse`] that also reports the candidates seen at every step.
pub fn greedy_trace(entities: &EntityFeatureSet, rnn: &Rnn) -> Result<(ParseTree, Vec<GreedyStep>)> {
    if entities.is_empty() {
        return Err(Error::Data("cannot parse an empty entity set".into()));
    }
    let mut nodes = leaf_nodes(entities, rnn, |_| true);
    let mut active: Vec<usize> = (0..nodes.len()).collect();
    let mut steps = Vec::new();
    while active.len() > 1 {
        let candidates: Vec<Candidate> = enumerate(&nodes, &active, rnn).into_iter().map(|(c, _)| c).collect();
        let best = candidates
            .iter()
            .fold(None::<&Candidate>, |best, c| match best {
                Some(b) if c.q <= b.q => Some(b),
                _ => Some(c),
            })
            .expect("at least two active nodes")
            .clone();
        let node = merge_node(&nodes, rnn, best.left, best.right);
        let id = nodes.len();
        nodes.push(node);
        active.retain(|&a| a != best.left && a != best.right);
        active.push(id);
        steps.push(GreedyStep {
            chosen: best,
            candidates,
        });
    }
    let trace = ParseTrace {
        nodes,
        plan: MergePlan::default(),
        violators: Vec::new(),
    };
    Ok((trace.tree(), steps))
}

/// Description-tree internal node in replay bookkeeping.
struct Pending {
    left: TreeRef,
    right: TreeRef,
    relation: usize,
    leaf_set: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TreeRef {
    Leaf(usize),
    Internal(usize),
}

fn flatten(tree: &SemanticTree, out: &mut Vec<Pending>) -> (TreeRef, Vec<usize>) {
    match tree {
        SemanticTree::Leaf(c) => (TreeRef::Leaf(*c), vec![*c]),
        SemanticTree::Node {
            relation,
            left,
            right,
        } => {
            let (l, mut ls) = flatten(left, out);
            let (r, rs) = flatten(right, out);
            ls.extend(rs);
            ls.sort_unstable();
            out.push(Pending {
                left: l,
                right: r,
                relation: *relation,
                leaf_set: ls.clone(),
            });
            (TreeRef::Internal(out.len() - 1), ls)
        }
    }
}

/// Replay the description tree's merges bottom-up, recording candidates
/// and the worst violator at each step, and forcing the correct merge.
pub fn constrained_parse(
    entities: &EntityFeatureSet,
    tree: &SemanticTree,
    rnn: &Rnn,
) -> Result<(MergePlan, ParseTree)> {
    let trace = constrained_trace(entities, tree, rnn)?;
    let parse = trace.tree();
    Ok((trace.plan, parse))
}

pub fn constrained_trace(entities: &EntityFeatureSet, tree: &SemanticTree, rnn: &Rnn) -> Result<ParseTrace> {
    let leaf_cats = tree.leaves();
    let unique: BTreeSet<usize> = leaf_cats.iter().copied().collect();
    if unique.len() != leaf_cats.len() {
        return Err(Error::Data(format!(
            "description tree repeats a category: {leaf_cats:?}"
        )));
    }
    if let Some(&c) = unique.iter().find(|&&c| entities.position(c).is_none()) {
        return Err(Error::MissingEntity(c));
    }

    let mut nodes = leaf_nodes(entities, rnn, |c| unique.contains(&c));
    let node_of_cat: BTreeMap<usize, usize> = nodes
        .iter()
        .enumerate()
        .map(|(id, n)| match n.source {
            NodeSource::Leaf { category, .. } => (category, id),
            NodeSource::Merge { .. } => unreachable!(),
        })
        .collect();

    let mut pending = Vec::new();
    flatten(tree, &mut pending);
    let mut realized: Vec<Option<usize>> = vec![None; pending.len()];
    let resolve = |r: TreeRef, realized: &[Option<usize>]| match r {
        TreeRef::Leaf(c) => Some(node_of_cat[&c]),
        TreeRef::Internal(i) => realized[i],
    };

    let mut active: Vec<usize> = (0..nodes.len()).collect();
    let mut plan = MergePlan::default();
    let mut violators = Vec::new();
    while realized.iter().any(Option::is_none) {
        // ready merges as ordered node pairs
        let ready: Vec<(usize, (usize, usize))> = (0..pending.len())
            .filter(|&i| realized[i].is_none())
            .filter_map(|i| {
                let l = resolve(pending[i].left, &realized)?;
                let r = resolve(pending[i].right, &realized)?;
                Some((i, (l, r)))
            })
            .collect();
        let &(next, pair) = ready
            .iter()
            .min_by(|a, b| pending[a.0].leaf_set.cmp(&pending[b.0].leaf_set))
            .expect("a tree always has a ready merge");
        let correct_pairs: BTreeSet<(usize, usize)> = ready.iter().map(|&(_, p)| p).collect();

        let enumerated = enumerate(&nodes, &active, rnn);
        let mut violator: Option<(Candidate, Vec<f64>)> = None;
        for (cand, x) in &enumerated {
            if correct_pairs.contains(&(cand.left, cand.right)) {
                continue;
            }
            if violator.as_ref().is_none_or(|(v, _)| cand.q > v.q) {
                violator = Some((cand.clone(), x.clone()));
            }
        }

        let node = merge_node(&nodes, rnn, pair.0, pair.1);
        let correct_q = match node.source {
            NodeSource::Merge { q, .. } => q,
            NodeSource::Leaf { .. } => unreachable!(),
        };
        let id = nodes.len();
        nodes.push(node);
        realized[next] = Some(id);
        active.retain(|&a| a != pair.0 && a != pair.1);
        active.push(id);

        plan.steps.push(MergeStep {
            correct: pair,
            correct_q,
            relation: pending[next].relation,
            merged: id,
            candidates: enumerated.into_iter().map(|(c, _)| c).collect(),
            violator: violator.as_ref().map(|(c, _)| c.clone()),
        });
        violators.push(violator.map(|(c, x)| ViolatorNode {
            left: c.left,
            right: c.right,
            x,
        }));
    }

    Ok(ParseTrace {
        nodes,
        plan,
        violators,
    })
}
