use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::treeconv::Vocabulary;

#[derive(Clone, Debug, PartialEq)]
pub enum ParseNode {
    Leaf {
        category: usize,
        feature: Vec<f64>,
    },
    Internal {
        left: Box<ParseNode>,
        right: Box<ParseNode>,
        feature: Vec<f64>,
        relation_probs: Vec<f64>,
        /// Relation id, `argmax + 1`.
        relation: usize,
        merge_score: f64,
    },
}

impl ParseNode {
    pub fn feature(&self) -> &[f64] {
        match self {
            ParseNode::Leaf { feature, .. } | ParseNode::Internal { feature, .. } => feature,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseNode::Leaf { .. })
    }

    /// Leaf categories, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        match self {
            ParseNode::Leaf { category, .. } => vec![*category],
            ParseNode::Internal { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            ParseNode::Leaf { .. } => 0,
            ParseNode::Internal { left, right, .. } => 1 + left.internal_count() + right.internal_count(),
        }
    }

    /// Pre-order walk over all subtrees, root included.
    pub fn subtrees(&self) -> Vec<&ParseNode> {
        let mut out = vec![self];
        if let ParseNode::Internal { left, right, .. } = self {
            out.extend(left.subtrees());
            out.extend(right.subtrees());
        }
        out
    }

    pub fn to_json(&self) -> Value {
        match self {
            ParseNode::Leaf { category, .. } => json!({ "leaf": { "category": category } }),
            ParseNode::Internal {
                left,
                right,
                relation,
                merge_score,
                ..
            } => json!({
                "rel": relation,
                "q": merge_score,
                "left": left.to_json(),
                "right": right.to_json(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseTree {
    pub root: ParseNode,
    /// Entity categories in the order they entered the parse.
    pub leaves: Vec<usize>,
}

impl ParseTree {
    pub fn internal_count(&self) -> usize {
        self.root.internal_count()
    }

    pub fn to_json(&self) -> Value {
        self.root.to_json()
    }

    /// Graphviz rendering. Labels use `vocab` names when given, otherwise
    /// `c<id>` / `r<id>`.
    pub fn to_dot(&self, vocab: Option<&Vocabulary>) -> String {
        let mut out = String::from("digraph parse {\n  node [shape=box];\n");
        let mut next = 0;
        write_dot(&self.root, vocab, &mut next, &mut out);
        out.push_str("}\n");
        out
    }
}

fn write_dot(node: &ParseNode, vocab: Option<&Vocabulary>, next: &mut usize, out: &mut String) -> usize {
    let id = *next;
    *next += 1;
    match node {
        ParseNode::Leaf { category, .. } => {
            let name = vocab
                .and_then(|v| v.category_name(*category))
                .map(str::to_owned)
                .unwrap_or_else(|| format!("c{category}"));
            let _ = writeln!(out, "  n{id} [label=\"{name}\"];");
        }
        ParseNode::Internal {
            left,
            right,
            relation,
            merge_score,
            ..
        } => {
            let name = vocab
                .and_then(|v| v.relation_name(*relation))
                .map(str::to_owned)
                .unwrap_or_else(|| format!("r{relation}"));
            let _ = writeln!(
                out,
                "  n{id} [label=\"{name}\\nq={merge_score:.3}\", shape=ellipse];"
            );
            let l = write_dot(left, vocab, next, out);
            let r = write_dot(right, vocab, next, out);
            let _ = writeln!(out, "  n{id} -> n{l} [label=\"left\"];");
            let _ = writeln!(out, "  n{id} -> n{r} [label=\"right\"];");
        }
    }
    id
}
