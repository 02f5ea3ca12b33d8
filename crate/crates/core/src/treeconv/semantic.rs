use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Category and relation names. Category id = index (0 is background);
/// relation id = index + 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub categories: Vec<String>,
    pub relations: Vec<String>,
}

impl Vocabulary {
    /// Number of foreground categories, `K`.
    pub fn foreground_count(&self) -> usize {
        self.categories.len().saturating_sub(1)
    }

    /// Number of relations, `S`.
    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn category_id(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r == name).map(|i| i + 1)
    }

    pub fn category_name(&self, id: usize) -> Option<&str> {
        self.categories.get(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: usize) -> Option<&str> {
        id.checked_sub(1)
            .and_then(|i| self.relations.get(i))
            .map(String::as_str)
    }
}

/// Binary description tree: category leaves, relation-labeled internal
/// nodes. Leaf category 0 is the synthetic background entity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SemanticTree {
    Leaf(usize),
    Node {
        relation: usize,
        left: Box<SemanticTree>,
        right: Box<SemanticTree>,
    },
}

impl SemanticTree {
    pub fn node(relation: usize, left: SemanticTree, right: SemanticTree) -> Self {
        SemanticTree::Node {
            relation,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Leaf categories, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            SemanticTree::Leaf(c) => out.push(*c),
            SemanticTree::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// The foreground categories mentioned by the tree.
    pub fn categories(&self) -> BTreeSet<usize> {
        self.leaves().into_iter().filter(|&c| c != 0).collect()
    }

    pub fn has_background_leaf(&self) -> bool {
        self.leaves().contains(&0)
    }

    /// Number of merges, `#leaves - 1`.
    pub fn merge_count(&self) -> usize {
        self.leaves().len() - 1
    }

    /// `(sorted leaf multiset, relation)` for every internal node, post-order.
    pub fn internal_nodes(&self) -> Vec<(Vec<usize>, usize)> {
        let mut out = Vec::new();
        self.collect_internal(&mut out);
        out
    }

    fn collect_internal(&self, out: &mut Vec<(Vec<usize>, usize)>) -> Vec<usize> {
        match self {
            SemanticTree::Leaf(c) => vec![*c],
            SemanticTree::Node {
                relation,
                left,
                right,
            } => {
                let mut leaves = left.collect_internal(out);
                leaves.extend(right.collect_internal(out));
                let mut sorted = leaves.clone();
                sorted.sort_unstable();
                out.push((sorted, *relation));
                leaves
            }
        }
    }

    /// Check leaf and relation ids against a vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        match self {
            SemanticTree::Leaf(c) => {
                if *c >= vocab.categories.len() {
                    return Err(Error::Data(format!("leaf category {c} not in vocabulary")));
                }
            }
            SemanticTree::Node {
                relation,
                left,
                right,
            } => {
                if *relation == 0 || *relation > vocab.relation_count() {
                    return Err(Error::InvalidRelation {
                        relation: *relation,
                        max: vocab.relation_count(),
                    });
                }
                left.validate(vocab)?;
                right.validate(vocab)?;
            }
        }
        Ok(())
    }

    /// `{"rel":"ride","left":{"cat":"person"},"right":{"cat":"motorbike"}}`.
    pub fn to_json(&self, vocab: &Vocabulary) -> Result<Value> {
        Ok(match self {
            SemanticTree::Leaf(c) => {
                let name = vocab
                    .category_name(*c)
                    .ok_or_else(|| Error::Data(format!("category {c} not in vocabulary")))?;
                json!({ "cat": name })
            }
            SemanticTree::Node {
                relation,
                left,
                right,
            } => {
                let name = vocab.relation_name(*relation).ok_or(Error::InvalidRelation {
                    relation: *relation,
                    max: vocab.relation_count(),
                })?;
                let mut obj = Map::new();
                obj.insert("rel".into(), json!(name));
                obj.insert("left".into(), left.to_json(vocab)?);
                obj.insert("right".into(), right.to_json(vocab)?);
                Value::Object(obj)
            }
        })
    }

    pub fn from_json(value: &Value, vocab: &Vocabulary) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Data("semantic tree node must be an object".into()))?;
        if let Some(cat) = obj.get("cat") {
            let name = cat
                .as_str()
                .ok_or_else(|| Error::Data("\"cat\" must be a string".into()))?;
            let id = vocab
                .category_id(name)
                .ok_or_else(|| Error::Data(format!("unknown category {name:?}")))?;
            return Ok(SemanticTree::Leaf(id));
        }
        let rel = obj
            .get("rel")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Data("node needs \"cat\" or \"rel\"".into()))?;
        let relation = vocab
            .relation_id(rel)
            .ok_or_else(|| Error::Data(format!("unknown relation {rel:?}")))?;
        let child = |key: &str| {
            obj.get(key)
                .ok_or_else(|| Error::Data(format!("relation node missing \"{key}\"")))
                .and_then(|v| SemanticTree::from_json(v, vocab))
        };
        Ok(SemanticTree::node(relation, child("left")?, child("right")?))
    }

    /// Pretty JSON with a trailing newline, the on-disk form.
    pub fn to_json_string(&self, vocab: &Vocabulary) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_json(vocab)?)
            .map_err(|e| Error::Data(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary {
            categories: vec!["background".into(), "a".into(), "b".into(), "c".into()],
            relations: vec!["r".into(), "s".into()],
        }
    }

    #[test]
    fn structure_queries() {
        let t = SemanticTree::node(
            2,
            SemanticTree::node(1, SemanticTree::Leaf(2), SemanticTree::Leaf(1)),
            SemanticTree::Leaf(3),
        );
        assert_eq!(t.leaves(), vec![2, 1, 3]);
        assert_eq!(t.merge_count(), 2);
        assert_eq!(t.categories(), BTreeSet::from([1, 2, 3]));
        assert_eq!(t.internal_nodes(), vec![(vec![1, 2], 1), (vec![1, 2, 3], 2)]);
        assert!(!t.has_background_leaf());
    }

    #[test]
    fn json_round_trip() {
        let v = vocab();
        let t = SemanticTree::node(1, SemanticTree::Leaf(1), SemanticTree::Leaf(0));
        let j = t.to_json(&v).unwrap();
        assert_eq!(
            serde_json::to_string(&j).unwrap(),
            r#"{"rel":"r","left":{"cat":"a"},"right":{"cat":"background"}}"#
        );
        assert_eq!(SemanticTree::from_json(&j, &v).unwrap(), t);
        assert!(t.has_background_leaf());
        assert_eq!(t.categories(), BTreeSet::from([1]));
    }

    #[test]
    fn validation() {
        let v = vocab();
        assert!(SemanticTree::node(3, SemanticTree::Leaf(1), SemanticTree::Leaf(2))
            .validate(&v)
            .is_err());
        assert!(SemanticTree::Leaf(9).validate(&v).is_err());
        assert!(SemanticTree::from_json(&json!({"cat": "zebra"}), &v).is_err());
    }
}
