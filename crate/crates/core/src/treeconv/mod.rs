//! Conversion of POS-tagged constituency trees into semantic trees over
//! entity categories and relations.

mod semantic;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, Error, Result};

pub use semantic::{SemanticTree, Vocabulary};

pub const OTHER: &str = "other";
pub const BACKGROUND: &str = "background";

/// Parsed sentence. Leaves carry a word and its Penn POS tag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstituencyTree {
    Phrase {
        label: String,
        children: Vec<ConstituencyTree>,
    },
    Word {
        word: String,
        pos: String,
    },
}

impl ConstituencyTree {
    pub fn word(word: &str, pos: &str) -> Self {
        ConstituencyTree::Word {
            word: word.into(),
            pos: pos.into(),
        }
    }

    pub fn phrase(label: &str, children: Vec<ConstituencyTree>) -> Self {
        ConstituencyTree::Phrase {
            label: label.into(),
            children,
        }
    }

    /// Leaves as `(word, pos)` in sentence order.
    pub fn leaves(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<(&'a str, &'a str)>) {
        match self {
            ConstituencyTree::Word { word, pos } => out.push((word, pos)),
            ConstituencyTree::Phrase { children, .. } => children.iter().for_each(|c| c.collect(out)),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

fn is_noun(pos: &str) -> bool {
    pos.starts_with("NN")
}

fn keeps(pos: &str) -> bool {
    is_noun(pos) || pos.starts_with("VB") || pos == "IN"
}

/// Keep nouns, verbs and prepositions; drop phrases left empty.
pub fn pos_filter(tree: &ConstituencyTree) -> Result<ConstituencyTree> {
    fn go(t: &ConstituencyTree) -> Option<ConstituencyTree> {
        match t {
            ConstituencyTree::Word { pos, .. } => keeps(pos).then(|| t.clone()),
            ConstituencyTree::Phrase { label, children } => {
                let children: Vec<_> = children.iter().filter_map(go).collect();
                (!children.is_empty()).then(|| ConstituencyTree::Phrase {
                    label: label.clone(),
                    children,
                })
            }
        }
    }
    go(tree).ok_or(Error::EmptyTree)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRule {
    pub left: usize,
    pub word: String,
    pub right: usize,
    pub relation: usize,
}

/// Category, synonym and relation tables. Relation names must include
/// `other` and `background`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub categories: BTreeMap<usize, String>,
    pub synonyms: BTreeMap<String, usize>,
    pub relations: BTreeMap<usize, String>,
    pub relmap: Vec<RelationRule>,
}

impl Lexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let lex: Lexicon = read_json(path.as_ref())?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Data(m));
        if !self.categories.keys().copied().eq(0..self.categories.len()) {
            return bad("category ids must be 0..=K".into());
        }
        if !self.relations.keys().copied().eq(1..=self.relations.len()) {
            return bad("relation ids must be 1..=S".into());
        }
        let other = self.relation_named(OTHER);
        let background = self.relation_named(BACKGROUND);
        if other.is_none() || background.is_none() {
            return bad("relations must include \"other\" and \"background\"".into());
        }
        let k = self.categories.len() - 1;
        if let Some((w, c)) = self.synonyms.iter().find(|(_, &c)| c == 0 || c > k) {
            return bad(format!("synonym {w:?} maps to invalid category {c}"));
        }
        for r in &self.relmap {
            if r.left == 0 || r.left > k || r.right == 0 || r.right > k || !self.relations.contains_key(&r.relation) {
                return bad(format!("invalid relmap entry {r:?}"));
            }
        }
        Ok(())
    }

    pub fn relation_named(&self, name: &str) -> Option<usize> {
        self.relations.iter().find(|(_, n)| *n == name).map(|(&id, _)| id)
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary {
            categories: self.categories.values().cloned().collect(),
            relations: self.relations.values().cloned().collect(),
        }
    }

    fn lookup(&self, left: usize, word: &str, right: usize) -> Option<usize> {
        self.relmap
            .iter()
            .find(|r| r.left == left && r.right == right && r.word == word)
            .map(|r| r.relation)
    }
}

/// Item of the filtered sentence after nouns are mapped to categories.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    Entity(usize),
    Word(String),
}

/// Map nouns to categories, dropping unknown nouns and later mentions of
/// a category already seen.
pub fn unify_nouns(leaves: &[(&str, &str)], lexicon: &Lexicon) -> Vec<Token> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &(word, pos) in leaves {
        let word = word.to_lowercase();
        if is_noun(pos) {
            if let Some(&c) = lexicon.synonyms.get(&word) {
                if seen.insert(c) {
                    out.push(Token::Entity(c));
                }
            }
        } else {
            out.push(Token::Word(word));
        }
    }
    out
}

/// Build a left-associative tree from adjacent entity triplets.
pub fn map_relations(tokens: &[Token], lexicon: &Lexicon) -> Result<SemanticTree> {
    let missing = |name: &str| Error::Data(format!("lexicon has no {name:?} relation"));
    let other = lexicon.relation_named(OTHER).ok_or_else(|| missing(OTHER))?;
    let mut tree: Option<SemanticTree> = None;
    let mut last = 0;
    let mut span: Vec<&str> = Vec::new();
    for tok in tokens {
        match tok {
            Token::Word(w) => span.push(w),
            Token::Entity(c) => {
                tree = Some(match tree {
                    None => SemanticTree::Leaf(*c),
                    Some(t) => {
                        let rel = span.iter().find_map(|w| lexicon.lookup(last, w, *c)).unwrap_or(other);
                        SemanticTree::node(rel, t, SemanticTree::Leaf(*c))
                    }
                });
                last = *c;
                span.clear();
            }
        }
    }
    match tree {
        None => Err(Error::EmptyTree),
        Some(leaf @ SemanticTree::Leaf(_)) => {
            let bg = lexicon.relation_named(BACKGROUND).ok_or_else(|| missing(BACKGROUND))?;
            Ok(SemanticTree::node(bg, leaf, SemanticTree::Leaf(0)))
        }
        Some(t) => Ok(t),
    }
}

pub fn convert(tree: &ConstituencyTree, lexicon: &Lexicon) -> Result<SemanticTree> {
    let filtered = pos_filter(tree)?;
    let tokens = unify_nouns(&filtered.leaves(), lexicon);
    map_relations(&tokens, lexicon)
}
