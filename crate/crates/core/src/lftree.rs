//! Logical forms as rooted ordered trees.
//!
//! A logical form string like `(population:i (argmax $0 (state:t $0)
//! (area:i $0)))` parses into a tree whose subtrees correspond to bracketed
//! spans. Trees linearize into per-node token sequences in which child
//! subtrees are replaced by the `<n>` nonterminal token: that linearization
//! is the target representation of the hierarchical decoder. Productions
//! extracted from a tree feed the balanced-F1 metric.

pub mod prolog;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// The nonterminal placeholder standing for a subtree.
pub const NONTERM: &str = "<n>";
/// Start-of-sequence token (first decoder input of a root sequence).
pub const SEQ_START: &str = "<s>";
/// End-of-sequence token; every level sequence ends with it.
pub const SEQ_END: &str = "</s>";
/// First decoder input of a nonterminal (subtree) sequence.
pub const SUBTREE_START: &str = "<(";
/// Unknown-word token.
pub const UNK: &str = "<unk>";

/// One node of a logical form: a leaf token or an ordered subtree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum LfNode {
    Leaf(String),
    Subtree(Vec<LfNode>),
}

impl LfNode {
    /// Nesting depth: 0 for a leaf, 1 + max child depth for a subtree.
    pub fn depth(&self) -> usize {
        match self {
            LfNode::Leaf(_) => 0,
            LfNode::Subtree(children) => {
                1 + children.iter().map(LfNode::depth).max().unwrap_or(0)
            }
        }
    }

    /// The node's first leaf token, descending through first children.
    /// An empty subtree (possible only in truncated decoder output) labels
    /// itself `()`.
    pub fn head(&self) -> &str {
        match self {
            LfNode::Leaf(tok) => tok,
            LfNode::Subtree(children) => children.first().map_or("()", LfNode::head),
        }
    }
}

/// A logical form: the ordered children of an implicit root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LfTree {
    pub root_children: Vec<LfNode>,
}

/// One production of a tree: the labels of an internal node's children under
/// its head label (`ROOT` for the top level). Subtree children are labeled
/// `(head)` to keep them distinct from identically named leaves.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Production {
    pub parent: String,
    pub children: Vec<String>,
}

/// One linearized tree node: its tokens with subtrees replaced by `<n>`,
/// terminated by `</s>`. `parent` identifies the `<n>` occurrence that spawned
/// this sequence as `(parent node_id, token index within the parent)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSequence {
    pub node_id: usize,
    pub parent: Option<(usize, usize)>,
    pub tokens: Vec<String>,
    pub depth: usize,
}

/// Splits a logical-form string into tokens: brackets are single-token
/// separators, whitespace separates, and a token starting with `'` runs to
/// the closing quote so quoted Prolog constants (possibly containing spaces)
/// stay in one piece.
pub fn lf_tokens(s: &str) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' || c == ')' {
            tokens.push(c.to_string());
            i += 1;
        } else if c == '\'' {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i] as char != '\'' {
                i += 1;
            }
            if i >= bytes.len() {
                return Err(Error::Parse {
                    position: start,
                    message: "unterminated quoted constant".into(),
                });
            }
            i += 1;
            tokens.push(s[start..i].to_string());
        } else {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_whitespace() || c == '(' || c == ')' {
                    break;
                }
                i += 1;
            }
            tokens.push(s[start..i].to_string());
        }
    }
    Ok(tokens)
}

impl LfTree {
    /// Parses a bracketed logical form. Unbalanced brackets and empty
    /// subtrees are reported with their byte position.
    pub fn parse(s: &str) -> Result<LfTree> {
        let tokens = lf_tokens(s)?;
        if tokens.is_empty() {
            return Err(Error::Parse {
                position: 0,
                message: "empty logical form".into(),
            });
        }
        Self::from_tokens(&tokens)
    }

    /// Parses from an already tokenized form (brackets as their own tokens).
    pub fn from_tokens<T: AsRef<str>>(tokens: &[T]) -> Result<LfTree> {
        let mut stack: Vec<Vec<LfNode>> = vec![Vec::new()];
        for (pos, tok) in tokens.iter().enumerate() {
            match tok.as_ref() {
                "(" => stack.push(Vec::new()),
                ")" => {
                    let children = stack.pop().unwrap();
                    if stack.is_empty() {
                        return Err(Error::Parse {
                            position: pos,
                            message: "unbalanced ')'".into(),
                        });
                    }
                    if children.is_empty() {
                        return Err(Error::Parse {
                            position: pos,
                            message: "empty subtree '()'".into(),
                        });
                    }
                    stack.last_mut().unwrap().push(LfNode::Subtree(children));
                }
                t => stack.last_mut().unwrap().push(LfNode::Leaf(t.to_string())),
            }
        }
        if stack.len() != 1 {
            return Err(Error::Parse {
                position: tokens.len(),
                message: format!("{} unclosed '('", stack.len() - 1),
            });
        }
        let root_children = stack.pop().unwrap();
        if root_children.is_empty() {
            return Err(Error::Parse {
                position: 0,
                message: "empty logical form".into(),
            });
        }
        Ok(LfTree { root_children })
    }

    /// Serializes back to a string with no space after `(` or before `)`.
    /// Inverse of [`LfTree::parse`].
    pub fn serialize(&self) -> String {
        fn write_node(node: &LfNode, out: &mut String) {
            match node {
                LfNode::Leaf(tok) => out.push_str(tok),
                LfNode::Subtree(children) => {
                    out.push('(');
                    for (i, child) in children.iter().enumerate() {
                        if i > 0 {
                            out.push(' ');
                        }
                        write_node(child, out);
                    }
                    out.push(')');
                }
            }
        }
        let mut out = String::new();
        for (i, child) in self.root_children.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write_node(child, &mut out);
        }
        out
    }

    /// Flat token sequence including bracket tokens; the sequence-decoder
    /// target representation.
    pub fn to_flat_tokens(&self) -> Vec<String> {
        fn push_node(node: &LfNode, out: &mut Vec<String>) {
            match node {
                LfNode::Leaf(tok) => out.push(tok.clone()),
                LfNode::Subtree(children) => {
                    out.push("(".to_string());
                    for child in children {
                        push_node(child, out);
                    }
                    out.push(")".to_string());
                }
            }
        }
        let mut out = Vec::new();
        for child in &self.root_children {
            push_node(child, &mut out);
        }
        out
    }

    /// Maximum bracket nesting depth (0 for a bracket-free form).
    pub fn depth(&self) -> usize {
        self.root_children.iter().map(LfNode::depth).max().unwrap_or(0)
    }

    /// Linearizes the tree into per-node sequences in breadth-first order:
    /// the root sequence first, then one sequence per subtree, each with
    /// child subtrees replaced by `<n>` and terminated by `</s>`.
    pub fn to_level_sequences(&self) -> Vec<LevelSequence> {
        let mut out: Vec<LevelSequence> = Vec::new();
        // Queue of (node_id, children, parent link, depth); ids in BFS order.
        let mut queue: Vec<(usize, &[LfNode], Option<(usize, usize)>, usize)> =
            vec![(0, &self.root_children, None, 0)];
        let mut next_id = 1;
        let mut cursor = 0;
        while cursor < queue.len() {
            let (node_id, children, parent, depth) = queue[cursor];
            cursor += 1;
            let mut tokens = Vec::with_capacity(children.len() + 1);
            for child in children {
                match child {
                    LfNode::Leaf(tok) => tokens.push(tok.clone()),
                    LfNode::Subtree(grandchildren) => {
                        queue.push((
                            next_id,
                            grandchildren,
                            Some((node_id, tokens.len())),
                            depth + 1,
                        ));
                        next_id += 1;
                        tokens.push(NONTERM.to_string());
                    }
                }
            }
            tokens.push(SEQ_END.to_string());
            out.push(LevelSequence {
                node_id,
                parent,
                tokens,
                depth,
            });
        }
        out
    }

    /// Rebuilds a tree from level sequences; inverse of
    /// [`LfTree::to_level_sequences`]. Every `<n>` must have exactly one
    /// child sequence and every non-root sequence must be reachable.
    pub fn from_level_sequences(seqs: &[LevelSequence]) -> Result<LfTree> {
        let mut by_parent: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut root_idx: Option<usize> = None;
        let mut ids = BTreeSet::new();
        for (i, seq) in seqs.iter().enumerate() {
            if !ids.insert(seq.node_id) {
                return Err(Error::Structure(format!(
                    "duplicate node id {}",
                    seq.node_id
                )));
            }
            match seq.parent {
                None => {
                    if root_idx.replace(i).is_some() {
                        return Err(Error::Structure("more than one root sequence".into()));
                    }
                }
                Some(link) => {
                    if by_parent.insert(link, i).is_some() {
                        return Err(Error::Structure(format!(
                            "two sequences claim parent slot {link:?}"
                        )));
                    }
                }
            }
        }
        let root_idx = root_idx.ok_or_else(|| Error::Structure("no root sequence".into()))?;

        fn build(
            idx: usize,
            seqs: &[LevelSequence],
            by_parent: &BTreeMap<(usize, usize), usize>,
            used: &mut [bool],
        ) -> Result<Vec<LfNode>> {
            if used[idx] {
                return Err(Error::Structure("cyclic sequence links".into()));
            }
            used[idx] = true;
            let seq = &seqs[idx];
            if seq.tokens.last().map(String::as_str) != Some(SEQ_END) {
                return Err(Error::Structure(format!(
                    "sequence {} does not end with {SEQ_END}",
                    seq.node_id
                )));
            }
            let mut children = Vec::new();
            for (pos, tok) in seq.tokens[..seq.tokens.len() - 1].iter().enumerate() {
                if tok == NONTERM {
                    let child_idx = by_parent.get(&(seq.node_id, pos)).ok_or_else(|| {
                        Error::Structure(format!(
                            "dangling nonterminal at node {} position {pos}",
                            seq.node_id
                        ))
                    })?;
                    children.push(LfNode::Subtree(build(*child_idx, seqs, by_parent, used)?));
                } else {
                    children.push(LfNode::Leaf(tok.clone()));
                }
            }
            Ok(children)
        }

        let mut used = vec![false; seqs.len()];
        let root_children = build(root_idx, seqs, &by_parent, &mut used)?;
        if let Some(orphan) = used.iter().position(|u| !u) {
            return Err(Error::Structure(format!(
                "orphan sequence with node id {}",
                seqs[orphan].node_id
            )));
        }
        Ok(LfTree { root_children })
    }

    /// The production set of the tree: one production per internal node
    /// (plus the implicit root), parents labeled by head token.
    pub fn extract_productions(&self) -> BTreeSet<Production> {
        fn child_label(node: &LfNode) -> String {
            match node {
                LfNode::Leaf(tok) => tok.clone(),
                LfNode::Subtree(_) => format!("({})", node.head()),
            }
        }
        fn visit(parent: &str, children: &[LfNode], out: &mut BTreeSet<Production>) {
            out.insert(Production {
                parent: parent.to_string(),
                children: children.iter().map(child_label).collect(),
            });
            for child in children {
                if let LfNode::Subtree(grandchildren) = child {
                    visit(child.head(), grandchildren, out);
                }
            }
        }
        let mut out = BTreeSet::new();
        visit("ROOT", &self.root_children, &mut out);
        out
    }
}
