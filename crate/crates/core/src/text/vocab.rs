//! Token vocabularies with min-count filtering.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lftree::{NONTERM, SEQ_END, SEQ_START, SUBTREE_START, UNK};

/// Fixed index of `<unk>`.
pub const UNK_INDEX: usize = 0;
/// Fixed index of `<s>`.
pub const SEQ_START_INDEX: usize = 1;
/// Fixed index of `</s>`.
pub const SEQ_END_INDEX: usize = 2;
/// Fixed index of `<n>`.
pub const NONTERM_INDEX: usize = 3;
/// Fixed index of `<(`.
pub const SUBTREE_START_INDEX: usize = 4;

/// The special tokens, in index order 0..5.
pub const SPECIALS: [&str; 5] = [UNK, SEQ_START, SEQ_END, NONTERM, SUBTREE_START];

/// A bidirectional token/index map. Specials occupy indices 0..5; the
/// remaining tokens are ordered by descending corpus count with
/// lexicographic tie-break, which makes construction deterministic and
/// insensitive to corpus ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: BTreeMap<String, usize>,
    index_to_token: Vec<String>,
    min_count: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from a corpus of token sequences. Tokens seen
    /// fewer than `min_count` times are excluded (they map to `<unk>`)
    /// unless `keep_all` is set. A `min_count` of 0 behaves like 1.
    pub fn build<T: AsRef<str>>(corpus: &[Vec<T>], min_count: usize, keep_all: bool) -> Vocabulary {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for seq in corpus {
            for tok in seq {
                *counts.entry(tok.as_ref()).or_insert(0) += 1;
            }
        }
        let min_count = min_count.max(1);
        let mut kept: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|(tok, count)| {
                !SPECIALS.contains(tok) && (keep_all || *count >= min_count as u64)
            })
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut index_to_token: Vec<String> =
            SPECIALS.iter().map(|s| s.to_string()).collect();
        index_to_token.extend(kept.into_iter().map(|(tok, _)| tok.to_string()));
        Self::from_token_list(index_to_token, min_count).expect("specials are well-formed")
    }

    /// Reconstructs a vocabulary from an ordered token list (checkpoint
    /// loading). The first five entries must be the specials in their fixed
    /// order and no token may repeat.
    pub fn from_token_list(index_to_token: Vec<String>, min_count: usize) -> Result<Vocabulary> {
        if index_to_token.len() < SPECIALS.len() {
            return Err(Error::Vocabulary("token list shorter than specials".into()));
        }
        for (i, expected) in SPECIALS.iter().enumerate() {
            if index_to_token[i] != *expected {
                return Err(Error::Vocabulary(alloc::format!(
                    "special token {expected:?} missing from index {i}, found {:?}",
                    index_to_token[i]
                )));
            }
        }
        let mut token_to_index = BTreeMap::new();
        for (i, tok) in index_to_token.iter().enumerate() {
            if token_to_index.insert(tok.clone(), i).is_some() {
                return Err(Error::Vocabulary(alloc::format!(
                    "duplicate token {tok:?}"
                )));
            }
        }
        Ok(Vocabulary {
            token_to_index,
            index_to_token,
            min_count,
        })
    }

    /// Index of a token, `<unk>`'s index when absent.
    pub fn index(&self, token: &str) -> usize {
        self.token_to_index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    /// Index of a token, or a vocabulary error when absent.
    pub fn index_strict(&self, token: &str) -> Result<usize> {
        self.token_to_index
            .get(token)
            .copied()
            .ok_or_else(|| Error::Vocabulary(alloc::format!("token {token:?} not in vocabulary")))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_index.contains_key(token)
    }

    /// Token at an index.
    pub fn token(&self, index: usize) -> &str {
        &self.index_to_token[index]
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// All tokens in index order.
    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    /// Maps a token sequence to indices, unknown tokens to `<unk>`.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seqs(data: &[&[&str]]) -> Vec<Vec<String>> {
        data.iter()
            .map(|s| s.iter().map(|t| t.to_string()).collect())
            .collect()
    }

    #[test]
    fn min_count_excludes_rare_tokens() {
        let v = Vocabulary::build(&seqs(&[&["a", "b"], &["a"]]), 2, false);
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
        assert_eq!(v.index("b"), UNK_INDEX);
    }

    #[test]
    fn keep_all_overrides_min_count() {
        let v = Vocabulary::build(&seqs(&[&["a", "b"], &["a"]]), 2, true);
        assert!(v.contains("a") && v.contains("b"));
    }

    #[test]
    fn specials_sit_at_fixed_indices() {
        let v = Vocabulary::build(&seqs(&[&["x"]]), 1, false);
        for (i, s) in SPECIALS.iter().enumerate() {
            assert_eq!(v.index(s), i);
            assert_eq!(v.token(i), *s);
        }
        assert_eq!(v.index("x"), 5);
    }

    #[test]
    fn construction_is_order_insensitive() {
        let a = Vocabulary::build(&seqs(&[&["b", "a"], &["c", "a"]]), 1, false);
        let b = Vocabulary::build(&seqs(&[&["c", "a"], &["b", "a"]]), 1, false);
        assert_eq!(a, b);
        // a occurs twice: first non-special slot; b/c tie broken lexicographically.
        assert_eq!(a.token(5), "a");
        assert_eq!(a.token(6), "b");
        assert_eq!(a.token(7), "c");
    }

    #[test]
    fn round_trips_through_token_list() {
        let v = Vocabulary::build(&seqs(&[&["b", "a", "a"]]), 1, false);
        let rebuilt = Vocabulary::from_token_list(v.tokens().to_vec(), v.min_count()).unwrap();
        assert_eq!(v, rebuilt);
        assert!(Vocabulary::from_token_list(vec!["<unk>".into()], 1).is_err());
    }
}
