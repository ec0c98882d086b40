use serde::{Deserialize, Serialize};

use super::{SuffixArrayStore, TrieStore};
use crate::tree::{Branch, TokenId};

/// Knobs of the statistical search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    pub max_suffix_len: usize,
    pub min_suffix_len: usize,
    /// Fixed length of the retrieved branch.
    pub branch_depth: usize,
    pub subtree_max_depth: usize,
    pub subtree_max_nodes: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            max_suffix_len: 8,
            min_suffix_len: 2,
            branch_depth: 16,
            subtree_max_depth: 16,
            subtree_max_nodes: 24,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_suffix_len < 1 {
            return Err("min_suffix_len must be at least 1".into());
        }
        if self.max_suffix_len < self.min_suffix_len {
            return Err(format!(
                "max_suffix_len {} < min_suffix_len {}",
                self.max_suffix_len, self.min_suffix_len
            ));
        }
        if self.branch_depth < 1 {
            return Err("branch_depth must be at least 1".into());
        }
        Ok(())
    }

    /// Rolling-window length for the local history trie: long enough to hold
    /// the longest query suffix plus a full branch.
    pub fn trie_window(&self) -> usize {
        self.max_suffix_len + self.branch_depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSource {
    Trie,
    Datastore,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchHit {
    pub branch: Branch,
    pub suffix_len: usize,
    pub source: SearchSource,
}

/// Statistical search with suffix fallback.
///
/// Tries suffixes of the context from `max_suffix_len` down to
/// `min_suffix_len` tokens. For each length the local trie is asked first
/// (deepest branch of its frequency-ordered subtree), then the datastore
/// (greedy majority continuation). The first non-empty result wins.
pub fn stat_search_hit(
    trie: Option<&TrieStore>,
    store: Option<&SuffixArrayStore>,
    context: &[TokenId],
    params: &SearchParams,
) -> Option<SearchHit> {
    let longest = params.max_suffix_len.min(context.len());
    for len in (params.min_suffix_len..=longest).rev() {
        let suffix = &context[context.len() - len..];
        if let Some(trie) = trie {
            let tokens = trie.deepest_branch(
                suffix,
                params.subtree_max_depth.min(params.branch_depth),
                params.subtree_max_nodes,
            );
            if !tokens.is_empty() {
                return Some(SearchHit {
                    branch: Branch::new(tokens),
                    suffix_len: len,
                    source: SearchSource::Trie,
                });
            }
        }
        if let Some(store) = store {
            let branch = store.branch(suffix, params.branch_depth);
            if !branch.is_empty() {
                return Some(SearchHit {
                    branch,
                    suffix_len: len,
                    source: SearchSource::Datastore,
                });
            }
        }
    }
    None
}

/// [`stat_search_hit`] reduced to its branch; empty on a miss.
pub fn stat_search(
    trie: Option<&TrieStore>,
    store: Option<&SuffixArrayStore>,
    context: &[TokenId],
    params: &SearchParams,
) -> Branch {
    stat_search_hit(trie, store, context, params)
        .map(|h| h.branch)
        .unwrap_or_default()
}
