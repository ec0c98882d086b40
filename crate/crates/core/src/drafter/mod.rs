//! Draft-tree producers.
//!
//! [`model_draft`] fills a fixed template layer by layer from a small language
//! model. The statistical side pairs a per-row [`TrieStore`] over local history
//! with an immutable [`SuffixArrayStore`] datastore; [`stat_search`] queries
//! both with suffix fallback and returns a single branch.

mod search;
mod suffix_array;
mod trie;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{LanguageModel, ModelError};
use crate::tree::{DraftTree, DraftTreeTemplate, TokenId};

pub use search::{stat_search, stat_search_hit, SearchHit, SearchParams, SearchSource};
pub(crate) use suffix_array::{build_suffix_array, SuffixIndex};
pub use suffix_array::{DatastoreError, SuffixArrayStore, SEPARATOR};
pub use trie::TrieStore;

#[derive(Debug, Error)]
pub enum DraftError {
    #[error("node {node} has {children} children but the vocabulary has only {vocab} tokens")]
    TooWide {
        node: usize,
        children: usize,
        vocab: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Fills `template` from a drafter language model.
///
/// The root takes the last context token. Sweeping one depth level at a time,
/// each node with `c` children scores `context ⊕ path(node)` once and hands
/// its top-`c` tokens (descending score, ties to the lowest id) to its
/// children in index order. A template of depth `d` costs `d` sweeps.
pub fn model_draft<L: LanguageModel + ?Sized>(
    lm: &L,
    context: &[TokenId],
    template: &DraftTreeTemplate,
) -> Result<DraftTree, DraftError> {
    let &root = context.last().ok_or(ModelError::EmptyContext)?;
    let children = template.child_lists();
    let vocab = lm.vocab_size();
    if let Some((node, kids)) = children.iter().enumerate().find(|(_, k)| k.len() > vocab) {
        return Err(DraftError::TooWide {
            node,
            children: kids.len(),
            vocab,
        });
    }
    let mut tokens = vec![0; template.len()];
    tokens[0] = root;
    for depth in 0..template.depth() {
        let layer: Vec<usize> = (0..template.len())
            .filter(|&n| template.depth_of(n) == depth && !children[n].is_empty())
            .collect();
        let picks = layer
            .par_iter()
            .map(|&node| {
                let mut ctx = context.to_vec();
                ctx.extend(template.path_to(node)[1..].iter().map(|&n| tokens[n]));
                lm.next_distribution(&ctx)
                    .map(|d| d.top_k(children[node].len()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (node, top) in layer.iter().zip(picks) {
            for (&child, tok) in children[*node].iter().zip(top) {
                tokens[child] = tok;
            }
        }
    }
    Ok(DraftTree::new(template.clone(), tokens).expect("one token per node"))
}
