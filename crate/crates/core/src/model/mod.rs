//! Base-model contract and two deterministic reference models.
//!
//! [`LanguageModel`] is plain autoregressive scoring. [`BaseModel`] adds what
//! batched verification needs: scoring a whole draft tree against a row's
//! cached state and producing the per-node states that get committed to the
//! cache for accepted tokens.

mod cache;
mod ngram;
pub mod snapshot;
mod transformer;

use rayon::prelude::*;
use thiserror::Error;

use crate::tree::{AncestorMask, DraftTree, TokenId, TreeError, PAD_TOKEN};

pub use cache::{CacheError, Occupancy, PaddedKVCache};
pub use ngram::NGramModel;
pub use transformer::{TinyTransformer, TokenState, TransformerConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("token {token} is outside the vocabulary of size {vocab}")]
    OutOfVocab { token: TokenId, vocab: usize },
    #[error("context is empty")]
    EmptyContext,
    #[error("rows use different tree templates")]
    TemplateMismatch,
    #[error("mask has {mask} nodes but the tree has {tree}")]
    MaskMismatch { mask: usize, tree: usize },
    #[error("position {pos} exceeds max positions {max}")]
    Position { pos: usize, max: usize },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Next-token scores over a vocabulary, in the log domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    scores: Vec<f32>,
}

impl Distribution {
    pub fn new(scores: Vec<f32>) -> Self {
        debug_assert!(scores.iter().all(|s| s.is_finite()));
        Self { scores }
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn vocab_size(&self) -> usize {
        self.scores.len()
    }

    /// Highest-scoring token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate().skip(1) {
            if s > self.scores[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// The `k` best tokens by descending score, ties by ascending id.
    pub fn top_k(&self, k: usize) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = (0..self.scores.len() as TokenId).collect();
        let cmp = |a: &TokenId, b: &TokenId| {
            self.scores[*b as usize]
                .total_cmp(&self.scores[*a as usize])
                .then(a.cmp(b))
        };
        if k < ids.len() {
            ids.select_nth_unstable_by(k, cmp);
            ids.truncate(k);
        }
        ids.sort_by(cmp);
        ids
    }
}

/// Autoregressive scoring of a token context.
pub trait LanguageModel: Sync {
    fn vocab_size(&self) -> usize;

    /// Distribution of the token following `context`.
    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution, ModelError>;

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<(), ModelError> {
        let vocab = self.vocab_size();
        match tokens.iter().find(|&&t| t as usize >= vocab) {
            Some(&token) => Err(ModelError::OutOfVocab { token, vocab }),
            None => Ok(()),
        }
    }
}

/// Per-node output of a tree forward for one row. Nodes on a padding path
/// carry `None`: they can never be accepted, so they are not scored.
#[derive(Debug, Clone)]
pub struct RowForward<S> {
    pub dists: Vec<Option<Distribution>>,
    pub states: Vec<Option<S>>,
}

/// A model that can verify draft trees in batch against a padded cache.
///
/// Cache convention: a row's valid states cover its accepted context except
/// the last token, which is the next tree's root. A node at depth `d` sits at
/// position `valid_count(row) + d`.
pub trait BaseModel: LanguageModel {
    /// Cached per-token state.
    type State: Clone + Default + Send + Sync;

    /// Largest cache width the model can address.
    fn max_positions(&self) -> usize;

    /// Scores every node of `tree` for one row. The distribution at node `i`
    /// must equal `next_distribution(row context ⊕ path(root → i))`.
    fn forward_row(
        &self,
        cache: &PaddedKVCache<Self::State>,
        row: usize,
        tree: &DraftTree,
        mask: &AncestorMask,
    ) -> Result<RowForward<Self::State>, ModelError>;

    /// Builds a cache holding every prompt token except the last.
    fn prefill(&self, prompts: &[Vec<TokenId>]) -> Result<PaddedKVCache<Self::State>, ModelError> {
        let mut cache = PaddedKVCache::new(prompts.len(), self.max_positions());
        let mut states = Vec::with_capacity(prompts.len());
        for (row, prompt) in prompts.iter().enumerate() {
            let (_, rest) = prompt.split_last().ok_or(ModelError::EmptyContext)?;
            self.check_tokens(prompt)?;
            if rest.is_empty() {
                states.push(Vec::new());
                continue;
            }
            let chain = DraftTree::chain(rest[0], &rest[1..]);
            let mask = AncestorMask::derive(chain.template());
            let out = self.forward_row(&cache, row, &chain, &mask)?;
            states.push(
                out.states
                    .into_iter()
                    .map(|s| s.expect("prompt has no padding"))
                    .collect(),
            );
        }
        cache.append(states)?;
        Ok(cache)
    }

    /// Scores every active row (rows given as `Some`). All trees must share
    /// one template matching `mask`.
    fn forward_tree(
        &self,
        cache: &PaddedKVCache<Self::State>,
        trees: &[Option<DraftTree>],
        mask: &AncestorMask,
    ) -> Result<Vec<Option<RowForward<Self::State>>>, ModelError> {
        let mut template = None;
        for tree in trees.iter().flatten() {
            match template {
                None => template = Some(tree.template()),
                Some(t) if t != tree.template() => return Err(ModelError::TemplateMismatch),
                _ => {}
            }
            if tree.len() != mask.len() {
                return Err(ModelError::MaskMismatch {
                    mask: mask.len(),
                    tree: tree.len(),
                });
            }
        }
        trees
            .par_iter()
            .enumerate()
            .map(|(row, tree)| match tree {
                Some(tree) => self.forward_row(cache, row, tree, mask).map(Some),
                None => Ok(None),
            })
            .collect()
    }
}

/// Marks nodes whose path from the root contains a padding token.
pub(crate) fn padding_paths(tree: &DraftTree) -> Vec<bool> {
    let t = tree.template();
    let mut pad = vec![false; tree.len()];
    for i in 0..tree.len() {
        pad[i] = tree.token(i) == PAD_TOKEN || t.parent(i).is_some_and(|p| pad[p]);
    }
    pad
}
