//! Retrieval-assisted speculative decoding at desk scale.
//!
//! A model drafter fills a fixed-shape draft tree, statistical search over a
//! local-history trie and a suffix-array datastore appends one deep branch
//! (and optionally deepens a drafted branch), and a deterministic base model
//! verifies the whole tree in one batched pass. Output is always identical to
//! greedy autoregressive decoding.
//!
//! Modules:
//! - [`tree`]: tokens, draft-tree templates, ancestor masks.
//! - [`model`]: the base-model contract, padded KV cache, n-gram and tiny
//!   transformer reference models.
//! - [`drafter`]: trie, suffix array, statistical search, model drafting.
//! - [`composer`]: tree union, branch appending, deepening.
//! - [`engine`]: the generation loop, verification and run metrics.
//! - [`analysis`]: self-repetition metric, cost model, tree tuning.

pub mod analysis;
pub mod composer;
pub mod drafter;
pub mod engine;
pub mod model;
pub mod tree;

pub use tree::{
    AncestorMask, Branch, DraftTree, DraftTreeTemplate, TokenId, TreeLimits, PAD_TOKEN, UNK,
};
