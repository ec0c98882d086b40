//! Tree composition: prefix-tree union, single-branch attachment under the
//! root, and deepening of one draft branch.
//!
//! [`append_branch`] and [`deepen`] only ever add nodes after the existing
//! ones, so earlier indices, parents, tokens and mask rows are untouched. With
//! a fixed branch length (see [`Branch::padded`]) the resulting template
//! depends only on the input template, which is what batched verification
//! needs. [`union`] merges shared prefixes and therefore does not keep the
//! shape fixed; it is kept for comparison experiments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{Branch, DraftTree, TokenId, TreeLimits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    DraftModel,
    StatSearch,
    Shared,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComposeError {
    #[error("root tokens differ: {0} vs {1}")]
    RootMismatch(TokenId, TokenId),
    #[error("branch attaches at node {0}, expected the root")]
    NotAtRoot(usize),
    #[error("branch index {index} out of range ({leaves} leaves)")]
    BranchIndex { index: usize, leaves: usize },
    #[error("prefix length {prefix_len} exceeds branch length {len}")]
    PrefixTooLong { prefix_len: usize, len: usize },
    #[error(
        "composed tree needs {draft_tokens} draft tokens and depth {depth}, limits are {limits:?}"
    )]
    Capacity {
        draft_tokens: usize,
        depth: usize,
        limits: TreeLimits,
    },
}

/// A draft tree with a provenance tag per node. The root is always
/// [`Provenance::Shared`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComposedTree {
    pub tree: DraftTree,
    pub provenance: Vec<Provenance>,
}

impl ComposedTree {
    /// Wraps a model-drafted tree.
    pub fn from_draft(tree: DraftTree) -> Self {
        Self::tagged(tree, Provenance::DraftModel)
    }

    /// Wraps a tree from statistical search.
    pub fn from_search(tree: DraftTree) -> Self {
        Self::tagged(tree, Provenance::StatSearch)
    }

    fn tagged(tree: DraftTree, tag: Provenance) -> Self {
        let mut provenance = vec![tag; tree.len()];
        provenance[0] = Provenance::Shared;
        Self { tree, provenance }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn count(&self, tag: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == tag).count()
    }

    fn with_chain(
        &self,
        attach: usize,
        tokens: &[TokenId],
        limits: &TreeLimits,
    ) -> Result<Self, ComposeError> {
        if tokens.is_empty() {
            return Ok(self.clone());
        }
        let t = self.tree.template();
        let draft_tokens = t.draft_tokens() + tokens.len();
        let depth = t.depth().max(t.depth_of(attach) + tokens.len());
        if draft_tokens > limits.max_draft_tokens || depth > limits.max_depth {
            return Err(ComposeError::Capacity {
                draft_tokens,
                depth,
                limits: *limits,
            });
        }
        let template = t.with_chain(attach, tokens.len());
        let mut all = self.tree.tokens().to_vec();
        all.extend_from_slice(tokens);
        let mut provenance = self.provenance.clone();
        provenance.resize(all.len(), Provenance::StatSearch);
        Ok(Self {
            tree: DraftTree::new(template, all).expect("one token per node"),
            provenance,
        })
    }
}

/// Merges two prefix trees. Nodes of `a` keep their indices; nodes of `b`
/// whose root path already exists are merged into it (lowest-index matching
/// child) and tagged shared, the rest are appended in `b`'s order.
pub fn union(a: &DraftTree, b: &DraftTree) -> Result<ComposedTree, ComposeError> {
    if a.root_token() != b.root_token() {
        return Err(ComposeError::RootMismatch(a.root_token(), b.root_token()));
    }
    let mut parents = a.template().parents().to_vec();
    let mut tokens = a.tokens().to_vec();
    let mut provenance = vec![Provenance::DraftModel; a.len()];
    provenance[0] = Provenance::Shared;
    let mut children = a.template().child_lists();
    let mut map = vec![0usize; b.len()];
    for j in 1..b.len() {
        let p = map[b.template().parent(j).expect("non-root has a parent")];
        let tok = b.token(j);
        let existing = children[p].iter().copied().find(|&c| tokens[c] == tok);
        map[j] = match existing {
            Some(c) => {
                if provenance[c] == Provenance::DraftModel {
                    provenance[c] = Provenance::Shared;
                }
                c
            }
            None => {
                let id = tokens.len();
                parents.push(Some(p));
                tokens.push(tok);
                provenance.push(Provenance::StatSearch);
                children[p].push(id);
                children.push(Vec::new());
                id
            }
        };
    }
    let template = crate::tree::DraftTreeTemplate::with_limits(parents, &TreeLimits::unbounded())
        .expect("merged nodes are appended after their parents");
    Ok(ComposedTree {
        tree: DraftTree::new(template, tokens).expect("one token per node"),
        provenance,
    })
}

/// Attaches `branch` as a fresh chain under the root, after all existing
/// nodes. Duplicates of existing paths are kept. An empty branch is a no-op.
pub fn append_branch(
    tree: &ComposedTree,
    branch: &Branch,
    limits: &TreeLimits,
) -> Result<ComposedTree, ComposeError> {
    if branch.attach_at != 0 {
        return Err(ComposeError::NotAtRoot(branch.attach_at));
    }
    tree.with_chain(0, &branch.tokens, limits)
}

/// Where [`deepen`] extends the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[derive(Default)]
pub struct DeepenSpec {
    /// Leaf index in [`DraftTreeTemplate::leaves`](crate::DraftTreeTemplate::leaves) order.
    pub branch_index: usize,
    /// Number of branch tokens (below the root) fed to the search; `None`
    /// means the whole branch.
    pub prefix_len: Option<usize>,
    /// Pad or cut the retrieved continuation to this many tokens so the
    /// resulting shape does not depend on the search outcome.
    pub fixed_len: Option<usize>,
}


/// Extends one branch with a retrieved continuation.
///
/// Searches `context ⊕ branch[..prefix_len]` and appends the result as a chain
/// below the branch node at depth `prefix_len`. A miss leaves the tree
/// unchanged unless `fixed_len` asks for a padded chain.
pub fn deepen<F>(
    tree: &ComposedTree,
    context: &[TokenId],
    spec: &DeepenSpec,
    search: F,
    limits: &TreeLimits,
) -> Result<ComposedTree, ComposeError>
where
    F: FnOnce(&[TokenId]) -> Branch,
{
    let t = tree.tree.template();
    let leaves = t.leaves();
    let &leaf = leaves
        .get(spec.branch_index)
        .ok_or(ComposeError::BranchIndex {
            index: spec.branch_index,
            leaves: leaves.len(),
        })?;
    let path = t.path_to(leaf);
    let len = path.len() - 1;
    let prefix_len = spec.prefix_len.unwrap_or(len);
    if prefix_len > len {
        return Err(ComposeError::PrefixTooLong { prefix_len, len });
    }
    let mut query = context.to_vec();
    query.extend(path[1..=prefix_len].iter().map(|&n| tree.tree.token(n)));
    let mut found = search(&query);
    if let Some(fixed) = spec.fixed_len {
        found = found.padded(fixed);
    }
    tree.with_chain(path[prefix_len], &found.tokens, limits)
}
