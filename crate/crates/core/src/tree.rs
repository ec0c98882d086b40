//! Draft trees and the ancestor masks used to verify them in one pass.
//!
//! A [`DraftTreeTemplate`] is the token-free shape of a draft tree: one parent
//! index per node, in topological order, with node 0 as the root. Every row of
//! a batch shares one template, so one [`AncestorMask`] serves the whole batch.
//! A [`DraftTree`] fills a template with tokens; its root token is always the
//! last token of the already accepted context.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index into a model vocabulary.
pub type TokenId = u32;

/// Unknown-token id. Always present in a vocabulary.
pub const UNK: TokenId = 0;

/// Filler token for fixed-shape padding nodes. Lies outside every vocabulary,
/// so it can never equal a model's argmax and is never accepted.
pub const PAD_TOKEN: TokenId = u32::MAX;

/// Size limits a template must respect.
///
/// `max_draft_tokens` counts non-root nodes only: the root carries the last
/// accepted token and is not a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeLimits {
    pub max_depth: usize,
    pub max_draft_tokens: usize,
}

impl TreeLimits {
    /// No size limits; for internally built trees whose size the caller bounds.
    pub const fn unbounded() -> Self {
        Self {
            max_depth: usize::MAX,
            max_draft_tokens: usize::MAX,
        }
    }
}

impl Default for TreeLimits {
    fn default() -> Self {
        Self {
            max_depth: 128,
            max_draft_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    RootHasParent {
        parent: usize,
    },
    MissingParent {
        node: usize,
    },
    ParentNotBefore {
        node: usize,
        parent: usize,
    },
    TooDeep {
        node: usize,
        depth: usize,
        max: usize,
    },
    TooManyNodes {
        draft_tokens: usize,
        max: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Empty => write!(f, "template has no nodes"),
            Violation::RootHasParent { parent } => {
                write!(f, "parents[0]={parent} but the root must have no parent")
            }
            Violation::MissingParent { node } => {
                write!(
                    f,
                    "parents[{node}] is null; only the root may lack a parent"
                )
            }
            Violation::ParentNotBefore { node, parent } => {
                write!(f, "parents[{node}]={parent} ≥ {node}")
            }
            Violation::TooDeep { node, depth, max } => {
                write!(f, "node {node} has depth {depth} > max_depth {max}")
            }
            Violation::TooManyNodes { draft_tokens, max } => {
                write!(f, "{draft_tokens} draft tokens > max_draft_tokens {max}")
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("invalid template: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("tree has {tokens} tokens but its template has {nodes} nodes")]
    TokenCountMismatch { tokens: usize, nodes: usize },
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("template JSON: {0}")]
    Json(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Checks every structural invariant of a parent array and reports all
/// violations, each naming the offending node.
pub fn validate_parents(
    parents: &[Option<usize>],
    limits: &TreeLimits,
) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if parents.is_empty() {
        return Err(vec![Violation::Empty]);
    }
    if let Some(p) = parents[0] {
        out.push(Violation::RootHasParent { parent: p });
    }
    let mut depth = vec![0usize; parents.len()];
    for (i, p) in parents.iter().enumerate().skip(1) {
        match *p {
            None => out.push(Violation::MissingParent { node: i }),
            Some(p) if p >= i => out.push(Violation::ParentNotBefore { node: i, parent: p }),
            Some(p) => {
                depth[i] = depth[p] + 1;
                if depth[i] > limits.max_depth {
                    out.push(Violation::TooDeep {
                        node: i,
                        depth: depth[i],
                        max: limits.max_depth,
                    });
                }
            }
        }
    }
    if parents.len() - 1 > limits.max_draft_tokens {
        out.push(Violation::TooManyNodes {
            draft_tokens: parents.len() - 1,
            max: limits.max_draft_tokens,
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Fixed tree shape as a topologically ordered parent array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TemplateFile", into = "TemplateFile")]
pub struct DraftTreeTemplate {
    parents: Vec<Option<usize>>,
    depths: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    parents: Vec<Option<usize>>,
}

impl TryFrom<TemplateFile> for DraftTreeTemplate {
    type Error = TreeError;

    fn try_from(f: TemplateFile) -> Result<Self, Self::Error> {
        DraftTreeTemplate::new(f.parents)
    }
}

impl From<DraftTreeTemplate> for TemplateFile {
    fn from(t: DraftTreeTemplate) -> Self {
        TemplateFile { parents: t.parents }
    }
}

impl DraftTreeTemplate {
    /// Builds a template, checking structure under the default limits.
    pub fn new(parents: Vec<Option<usize>>) -> Result<Self, TreeError> {
        Self::with_limits(parents, &TreeLimits::default())
    }

    pub fn with_limits(
        parents: Vec<Option<usize>>,
        limits: &TreeLimits,
    ) -> Result<Self, TreeError> {
        validate_parents(&parents, limits).map_err(TreeError::Invalid)?;
        let mut depths = vec![0; parents.len()];
        for i in 1..parents.len() {
            depths[i] = depths[parents[i].unwrap()] + 1;
        }
        Ok(Self { parents, depths })
    }

    pub fn root_only() -> Self {
        Self {
            parents: vec![None],
            depths: vec![0],
        }
    }

    /// A single chain with `draft_tokens` nodes below the root.
    pub fn chain(draft_tokens: usize) -> Self {
        let parents = std::iter::once(None)
            .chain((0..draft_tokens).map(Some))
            .collect();
        Self::with_limits(parents, &TreeLimits::unbounded()).expect("chain is always valid")
    }

    /// Builds a template from sibling-rank paths, the notation used for static
    /// speculative trees: `[0, 1]` is the second child of the root's first
    /// child. Every proper prefix of a path must itself be listed (or be the
    /// root). Nodes are numbered breadth-first, siblings by rank.
    pub fn from_choices(choices: &[Vec<usize>]) -> Result<Self, TreeError> {
        let mut sorted: Vec<&Vec<usize>> = choices.iter().collect();
        sorted.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        sorted.dedup();
        let mut index: std::collections::HashMap<&[usize], usize> =
            std::collections::HashMap::new();
        index.insert(&[], 0);
        let mut parents = vec![None];
        for path in sorted {
            if path.is_empty() {
                continue;
            }
            let parent = *index
                .get(&path[..path.len() - 1])
                .ok_or(TreeError::Invalid(vec![Violation::MissingParent {
                    node: parents.len(),
                }]))?;
            index.insert(path.as_slice(), parents.len());
            parents.push(Some(parent));
        }
        Self::new(parents)
    }

    /// Tree used when none is configured: 26 draft tokens, depth 5, with the
    /// higher-ranked branches grown deeper.
    pub fn default_tree() -> Self {
        let choices: Vec<Vec<usize>> = vec![
            vec![0],
            vec![1],
            vec![2],
            vec![3],
            vec![0, 0],
            vec![0, 1],
            vec![0, 2],
            vec![1, 0],
            vec![1, 1],
            vec![2, 0],
            vec![2, 1],
            vec![3, 0],
            vec![0, 0, 0],
            vec![0, 0, 1],
            vec![0, 0, 2],
            vec![0, 1, 0],
            vec![0, 1, 1],
            vec![0, 2, 0],
            vec![1, 0, 0],
            vec![1, 1, 0],
            vec![0, 0, 0, 0],
            vec![0, 0, 0, 1],
            vec![0, 0, 1, 0],
            vec![0, 1, 0, 0],
            vec![0, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 1],
        ];
        Self::from_choices(&choices).expect("built-in tree is valid")
    }

    pub fn from_json(s: &str) -> Result<Self, TreeError> {
        serde_json::from_str(s).map_err(|e| TreeError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("template serializes")
    }

    /// Re-checks this template against tighter limits.
    pub fn check(&self, limits: &TreeLimits) -> Result<(), TreeError> {
        validate_parents(&self.parents, limits).map_err(TreeError::Invalid)
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parents[node]
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    /// Always false: a template has at least its root.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn draft_tokens(&self) -> usize {
        self.parents.len() - 1
    }

    pub fn depth_of(&self, node: usize) -> usize {
        self.depths[node]
    }

    pub fn depths(&self) -> &[usize] {
        &self.depths
    }

    /// Depth of the deepest node; the number of layers a model drafter sweeps.
    pub fn depth(&self) -> usize {
        self.depths.iter().copied().max().unwrap_or(0)
    }

    /// Children of `node` in index order.
    pub fn children(&self, node: usize) -> Vec<usize> {
        (node + 1..self.parents.len())
            .filter(|&j| self.parents[j] == Some(node))
            .collect()
    }

    /// Child lists for every node, each in index order.
    pub fn child_lists(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.parents.len()];
        for (i, p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                out[*p].push(i);
            }
        }
        out
    }

    /// Leaves in branch order: depth-first, children visited by index. The
    /// first leaf ends the all-first-children branch.
    pub fn leaves(&self) -> Vec<usize> {
        let children = self.child_lists();
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            if children[n].is_empty() {
                if n != 0 {
                    out.push(n);
                }
                continue;
            }
            stack.extend(children[n].iter().rev());
        }
        out
    }

    /// Node indices from the root down to `node`, both included.
    pub fn path_to(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parents[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Appends a chain of `len` nodes under `attach`, returning the new template.
    pub(crate) fn with_chain(&self, attach: usize, len: usize) -> Self {
        let mut parents = self.parents.clone();
        let mut depths = self.depths.clone();
        let mut prev = attach;
        for _ in 0..len {
            parents.push(Some(prev));
            depths.push(depths[prev] + 1);
            prev = parents.len() - 1;
        }
        Self { parents, depths }
    }

    /// Keeps only the listed nodes (which must include the root and be closed
    /// under taking parents), renumbering them in original order.
    pub(crate) fn restrict(&self, keep: &[bool]) -> Self {
        let mut remap = vec![usize::MAX; self.len()];
        let mut parents = Vec::new();
        for i in 0..self.len() {
            if keep[i] {
                remap[i] = parents.len();
                parents.push(self.parents[i].map(|p| remap[p]));
            }
        }
        Self::with_limits(parents, &TreeLimits::unbounded())
            .expect("restriction of a tree to an ancestor-closed set is a tree")
    }
}

/// A template filled with one token per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DraftTree {
    template: DraftTreeTemplate,
    tokens: Vec<TokenId>,
}

impl DraftTree {
    pub fn new(template: DraftTreeTemplate, tokens: Vec<TokenId>) -> Result<Self, TreeError> {
        if tokens.len() != template.len() {
            return Err(TreeError::TokenCountMismatch {
                tokens: tokens.len(),
                nodes: template.len(),
            });
        }
        Ok(Self { template, tokens })
    }

    pub fn root_only(root: TokenId) -> Self {
        Self {
            template: DraftTreeTemplate::root_only(),
            tokens: vec![root],
        }
    }

    /// A chain tree: `root` followed by `tokens`.
    pub fn chain(root: TokenId, tokens: &[TokenId]) -> Self {
        let mut all = Vec::with_capacity(tokens.len() + 1);
        all.push(root);
        all.extend_from_slice(tokens);
        Self {
            template: DraftTreeTemplate::chain(tokens.len()),
            tokens: all,
        }
    }

    pub fn template(&self) -> &DraftTreeTemplate {
        &self.template
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn token(&self, node: usize) -> TokenId {
        self.tokens[node]
    }

    pub fn root_token(&self) -> TokenId {
        self.tokens[0]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tokens on the path from the root's child down to `node`; empty for the
    /// root itself.
    pub fn path_tokens(&self, node: usize) -> Vec<TokenId> {
        self.template.path_to(node)[1..]
            .iter()
            .map(|&n| self.tokens[n])
            .collect()
    }

    /// One token path per leaf, in branch order, excluding the root token.
    /// Duplicate branches are kept.
    pub fn flatten_branches(&self) -> Vec<Vec<TokenId>> {
        self.template
            .leaves()
            .into_iter()
            .map(|leaf| self.path_tokens(leaf))
            .collect()
    }

    /// True if `node` or any of its ancestors carries [`PAD_TOKEN`].
    pub fn is_padding_path(&self, node: usize) -> bool {
        self.template
            .path_to(node)
            .iter()
            .any(|&n| self.tokens[n] == PAD_TOKEN)
    }
}

/// Attachment point and tokens of a single retrieved branch.
///
/// An empty branch is the explicit "no match" value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Branch {
    pub tokens: Vec<TokenId>,
    pub attach_at: usize,
}

impl Branch {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        Self {
            tokens,
            attach_at: 0,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Pads (or truncates) to exactly `len` tokens with [`PAD_TOKEN`].
    pub fn padded(&self, len: usize) -> Branch {
        let mut tokens = self.tokens.clone();
        tokens.resize(len, PAD_TOKEN);
        Branch {
            tokens,
            attach_at: self.attach_at,
        }
    }
}

/// Square boolean matrix; `get(i, j)` is true iff node `j` is node `i` or one
/// of its ancestors, i.e. row `i` lists what node `i` may attend to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AncestorMask {
    n: usize,
    bits: Vec<bool>,
}

impl AncestorMask {
    /// Row `i` is the parent's row plus the diagonal; parents precede children
    /// so one pass suffices.
    pub fn derive(template: &DraftTreeTemplate) -> Self {
        let n = template.len();
        let mut bits = vec![false; n * n];
        for i in 0..n {
            if let Some(p) = template.parent(i) {
                let (done, rest) = bits.split_at_mut(i * n);
                rest[..n].copy_from_slice(&done[p * n..p * n + n]);
            }
            bits[i * n + i] = true;
        }
        Self { n, bits }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.n..(i + 1) * self.n]
    }

    /// Indices `j` with `get(i, j)`, ascending.
    pub fn attended(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(j, _)| j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tpl(p: &[Option<usize>]) -> DraftTreeTemplate {
        DraftTreeTemplate::new(p.to_vec()).unwrap()
    }

    #[test]
    fn validate_examples() {
        let lim = TreeLimits::default();
        assert!(validate_parents(&[None], &lim).is_ok());
        assert!(validate_parents(&[None, Some(0), Some(0), Some(1)], &lim).is_ok());
        let err = validate_parents(&[None, Some(2), Some(0)], &lim).unwrap_err();
        assert_eq!(err, vec![Violation::ParentNotBefore { node: 1, parent: 2 }]);
        assert_eq!(err[0].to_string(), "parents[1]=2 ≥ 1");
    }

    #[test]
    fn validate_reports_every_violation() {
        let lim = TreeLimits {
            max_depth: 1,
            max_draft_tokens: 2,
        };
        let err = validate_parents(&[Some(0), Some(0), None, Some(1)], &lim).unwrap_err();
        assert!(err.contains(&Violation::RootHasParent { parent: 0 }));
        assert!(err.contains(&Violation::MissingParent { node: 2 }));
        assert!(err.contains(&Violation::TooDeep {
            node: 3,
            depth: 2,
            max: 1
        }));
        assert!(err.contains(&Violation::TooManyNodes {
            draft_tokens: 3,
            max: 2
        }));
        assert_eq!(validate_parents(&[], &lim), Err(vec![Violation::Empty]));
    }

    #[test]
    fn chain_mask_is_causal() {
        let m = AncestorMask::derive(&tpl(&[None, Some(0), Some(1)]));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), j <= i);
            }
        }
    }

    #[test]
    fn siblings_do_not_attend() {
        let m = AncestorMask::derive(&tpl(&[None, Some(0), Some(0)]));
        let expect = [
            [true, false, false],
            [true, true, false],
            [true, false, true],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), expect[i][j], "({i},{j})");
            }
        }
    }

    #[test]
    fn flatten_examples() {
        assert!(DraftTree::root_only(5).flatten_branches().is_empty());
        let chain = DraftTree::chain(9, &[1, 2, 3]);
        assert_eq!(chain.flatten_branches(), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn flatten_drawn_union_tree() {
        // "it" -> {"is" -> "the", "was"}: the two branches of a small union.
        let (it, is, the, was) = (10, 11, 12, 13);
        let t = DraftTree::new(
            tpl(&[None, Some(0), Some(1), Some(1)]),
            vec![0, it, is, was],
        )
        .unwrap();
        let t = DraftTree::new(t.template().with_chain(2, 1), vec![0, it, is, was, the]).unwrap();
        assert_eq!(t.flatten_branches(), vec![vec![it, is, the], vec![it, was]]);
    }

    #[test]
    fn leaves_follow_branch_order() {
        let t = tpl(&[None, Some(0), Some(0), Some(1)]);
        assert_eq!(t.leaves(), vec![3, 2]);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.path_to(3), vec![0, 1, 3]);
    }

    #[test]
    fn json_round_trip() {
        let t = tpl(&[None, Some(0), Some(0), Some(1)]);
        let s = t.to_json();
        assert_eq!(s, r#"{"parents":[null,0,0,1]}"#);
        assert_eq!(DraftTreeTemplate::from_json(&s).unwrap(), t);
        assert!(DraftTreeTemplate::from_json(r#"{"parents":[null,2,0]}"#).is_err());
    }

    #[test]
    fn choices_build_breadth_first() {
        let t = DraftTreeTemplate::from_choices(&[vec![0], vec![1], vec![0, 0]]).unwrap();
        assert_eq!(t.parents(), &[None, Some(0), Some(0), Some(1)]);
        assert!(DraftTreeTemplate::from_choices(&[vec![0, 0]]).is_err());
        let d = DraftTreeTemplate::default_tree();
        assert_eq!(d.draft_tokens(), 26);
        assert_eq!(d.depth(), 5);
        assert_eq!(d.leaves()[0], d.path_to(d.leaves()[0])[d.depth()]);
    }

    #[test]
    fn padded_branch() {
        let b = Branch::new(vec![4, 5]);
        assert_eq!(b.padded(4).tokens, vec![4, 5, PAD_TOKEN, PAD_TOKEN]);
        assert_eq!(Branch::empty().padded(0), Branch::empty());
    }
}
