use std::collections::BTreeMap;

use crate::tree::{DraftTree, DraftTreeTemplate, TokenId, TreeLimits, PAD_TOKEN};

type NodeId = u32;
const ROOT: NodeId = 0;

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<TokenId, NodeId>,
    count: u64,
    /// Inserted sequences ending exactly here.
    ends: u64,
}

/// Prefix tree over token sequences with visit counts.
///
/// A node's count is the number of inserted sequences passing through it:
/// the sum of its children's counts plus the sequences ending there.
///
/// Besides whole-sequence [`insert`](Self::insert), the store can index a
/// growing history with [`push`](Self::push): every start position opens a
/// window that is extended token by token until it reaches the configured
/// length, so the count of any path of at most that length equals its number
/// of occurrences in the history.
#[derive(Debug, Clone)]
pub struct TrieStore {
    nodes: Vec<TrieNode>,
    window: usize,
    open: Vec<(NodeId, usize)>,
}

impl Default for TrieStore {
    fn default() -> Self {
        Self::new()
    }
}

impl TrieStore {
    pub fn new() -> Self {
        Self::with_window(usize::MAX)
    }

    /// A store whose rolling windows stop growing at `window` tokens.
    pub fn with_window(window: usize) -> Self {
        Self {
            nodes: vec![TrieNode::default()],
            window: window.max(1),
            open: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of inserted sequences (including open windows).
    pub fn sequences(&self) -> u64 {
        self.nodes[ROOT as usize].count
    }

    fn child_or_insert(&mut self, node: NodeId, token: TokenId) -> NodeId {
        if let Some(&c) = self.nodes[node as usize].children.get(&token) {
            return c;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(TrieNode::default());
        self.nodes[node as usize].children.insert(token, id);
        id
    }

    /// Adds `seq` and all its prefixes; each node on the path gains one count.
    /// An empty sequence is ignored.
    pub fn insert(&mut self, seq: &[TokenId]) {
        if seq.is_empty() {
            return;
        }
        self.nodes[ROOT as usize].count += 1;
        let mut node = ROOT;
        for &t in seq {
            node = self.child_or_insert(node, t);
            self.nodes[node as usize].count += 1;
        }
        self.nodes[node as usize].ends += 1;
    }

    /// Appends one history token, extending every open window.
    pub fn push(&mut self, token: TokenId) {
        self.nodes[ROOT as usize].count += 1;
        self.nodes[ROOT as usize].ends += 1;
        self.open.push((ROOT, 0));
        let mut open = std::mem::take(&mut self.open);
        for (node, len) in &mut open {
            let child = self.child_or_insert(*node, token);
            self.nodes[*node as usize].ends -= 1;
            self.nodes[child as usize].count += 1;
            self.nodes[child as usize].ends += 1;
            *node = child;
            *len += 1;
        }
        open.retain(|&(_, len)| len < self.window);
        self.open = open;
    }

    pub fn extend(&mut self, tokens: &[TokenId]) {
        for &t in tokens {
            self.push(t);
        }
    }

    fn find(&self, seq: &[TokenId]) -> Option<NodeId> {
        seq.iter().try_fold(ROOT, |node, t| {
            self.nodes[node as usize].children.get(t).copied()
        })
    }

    /// Count at the node reached by `seq`, zero if absent. The empty sequence
    /// maps to the root.
    pub fn count(&self, seq: &[TokenId]) -> u64 {
        self.find(seq).map_or(0, |n| self.nodes[n as usize].count)
    }

    /// Sequences ending exactly at `seq`.
    pub fn ends(&self, seq: &[TokenId]) -> u64 {
        self.find(seq).map_or(0, |n| self.nodes[n as usize].ends)
    }

    fn sorted_children(&self, node: NodeId) -> Vec<(TokenId, NodeId)> {
        let mut kids: Vec<(TokenId, NodeId)> = self.nodes[node as usize]
            .children
            .iter()
            .map(|(&t, &n)| (t, n))
            .collect();
        kids.sort_by(|a, b| {
            self.nodes[b.1 as usize]
                .count
                .cmp(&self.nodes[a.1 as usize].count)
                .then(a.0.cmp(&b.0))
        });
        kids
    }

    /// Children of the node reached by `seq`, by descending count then
    /// ascending token.
    pub fn children(&self, seq: &[TokenId]) -> Vec<(TokenId, u64)> {
        self.find(seq).map_or_else(Vec::new, |n| {
            self.sorted_children(n)
                .into_iter()
                .map(|(t, c)| (t, self.nodes[c as usize].count))
                .collect()
        })
    }

    /// Extracts the continuations of `suffix` as a draft tree rooted at the
    /// suffix's last token: depth-first, most frequent child first, at most
    /// `max_depth` levels and `max_nodes` nodes below the root. Absent suffix
    /// gives a root-only tree.
    pub fn subtree(&self, suffix: &[TokenId], max_depth: usize, max_nodes: usize) -> DraftTree {
        let root_token = suffix.last().copied().unwrap_or(PAD_TOKEN);
        let Some(start) = self.find(suffix) else {
            return DraftTree::root_only(root_token);
        };
        let mut parents = vec![None];
        let mut tokens = vec![root_token];
        // (token, trie node, parent tree index, depth); emitted when popped
        let mut stack: Vec<(TokenId, NodeId, usize, usize)> = Vec::new();
        let push_children = |stack: &mut Vec<_>, node, idx, depth| {
            if depth < max_depth {
                for (token, child) in self.sorted_children(node).into_iter().rev() {
                    stack.push((token, child, idx, depth + 1));
                }
            }
        };
        push_children(&mut stack, start, 0, 0);
        while tokens.len() - 1 < max_nodes {
            let Some((token, node, parent, depth)) = stack.pop() else {
                break;
            };
            parents.push(Some(parent));
            tokens.push(token);
            push_children(&mut stack, node, tokens.len() - 1, depth);
        }
        let template = DraftTreeTemplate::with_limits(parents, &TreeLimits::unbounded())
            .expect("DFS emits parents first");
        DraftTree::new(template, tokens).expect("one token per node")
    }

    /// The deepest root-to-leaf path of [`subtree`](Self::subtree), ties going
    /// to the more frequent branch. Empty if the suffix has no continuation.
    pub fn deepest_branch(
        &self,
        suffix: &[TokenId],
        max_depth: usize,
        max_nodes: usize,
    ) -> Vec<TokenId> {
        let tree = self.subtree(suffix, max_depth, max_nodes);
        let t = tree.template();
        let mut best: Option<usize> = None;
        for leaf in t.leaves() {
            if best.is_none_or(|b| t.depth_of(leaf) > t.depth_of(b)) {
                best = Some(leaf);
            }
        }
        best.map_or_else(Vec::new, |leaf| tree.path_tokens(leaf))
    }
}
