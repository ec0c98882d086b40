use crate::model::{BaseModel, Distribution, ModelError, PaddedKVCache, RowForward};
use crate::tree::{AncestorMask, DraftTree, TokenId};

/// Outcome of greedy verification for one row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verified {
    /// Accepted node indices, root first.
    pub path: Vec<usize>,
    /// Tokens of the accepted non-root nodes.
    pub accepted: Vec<TokenId>,
    /// Argmax at the last accepted node.
    pub bonus: TokenId,
}

impl Verified {
    /// Accepted drafts followed by the bonus token.
    pub fn emitted(&self) -> Vec<TokenId> {
        let mut out = self.accepted.clone();
        out.push(self.bonus);
        out
    }
}

/// Greedy verification: the longest root path on which every node's token is
/// the argmax of its parent. Sibling duplicates are all followed (their
/// distributions agree, their subtrees need not); ties go to the path that
/// reaches its nodes through lower indices.
pub fn verify_tree(tree: &DraftTree, dists: &[Option<Distribution>]) -> Verified {
    let children = tree.template().child_lists();
    let mut best: Vec<usize> = vec![0];
    let mut stack = vec![vec![0usize]];
    while let Some(path) = stack.pop() {
        let node = *path.last().unwrap();
        if path.len() > best.len() {
            best = path.clone();
        }
        let want = dists[node]
            .as_ref()
            .expect("accepted nodes are scored")
            .argmax();
        // reversed so the lowest index is explored first
        for &c in children[node].iter().rev() {
            if tree.token(c) == want {
                let mut next = path.clone();
                next.push(c);
                stack.push(next);
            }
        }
    }
    let last = *best.last().unwrap();
    Verified {
        accepted: best[1..].iter().map(|&n| tree.token(n)).collect(),
        bonus: dists[last]
            .as_ref()
            .expect("accepted nodes are scored")
            .argmax(),
        path: best,
    }
}

/// One batched forward over all active rows followed by per-row greedy
/// verification. Returns the verification and the row's forward output.
#[allow(clippy::type_complexity)]
pub fn verify<M: BaseModel>(
    model: &M,
    cache: &PaddedKVCache<M::State>,
    trees: &[Option<DraftTree>],
    mask: &AncestorMask,
) -> Result<Vec<Option<(Verified, RowForward<M::State>)>>, ModelError> {
    let outs = model.forward_tree(cache, trees, mask)?;
    Ok(trees
        .iter()
        .zip(outs)
        .map(|(tree, out)| {
            let (tree, out) = (tree.as_ref()?, out?);
            Some((verify_tree(tree, &out.dists), out))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::DraftTreeTemplate;

    fn peaked(vocab: usize, at: TokenId) -> Option<Distribution> {
        let mut s = vec![0.0; vocab];
        s[at as usize] = 1.0;
        Some(Distribution::new(s))
    }

    #[test]
    fn walks_matching_children() {
        // root -> {1: 5, 2: 6}, 2 -> {3: 7}
        let t = DraftTreeTemplate::new(vec![None, Some(0), Some(0), Some(2)]).unwrap();
        let tree = DraftTree::new(t, vec![0, 5, 6, 7]).unwrap();
        let dists = vec![peaked(9, 6), peaked(9, 1), peaked(9, 7), peaked(9, 8)];
        let v = verify_tree(&tree, &dists);
        assert_eq!(v.path, [0, 2, 3]);
        assert_eq!(v.emitted(), [6, 7, 8]);
    }

    #[test]
    fn no_match_gives_bonus_only() {
        let tree = DraftTree::chain(0, &[4]);
        let v = verify_tree(&tree, &[peaked(9, 3), None]);
        assert!(v.accepted.is_empty());
        assert_eq!(v.emitted(), [3]);
    }

    #[test]
    fn duplicate_children_take_lowest_index() {
        let t = DraftTreeTemplate::new(vec![None, Some(0), Some(0)]).unwrap();
        let tree = DraftTree::new(t, vec![0, 4, 4]).unwrap();
        let v = verify_tree(&tree, &[peaked(9, 4), peaked(9, 1), peaked(9, 1)]);
        assert_eq!(v.path, [0, 1]);
    }

    #[test]
    fn duplicate_children_follow_the_deeper_match() {
        // a shallow drafted child and an appended chain share their first token
        let t = DraftTreeTemplate::new(vec![None, Some(0), Some(0), Some(2), Some(3)]).unwrap();
        let tree = DraftTree::new(t, vec![0, 4, 4, 5, 6]).unwrap();
        let dists = vec![
            peaked(9, 4),
            peaked(9, 5),
            peaked(9, 5),
            peaked(9, 6),
            peaked(9, 8),
        ];
        let v = verify_tree(&tree, &dists);
        assert_eq!(v.path, [0, 2, 3, 4]);
        assert_eq!(v.emitted(), [4, 5, 6, 8]);
    }
}
