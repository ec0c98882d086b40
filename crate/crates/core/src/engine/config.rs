use serde::{Deserialize, Serialize};

use crate::composer::DeepenSpec;
use crate::drafter::SearchParams;
use crate::tree::{DraftTreeTemplate, TokenId, TreeLimits};

/// Settings of one generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Shape filled by the model drafter each step.
    pub template: DraftTreeTemplate,
    /// Statistical search; `None` disables the trie, the datastore and the
    /// retrieved branch altogether.
    pub search: Option<SearchParams>,
    /// Compact the cache every N steps; `None` never does.
    pub rearrange_every: Option<usize>,
    pub max_new_tokens: usize,
    pub batch_size: usize,
    /// Extend the first drafted branch with a search continuation. Ignored
    /// when there is no search or the template has no draft tokens.
    pub deepen: bool,
    pub eos: Option<TokenId>,
    pub limits: TreeLimits,
    /// Record wall-clock per phase. Off by default so reports are
    /// reproducible byte for byte.
    pub timings: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self::for_batch(1)
    }
}

impl EngineConfig {
    /// Defaults for a batch size: rearrangement every 25 steps from 32 rows,
    /// every 50 from 9 rows, never below; deepening only up to 8 rows.
    pub fn for_batch(batch_size: usize) -> Self {
        Self {
            template: DraftTreeTemplate::default_tree(),
            search: Some(SearchParams::default()),
            rearrange_every: default_rearrange_every(batch_size),
            max_new_tokens: 64,
            batch_size,
            deepen: batch_size <= 8,
            eos: None,
            limits: TreeLimits::default(),
            timings: false,
        }
    }

    /// Length of the retrieved branch, zero without search.
    pub fn branch_len(&self) -> usize {
        self.search.map_or(0, |s| s.branch_depth)
    }

    pub fn deepens(&self) -> bool {
        self.deepen && self.search.is_some() && self.template.draft_tokens() > 0
    }

    pub fn deepen_spec(&self) -> DeepenSpec {
        DeepenSpec {
            branch_index: 0,
            prefix_len: None,
            fixed_len: Some(self.branch_len()),
        }
    }

    /// Draft tokens and depth of the composed tree.
    pub fn composed_shape(&self) -> (usize, usize) {
        let (n, d, b) = (
            self.template.draft_tokens(),
            self.template.depth(),
            self.branch_len(),
        );
        if self.deepens() {
            (n + 2 * b, d.max(b).max(self.first_branch_depth() + b))
        } else {
            (n + b, d.max(b))
        }
    }

    fn first_branch_depth(&self) -> usize {
        self.template
            .leaves()
            .first()
            .map_or(0, |&l| self.template.depth_of(l))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch size must be at least 1".into());
        }
        if self.rearrange_every == Some(0) {
            return Err("rearrange_every must be at least 1".into());
        }
        if let Some(s) = &self.search {
            s.validate()?;
        }
        self.template
            .check(&self.limits)
            .map_err(|e| e.to_string())?;
        let (tokens, depth) = self.composed_shape();
        if tokens > self.limits.max_draft_tokens || depth > self.limits.max_depth {
            return Err(format!(
                "composed tree has {tokens} draft tokens and depth {depth}, limits are {} and {}",
                self.limits.max_draft_tokens, self.limits.max_depth
            ));
        }
        Ok(())
    }
}

pub fn default_rearrange_every(batch_size: usize) -> Option<usize> {
    match batch_size {
        0..=8 => None,
        9..=31 => Some(50),
        _ => Some(25),
    }
}
