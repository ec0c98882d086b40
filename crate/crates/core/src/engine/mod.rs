//! Batched speculative generation and its autoregressive oracle.
//!
//! Each [`Session::step`] drafts a tree per active row, attaches the
//! retrieved branch (and optionally deepens the first drafted branch), scores
//! every tree in one batched forward, walks the greedy acceptance path,
//! commits the accepted states to the padded cache and feeds the emitted
//! tokens to the row's history trie. Outputs equal
//! [`autoregressive_generate`] token for token.

mod config;
mod metrics;
mod verify;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::{append_branch, deepen, ComposeError, ComposedTree};
use crate::drafter::{model_draft, stat_search, DraftError, SuffixArrayStore, TrieStore};
use crate::model::{BaseModel, CacheError, LanguageModel, ModelError, PaddedKVCache};
use crate::tree::{AncestorMask, DraftTree, DraftTreeTemplate, TokenId, TreeLimits};

pub use config::{default_rearrange_every, EngineConfig};
pub use metrics::{LongAcceptance, PhaseTimes, RearrangeEvent, RunMetrics};
pub use verify::{verify, verify_tree, Verified};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Draft(#[from] DraftError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

impl From<CacheError> for EngineError {
    fn from(e: CacheError) -> Self {
        Self::Model(e.into())
    }
}

/// What one row did in one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    /// Drafts accepted by verification, before any EOS or budget cut.
    pub accepted: usize,
    pub bonus: TokenId,
    /// Tokens appended to the output, at least one.
    pub emitted: Vec<TokenId>,
    /// Accepted node indices in the composed tree, root first.
    pub path: Vec<usize>,
    pub width_before: usize,
    pub width_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Generated continuation of each prompt, in prompt order.
    pub outputs: Vec<Vec<TokenId>>,
    pub metrics: RunMetrics,
}

/// Greedy decoding, one token per call to `next_distribution`. Stops after an
/// EOS token or `max_new_tokens`. Returns the continuations.
pub fn autoregressive_generate<L: LanguageModel + ?Sized>(
    lm: &L,
    prompts: &[Vec<TokenId>],
    max_new_tokens: usize,
    eos: Option<TokenId>,
) -> Result<Vec<Vec<TokenId>>, ModelError> {
    prompts
        .par_iter()
        .map(|prompt| {
            if prompt.is_empty() {
                return Err(ModelError::EmptyContext);
            }
            let mut ctx = prompt.clone();
            for _ in 0..max_new_tokens {
                let t = lm.next_distribution(&ctx)?.argmax();
                ctx.push(t);
                if Some(t) == eos {
                    break;
                }
            }
            Ok(ctx.split_off(prompt.len()))
        })
        .collect()
}

/// One batch of rows being decoded together.
pub struct Session<'a, M: BaseModel, D: LanguageModel + ?Sized> {
    model: &'a M,
    drafter: &'a D,
    store: Option<&'a SuffixArrayStore>,
    config: &'a EngineConfig,
    cache: PaddedKVCache<M::State>,
    contexts: Vec<Vec<TokenId>>,
    prompt_lens: Vec<usize>,
    tries: Vec<TrieStore>,
    active: Vec<bool>,
    mask: Option<(DraftTreeTemplate, AncestorMask)>,
    metrics: RunMetrics,
    times: PhaseTimes,
}

impl<'a, M: BaseModel, D: LanguageModel + ?Sized> Session<'a, M, D> {
    /// Validates the configuration, prefills the cache and seeds each row's
    /// trie with its prompt. `prompts.len()` may not exceed the batch size.
    pub fn new(
        model: &'a M,
        drafter: &'a D,
        store: Option<&'a SuffixArrayStore>,
        prompts: &[Vec<TokenId>],
        config: &'a EngineConfig,
    ) -> Result<Self, EngineError> {
        config.validate().map_err(EngineError::Config)?;
        if prompts.len() > config.batch_size {
            return Err(EngineError::Config(format!(
                "{} prompts exceed batch size {}",
                prompts.len(),
                config.batch_size
            )));
        }
        let depth = config.composed_shape().1;
        for p in prompts {
            if p.is_empty() {
                return Err(ModelError::EmptyContext.into());
            }
            let need = p
                .len()
                .saturating_add(config.max_new_tokens)
                .saturating_add(depth);
            if need > model.max_positions() {
                return Err(EngineError::Config(format!(
                    "prompt of {} tokens plus {} new tokens and a tree of depth {depth} exceeds {} positions",
                    p.len(),
                    config.max_new_tokens,
                    model.max_positions()
                )));
            }
            drafter.check_tokens(p)?;
        }
        let cache = model.prefill(prompts)?;
        let tries = match &config.search {
            Some(s) => prompts
                .iter()
                .map(|p| {
                    let mut t = TrieStore::with_window(s.trie_window());
                    t.extend(p);
                    t
                })
                .collect(),
            None => Vec::new(),
        };
        let metrics = RunMetrics {
            long_acceptance: LongAcceptance {
                threshold: config.template.depth(),
                batch_size: config.batch_size,
                ..Default::default()
            },
            ..Default::default()
        };
        Ok(Self {
            model,
            drafter,
            store,
            config,
            cache,
            contexts: prompts.to_vec(),
            prompt_lens: prompts.iter().map(Vec::len).collect(),
            tries,
            active: vec![config.max_new_tokens > 0; prompts.len()],
            mask: None,
            metrics,
            times: PhaseTimes::default(),
        })
    }

    pub fn is_done(&self) -> bool {
        !self.active.contains(&true)
    }

    pub fn cache(&self) -> &PaddedKVCache<M::State> {
        &self.cache
    }

    pub fn contexts(&self) -> &[Vec<TokenId>] {
        &self.contexts
    }

    pub fn outputs(&self) -> Vec<Vec<TokenId>> {
        self.contexts
            .iter()
            .zip(&self.prompt_lens)
            .map(|(c, &n)| c[n..].to_vec())
            .collect()
    }

    /// Builds this step's composed tree for every active row.
    pub fn draft(&mut self) -> Result<Vec<Option<ComposedTree>>, EngineError> {
        let config = self.config;
        let started = Instant::now();
        let drafted = (0..self.contexts.len())
            .into_par_iter()
            .map(|r| -> Result<_, EngineError> {
                if !self.active[r] {
                    return Ok(None);
                }
                let ctx = &self.contexts[r];
                let tree = model_draft(self.drafter, ctx, &config.template)?;
                let branch = config.search.map(|s| {
                    stat_search(Some(&self.tries[r]), self.store, ctx, &s).padded(s.branch_depth)
                });
                Ok(Some((ComposedTree::from_draft(tree), branch)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.times.draft += metrics::secs(started.elapsed());

        let started = Instant::now();
        let composed = drafted
            .into_par_iter()
            .enumerate()
            .map(|(r, d)| -> Result<_, EngineError> {
                let Some((mut tree, branch)) = d else {
                    return Ok(None);
                };
                if let Some(branch) = branch {
                    tree = append_branch(&tree, &branch, &config.limits)?;
                }
                if config.deepens() {
                    let s = config.search.expect("deepening needs search");
                    tree = deepen(
                        &tree,
                        &self.contexts[r],
                        &config.deepen_spec(),
                        |q| stat_search(Some(&self.tries[r]), self.store, q, &s),
                        &config.limits,
                    )?;
                }
                Ok(Some(tree))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.times.compose += metrics::secs(started.elapsed());
        Ok(composed)
    }

    /// Runs one draft → verify → commit step. Returns `None` for rows that
    /// were already finished.
    pub fn step(&mut self) -> Result<Vec<Option<StepResult>>, EngineError> {
        if self.is_done() {
            return Ok(vec![None; self.contexts.len()]);
        }
        let composed = self.draft()?;
        let trees: Vec<Option<DraftTree>> =
            composed.into_iter().map(|c| c.map(|c| c.tree)).collect();
        self.verify_and_commit(trees)
    }

    /// Verifies externally composed trees (one template for all active rows)
    /// and commits the result.
    pub fn verify_and_commit(
        &mut self,
        trees: Vec<Option<DraftTree>>,
    ) -> Result<Vec<Option<StepResult>>, EngineError> {
        let started = Instant::now();
        let template = trees.iter().flatten().next().map(|t| t.template().clone());
        let Some(template) = template else {
            return Ok(vec![None; self.contexts.len()]);
        };
        if self.mask.as_ref().is_none_or(|(t, _)| *t != template) {
            let mask = AncestorMask::derive(&template);
            self.mask = Some((template, mask));
        }
        let mask = &self.mask.as_ref().expect("just set").1;
        let verified = verify(self.model, &self.cache, &trees, mask)?;
        self.times.verify += metrics::secs(started.elapsed());

        let width_before = self.cache.width();
        let mut new_states = vec![Vec::new(); self.contexts.len()];
        let mut results = vec![None; self.contexts.len()];
        for (r, v) in verified.into_iter().enumerate() {
            let Some((v, out)) = v else { continue };
            if !self.active[r] {
                continue;
            }
            let generated = self.contexts[r].len() - self.prompt_lens[r];
            let mut emitted = v.emitted();
            emitted.truncate(self.config.max_new_tokens - generated);
            if let Some(i) = self
                .config
                .eos
                .and_then(|e| emitted.iter().position(|&t| t == e))
            {
                emitted.truncate(i + 1);
            }
            if v.accepted.len() > self.metrics.long_acceptance.threshold {
                self.metrics.long_acceptance.count += 1;
            }
            self.metrics.record(emitted.len());
            let finished = generated + emitted.len() >= self.config.max_new_tokens
                || self.config.eos.is_some_and(|e| emitted.last() == Some(&e));
            if finished {
                self.active[r] = false;
            } else {
                new_states[r] = v.path[..emitted.len()]
                    .iter()
                    .map(|&n| out.states[n].clone().expect("accepted nodes carry state"))
                    .collect();
            }
            if let Some(trie) = self.tries.get_mut(r) {
                trie.extend(&emitted);
            }
            self.contexts[r].extend_from_slice(&emitted);
            results[r] = Some(StepResult {
                accepted: v.accepted.len(),
                bonus: v.bonus,
                emitted,
                path: v.path,
                width_before,
                width_after: 0,
            });
        }

        let started = Instant::now();
        if let Err(ModelError::Cache(CacheError::Capacity { .. })) = self
            .cache
            .append(new_states.clone())
            .map_err(ModelError::from)
        {
            self.rearrange(true);
            self.cache.append(new_states)?;
        }
        self.metrics.steps += 1;
        if let Some(n) = self.config.rearrange_every {
            if self.metrics.steps.is_multiple_of(n as u64) {
                self.rearrange(false);
            }
        }
        self.times.rearrange += metrics::secs(started.elapsed());
        self.metrics
            .cache_occupancy_series
            .push(self.cache.occupancy().ratio());
        let width_after = self.cache.width();
        for r in results.iter_mut().flatten() {
            r.width_after = width_after;
        }
        Ok(results)
    }

    fn rearrange(&mut self, forced: bool) {
        let (width_before, occupancy_before) = (self.cache.width(), self.cache.occupancy().ratio());
        self.cache.rearrange();
        self.metrics.rearrangements.push(RearrangeEvent {
            step: self.metrics.steps,
            width_before,
            width_after: self.cache.width(),
            occupancy_before,
            occupancy_after: self.cache.occupancy().ratio(),
            forced,
        });
    }

    pub fn run(&mut self) -> Result<(), EngineError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Generation {
        self.metrics.phase_times = self.config.timings.then_some(self.times);
        self.metrics.finish();
        Generation {
            outputs: self.outputs(),
            metrics: self.metrics,
        }
    }
}

/// Speculative generation over `prompts`, processed in consecutive batches of
/// `config.batch_size`.
pub fn speculative_generate<M: BaseModel, D: LanguageModel + ?Sized>(
    model: &M,
    drafter: &D,
    store: Option<&SuffixArrayStore>,
    prompts: &[Vec<TokenId>],
    config: &EngineConfig,
) -> Result<Generation, EngineError> {
    config.validate().map_err(EngineError::Config)?;
    let mut all = Generation {
        outputs: Vec::with_capacity(prompts.len()),
        metrics: RunMetrics::default(),
    };
    for chunk in prompts.chunks(config.batch_size) {
        let mut session = Session::new(model, drafter, store, chunk, config)?;
        session.run()?;
        let g = session.finish();
        all.outputs.extend(g.outputs);
        all.metrics.merge(g.metrics);
    }
    all.metrics.finish();
    Ok(all)
}

/// Per-node acceptance rates of a template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAcceptance {
    /// Fraction of verified row-steps in which each node was on the accepted
    /// path. The root is always 1.
    pub rates: Vec<f64>,
    pub row_steps: u64,
}

/// Runs the model drafter alone with `template` and records how often each
/// node lies on the accepted path.
pub fn collect_node_acceptance<M: BaseModel, D: LanguageModel + ?Sized>(
    model: &M,
    drafter: &D,
    prompts: &[Vec<TokenId>],
    template: &DraftTreeTemplate,
    max_new_tokens: usize,
    batch_size: usize,
) -> Result<NodeAcceptance, EngineError> {
    let config = EngineConfig {
        template: template.clone(),
        search: None,
        rearrange_every: None,
        max_new_tokens,
        batch_size,
        deepen: false,
        eos: None,
        limits: TreeLimits::unbounded(),
        timings: false,
    };
    let mut hits = vec![0u64; template.len()];
    let mut row_steps = 0u64;
    for chunk in prompts.chunks(batch_size.max(1)) {
        let mut session = Session::new(model, drafter, None, chunk, &config)?;
        while !session.is_done() {
            for r in session.step()?.into_iter().flatten() {
                row_steps += 1;
                for n in r.path {
                    hits[n] += 1;
                }
            }
        }
    }
    let mut rates: Vec<f64> = hits
        .iter()
        .map(|&h| {
            if row_steps == 0 {
                0.0
            } else {
                h as f64 / row_steps as f64
            }
        })
        .collect();
    if row_steps == 0 {
        rates[0] = 1.0;
    }
    Ok(NodeAcceptance { rates, row_steps })
}
