//! Random instance generators and brute-force reference implementations.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reader_core::{DraftTree, DraftTreeTemplate, TokenId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_template(rng: &mut impl Rng, nodes: usize) -> DraftTreeTemplate {
    let parents = (0..nodes.max(1))
        .map(|i| (i > 0).then(|| rng.gen_range(0..i)))
        .collect();
    DraftTreeTemplate::new(parents).unwrap()
}

pub fn random_tokens(rng: &mut impl Rng, len: usize, vocab: u32) -> Vec<TokenId> {
    (0..len).map(|_| rng.gen_range(0..vocab)).collect()
}

pub fn random_tree(rng: &mut impl Rng, nodes: usize, vocab: u32, root: TokenId) -> DraftTree {
    let t = random_template(rng, nodes);
    let mut tokens = random_tokens(rng, t.len(), vocab);
    tokens[0] = root;
    DraftTree::new(t, tokens).unwrap()
}

/// `anc[i][j]`: j is i or reachable from i by following parent links.
pub fn naive_ancestors(t: &DraftTreeTemplate) -> Vec<Vec<bool>> {
    let n = t.len();
    let mut out = vec![vec![false; n]; n];
    for (i, row) in out.iter_mut().enumerate() {
        let mut cur = Some(i);
        while let Some(c) = cur {
            row[c] = true;
            cur = t.parent(c);
        }
    }
    out
}

/// Token path (root excluded) of every node.
pub fn path_set(tree: &DraftTree) -> BTreeSet<Vec<TokenId>> {
    (0..tree.len()).map(|i| tree.path_tokens(i)).collect()
}

pub fn naive_occurrences(text: &[TokenId], pattern: &[TokenId]) -> Vec<usize> {
    if pattern.is_empty() || pattern.len() > text.len() {
        return Vec::new();
    }
    (0..=text.len() - pattern.len())
        .filter(|&i| text[i..i + pattern.len()] == *pattern)
        .collect()
}

/// Suffix array by sorting all suffixes directly.
pub fn naive_suffix_array(text: &[TokenId]) -> Vec<usize> {
    let mut sa: Vec<usize> = (0..text.len()).collect();
    sa.sort_by(|&a, &b| text[a..].cmp(&text[b..]));
    sa
}

/// Majority-vote continuation computed document by document.
pub fn naive_branch(docs: &[Vec<TokenId>], pattern: &[TokenId], depth: usize) -> Vec<TokenId> {
    // (doc, position after the match)
    let mut live: Vec<(usize, usize)> = docs
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| {
            naive_occurrences(doc, pattern)
                .into_iter()
                .map(move |i| (d, i + pattern.len()))
        })
        .collect();
    let mut out = Vec::new();
    while out.len() < depth {
        let mut votes: BTreeMap<TokenId, usize> = BTreeMap::new();
        for &(d, p) in &live {
            if let Some(&t) = docs[d].get(p) {
                *votes.entry(t).or_default() += 1;
            }
        }
        let Some(max) = votes.values().copied().max() else {
            break;
        };
        let tok = *votes.iter().find(|(_, &n)| n == max).unwrap().0;
        live = live
            .into_iter()
            .filter(|&(d, p)| docs[d].get(p) == Some(&tok))
            .map(|(d, p)| (d, p + 1))
            .collect();
        out.push(tok);
    }
    out
}

fn contains(hay: &[TokenId], needle: &[TokenId]) -> bool {
    needle.is_empty() || hay.windows(needle.len()).any(|w| w == needle)
}

/// Pointer cover with an O(n²)-per-position longest-match scan. Returns the
/// number of increments.
pub fn naive_self_repetition(
    input: &[TokenId],
    response: &[TokenId],
    docs: &[Vec<TokenId>],
) -> usize {
    let mut p = 0;
    let mut increments = 0;
    while p < response.len() {
        let mut best = 0;
        for len in (1..=response.len() - p).rev() {
            let piece = &response[p..p + len];
            if contains(input, piece)
                || contains(&response[..p], piece)
                || docs.iter().any(|d| contains(d, piece))
            {
                best = len;
                break;
            }
        }
        p += best.max(1);
        increments += 1;
    }
    increments
}

/// Occurrences of `seq` in `history` as a window of at most `window` tokens.
pub fn naive_window_count(history: &[TokenId], window: usize, seq: &[TokenId]) -> u64 {
    if seq.len() > window {
        return 0;
    }
    naive_occurrences(history, seq).len() as u64
}

/// Number of inserted sequences having `prefix` as a prefix.
pub fn naive_prefix_count(seqs: &[Vec<TokenId>], prefix: &[TokenId]) -> u64 {
    seqs.iter().filter(|s| s.starts_with(prefix)).count() as u64
}

/// Text with heavy phrase reuse so drafts actually get accepted.
pub fn phrase_corpus(rng: &mut impl Rng, docs: usize, len: usize, vocab: u32) -> Vec<Vec<TokenId>> {
    let phrases: Vec<Vec<TokenId>> = (0..6)
        .map(|_| {
            let n = rng.gen_range(2..8);
            random_tokens(rng, n, vocab)
        })
        .collect();
    (0..docs)
        .map(|_| {
            let mut d = Vec::new();
            while d.len() < len {
                if rng.gen_bool(0.8) {
                    d.extend(&phrases[rng.gen_range(0..phrases.len())]);
                } else {
                    d.push(rng.gen_range(0..vocab));
                }
            }
            d.truncate(len);
            d
        })
        .collect()
}

pub mod lossless {
    use super::*;
    use reader_core::drafter::{SearchParams, SuffixArrayStore};
    use reader_core::engine::{autoregressive_generate, speculative_generate, EngineConfig};
    use reader_core::model::{
        BaseModel, LanguageModel, NGramModel, TinyTransformer, TransformerConfig,
    };

    /// One random configuration; `Err` describes a mismatch.
    pub fn case(seed: u64) -> Result<String, String> {
        let mut r = rng(seed);
        let transformer = seed.is_multiple_of(3);
        let vocab: u32 = if transformer { 32 } else { 12 };
        let docs = phrase_corpus(&mut r, 6, 120, vocab);
        let prompts: Vec<Vec<TokenId>> = (0..r.gen_range(1..=6))
            .map(|_| {
                let d = &docs[r.gen_range(0..docs.len())];
                let start = r.gen_range(0..d.len() - 20);
                d[start..start + r.gen_range(1..20)].to_vec()
            })
            .collect();
        let nodes = r.gen_range(1..=40);
        let template = random_template(&mut r, nodes);
        let branch_depth = r.gen_range(0..=16);
        let max_suffix = r.gen_range(1..=8);
        let search = (branch_depth > 0).then(|| SearchParams {
            max_suffix_len: max_suffix,
            min_suffix_len: r.gen_range(1..=max_suffix),
            branch_depth,
            subtree_max_depth: r.gen_range(1..=16),
            subtree_max_nodes: r.gen_range(1..=24),
        });
        let config = EngineConfig {
            template,
            search,
            rearrange_every: [Some(1), Some(5), Some(25), None][r.gen_range(0..4)],
            max_new_tokens: r.gen_range(0..if transformer { 30 } else { 60 }),
            batch_size: r.gen_range(1..=6),
            deepen: r.gen_bool(0.5),
            eos: r.gen_bool(0.3).then(|| r.gen_range(0..vocab)),
            ..EngineConfig::for_batch(1)
        };
        let store = r
            .gen_bool(0.7)
            .then(|| SuffixArrayStore::build(&docs[..3], vocab));
        let desc = format!(
            "seed={seed} model={} nodes={} branch_depth={branch_depth} deepen={} N={:?} batch={} prompts={}",
            if transformer { "transformer" } else { "ngram" },
            config.template.len(),
            config.deepen,
            config.rearrange_every,
            config.batch_size,
            prompts.len()
        );
        let result = if transformer {
            let model = TinyTransformer::new(TransformerConfig {
                vocab: vocab as usize,
                max_positions: 512,
                seed,
                ..Default::default()
            });
            // teach the drafter some of the model's own greedy text
            let greedy = autoregressive_generate(&model, &prompts, 30, None).unwrap();
            let mut train = docs.clone();
            if r.gen_bool(0.7) {
                train.extend(
                    prompts
                        .iter()
                        .zip(greedy)
                        .map(|(p, g)| [p.clone(), g].concat()),
                );
            }
            let drafter = NGramModel::train(&train, 3, 0.1, vocab as usize);
            run(&model, &drafter, store.as_ref(), &prompts, &config)
        } else {
            let order = r.gen_range(1..=4);
            let model = NGramModel::train(&docs, order, 0.1, vocab as usize);
            let drafter = if r.gen_bool(0.5) {
                model.with_order(r.gen_range(1..=order))
            } else {
                NGramModel::train(&docs[3..], 2, 0.1, vocab as usize)
            };
            run(&model, &drafter, store.as_ref(), &prompts, &config)
        };
        result
            .map(|()| desc.clone())
            .map_err(|e| format!("{desc}: {e}"))
    }

    fn run<M: BaseModel, D: LanguageModel>(
        model: &M,
        drafter: &D,
        store: Option<&SuffixArrayStore>,
        prompts: &[Vec<TokenId>],
        config: &EngineConfig,
    ) -> Result<(), String> {
        let want = autoregressive_generate(model, prompts, config.max_new_tokens, config.eos)
            .map_err(|e| e.to_string())?;
        let got = speculative_generate(model, drafter, store, prompts, config)
            .map_err(|e| e.to_string())?;
        if got.outputs != want {
            return Err(format!("outputs differ: {:?} vs {:?}", got.outputs, want));
        }
        let m = &got.metrics;
        if m.histogram.iter().sum::<u64>() != m.forward_passes {
            return Err("histogram does not sum to forward passes".into());
        }
        let weighted: u64 = m
            .histogram
            .iter()
            .enumerate()
            .map(|(k, n)| k as u64 * n)
            .sum();
        if weighted != m.emitted_tokens {
            return Err("histogram does not sum to emitted tokens".into());
        }
        if m.histogram.first().copied().unwrap_or(0) != 0 {
            return Err("a step emitted nothing".into());
        }
        if m.histogram.len() > config.composed_shape().1 + 2 {
            return Err("a step emitted more than the deepest path plus one".into());
        }
        Ok(())
    }
}
