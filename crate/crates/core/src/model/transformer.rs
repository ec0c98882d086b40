//! A small seeded decoder-only transformer with a real padded KV cache.
//!
//! The weights are untrained: uniform(-0.05, 0.05) draws from a ChaCha stream
//! keyed by (seed, layer, tensor name). The model exists to exercise tree
//! masks, cache positions and rearrangement with real attention arithmetic.
//!
//! Two forward routes share the same kernels but not their orchestration:
//! [`LanguageModel::next_distribution`] runs the whole context through a plain
//! causal pass, while [`BaseModel::forward_row`] scores a draft tree against
//! cached keys and values. Keys are always visited in position order, so both
//! routes sum in the same order and agree bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    padding_paths, BaseModel, Distribution, LanguageModel, ModelError, PaddedKVCache, RowForward,
};
use crate::tree::{AncestorMask, DraftTree, TokenId};

const INIT_RANGE: f32 = 0.05;
const NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub vocab: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 2,
            hidden: 64,
            vocab: 256,
            max_positions: 4096,
            seed: 7,
        }
    }
}

impl TransformerConfig {
    fn ffn(&self) -> usize {
        2 * self.hidden
    }

    fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Cached state of one token: its absolute position and, per layer, its key
/// followed by its value. Keeping the position with the state is what lets
/// rearrangement move slots without changing any output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenState {
    pub pos: u32,
    pub kv: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    wq: Vec<f32>,
    wk: Vec<f32>,
    wv: Vec<f32>,
    wo: Vec<f32>,
    up: Vec<f32>,
    down: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyTransformer {
    config: TransformerConfig,
    embed: Vec<f32>,
    layers: Vec<Layer>,
    unembed: Vec<f32>,
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn init_tensor(seed: u64, layer: u32, name: &str, len: usize) -> Vec<f32> {
    let key = fnv1a(
        seed.to_le_bytes()
            .into_iter()
            .chain(layer.to_le_bytes())
            .chain(name.bytes()),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    (0..len)
        .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
        .collect()
}

// -- kernels shared by both routes; all reductions run left to right --

fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut s = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `w` is row-major `[out, x.len()]`.
fn matvec(w: &[f32], x: &[f32]) -> Vec<f32> {
    w.chunks_exact(x.len()).map(|row| dot(row, x)).collect()
}

fn rmsnorm(x: &[f32]) -> Vec<f32> {
    let ms = dot(x, x) / x.len() as f32;
    let inv = 1.0 / (ms + NORM_EPS).sqrt();
    x.iter().map(|v| v * inv).collect()
}

fn add_into(x: &mut [f32], y: &[f32]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

fn attend(q: &[f32], keys: &[&[f32]], values: &[&[f32]]) -> Vec<f32> {
    let scale = 1.0 / (q.len() as f32).sqrt();
    let scores: Vec<f32> = keys.iter().map(|k| dot(q, k) * scale).collect();
    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut out = vec![0.0f32; q.len()];
    let mut sum = 0.0f32;
    for (s, v) in scores.iter().zip(values) {
        let e = (s - max).exp();
        sum += e;
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += e * x;
        }
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

impl TinyTransformer {
    pub fn new(config: TransformerConfig) -> Self {
        assert!(
            config.heads > 0 && config.hidden.is_multiple_of(config.heads),
            "hidden must divide into heads"
        );
        let (h, f, v) = (config.hidden, config.ffn(), config.vocab);
        let layers = (0..config.layers as u32)
            .map(|l| Layer {
                wq: init_tensor(config.seed, l, "wq", h * h),
                wk: init_tensor(config.seed, l, "wk", h * h),
                wv: init_tensor(config.seed, l, "wv", h * h),
                wo: init_tensor(config.seed, l, "wo", h * h),
                up: init_tensor(config.seed, l, "ffn_up", f * h),
                down: init_tensor(config.seed, l, "ffn_down", h * f),
            })
            .collect();
        Self {
            embed: init_tensor(config.seed, u32::MAX, "embed", v * h),
            unembed: init_tensor(config.seed, u32::MAX, "unembed", v * h),
            layers,
            config,
        }
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    fn input(&self, token: TokenId, pos: usize) -> Vec<f32> {
        let h = self.config.hidden;
        let scale = (h as f32).sqrt();
        let row = &self.embed[token as usize * h..(token as usize + 1) * h];
        (0..h)
            .map(|i| {
                let freq = 1.0 / 10000f64.powf((i / 2 * 2) as f64 / h as f64);
                let angle = pos as f64 * freq;
                let pe = if i % 2 == 0 { angle.sin() } else { angle.cos() };
                row[i] * scale + pe as f32
            })
            .collect()
    }

    fn qkv(&self, layer: &Layer, x: &[f32]) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
        let xn = rmsnorm(x);
        (
            matvec(&layer.wq, &xn),
            matvec(&layer.wk, &xn),
            matvec(&layer.wv, &xn),
        )
    }

    /// Attention output projection plus the feed-forward block, applied in place.
    fn finish_layer(&self, layer: &Layer, x: &mut [f32], attn: &[f32]) {
        add_into(x, &matvec(&layer.wo, attn));
        let hidden: Vec<f32> = matvec(&layer.up, &rmsnorm(x))
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        add_into(x, &matvec(&layer.down, &hidden));
    }

    fn multi_head(&self, q: &[f32], keys: &[&[f32]], values: &[&[f32]]) -> Vec<f32> {
        let d = self.config.head_dim();
        let mut out = Vec::with_capacity(self.config.hidden);
        for head in 0..self.config.heads {
            let r = head * d..(head + 1) * d;
            let ks: Vec<&[f32]> = keys.iter().map(|k| &k[r.clone()]).collect();
            let vs: Vec<&[f32]> = values.iter().map(|v| &v[r.clone()]).collect();
            out.extend(attend(&q[r.clone()], &ks, &vs));
        }
        out
    }

    fn logits(&self, x: &[f32]) -> Distribution {
        Distribution::new(matvec(&self.unembed, &rmsnorm(x)))
    }

    /// Plain causal pass over a whole sequence; returns the distribution after
    /// every position.
    pub fn forward_sequence(&self, tokens: &[TokenId]) -> Result<Vec<Distribution>, ModelError> {
        self.check_tokens(tokens)?;
        if tokens.len() > self.config.max_positions {
            return Err(ModelError::Position {
                pos: tokens.len() - 1,
                max: self.config.max_positions,
            });
        }
        let mut xs: Vec<Vec<f32>> = tokens
            .iter()
            .enumerate()
            .map(|(p, &t)| self.input(t, p))
            .collect();
        for layer in &self.layers {
            let mut ks = Vec::with_capacity(xs.len());
            let mut vs = Vec::with_capacity(xs.len());
            let mut qs = Vec::with_capacity(xs.len());
            for x in &xs {
                let (q, k, v) = self.qkv(layer, x);
                qs.push(q);
                ks.push(k);
                vs.push(v);
            }
            for (i, x) in xs.iter_mut().enumerate() {
                let keys: Vec<&[f32]> = ks[..=i].iter().map(Vec::as_slice).collect();
                let values: Vec<&[f32]> = vs[..=i].iter().map(Vec::as_slice).collect();
                let attn = self.multi_head(&qs[i], &keys, &values);
                self.finish_layer(layer, x, &attn);
            }
        }
        Ok(xs.iter().map(|x| self.logits(x)).collect())
    }
}

impl LanguageModel for TinyTransformer {
    fn vocab_size(&self) -> usize {
        self.config.vocab
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution, ModelError> {
        if context.is_empty() {
            return Err(ModelError::EmptyContext);
        }
        Ok(self.forward_sequence(context)?.pop().expect("non-empty"))
    }
}

impl BaseModel for TinyTransformer {
    type State = TokenState;

    fn max_positions(&self) -> usize {
        self.config.max_positions
    }

    fn forward_row(
        &self,
        cache: &PaddedKVCache<TokenState>,
        row: usize,
        tree: &DraftTree,
        mask: &AncestorMask,
    ) -> Result<RowForward<TokenState>, ModelError> {
        let h = self.config.hidden;
        let n = tree.len();
        let base = cache.valid_count(row);
        let depths = tree.template().depths();
        let pad = padding_paths(tree);
        for node in (0..n).filter(|&i| !pad[i]) {
            self.check_tokens(&[tree.token(node)])?;
            let pos = base + depths[node];
            if pos >= self.config.max_positions {
                return Err(ModelError::Position {
                    pos,
                    max: self.config.max_positions,
                });
            }
        }
        let cached: Vec<&TokenState> = cache.valid_states(row).collect();

        let mut xs: Vec<Vec<f32>> = (0..n)
            .map(|i| {
                if pad[i] {
                    Vec::new()
                } else {
                    self.input(tree.token(i), base + depths[i])
                }
            })
            .collect();
        let mut kv: Vec<Vec<f32>> = vec![Vec::with_capacity(2 * h * self.layers.len()); n];

        for (l, layer) in self.layers.iter().enumerate() {
            let mut qs = vec![Vec::new(); n];
            for i in (0..n).filter(|&i| !pad[i]) {
                let (q, k, v) = self.qkv(layer, &xs[i]);
                qs[i] = q;
                kv[i].extend(k);
                kv[i].extend(v);
            }
            let (ko, vo) = (2 * h * l, 2 * h * l + h);
            for i in (0..n).filter(|&i| !pad[i]) {
                let mut keys: Vec<&[f32]> = cached.iter().map(|s| &s.kv[ko..ko + h]).collect();
                let mut values: Vec<&[f32]> = cached.iter().map(|s| &s.kv[vo..vo + h]).collect();
                for j in mask.attended(i) {
                    keys.push(&kv[j][ko..ko + h]);
                    values.push(&kv[j][vo..vo + h]);
                }
                let attn = self.multi_head(&qs[i], &keys, &values);
                self.finish_layer(layer, &mut xs[i], &attn);
            }
        }

        let mut dists = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        for (i, kv) in kv.into_iter().enumerate() {
            if pad[i] {
                dists.push(None);
                states.push(None);
            } else {
                dists.push(Some(self.logits(&xs[i])));
                states.push(Some(TokenState {
                    pos: (base + depths[i]) as u32,
                    kv,
                }));
            }
        }
        Ok(RowForward { dists, states })
    }
}
