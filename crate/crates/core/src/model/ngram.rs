use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{
    padding_paths, BaseModel, Distribution, LanguageModel, ModelError, PaddedKVCache, RowForward,
};
use crate::tree::{AncestorMask, DraftTree, TokenId};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Count tables indexed by context length, then by the context itself.
type Tables = Vec<BTreeMap<Vec<TokenId>, ContextCounts>>;

/// Count-based n-gram language model with add-α smoothing and longest-context
/// backoff.
///
/// The distribution after a context comes from the longest suffix (up to
/// `order - 1` tokens) that was seen as a context in training; if none was,
/// it is uniform. Scores are `ln((count + α) / (total + α·V))`.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    vocab: usize,
    tables: Arc<Tables>,
}

impl NGramModel {
    pub const DEFAULT_ALPHA: f64 = 0.1;

    /// An untrained model: every distribution is uniform.
    pub fn untrained(order: usize, vocab: usize) -> Self {
        Self::train(&[], order, Self::DEFAULT_ALPHA, vocab)
    }

    pub fn train(docs: &[Vec<TokenId>], order: usize, alpha: f64, vocab: usize) -> Self {
        assert!(order >= 1, "order must be at least 1");
        let mut tables: Tables = vec![BTreeMap::new(); order];
        for doc in docs {
            for (i, &tok) in doc.iter().enumerate() {
                for (m, table) in tables.iter_mut().enumerate() {
                    if m > i {
                        break;
                    }
                    let c = table.entry(doc[i - m..i].to_vec()).or_default();
                    c.total += 1;
                    *c.next.entry(tok).or_default() += 1;
                }
            }
        }
        Self {
            order,
            alpha,
            vocab,
            tables: Arc::new(tables),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// A lower-order view sharing the same count tables; used as a cheap
    /// drafter for this model.
    pub fn with_order(&self, order: usize) -> Self {
        assert!(
            order >= 1 && order <= self.tables.len(),
            "order out of range"
        );
        Self {
            order,
            ..self.clone()
        }
    }

    fn lookup(&self, context: &[TokenId]) -> Option<&ContextCounts> {
        let longest = (self.order - 1).min(context.len());
        (0..=longest)
            .rev()
            .find_map(|m| self.tables[m].get(&context[context.len() - m..]))
    }

    fn score(&self, counts: Option<&ContextCounts>) -> Distribution {
        let v = self.vocab as f64;
        match counts {
            None => Distribution::new(vec![(1.0 / v).ln() as f32; self.vocab]),
            Some(c) => {
                let denom = c.total as f64 + self.alpha * v;
                let floor = (self.alpha / denom).ln() as f32;
                let mut scores = vec![floor; self.vocab];
                for (&tok, &n) in &c.next {
                    if let Some(s) = scores.get_mut(tok as usize) {
                        *s = ((n as f64 + self.alpha) / denom).ln() as f32;
                    }
                }
                Distribution::new(scores)
            }
        }
    }

    pub(crate) fn write_tables<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_u32::<LittleEndian>(self.order as u32)?;
        w.write_f64::<LittleEndian>(self.alpha)?;
        w.write_u32::<LittleEndian>(self.vocab as u32)?;
        w.write_u32::<LittleEndian>(self.tables.len() as u32)?;
        for table in self.tables.iter() {
            w.write_u64::<LittleEndian>(table.len() as u64)?;
            for (ctx, counts) in table {
                w.write_u32::<LittleEndian>(ctx.len() as u32)?;
                for &t in ctx {
                    w.write_u32::<LittleEndian>(t)?;
                }
                w.write_u32::<LittleEndian>(counts.next.len() as u32)?;
                for (&t, &n) in &counts.next {
                    w.write_u32::<LittleEndian>(t)?;
                    w.write_u64::<LittleEndian>(n)?;
                }
            }
        }
        Ok(())
    }

    pub(crate) fn read_tables<R: Read>(r: &mut R) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let order = r.read_u32::<LittleEndian>()? as usize;
        let alpha = r.read_f64::<LittleEndian>()?;
        let vocab = r.read_u32::<LittleEndian>()? as usize;
        let n_tables = r.read_u32::<LittleEndian>()? as usize;
        if order == 0 || order > n_tables {
            return Err(bad("n-gram order does not match table count"));
        }
        let mut tables: Tables = Vec::with_capacity(n_tables);
        for m in 0..n_tables {
            let n_ctx = r.read_u64::<LittleEndian>()?;
            let mut table = BTreeMap::new();
            for _ in 0..n_ctx {
                let len = r.read_u32::<LittleEndian>()? as usize;
                if len != m {
                    return Err(bad("context length does not match its table"));
                }
                let ctx = (0..len)
                    .map(|_| r.read_u32::<LittleEndian>())
                    .collect::<io::Result<Vec<_>>>()?;
                let n_next = r.read_u32::<LittleEndian>()?;
                let mut counts = ContextCounts::default();
                for _ in 0..n_next {
                    let t = r.read_u32::<LittleEndian>()?;
                    let n = r.read_u64::<LittleEndian>()?;
                    counts.total += n;
                    counts.next.insert(t, n);
                }
                table.insert(ctx, counts);
            }
            tables.push(table);
        }
        Ok(Self {
            order,
            alpha,
            vocab,
            tables: Arc::new(tables),
        })
    }
}

impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.alpha.to_bits() == other.alpha.to_bits()
            && self.vocab == other.vocab
            && self.tables == other.tables
    }
}

impl LanguageModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution, ModelError> {
        if context.is_empty() {
            return Err(ModelError::EmptyContext);
        }
        self.check_tokens(context)?;
        Ok(self.score(self.lookup(context)))
    }
}

impl BaseModel for NGramModel {
    /// The cached token itself; only the last `order - 1` are ever read.
    type State = TokenId;

    fn max_positions(&self) -> usize {
        usize::MAX
    }

    fn forward_row(
        &self,
        cache: &PaddedKVCache<TokenId>,
        row: usize,
        tree: &DraftTree,
        mask: &AncestorMask,
    ) -> Result<RowForward<TokenId>, ModelError> {
        let keep = self.order.saturating_sub(1);
        let skip = cache.valid_count(row).saturating_sub(keep);
        let history: Vec<TokenId> = cache.valid_states(row).skip(skip).copied().collect();
        let pad = padding_paths(tree);
        let mut dists = Vec::with_capacity(tree.len());
        let mut states = Vec::with_capacity(tree.len());
        for node in 0..tree.len() {
            if pad[node] {
                dists.push(None);
                states.push(None);
                continue;
            }
            let mut ctx = history.clone();
            ctx.extend(mask.attended(node).map(|j| tree.token(j)));
            dists.push(Some(self.next_distribution(&ctx)?));
            states.push(Some(tree.token(node)));
        }
        Ok(RowForward { dists, states })
    }
}
