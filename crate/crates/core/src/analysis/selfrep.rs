use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::drafter::{build_suffix_array, SuffixArrayStore, SuffixIndex};
use crate::tree::TokenId;

/// Greedy pointer cover of a response by earlier text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfRepetitionResult {
    /// Response length over pointer increments.
    pub metric: f64,
    pub increments: usize,
    /// Length of the match found at each increment; 0 when nothing matched
    /// and the pointer moved by one.
    pub spans: Vec<usize>,
}

/// Range-minimum over a slice in O(1) after O(n log n) preprocessing.
struct SparseMin {
    levels: Vec<Vec<usize>>,
}

impl SparseMin {
    fn new(values: &[usize]) -> Self {
        let mut levels = vec![values.to_vec()];
        let mut width = 1;
        while 2 * width <= values.len() {
            let prev = levels.last().expect("level 0 exists");
            let next = (0..=values.len() - 2 * width)
                .map(|i| prev[i].min(prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    /// Minimum of `values[lo..hi]`; `hi > lo`.
    fn min(&self, lo: usize, hi: usize) -> usize {
        let k = (hi - lo).ilog2() as usize;
        self.levels[k][lo].min(self.levels[k][hi - (1 << k)])
    }
}

/// Longest-match index over the response's own prefix: a suffix array of the
/// response plus range-minimum over start positions, so a match of length `L`
/// for the pointer at `p` must start at or before `p - L`.
struct PrefixIndex<'a> {
    text: &'a [TokenId],
    sa: Vec<usize>,
    starts: SparseMin,
}

impl<'a> PrefixIndex<'a> {
    fn new(text: &'a [TokenId]) -> Self {
        let sa = build_suffix_array(text);
        let starts = SparseMin::new(&sa);
        Self { text, sa, starts }
    }

    fn longest_at(&self, p: usize) -> usize {
        let idx = SuffixIndex {
            text: self.text,
            sa: &self.sa,
        };
        let mut range = (0, self.sa.len());
        let mut len = 0;
        while p + len < self.text.len() {
            let next = idx.narrow(range, len, self.text[p + len]);
            // a longer match needs a start at or before p - (len + 1)
            if next.0 == next.1 || self.starts.min(next.0, next.1) + len + 1 > p {
                break;
            }
            range = next;
            len += 1;
        }
        len
    }
}

/// Self-repetition of `response` given `input` and an optional datastore.
///
/// A pointer walks the response. At position `p` the longest run
/// `response[p..p + L]` found verbatim in the input, in `response[..p]`, or in
/// one datastore document advances the pointer by `L` (by 1 if `L = 0`), each
/// move counting one increment. The texts are searched separately: a match
/// never spans two of them.
pub fn self_repetition(
    input: &[TokenId],
    response: &[TokenId],
    datastore: Option<&SuffixArrayStore>,
) -> Result<SelfRepetitionResult, AnalysisError> {
    if response.is_empty() {
        return Err(AnalysisError::EmptyResponse);
    }
    let input_store = SuffixArrayStore::build(&[input.to_vec()], 0);
    let own = PrefixIndex::new(response);
    let mut spans = Vec::new();
    let mut p = 0;
    while p < response.len() {
        let rest = &response[p..];
        let mut len = input_store.longest_match(rest).max(own.longest_at(p));
        if let Some(ds) = datastore {
            len = len.max(ds.longest_match(rest));
        }
        spans.push(len);
        p += len.max(1);
    }
    Ok(SelfRepetitionResult {
        metric: response.len() as f64 / spans.len() as f64,
        increments: spans.len(),
        spans,
    })
}

/// Dataset-level value: total response tokens over total increments.
pub fn self_repetition_dataset(
    pairs: &[(Vec<TokenId>, Vec<TokenId>)],
    datastore: Option<&SuffixArrayStore>,
) -> Result<f64, AnalysisError> {
    let (mut tokens, mut increments) = (0usize, 0usize);
    for (input, response) in pairs {
        let r = self_repetition(input, response, datastore)?;
        tokens += response.len();
        increments += r.increments;
    }
    if increments == 0 {
        return Err(AnalysisError::EmptyResponse);
    }
    Ok(tokens as f64 / increments as f64)
}
