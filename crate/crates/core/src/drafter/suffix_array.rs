//! Immutable datastore indexed by a suffix array.
//!
//! Documents are concatenated, each followed by [`SEPARATOR`]. The suffix
//! array orders every position of that text lexicographically, so all
//! occurrences of a pattern form one contiguous range found by binary search.
//!
//! File format (little-endian): magic `RDRS`, version `u32`, vocab size `u32`,
//! token count `u64`, tokens as `u32`, suffix array as `u64`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::tree::{Branch, TokenId};

/// Document boundary in the concatenated text. Outside every vocabulary and
/// distinct from the padding token.
pub const SEPARATOR: TokenId = u32::MAX - 1;

pub const MAGIC: &[u8; 4] = b"RDRS";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("not a datastore file (bad magic)")]
    Magic,
    #[error("unsupported datastore version {0}")]
    Version(u32),
    #[error("corrupt datastore: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Suffix array by prefix doubling, O(n log² n). Suffixes compare as plain
/// `u32` sequences; a proper prefix sorts first.
pub(crate) fn build_suffix_array(text: &[TokenId]) -> Vec<usize> {
    let n = text.len();
    let mut sa: Vec<usize> = (0..n).collect();
    if n <= 1 {
        return sa;
    }
    let mut rank: Vec<usize> = text.iter().map(|&t| t as usize).collect();
    let mut next = vec![0usize; n];
    let mut k = 1;
    loop {
        let key = |i: usize| (rank[i], if i + k < n { rank[i + k] + 1 } else { 0 });
        sa.sort_unstable_by_key(|&i| key(i));
        next[sa[0]] = 0;
        for j in 1..n {
            next[sa[j]] = next[sa[j - 1]] + usize::from(key(sa[j - 1]) < key(sa[j]));
        }
        std::mem::swap(&mut rank, &mut next);
        if rank[sa[n - 1]] == n - 1 || k >= n {
            break;
        }
        k *= 2;
    }
    sa
}

/// Borrowed view used for range searches over any text with its suffix array.
#[derive(Clone, Copy)]
pub(crate) struct SuffixIndex<'a> {
    pub text: &'a [TokenId],
    pub sa: &'a [usize],
}

impl<'a> SuffixIndex<'a> {
    fn cmp_prefix(&self, start: usize, pattern: &[TokenId]) -> Ordering {
        let end = (start + pattern.len()).min(self.text.len());
        let head = &self.text[start..end];
        if head.len() == pattern.len() {
            head.cmp(pattern)
        } else {
            // suffix shorter than the pattern: equal prefix means it sorts first
            head.cmp(&pattern[..head.len()]).then(Ordering::Less)
        }
    }

    /// `[lo, hi)` of suffix-array entries that start with `pattern`.
    pub fn range(&self, pattern: &[TokenId]) -> (usize, usize) {
        let lo = self
            .sa
            .partition_point(|&s| self.cmp_prefix(s, pattern) == Ordering::Less);
        let hi = self
            .sa
            .partition_point(|&s| self.cmp_prefix(s, pattern) != Ordering::Greater);
        (lo, hi.max(lo))
    }

    /// Within a range whose suffixes share their first `offset` tokens, the
    /// sub-range whose token at `offset` equals `token`.
    pub fn narrow(
        &self,
        (lo, hi): (usize, usize),
        offset: usize,
        token: TokenId,
    ) -> (usize, usize) {
        let at = |s: usize| {
            self.text
                .get(s + offset)
                .map(|&t| t as u64 + 1)
                .unwrap_or(0)
        };
        let want = token as u64 + 1;
        let slice = &self.sa[lo..hi];
        let a = slice.partition_point(|&s| at(s) < want);
        let b = slice.partition_point(|&s| at(s) <= want);
        (lo + a, lo + b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixArrayStore {
    vocab: u32,
    tokens: Vec<TokenId>,
    sa: Vec<usize>,
}

impl SuffixArrayStore {
    pub fn build(docs: &[Vec<TokenId>], vocab: u32) -> Self {
        let mut tokens = Vec::with_capacity(docs.iter().map(|d| d.len() + 1).sum());
        for doc in docs {
            tokens.extend_from_slice(doc);
            tokens.push(SEPARATOR);
        }
        let sa = build_suffix_array(&tokens);
        Self { vocab, tokens, sa }
    }

    pub fn empty(vocab: u32) -> Self {
        Self::build(&[], vocab)
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab
    }

    /// Concatenated text including separators.
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn suffix_array(&self) -> &[usize] {
        &self.sa
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The stored documents, split at separators.
    pub fn documents(&self) -> Vec<&[TokenId]> {
        let mut docs: Vec<&[TokenId]> = self.tokens.split(|&t| t == SEPARATOR).collect();
        docs.pop();
        docs
    }

    pub(crate) fn index(&self) -> SuffixIndex<'_> {
        SuffixIndex {
            text: &self.tokens,
            sa: &self.sa,
        }
    }

    /// Suffix-array range of the suffixes starting with `pattern`; empty
    /// (`lo == hi`) on a miss. An empty pattern matches nothing.
    pub fn search(&self, pattern: &[TokenId]) -> (usize, usize) {
        if pattern.is_empty() {
            return (0, 0);
        }
        self.index().range(pattern)
    }

    /// Start positions of every occurrence of `pattern`, ascending.
    pub fn occurrences(&self, pattern: &[TokenId]) -> Vec<usize> {
        let (lo, hi) = self.search(pattern);
        let mut out = self.sa[lo..hi].to_vec();
        out.sort_unstable();
        out
    }

    /// Greedy most-frequent continuation of `pattern`, at most `depth` tokens.
    ///
    /// At each step the surviving occurrences vote with their next token
    /// (ties to the lowest id) and those that disagree drop out. Occurrences
    /// that reach a separator have no next token and stop voting; the branch
    /// ends when none are left.
    pub fn branch(&self, pattern: &[TokenId], depth: usize) -> Branch {
        let (lo, hi) = self.search(pattern);
        let mut live: Vec<usize> = self.sa[lo..hi].iter().map(|&s| s + pattern.len()).collect();
        let mut out = Vec::new();
        while out.len() < depth {
            let mut votes: BTreeMap<TokenId, usize> = BTreeMap::new();
            for &p in &live {
                if let Some(&t) = self.tokens.get(p).filter(|&&t| t != SEPARATOR) {
                    *votes.entry(t).or_default() += 1;
                }
            }
            let Some((&tok, _)) = votes.iter().rev().max_by_key(|(_, &n)| n) else {
                break;
            };
            live.retain(|&p| self.tokens.get(p) == Some(&tok));
            for p in &mut live {
                *p += 1;
            }
            out.push(tok);
        }
        Branch::new(out)
    }

    /// Length of the longest prefix of `query` occurring anywhere in the store.
    pub fn longest_match(&self, query: &[TokenId]) -> usize {
        let idx = self.index();
        let mut range = (0, self.sa.len());
        for (offset, &t) in query.iter().enumerate() {
            range = idx.narrow(range, offset, t);
            if range.0 == range.1 {
                return offset;
            }
        }
        query.len()
    }

    pub fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.vocab)?;
        w.write_u64::<LittleEndian>(self.tokens.len() as u64)?;
        for &t in &self.tokens {
            w.write_u32::<LittleEndian>(t)?;
        }
        for &s in &self.sa {
            w.write_u64::<LittleEndian>(s as u64)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + self.tokens.len() * 12);
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, DatastoreError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DatastoreError::Magic);
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(DatastoreError::Version(version));
        }
        let vocab = r.read_u32::<LittleEndian>()?;
        let n = usize::try_from(r.read_u64::<LittleEndian>()?)
            .map_err(|_| DatastoreError::Corrupt("token count"))?;
        let mut tokens = vec![0u32; n];
        r.read_u32_into::<LittleEndian>(&mut tokens)?;
        let mut raw = vec![0u64; n];
        r.read_u64_into::<LittleEndian>(&mut raw)?;
        let mut seen = vec![false; n];
        let mut sa = Vec::with_capacity(n);
        for s in raw {
            let s = s as usize;
            if s >= n || std::mem::replace(&mut seen[s], true) {
                return Err(DatastoreError::Corrupt("suffix array is not a permutation"));
            }
            sa.push(s);
        }
        Ok(Self { vocab, tokens, sa })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: TokenId = SEPARATOR;

    fn naive_sa(text: &[TokenId]) -> Vec<usize> {
        let mut sa: Vec<usize> = (0..text.len()).collect();
        sa.sort_by(|&a, &b| text[a..].cmp(&text[b..]));
        sa
    }

    #[test]
    fn doubling_matches_naive_sort() {
        for text in [
            vec![2, 1, 2, 1, 3],
            vec![1, 1, 1, 1, 1, 1],
            vec![],
            vec![7],
            vec![3, 1, 2, 3, 1, 2, 3, S, 1, 2, S],
        ] {
            assert_eq!(build_suffix_array(&text), naive_sa(&text), "{text:?}");
        }
    }

    #[test]
    fn search_counts_occurrences() {
        let s = SuffixArrayStore::build(&[vec![1, 2, 3, 1, 2, 4, 1, 2, 3]], 8);
        assert_eq!(s.tokens(), &[1, 2, 3, 1, 2, 4, 1, 2, 3, S]);
        let (lo, hi) = s.search(&[1, 2]);
        assert_eq!(hi - lo, 3);
        assert_eq!(s.occurrences(&[1, 2]), vec![0, 3, 6]);
        assert_eq!(
            s.search(&[1, 2, 3, 1, 2, 4, 1, 2, 3, 5]).1
                - s.search(&[1, 2, 3, 1, 2, 4, 1, 2, 3, 5]).0,
            0
        );
        let (lo, hi) = s.search(&[1, 2, 3, 1, 2, 4, 1, 2, 3]);
        assert!(hi - lo >= 1);
    }

    #[test]
    fn branch_follows_majority() {
        let s = SuffixArrayStore::build(&[vec![1, 2, 3, 1, 2, 4, 1, 2, 3]], 8);
        assert_eq!(s.branch(&[1, 2], 2).tokens, vec![3, 1]);
        assert_eq!(s.branch(&[9], 4), Branch::empty());
        assert_eq!(s.branch(&[4], 1).tokens, vec![1]);
        // continuation stops at the document boundary
        assert_eq!(s.branch(&[2, 3], 10).tokens, vec![1, 2, 4, 1, 2, 3]);
    }

    #[test]
    fn empty_store_misses() {
        let s = SuffixArrayStore::empty(4);
        assert!(s.is_empty());
        assert_eq!(s.search(&[1]), (0, 0));
        assert!(s.branch(&[1], 3).is_empty());
        assert_eq!(s.longest_match(&[1, 2]), 0);
    }

    #[test]
    fn no_match_crosses_documents() {
        let s = SuffixArrayStore::build(&[vec![1, 2], vec![3, 4]], 8);
        assert_eq!(s.search(&[2, 3]).1, s.search(&[2, 3]).0);
        assert_eq!(s.branch(&[1], 5).tokens, vec![2]);
        assert_eq!(s.longest_match(&[1, 2, 3, 4]), 2);
        assert_eq!(s.documents(), vec![&[1, 2][..], &[3, 4][..]]);
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let s = SuffixArrayStore::build(&[vec![5, 1, 5, 1], vec![2, 5]], 6);
        let bytes = s.to_bytes();
        let back = SuffixArrayStore::read(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 8] = 0; // duplicate an sa entry
        bad[n - 16] = 0;
        assert!(SuffixArrayStore::read(&mut bad.as_slice()).is_err());
    }
}
