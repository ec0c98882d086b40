use std::collections::BTreeMap;
use std::path::Path;

use reader_core::{TokenId, UNK};
use serde::{Deserialize, Serialize};

use crate::{read_string, write_file, CliError, Result};

pub const UNK_TEXT: &str = "<unk>";
pub const EOS_TEXT: &str = "<eos>";
pub const EOS: TokenId = 1;

/// Splits on whitespace and cuts every punctuation character out as its own
/// piece.
pub fn pieces(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut start = 0;
        for (i, c) in word.char_indices() {
            if c.is_ascii_punctuation() || (!c.is_ascii() && !c.is_alphanumeric()) {
                if start < i {
                    out.push(&word[start..i]);
                }
                out.push(&word[i..i + c.len_utf8()]);
                start = i + c.len_utf8();
            }
        }
        if start < word.len() {
            out.push(&word[start..]);
        }
    }
    out
}

/// Word-level vocabulary. Id 0 is `<unk>`, id 1 is `<eos>`, the rest are
/// ordered by descending corpus frequency, then lexically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: BTreeMap<String, TokenId>,
}

impl Tokenizer {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for text in texts {
            for p in pieces(text) {
                *counts.entry(p).or_default() += 1;
            }
        }
        counts.remove(UNK_TEXT);
        counts.remove(EOS_TEXT);
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = [UNK_TEXT, EOS_TEXT]
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| t))
            .map(str::to_owned)
            .collect();
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self { tokens, ids }
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        pieces(text)
            .into_iter()
            .map(|p| self.ids.get(p).copied().unwrap_or(UNK))
            .collect()
    }

    /// Space-joined token strings; ids outside the vocabulary print as `<unk>`.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&i| self.tokens.get(i as usize).map_or(UNK_TEXT, String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tokenizer serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct File {
            tokens: Vec<String>,
        }
        let f: File = serde_json::from_str(s)?;
        Ok(Self::from_tokens(f.tokens))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let tok = Self::from_json(&read_string(path)?).map_err(|e| CliError::io(path, e))?;
        if tok.tokens.first().map(String::as_str) != Some(UNK_TEXT)
            || tok.tokens.get(1).map(String::as_str) != Some(EOS_TEXT)
        {
            return Err(CliError::io(
                path,
                "vocabulary must start with <unk>, <eos>",
            ));
        }
        Ok(tok)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json())
    }
}
