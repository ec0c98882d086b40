//! Synthetic prompt/response corpora and their JSONL form.

use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{read_string, write_file, CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub prompt: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    /// Word-level Markov text; responses copy earlier spans at `repeat_rate`.
    Markov,
    /// Document plus a question whose answer is a verbatim span of it.
    CopyTask,
    Mixed,
}

impl FromStr for CorpusKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "markov" => Ok(Self::Markov),
            "copy-task" => Ok(Self::CopyTask),
            "mixed" => Ok(Self::Mixed),
            _ => Err(format!(
                "unknown corpus kind {s:?}, expected markov, copy-task or mixed"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub kind: CorpusKind,
    pub records: usize,
    /// Draws the records.
    pub seed: u64,
    /// Draws the word list and chain; corpora sharing it share a language.
    pub language_seed: u64,
    pub repeat_rate: f64,
}

/// Fixed per-seed first-order chain over made-up words.
struct Language {
    words: Vec<String>,
    // successor word indices with cumulative weights
    next: Vec<Vec<(usize, u32)>>,
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "da", "fe", "go", "hu", "ji", "pa", "re", "so",
    "tu", "wa", "ze", "bi", "no", "la", "me", "ko",
];

impl Language {
    fn new(rng: &mut ChaCha8Rng, size: usize) -> Self {
        let mut words = Vec::with_capacity(size);
        let mut seen = std::collections::BTreeSet::new();
        while words.len() < size {
            let n = rng.gen_range(1..=3);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        words.push(".".into());
        let period = words.len() - 1;
        let next = (0..words.len())
            .map(|_| {
                let k = rng.gen_range(8..=20);
                let mut total = 0;
                let mut out: Vec<(usize, u32)> = (0..k)
                    .map(|rank| {
                        total += 3u32.saturating_sub(rank).max(1);
                        (rng.gen_range(0..period), total)
                    })
                    .collect();
                if rng.gen_bool(0.3) {
                    total += 1;
                    out.push((period, total));
                }
                out
            })
            .collect();
        Self { words, next }
    }

    fn step(&self, rng: &mut ChaCha8Rng, from: usize) -> usize {
        let options = &self.next[from];
        let total = options.last().unwrap().1;
        let x = rng.gen_range(0..total);
        options.iter().find(|&&(_, c)| x < c).unwrap().0
    }

    fn walk(&self, rng: &mut ChaCha8Rng, start: usize, len: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut cur = start;
        for _ in 0..len {
            cur = self.step(rng, cur);
            out.push(cur);
        }
        out
    }

    fn text(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.words[i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn markov_record(lang: &Language, rng: &mut ChaCha8Rng, repeat_rate: f64) -> Record {
    let start = rng.gen_range(0..lang.words.len());
    let prompt_len = rng.gen_range(10..=24);
    let prompt = lang.walk(rng, start, prompt_len);
    let target = rng.gen_range(24..=64);
    let mut all = prompt.clone();
    while all.len() < prompt_len + target {
        if rng.gen_bool(repeat_rate) && all.len() >= 8 {
            let span = rng.gen_range(4..=12).min(all.len());
            let from = rng.gen_range(0..=all.len() - span);
            let copied: Vec<usize> = all[from..from + span].to_vec();
            all.extend(copied);
        } else {
            let w = lang.step(rng, *all.last().unwrap());
            all.push(w);
        }
    }
    all.truncate(prompt_len + target);
    Record {
        prompt: lang.text(&prompt),
        response: lang.text(&all[prompt_len..]),
        document: None,
        question: None,
    }
}

fn copy_record(lang: &Language, rng: &mut ChaCha8Rng) -> Record {
    let start = rng.gen_range(0..lang.words.len());
    let len = rng.gen_range(80..=140);
    let doc = lang.walk(rng, start, len);
    let span = rng.gen_range(16..=40);
    let at = rng.gen_range(3..=doc.len() - span);
    let document = lang.text(&doc);
    let question = format!("what follows \" {} \" ?", lang.text(&doc[at - 3..at]));
    Record {
        prompt: format!("document : {document} question : {question} answer :"),
        response: lang.text(&doc[at..at + span]),
        document: Some(document),
        question: Some(question),
    }
}

/// Deterministic in `opts`.
pub fn synthesize(opts: &SynthOptions) -> Vec<Record> {
    let lang = Language::new(&mut ChaCha8Rng::seed_from_u64(opts.language_seed), 600);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    (0..opts.records)
        .map(|_| {
            let copy = match opts.kind {
                CorpusKind::Markov => false,
                CorpusKind::CopyTask => true,
                CorpusKind::Mixed => rng.gen_bool(0.5),
            };
            if copy {
                copy_record(&lang, &mut rng)
            } else {
                markov_record(&lang, &mut rng, opts.repeat_rate)
            }
        })
        .collect()
}

pub fn to_jsonl(records: &[Record]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// JSONL records, or plain text with one response per non-empty line.
pub fn parse(text: &str) -> std::result::Result<Vec<Record>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.all(|l| l.trim_start().starts_with('{')) {
        return parse_jsonl(text);
    }
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Record {
            prompt: String::new(),
            response: l.trim().to_owned(),
            document: None,
            question: None,
        })
        .collect())
}

pub fn parse_jsonl(text: &str) -> std::result::Result<Vec<Record>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn load(path: &Path) -> Result<Vec<Record>> {
    parse(&read_string(path)?).map_err(|e| CliError::io(path, e))
}

pub fn save(path: &Path, records: &[Record]) -> Result<()> {
    write_file(path, to_jsonl(records))
}
