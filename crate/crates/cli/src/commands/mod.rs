mod bench;
mod generate;
mod tune;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use reader_core::analysis::self_repetition_dataset;
use reader_core::drafter::SuffixArrayStore;
use reader_core::model::snapshot::ModelSnapshot;
use reader_core::model::{LanguageModel, NGramModel, TinyTransformer, TransformerConfig};
use reader_core::TokenId;
use serde::Serialize;

pub use bench::{bench, method_config, BenchReport, BenchRow};
pub use generate::generate;
pub use tune::tune_tree;

use crate::args::{
    BuildDatastoreArgs, BuildModelArgs, Cli, Command, Field, ModelArgs, ModelKind, SelfrepArgs,
    SynthArgs,
};
use crate::corpus::{self, Record, SynthOptions};
use crate::tokenizer::{Tokenizer, EOS};
use crate::{write_file, CliError, Result};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthCorpus(a) => synth_corpus(&a),
        Command::BuildModel(a) => build_model(&a),
        Command::BuildDatastore(a) => build_datastore(&a),
        Command::Generate(a) => generate(&a),
        Command::Bench(a) => bench(&a).map(drop),
        Command::Selfrep(a) => selfrep(&a).map(drop),
        Command::TuneTree(a) => tune_tree(&a).map(drop),
    }
}

/// Runs `$body` with `$m` bound to the concrete base model.
macro_rules! with_base {
    ($snap:expr, $m:ident => $body:expr) => {
        match $snap {
            reader_core::model::snapshot::ModelSnapshot::NGram($m) => $body,
            reader_core::model::snapshot::ModelSnapshot::Transformer($m) => $body,
        }
    };
}
pub(crate) use with_base;

pub fn synth_corpus(a: &SynthArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.repeat_rate) {
        return Err(CliError::Config(format!(
            "--repeat-rate {} is not a probability",
            a.repeat_rate
        )));
    }
    let records = corpus::synthesize(&SynthOptions {
        kind: a.kind,
        records: a.records,
        seed: a.seed,
        language_seed: a.language_seed,
        repeat_rate: a.repeat_rate,
    });
    corpus::save(&a.out, &records)
}

/// Training document of a record: prompt, response, end of sequence.
pub fn training_doc(tok: &Tokenizer, r: &Record) -> Vec<TokenId> {
    let mut d = tok.encode(&r.prompt);
    d.extend(tok.encode(&r.response));
    d.push(EOS);
    d
}

fn load_corpora(paths: &[impl AsRef<Path>]) -> Result<Vec<Record>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(corpus::load(p.as_ref())?);
    }
    Ok(all)
}

pub fn build_model(a: &BuildModelArgs) -> Result<()> {
    let records = load_corpora(&a.corpus)?;
    let tok = Tokenizer::build(
        records
            .iter()
            .flat_map(|r| [r.prompt.as_str(), r.response.as_str()]),
    );
    let vocab = tok.vocab_size();
    let snapshot = match a.kind {
        ModelKind::Ngram => {
            if a.order == 0 {
                return Err(CliError::Config("--order must be at least 1".into()));
            }
            if a.alpha.is_nan() || a.alpha <= 0.0 {
                return Err(CliError::Config("--alpha must be positive".into()));
            }
            let docs: Vec<Vec<TokenId>> = records.iter().map(|r| training_doc(&tok, r)).collect();
            ModelSnapshot::NGram(NGramModel::train(&docs, a.order, a.alpha, vocab))
        }
        ModelKind::Transformer => {
            if a.heads == 0 || !a.hidden.is_multiple_of(a.heads) || a.layers == 0 || a.max_positions == 0 {
                return Err(CliError::Config(
                    "transformer needs layers, heads, max positions ≥ 1 and hidden divisible by heads".into(),
                ));
            }
            ModelSnapshot::Transformer(TinyTransformer::new(TransformerConfig {
                layers: a.layers,
                heads: a.heads,
                hidden: a.hidden,
                vocab,
                max_positions: a.max_positions,
                seed: a.seed,
            }))
        }
    };
    write_file(&a.out, snapshot.to_bytes())?;
    tok.save(
        &a.vocab_out
            .clone()
            .unwrap_or_else(|| crate::args::vocab_path_for(&a.out)),
    )
}

pub fn build_datastore(a: &BuildDatastoreArgs) -> Result<()> {
    let tok = Tokenizer::load(&a.vocab)?;
    let records = load_corpora(&a.corpus)?;
    let docs: Vec<Vec<TokenId>> = records
        .iter()
        .flat_map(|r| match a.field {
            Field::Response => vec![tok.encode(&r.response)],
            Field::Prompt => vec![tok.encode(&r.prompt)],
            Field::Both => vec![tok.encode(&r.prompt), tok.encode(&r.response)],
        })
        .filter(|d| !d.is_empty())
        .collect();
    let store = SuffixArrayStore::build(&docs, tok.vocab_size() as u32);
    write_file(&a.out, store.to_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelSnapshot> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    ModelSnapshot::read(&mut BufReader::new(f)).map_err(|e| CliError::io(path, e))
}

pub fn load_store(path: &Path) -> Result<SuffixArrayStore> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    SuffixArrayStore::read(&mut BufReader::new(f)).map_err(|e| CliError::io(path, e))
}

fn base_vocab(m: &ModelSnapshot) -> usize {
    with_base!(m, x => x.vocab_size())
}

/// Everything a decoding command needs.
pub struct Loaded {
    pub base: ModelSnapshot,
    pub drafter: Box<dyn LanguageModel>,
    pub drafter_desc: String,
    pub tokenizer: Tokenizer,
    pub store: Option<SuffixArrayStore>,
}

pub fn load(m: &ModelArgs, datastore: Option<&Path>, prompts: &[Vec<TokenId>]) -> Result<Loaded> {
    let base = load_model(&m.model)?;
    let tokenizer = Tokenizer::load(&m.vocab_path())?;
    let vocab = base_vocab(&base);
    if tokenizer.vocab_size() > vocab {
        return Err(CliError::Config(format!(
            "vocabulary has {} tokens but the model only {vocab}",
            tokenizer.vocab_size()
        )));
    }
    if m.drafter_order == 0 {
        return Err(CliError::Config(
            "--drafter-order must be at least 1".into(),
        ));
    }
    let (drafter, drafter_desc): (Box<dyn LanguageModel>, String) = match (&m.drafter, &base) {
        (Some(p), _) => {
            let d = load_model(p)?;
            if base_vocab(&d) != vocab {
                return Err(CliError::Config(
                    "drafter and base model vocabularies differ".into(),
                ));
            }
            let desc = format!("snapshot {}", p.display());
            match d {
                ModelSnapshot::NGram(x) => (Box::new(x), desc),
                ModelSnapshot::Transformer(x) => (Box::new(x), desc),
            }
        }
        (None, ModelSnapshot::NGram(b)) => (
            Box::new(b.with_order(m.drafter_order.min(b.order()))),
            format!(
                "base n-gram truncated to order {}",
                m.drafter_order.min(b.order())
            ),
        ),
        (None, ModelSnapshot::Transformer(_)) => (
            Box::new(NGramModel::train(
                prompts,
                m.drafter_order,
                NGramModel::DEFAULT_ALPHA,
                vocab,
            )),
            format!("n-gram of order {} trained on the prompts", m.drafter_order),
        ),
    };
    let store = datastore.map(load_store).transpose()?;
    if let Some(s) = &store {
        if s.vocab_size() as usize > vocab {
            return Err(CliError::Config(
                "datastore vocabulary is larger than the model's".into(),
            ));
        }
    }
    Ok(Loaded {
        base,
        drafter,
        drafter_desc,
        tokenizer,
        store,
    })
}

/// Tokenized prompts of a corpus, optionally only the first `limit`.
pub fn load_prompts(
    path: &Path,
    tok: &Tokenizer,
    limit: Option<usize>,
) -> Result<(Vec<Record>, Vec<Vec<TokenId>>)> {
    let mut records = corpus::load(path)?;
    if let Some(n) = limit {
        records.truncate(n);
    }
    let prompts: Vec<Vec<TokenId>> = records.iter().map(|r| tok.encode(&r.prompt)).collect();
    if let Some(i) = prompts.iter().position(Vec::is_empty) {
        return Err(CliError::Config(format!(
            "{}: record {} has an empty prompt",
            path.display(),
            i + 1
        )));
    }
    Ok((records, prompts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfrepRow {
    pub corpus: String,
    pub records: usize,
    pub without_datastore: Option<f64>,
    pub with_datastore: Option<f64>,
}

pub fn selfrep(a: &SelfrepArgs) -> Result<Vec<SelfrepRow>> {
    let tok = Tokenizer::load(&a.vocab)?;
    let store = a.datastore.as_deref().map(load_store).transpose()?;
    let mut rows = Vec::new();
    for path in &a.corpus {
        let pairs: Vec<(Vec<TokenId>, Vec<TokenId>)> = corpus::load(path)?
            .iter()
            .map(|r| (tok.encode(&r.prompt), tok.encode(&r.response)))
            .filter(|(_, resp)| !resp.is_empty())
            .collect();
        let without = self_repetition_dataset(&pairs, None).ok();
        let with = match &store {
            Some(s) => self_repetition_dataset(&pairs, Some(s)).ok(),
            None => without,
        };
        rows.push(SelfrepRow {
            corpus: path.display().to_string(),
            records: pairs.len(),
            without_datastore: without,
            with_datastore: with,
        });
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.2}"));
    println!(
        "{:<40} {:>8} {:>8} {:>8}",
        "corpus", "records", "W/o DS", "W/ DS"
    );
    for r in &rows {
        println!(
            "{:<40} {:>8} {:>8} {:>8}",
            r.corpus,
            r.records,
            fmt(r.without_datastore),
            fmt(r.with_datastore)
        );
    }
    if let Some(out) = &a.out {
        let report = serde_json::json!({
            "datastore": a.datastore.as_ref().map(|p| p.display().to_string()),
            "rows": rows,
        });
        write_file(
            out,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )?;
    }
    Ok(rows)
}
