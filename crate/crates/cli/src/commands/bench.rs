use std::path::Path;

use reader_core::engine::{autoregressive_generate, EngineConfig, LongAcceptance, RunMetrics};
use reader_core::{DraftTreeTemplate, TokenId};
use serde::Serialize;

use super::generate::run;
use super::{load, load_prompts, with_base, Loaded};
use crate::args::{BenchArgs, Method};
use crate::tokenizer::Tokenizer;
use crate::{write_file, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub corpus: String,
    pub method: Method,
    pub batch: usize,
    pub mean_acceptance_length: f64,
    pub forward_passes: u64,
    pub emitted_tokens: u64,
    pub forward_passes_per_token: f64,
    /// Autoregressive forward passes over this method's.
    pub step_reduction: f64,
    /// Outputs equal autoregressive decoding.
    pub lossless: bool,
    pub long_acceptance: Option<LongAcceptance>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub config: serde_json::Value,
    pub rows: Vec<BenchRow>,
}

/// Engine configuration of one method at one batch size.
pub fn method_config(method: Method, base: &EngineConfig) -> Option<EngineConfig> {
    let mut c = base.clone();
    match method {
        Method::Autoregression => return None,
        Method::ModelOnly => {
            c.search = None;
            c.deepen = false;
        }
        Method::StatOnly => {
            c.template = DraftTreeTemplate::root_only();
        }
        Method::Reader => {}
    }
    Some(c)
}

fn row(
    corpus: &str,
    method: Method,
    batch: usize,
    m: &RunMetrics,
    ar_passes: u64,
    lossless: bool,
) -> BenchRow {
    let per_token = if m.emitted_tokens == 0 {
        0.0
    } else {
        m.forward_passes as f64 / m.emitted_tokens as f64
    };
    BenchRow {
        corpus: corpus.to_owned(),
        method,
        batch,
        mean_acceptance_length: m.mean_acceptance_length,
        forward_passes: m.forward_passes,
        emitted_tokens: m.emitted_tokens,
        forward_passes_per_token: per_token,
        step_reduction: if m.forward_passes == 0 {
            1.0
        } else {
            ar_passes as f64 / m.forward_passes as f64
        },
        lossless,
        long_acceptance: (method != Method::Autoregression).then_some(m.long_acceptance),
    }
}

fn ar_metrics(outputs: &[Vec<TokenId>]) -> RunMetrics {
    let n: u64 = outputs.iter().map(|o| o.len() as u64).sum();
    RunMetrics {
        mean_acceptance_length: 1.0,
        forward_passes: n,
        emitted_tokens: n,
        histogram: vec![0, n],
        ..Default::default()
    }
}

fn corpus_name(p: &Path) -> String {
    p.file_stem().map_or_else(
        || p.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

pub fn bench(a: &BenchArgs) -> Result<BenchReport> {
    if a.batches.is_empty() || a.batches.contains(&0) {
        return Err(CliError::Config("--batches needs positive sizes".into()));
    }
    let base_configs = a
        .batches
        .iter()
        .map(|&b| a.engine.config_for_batch(b, "default"))
        .collect::<Result<Vec<_>>>()?;
    let tok = Tokenizer::load(&a.model.vocab_path())?;
    let mut corpora = Vec::new();
    for path in &a.corpus {
        corpora.push((corpus_name(path), load_prompts(path, &tok, a.limit)?.1));
    }
    let all_prompts: Vec<Vec<TokenId>> = corpora
        .iter()
        .flat_map(|(_, p)| p.iter().cloned())
        .collect();
    let loaded = load(&a.model, a.engine.datastore.as_deref(), &all_prompts)?;

    let mut rows = Vec::new();
    for (name, prompts) in &corpora {
        let c0 = &base_configs[0];
        let want = with_base!(&loaded.base, m => autoregressive_generate(m, prompts, c0.max_new_tokens, c0.eos))
            .map_err(|e| CliError::Config(e.to_string()))?;
        let ar = ar_metrics(&want);
        for (&batch, base) in a.batches.iter().zip(&base_configs) {
            for &method in &a.methods {
                let (metrics, lossless) = match method_config(method, base) {
                    None => (ar.clone(), true),
                    Some(c) => {
                        let g = run_with(&loaded, prompts, &c)?;
                        let ok = g.0 == want;
                        (g.1, ok)
                    }
                };
                if let Some(dir) = &a.plot_dir {
                    let stem = format!("{name}_{}_b{batch}", method.name());
                    write_file(
                        &dir.join(format!("{stem}_histogram.csv")),
                        metrics.histogram_csv(),
                    )?;
                    if method != Method::Autoregression {
                        write_file(
                            &dir.join(format!("{stem}_occupancy.csv")),
                            metrics.occupancy_csv(),
                        )?;
                    }
                }
                rows.push(row(
                    name,
                    method,
                    batch,
                    &metrics,
                    ar.forward_passes,
                    lossless,
                ));
            }
        }
    }

    let report = BenchReport {
        config: serde_json::json!({
            "model": a.model.model.display().to_string(),
            "vocab": a.model.vocab_path().display().to_string(),
            "drafter": loaded.drafter_desc,
            "datastore": a.engine.datastore.as_ref().map(|p| p.display().to_string()),
            "corpora": a.corpus.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "limit": a.limit,
            "seed": a.engine.seed,
            "methods": a.methods,
            "engine": base_configs,
        }),
        rows,
    };
    write_file(
        &a.out,
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    if let Some(p) = &a.csv {
        write_file(p, to_csv(&report.rows))?;
    }
    Ok(report)
}

fn run_with(
    loaded: &Loaded,
    prompts: &[Vec<TokenId>],
    c: &EngineConfig,
) -> Result<(Vec<Vec<TokenId>>, RunMetrics)> {
    let g = with_base!(&loaded.base, m => run(m, loaded, prompts, c))?;
    Ok((g.outputs, g.metrics))
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(
        "corpus,method,batch,mean_acceptance_length,forward_passes,emitted_tokens,forward_passes_per_token,step_reduction,lossless\n",
    );
    for r in rows {
        s += &format!(
            "{},{},{},{:.6},{},{},{:.6},{:.6},{}\n",
            r.corpus,
            r.method.name(),
            r.batch,
            r.mean_acceptance_length,
            r.forward_passes,
            r.emitted_tokens,
            r.forward_passes_per_token,
            r.step_reduction,
            r.lossless
        );
    }
    s
}
