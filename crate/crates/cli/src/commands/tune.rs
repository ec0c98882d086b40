use std::time::Instant;

use reader_core::analysis::{clamp_rates, cost_model, golden_section_tune, CostInputs};
use reader_core::engine::{collect_node_acceptance, EngineConfig};
use reader_core::TokenId;
use serde::Serialize;

use super::generate::run;
use super::{load, load_prompts, with_base, Loaded};
use crate::args::{Objective, TuneArgs};
use crate::tokenizer::Tokenizer;
use crate::{write_file, CliError, Result};

pub const DEFAULT_INITIAL: &str = "fan:4,3,2,2";

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub pruned: usize,
    pub nodes: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneReport {
    pub objective: Objective,
    pub initial_nodes: usize,
    pub n_star: usize,
    pub tuned_nodes: usize,
    /// Nodes whose measured rate exceeded their parent's and was clamped.
    pub clamped: Vec<usize>,
    pub evaluations: Vec<Evaluation>,
    pub config: serde_json::Value,
}

#[derive(Serialize)]
struct RatesFile<'a> {
    rates: &'a [f64],
    row_steps: u64,
}

pub fn tune_tree(a: &TuneArgs) -> Result<TuneReport> {
    let base = a.engine.config(DEFAULT_INITIAL)?;
    let initial = base.template.clone();
    let tok = Tokenizer::load(&a.model.vocab_path())?;
    let (_, prompts) = load_prompts(&a.prompts, &tok, a.limit)?;
    let loaded = load(&a.model, a.engine.datastore.as_deref(), &prompts)?;

    let acc = with_base!(&loaded.base, m => collect_node_acceptance(
        m,
        loaded.drafter.as_ref(),
        &prompts,
        &initial,
        base.max_new_tokens,
        base.batch_size,
    ))
    .map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(p) = &a.rates_out {
        let f = RatesFile {
            rates: &acc.rates,
            row_steps: acc.row_steps,
        };
        write_file(
            p,
            serde_json::to_string_pretty(&f).expect("rates serialize") + "\n",
        )?;
    }

    let mean_prompt = prompts.iter().map(Vec::len).sum::<usize>() / prompts.len().max(1);
    let mut failure = None;
    let result = golden_section_tune(&initial, &acc.rates, |t| {
        let c = EngineConfig {
            template: t.clone(),
            ..base.clone()
        };
        match score(a, &loaded, &prompts, &c, mean_prompt) {
            Ok(s) => s,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        }
    })
    .map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(e) = failure {
        return Err(e);
    }

    write_file(&a.out, result.template.to_json() + "\n")?;
    let node_count = |n: usize| initial.len() - n;
    let report = TuneReport {
        objective: a.objective,
        initial_nodes: initial.len(),
        n_star: result.n_star,
        tuned_nodes: result.template.len(),
        clamped: clamp_rates(&initial, &acc.rates).1,
        evaluations: result
            .evaluations
            .iter()
            .map(|&(n, score)| Evaluation {
                pruned: n,
                nodes: node_count(n),
                score,
            })
            .collect(),
        config: serde_json::json!({
            "model": a.model.model.display().to_string(),
            "drafter": loaded.drafter_desc,
            "prompts": a.prompts.display().to_string(),
            "limit": a.limit,
            "seed": a.engine.seed,
            "cost_hidden": a.cost_hidden,
            "flops_per_read": a.flops_per_read,
            "engine": base,
        }),
    };
    let sidecar = a.sidecar.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".tune.json");
        s.into()
    });
    write_file(
        &sidecar,
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    eprintln!(
        "pruned {} of {} nodes; tuned tree has {} nodes",
        result.n_star,
        initial.len(),
        result.template.len()
    );
    Ok(report)
}

fn score(
    a: &TuneArgs,
    loaded: &Loaded,
    prompts: &[Vec<TokenId>],
    c: &EngineConfig,
    mean_prompt: usize,
) -> Result<f64> {
    let start = Instant::now();
    let g = with_base!(&loaded.base, m => run(m, loaded, prompts, c))?;
    let m = &g.metrics;
    let per_pass = m.mean_acceptance_length;
    Ok(match a.objective {
        Objective::TokensPerPass => per_pass,
        Objective::WallClock => m.emitted_tokens as f64 / start.elapsed().as_secs_f64().max(1e-9),
        Objective::ModeledThroughput => {
            let t = composed_nodes(c);
            let cost = cost_model(CostInputs {
                b: c.batch_size as u64,
                t: t as u64,
                s: (mean_prompt + c.max_new_tokens / 2) as u64,
                h: a.cost_hidden,
            })
            .map_err(|e| CliError::Config(e.to_string()))?;
            // rows per second per unit of roofline time, scaled to read nicely
            per_pass * c.batch_size as f64 / cost.roofline_time(a.flops_per_read) * 1e9
        }
    })
}

/// Verified nodes per row: root plus every draft token of the composed tree.
fn composed_nodes(c: &EngineConfig) -> usize {
    c.composed_shape().0 + 1
}
