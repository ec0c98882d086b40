use reader_core::engine::{
    autoregressive_generate, speculative_generate, EngineConfig, Generation,
};
use reader_core::model::BaseModel;
use reader_core::TokenId;
use serde::Serialize;

use super::{load, load_prompts, with_base, Loaded};
use crate::args::GenerateArgs;
use crate::{write_file, CliError, Result};

#[derive(Serialize)]
struct OutputLine<'a> {
    index: usize,
    prompt: &'a str,
    output: String,
    tokens: &'a [TokenId],
}

#[derive(Serialize)]
pub(crate) struct Effective<'a> {
    pub model: String,
    pub vocab: String,
    pub drafter: &'a str,
    pub datastore: Option<String>,
    pub prompts: String,
    pub limit: Option<usize>,
    pub seed: u64,
    pub engine: &'a EngineConfig,
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let config = a.engine.config("default")?;
    // vocabulary first so prompts can be tokenized for a prompt-trained drafter
    let tok = crate::tokenizer::Tokenizer::load(&a.model.vocab_path())?;
    let (records, prompts) = load_prompts(&a.prompts, &tok, a.limit)?;
    let loaded = load(&a.model, a.engine.datastore.as_deref(), &prompts)?;
    let gen = with_base!(&loaded.base, m => run(m, &loaded, &prompts, &config))?;

    let lines: String = records
        .iter()
        .zip(&gen.outputs)
        .enumerate()
        .map(|(index, (r, out))| {
            let line = OutputLine {
                index,
                prompt: &r.prompt,
                output: loaded.tokenizer.decode(out),
                tokens: out,
            };
            serde_json::to_string(&line).expect("output serializes") + "\n"
        })
        .collect();
    write_file(&a.out, lines)?;
    if let Some(p) = &a.metrics {
        let report = serde_json::json!({
            "config": Effective {
                model: a.model.model.display().to_string(),
                vocab: a.model.vocab_path().display().to_string(),
                drafter: &loaded.drafter_desc,
                datastore: a.engine.datastore.as_ref().map(|p| p.display().to_string()),
                prompts: a.prompts.display().to_string(),
                limit: a.limit,
                seed: a.engine.seed,
                engine: &config,
            },
            "metrics": gen.metrics,
        });
        write_file(
            p,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )?;
    }
    if let Some(p) = &a.histogram {
        write_file(p, gen.metrics.histogram_csv())?;
    }
    if let Some(p) = &a.occupancy {
        write_file(p, gen.metrics.occupancy_csv())?;
    }

    if a.oracle_check {
        let want = with_base!(&loaded.base, m => autoregressive_generate(m, &prompts, config.max_new_tokens, config.eos))
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(i) = (0..want.len()).find(|&i| want[i] != gen.outputs[i]) {
            return Err(CliError::OracleMismatch(format!(
                "prompt {i}: speculative {:?} vs autoregressive {:?}",
                gen.outputs[i], want[i]
            )));
        }
        eprintln!("oracle check passed on {} prompts", want.len());
    }
    Ok(())
}

pub(crate) fn run<M: BaseModel>(
    model: &M,
    loaded: &Loaded,
    prompts: &[Vec<TokenId>],
    config: &EngineConfig,
) -> Result<Generation> {
    speculative_generate(
        model,
        loaded.drafter.as_ref(),
        loaded.store.as_ref(),
        prompts,
        config,
    )
    .map_err(|e| CliError::Config(e.to_string()))
}
