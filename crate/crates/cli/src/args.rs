//! Command-line flags. Engine flags map one-to-one onto `EngineConfig`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reader_core::drafter::SearchParams;
use reader_core::engine::{default_rearrange_every, EngineConfig};
use reader_core::{DraftTreeTemplate, TreeLimits};

use crate::corpus::CorpusKind;
use crate::tokenizer::EOS;
use crate::{read_string, CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "reader",
    version,
    about = "Retrieval-assisted speculative decoding at desk scale"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic JSONL corpus.
    SynthCorpus(SynthArgs),
    /// Build a tokenizer and a model snapshot from corpora.
    BuildModel(BuildModelArgs),
    /// Build a suffix-array datastore from corpus responses.
    BuildDatastore(BuildDatastoreArgs),
    /// Generate continuations of corpus prompts.
    Generate(GenerateArgs),
    /// Compare decoding methods across batch sizes.
    Bench(BenchArgs),
    /// Self-repetition table with and without a datastore.
    Selfrep(SelfrepArgs),
    /// Prune an oversized draft tree to the best size.
    TuneTree(TuneArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_kind, default_value = "markov")]
    pub kind: CorpusKind,
    #[arg(long, default_value_t = 200)]
    pub records: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corpora with the same language seed share words and transitions.
    #[arg(long, default_value_t = 0)]
    pub language_seed: u64,
    /// Per-token chance that a markov response copies an earlier span.
    #[arg(long, default_value_t = 0.2)]
    pub repeat_rate: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_kind(s: &str) -> std::result::Result<CorpusKind, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Ngram,
    Transformer,
}

#[derive(Debug, Args)]
pub struct BuildModelArgs {
    /// Training corpora; also define the vocabulary.
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelKind::Ngram)]
    pub kind: ModelKind,
    /// N-gram order. High orders memorize the training responses, which
    /// makes the model copy from its prompt the way a real LLM would.
    #[arg(long, default_value_t = 6)]
    pub order: usize,
    #[arg(long, default_value_t = reader_core::model::NGramModel::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4096)]
    pub max_positions: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary file; defaults to `<out>.vocab.json`.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Field {
    Response,
    Prompt,
    Both,
}

#[derive(Debug, Args)]
pub struct BuildDatastoreArgs {
    #[arg(long)]
    pub corpus: Vec<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Which record text becomes a datastore document.
    #[arg(long, value_enum, default_value_t = Field::Response)]
    pub field: Field,
    #[arg(long)]
    pub out: PathBuf,
}

/// Base model and drafter.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Defaults to `<model>.vocab.json`.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Drafter snapshot. Without it an n-gram base drafts with its own
    /// counts truncated to `--drafter-order`, and a transformer base gets an
    /// n-gram of that order trained on the prompts.
    #[arg(long)]
    pub drafter: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub drafter_order: usize,
}

impl ModelArgs {
    pub fn vocab_path(&self) -> PathBuf {
        self.vocab
            .clone()
            .unwrap_or_else(|| vocab_path_for(&self.model))
    }
}

pub fn vocab_path_for(model: &std::path::Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".vocab.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Draft-tree template: a JSON file, `default`, `root-only`, `chain:N`
    /// or `fan:a,b,...` (every depth-d node gets the d-th count of children).
    #[arg(long)]
    pub template: Option<String>,
    /// Retrieved branch length; 0 turns statistical search off.
    #[arg(long, default_value_t = SearchParams::default().branch_depth)]
    pub branch_depth: usize,
    #[arg(long, default_value_t = SearchParams::default().max_suffix_len)]
    pub max_suffix: usize,
    #[arg(long, default_value_t = SearchParams::default().min_suffix_len)]
    pub min_suffix: usize,
    #[arg(long, default_value_t = SearchParams::default().subtree_max_depth)]
    pub subtree_max_depth: usize,
    #[arg(long, default_value_t = SearchParams::default().subtree_max_nodes)]
    pub subtree_max_nodes: usize,
    /// Steps between cache compactions, or `inf`. Defaults by batch size.
    #[arg(long)]
    pub rearrange_every: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = Toggle::Auto)]
    pub deepen: Toggle,
    #[arg(long)]
    pub datastore: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
    /// Keep generating past `<eos>`.
    #[arg(long)]
    pub ignore_eos: bool,
    #[arg(long, default_value_t = TreeLimits::default().max_depth)]
    pub max_depth: usize,
    #[arg(long, default_value_t = TreeLimits::default().max_draft_tokens)]
    pub max_draft_tokens: usize,
    /// Record per-phase wall-clock time; reports stop being reproducible.
    #[arg(long)]
    pub timings: bool,
    /// Recorded in reports; the engine itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl EngineArgs {
    pub fn config(&self, default_template: &str) -> Result<EngineConfig> {
        self.config_for_batch(self.batch, default_template)
    }

    pub fn config_for_batch(&self, batch: usize, default_template: &str) -> Result<EngineConfig> {
        let template = parse_template(self.template.as_deref().unwrap_or(default_template))?;
        let search = (self.branch_depth > 0).then_some(SearchParams {
            max_suffix_len: self.max_suffix,
            min_suffix_len: self.min_suffix,
            branch_depth: self.branch_depth,
            subtree_max_depth: self.subtree_max_depth,
            subtree_max_nodes: self.subtree_max_nodes,
        });
        let rearrange_every = match self.rearrange_every.as_deref() {
            None => default_rearrange_every(batch),
            Some("inf" | "never") => None,
            Some(n) => Some(n.parse().map_err(|_| {
                CliError::Config(format!(
                    "--rearrange-every: expected a count or inf, got {n:?}"
                ))
            })?),
        };
        let base = EngineConfig::for_batch(batch);
        let config = EngineConfig {
            template,
            search,
            rearrange_every,
            max_new_tokens: self.max_new_tokens,
            batch_size: batch,
            deepen: match self.deepen {
                Toggle::Auto => base.deepen,
                Toggle::On => true,
                Toggle::Off => false,
            },
            eos: (!self.ignore_eos).then_some(EOS),
            limits: TreeLimits {
                max_depth: self.max_depth,
                max_draft_tokens: self.max_draft_tokens,
            },
            timings: self.timings,
        };
        config.validate().map_err(CliError::Config)?;
        Ok(config)
    }
}

/// Resolves a template name or JSON file.
pub fn parse_template(spec: &str) -> Result<DraftTreeTemplate> {
    let bad = |e: String| CliError::Config(format!("template {spec:?}: {e}"));
    match spec {
        "default" => return Ok(DraftTreeTemplate::default_tree()),
        "root-only" => return Ok(DraftTreeTemplate::root_only()),
        _ => {}
    }
    if let Some(n) = spec.strip_prefix("chain:") {
        let n = n
            .parse()
            .map_err(|_| bad("chain length must be a count".into()))?;
        return Ok(DraftTreeTemplate::chain(n));
    }
    if let Some(list) = spec.strip_prefix("fan:") {
        let fans = list
            .split(',')
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("fan-outs must be counts".into()))?;
        return Ok(fan_template(&fans));
    }
    let path = std::path::Path::new(spec);
    DraftTreeTemplate::from_json(&read_string(path)?).map_err(|e| CliError::io(path, e))
}

/// Full tree where each node at depth d has `fans[d]` children.
pub fn fan_template(fans: &[usize]) -> DraftTreeTemplate {
    let mut parents = vec![None];
    let mut level = vec![0];
    for &f in fans {
        let mut next = Vec::with_capacity(level.len() * f);
        for &p in &level {
            for _ in 0..f {
                next.push(parents.len());
                parents.push(Some(p));
            }
        }
        level = next;
    }
    DraftTreeTemplate::with_limits(parents, &TreeLimits::unbounded())
        .expect("topological by construction")
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Corpus whose prompts are continued.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Use only the first N prompts.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Outputs as JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Run metrics and effective configuration as JSON.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Acceptance-length histogram CSV.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    /// Cache occupancy series CSV.
    #[arg(long)]
    pub occupancy: Option<PathBuf>,
    /// Also decode autoregressively and fail on any difference.
    #[arg(long)]
    pub oracle_check: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,8,16,32")]
    pub batches: Vec<usize>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "autoregression,model-only,stat-only,reader"
    )]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Directory for per-run histogram and occupancy CSVs.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Autoregression,
    ModelOnly,
    StatOnly,
    Reader,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Autoregression => "autoregression",
            Method::ModelOnly => "model-only",
            Method::StatOnly => "stat-only",
            Method::Reader => "reader",
        }
    }
}

#[derive(Debug, Args)]
pub struct SelfrepArgs {
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub datastore: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Emitted tokens per forward pass.
    TokensPerPass,
    /// Tokens per pass over a roofline estimate of the pass cost.
    ModeledThroughput,
    /// Measured tokens per second; not reproducible.
    WallClock,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `--template` is the initial oversized tree, `fan:4,3,2,2` by default.
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Calibration corpus.
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_enum, default_value_t = Objective::TokensPerPass)]
    pub objective: Objective,
    /// Hidden width used by the modeled-throughput objective.
    #[arg(long, default_value_t = 4096)]
    pub cost_hidden: u64,
    /// Machine balance of the roofline, FLOPs per element read.
    #[arg(long, default_value_t = 100.0)]
    pub flops_per_read: f64,
    /// Tuned template JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Search log; defaults to `<out>.tune.json`.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Per-node acceptance rates of the initial template.
    #[arg(long)]
    pub rates_out: Option<PathBuf>,
}
