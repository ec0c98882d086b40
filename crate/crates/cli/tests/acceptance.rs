//! Acceptance criteria, one pass/fail line each. Runs without the libtest
//! harness so every line is printed even when some criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use reader_cli::args::{fan_template, Method};
use reader_cli::commands::{method_config, training_doc};
use reader_cli::corpus::{synthesize, CorpusKind, SynthOptions};
use reader_cli::tokenizer::{Tokenizer, EOS};
use reader_core::analysis::{
    cost_model, golden_section_tune, long_seq_probability, self_repetition,
    self_repetition_dataset, CostInputs,
};
use reader_core::composer::union;
use reader_core::drafter::{SuffixArrayStore, TrieStore};
use reader_core::engine::{
    autoregressive_generate, collect_node_acceptance, speculative_generate, EngineConfig,
};
use reader_core::model::{NGramModel, PaddedKVCache};
use reader_core::{AncestorMask, DraftTreeTemplate, TokenId};

type Verdict = (bool, String);

struct Row {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn run(rows: &mut Vec<Row>, id: &'static str, name: &'static str, f: impl FnOnce() -> Verdict) {
    let start = Instant::now();
    let (pass, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    });
    let row = Row {
        id,
        name,
        pass,
        detail,
        elapsed: start.elapsed(),
    };
    println!(
        "{:<5} {} {:<44} {} ({:.1}s)",
        row.id,
        if row.pass { "PASS" } else { "FAIL" },
        row.name,
        row.detail,
        row.elapsed.as_secs_f64()
    );
    rows.push(row);
}

fn within(limit_secs: u64, start: Instant, (pass, detail): Verdict) -> Verdict {
    let t = start.elapsed();
    if t > Duration::from_secs(limit_secs) {
        (
            false,
            format!(
                "{detail}; took {:.1}s, limit {limit_secs}s",
                t.as_secs_f64()
            ),
        )
    } else {
        (pass, detail)
    }
}

// ---------------------------------------------------------------- fixtures

struct Bench {
    model: NGramModel,
    drafter: NGramModel,
    store: SuffixArrayStore,
    tokenizer: Tokenizer,
    corpora: Vec<(&'static str, Vec<(Vec<TokenId>, Vec<TokenId>)>)>,
}

impl Bench {
    fn new() -> Self {
        let synth = |kind, seed, records| {
            synthesize(&SynthOptions {
                kind,
                records,
                seed,
                language_seed: 0,
                repeat_rate: 0.2,
            })
        };
        let sets = [
            ("copy-task", synth(CorpusKind::CopyTask, 11, 60)),
            ("markov", synth(CorpusKind::Markov, 12, 60)),
            ("mixed", synth(CorpusKind::Mixed, 13, 60)),
        ];
        // a separate draw of the same language feeds the datastore
        let reference = synth(CorpusKind::Markov, 14, 100);
        let tokenizer = Tokenizer::build(
            sets.iter()
                .flat_map(|(_, rs)| rs.iter())
                .chain(&reference)
                .flat_map(|r| [r.prompt.as_str(), r.response.as_str()]),
        );
        let vocab = tokenizer.vocab_size();
        let docs: Vec<Vec<TokenId>> = sets
            .iter()
            .flat_map(|(_, rs)| rs.iter())
            .map(|r| training_doc(&tokenizer, r))
            .collect();
        let model = NGramModel::train(&docs, 6, NGramModel::DEFAULT_ALPHA, vocab);
        let drafter = model.with_order(2);
        let store_docs: Vec<Vec<TokenId>> = reference
            .iter()
            .map(|r| tokenizer.encode(&r.response))
            .collect();
        let store = SuffixArrayStore::build(&store_docs, vocab as u32);
        let corpora = sets
            .iter()
            .map(|(name, rs)| {
                let pairs = rs
                    .iter()
                    .map(|r| (tokenizer.encode(&r.prompt), tokenizer.encode(&r.response)))
                    .collect();
                (*name, pairs)
            })
            .collect();
        Self {
            model,
            drafter,
            store,
            tokenizer,
            corpora,
        }
    }

    fn prompts(&self, corpus: usize) -> Vec<Vec<TokenId>> {
        self.corpora[corpus]
            .1
            .iter()
            .map(|(p, _)| p.clone())
            .collect()
    }

    fn config(&self, batch: usize) -> EngineConfig {
        EngineConfig {
            eos: Some(EOS),
            ..EngineConfig::for_batch(batch)
        }
    }

    fn acceptance(&self, prompts: &[Vec<TokenId>], config: &EngineConfig) -> f64 {
        speculative_generate(
            &self.model,
            &self.drafter,
            Some(&self.store),
            prompts,
            config,
        )
        .unwrap()
        .metrics
        .mean_acceptance_length
    }
}

// ---------------------------------------------------------------- criteria

fn losslessness() -> Verdict {
    let start = Instant::now();
    let cases = 120;
    let failures: Vec<String> = (0..cases).filter_map(|s| lossless::case(s).err()).collect();
    let verdict = match failures.first() {
        None => (
            true,
            format!("{cases}/{cases} random configurations match autoregression"),
        ),
        Some(f) => (
            false,
            format!("{} of {cases} differ, first: {f}", failures.len()),
        ),
    };
    within(300, start, verdict)
}

fn oracle_suite() -> Verdict {
    let start = Instant::now();
    const N: u64 = 500;
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut bad: Vec<String> = Vec::new();
    let mut check = |what: &'static str, seed: u64, ok: bool| {
        *counts.entry(what).or_default() += 1;
        if !ok && bad.len() < 5 {
            bad.push(format!("{what} seed {seed}"));
        }
    };
    for seed in 0..N {
        let mut r = rng(10_000 + seed);

        let k = r.gen_range(1..10);
        let seqs: Vec<Vec<u32>> = (0..k)
            .map(|_| {
                let len = r.gen_range(1..25);
                random_tokens(&mut r, len, 4)
            })
            .collect();
        let mut trie = TrieStore::new();
        seqs.iter().for_each(|s| trie.insert(s));
        let window = r.gen_range(1..10);
        let hist = {
            let n = r.gen_range(1..120);
            random_tokens(&mut r, n, 3)
        };
        let mut rolling = TrieStore::with_window(window);
        rolling.extend(&hist);
        let ok = (0..10).all(|_| {
            let len = r.gen_range(0..5);
            let q = random_tokens(&mut r, len, 4);
            let qlen = r.gen_range(1..=window + 1);
            let from = r.gen_range(0..hist.len());
            let h: Vec<u32> = hist[from..].iter().copied().take(qlen).collect();
            trie.count(&q) == naive_prefix_count(&seqs, &q)
                && rolling.count(&h) == naive_window_count(&hist, window, &h)
        });
        check("trie lookups", seed, ok);

        let docs: Vec<Vec<u32>> = (0..r.gen_range(0..5))
            .map(|_| {
                let len = r.gen_range(0..50);
                random_tokens(&mut r, len, 3)
            })
            .collect();
        let store = SuffixArrayStore::build(&docs, 3);
        let mut range_ok = store.suffix_array() == naive_suffix_array(store.tokens()).as_slice();
        let mut branch_ok = true;
        for _ in 0..10 {
            let plen = r.gen_range(1..5);
            let p = random_tokens(&mut r, plen, 3);
            range_ok &= store.occurrences(&p) == naive_occurrences(store.tokens(), &p);
            let depth = r.gen_range(1..8);
            branch_ok &= store.branch(&p, depth).tokens == naive_branch(&docs, &p, depth);
        }
        check("suffix-array ranges", seed, range_ok);
        check("branch continuations", seed, branch_ok);

        let input = {
            let n = r.gen_range(0..20);
            random_tokens(&mut r, n, 4)
        };
        let response = {
            let n = r.gen_range(1..50);
            random_tokens(&mut r, n, 4)
        };
        let got = self_repetition(&input, &response, Some(&store)).unwrap();
        let small: Vec<Vec<u32>> = docs
            .iter()
            .map(|d| d.iter().map(|t| t % 4).collect())
            .collect();
        let store4 = SuffixArrayStore::build(&small, 4);
        let got4 = self_repetition(&input, &response, Some(&store4)).unwrap();
        check(
            "self-repetition values",
            seed,
            got.increments == naive_self_repetition(&input, &response, &docs)
                && got4.increments == naive_self_repetition(&input, &response, &small),
        );

        let t = {
            let n = r.gen_range(1..=64);
            random_template(&mut r, n)
        };
        let mask = AncestorMask::derive(&t);
        let want = naive_ancestors(&t);
        check(
            "ancestor masks",
            seed,
            (0..t.len()).all(|i| mask.row(i) == want[i].as_slice()),
        );

        let a = {
            let n = r.gen_range(1..=32);
            random_tree(&mut r, n, 3, 7)
        };
        let b = {
            let n = r.gen_range(1..=32);
            random_tree(&mut r, n, 3, 7)
        };
        let u = union(&a, &b).unwrap();
        let want: std::collections::BTreeSet<_> =
            path_set(&a).union(&path_set(&b)).cloned().collect();
        check("union path-sets", seed, path_set(&u.tree) == want);
    }
    let summary = counts
        .iter()
        .map(|(k, n)| format!("{k} {n}"))
        .collect::<Vec<_>>()
        .join(", ");
    let verdict = if bad.is_empty() {
        (true, format!("all match: {summary}"))
    } else {
        (false, format!("mismatches: {}", bad.join("; ")))
    };
    within(120, start, verdict)
}

fn rearrange_invariance(b: &Bench) -> Verdict {
    let mut details = Vec::new();
    for (ci, (name, _)) in b.corpora.iter().enumerate() {
        let prompts = b.prompts(ci);
        let want = autoregressive_generate(&b.model, &prompts, 64, Some(EOS)).unwrap();
        let mut runs = Vec::new();
        for n in [Some(1), Some(5), Some(25), None] {
            let config = EngineConfig {
                rearrange_every: n,
                ..b.config(16)
            };
            let g = speculative_generate(&b.model, &b.drafter, Some(&b.store), &prompts, &config)
                .unwrap();
            runs.push((n, g));
        }
        if runs.iter().any(|(_, g)| g.outputs != want) {
            return (false, format!("{name}: outputs differ across N"));
        }
        let compacted = runs[0]
            .1
            .metrics
            .rearrangements
            .iter()
            .filter(|e| e.width_after < e.width_before)
            .count();
        details.push(format!(
            "{name} {compacted} width-reducing compactions at N=1"
        ));
    }
    (
        true,
        format!(
            "N in {{1,5,25,inf}} identical to autoregression; {}",
            details.join(", ")
        ),
    )
}

/// Eight rows, two of which take long acceptances in the second step.
fn rearrange_example() -> Verdict {
    let mut cache: PaddedKVCache<u32> = PaddedKVCache::new(8, 64);
    let mut next = 0u32;
    let mut fill = |n: usize| -> Vec<u32> {
        let v = (next..next + n as u32).collect();
        next += n as u32;
        v
    };
    let prompt_lens = [5, 5, 5, 5, 5, 5, 5, 5];
    let steps: [[usize; 8]; 3] = [
        [2, 1, 3, 1, 2, 2, 1, 3],
        [1, 2, 9, 1, 2, 1, 8, 2],
        [3, 1, 1, 2, 1, 3, 2, 1],
    ];
    cache
        .append(prompt_lens.iter().map(|&n| fill(n)).collect())
        .unwrap();
    let mut expected: Vec<Vec<u32>> = (0..8)
        .map(|r| cache.valid_states(r).copied().collect())
        .collect();
    for step in steps {
        let per_row: Vec<Vec<u32>> = step.iter().map(|&n| fill(n)).collect();
        for (e, s) in expected.iter_mut().zip(&per_row) {
            e.extend(s);
        }
        cache.append(per_row).unwrap();
    }
    if !cache.has_internal_padding() {
        return (false, "construction left no internal padding".into());
    }
    let before = cache.width();
    let occ_before = cache.occupancy().ratio();
    cache.rearrange();
    let after = cache.width();
    let contiguous = (0..8).all(|r| {
        let v = cache.validity(r);
        let k = cache.valid_count(r);
        v[..k].iter().all(|&b| b) && v[k..].iter().all(|&b| !b)
    });
    let same = (0..8).all(|r| cache.valid_states(r).copied().collect::<Vec<_>>() == expected[r]);
    let longest = expected.iter().map(Vec::len).max().unwrap();
    let pass = contiguous && same && after < before && after == longest;
    (
        pass,
        format!(
            "width {before} -> {after} (longest row {longest}), occupancy {:.2} -> {:.2}, contiguous prefixes {contiguous}, order kept {same}",
            occ_before,
            cache.occupancy().ratio()
        ),
    )
}

fn rag_analog(b: &Bench) -> Verdict {
    let start = Instant::now();
    let prompts = b.prompts(0);
    let reader = b.config(1);
    assert_eq!(reader.branch_len(), 16);
    let model_only = method_config(Method::ModelOnly, &reader).unwrap();
    let (r, m) = (
        b.acceptance(&prompts, &reader),
        b.acceptance(&prompts, &model_only),
    );
    let ratio = r / m;
    within(
        180,
        start,
        (ratio >= 1.5, format!("copy-task batch 1: reader {r:.3} vs model-only {m:.3}, ratio {ratio:.3} (need >= 1.5)")),
    )
}

fn monotonicity(b: &Bench) -> Verdict {
    let mut worst = f64::INFINITY;
    let mut cells = Vec::new();
    let mut pass = true;
    for (ci, (name, _)) in b.corpora.iter().enumerate() {
        let prompts = b.prompts(ci);
        for batch in [1, 8, 16, 32] {
            let reader = b.config(batch);
            let model_only = method_config(Method::ModelOnly, &reader).unwrap();
            let (r, m) = (
                b.acceptance(&prompts, &reader),
                b.acceptance(&prompts, &model_only),
            );
            let rel = r / m;
            worst = worst.min(rel);
            if rel < 0.99 {
                pass = false;
                cells.push(format!("{name}@{batch}: {r:.3} < {m:.3}"));
            }
        }
    }
    if pass {
        (
            true,
            format!("reader >= model-only on 3 corpora x 4 batch sizes, smallest ratio {worst:.3}"),
        )
    } else {
        (false, cells.join("; "))
    }
}

fn sdpa_doubling() -> Verdict {
    let ratio = |t| {
        cost_model(CostInputs {
            b: 4,
            t,
            s: 512,
            h: 64,
        })
        .unwrap()
        .sdpa
        .ratio
    };
    let f = ratio(8192) / ratio(4096);
    (
        (1.9..=2.1).contains(&f),
        format!("sdpa flops/reads grows by {f:.4} from t=4096 to t=8192"),
    )
}

fn qkv_constant() -> Verdict {
    let ts = [1u64, 64, 512, 4096, 8192];
    let ratios: Vec<f64> = ts
        .iter()
        .map(|&t| {
            cost_model(CostInputs {
                b: 4,
                t,
                s: 512,
                h: 64,
            })
            .unwrap()
            .qkv
            .ratio
        })
        .collect();
    let constant = ratios.windows(2).all(|w| w[0] == w[1]);
    let shown = ts
        .iter()
        .zip(&ratios)
        .map(|(t, r)| format!("t={t}: {r:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    (constant, format!("qkv flops/reads {shown}"))
}

fn long_seq() -> Verdict {
    let p = long_seq_probability(0.1, 8).unwrap();
    (
        (p - 0.56953279).abs() <= 1e-8,
        format!("long_seq_probability(0.1, 8) = {p:.10}"),
    )
}

fn golden_section_exact() -> Verdict {
    let mut r = rng(77);
    let mut misses = Vec::new();
    for i in 0..50 {
        let len = r.gen_range(2..120);
        let template = DraftTreeTemplate::chain(len - 1);
        let rates: Vec<f64> = (0..len).map(|d| 0.97f64.powi(d as i32)).collect();
        let peak = r.gen_range(0..len);
        let shape = r.gen_range(0..3);
        let (up, down) = (r.gen_range(0.1..4.0), r.gen_range(0.1..4.0));
        let f = |n: usize| -> f64 {
            let d = n as f64 - peak as f64;
            let slope = if d <= 0.0 { up } else { down };
            match shape {
                0 => -slope * d.abs(),
                1 => -slope * d * d,
                _ => (-slope * d.abs() / 10.0).exp(),
            }
        };
        let want = (0..len)
            .max_by(|&a, &b| f(a).total_cmp(&f(b)).then(b.cmp(&a)))
            .unwrap();
        let got = golden_section_tune(&template, &rates, |t| f(len - t.len())).unwrap();
        if got.n_star != want {
            misses.push(format!("#{i}: {} vs {want}", got.n_star));
        }
    }
    (
        misses.is_empty(),
        if misses.is_empty() {
            "50/50 equal the exhaustive argmax".into()
        } else {
            misses.join(", ")
        },
    )
}

fn tuned_tree(b: &Bench) -> Verdict {
    let prompts: Vec<Vec<TokenId>> = b.prompts(2).into_iter().take(24).collect();
    let initial = fan_template(&[4, 3, 2, 2]);
    let base = EngineConfig {
        max_new_tokens: 48,
        ..b.config(4)
    };
    let with = |t: &DraftTreeTemplate| EngineConfig {
        template: t.clone(),
        ..base.clone()
    };
    let rates = collect_node_acceptance(&b.model, &b.drafter, &prompts, &initial, 48, 4).unwrap();
    let tuned =
        golden_section_tune(&initial, &rates.rates, |t| b.acceptance(&prompts, &with(t))).unwrap();
    let score = |t: &DraftTreeTemplate| b.acceptance(&prompts, &with(t));
    let (s_tuned, s_init, s_one) = (
        score(&tuned.template),
        score(&initial),
        score(&DraftTreeTemplate::root_only()),
    );
    (
        s_tuned >= s_init && s_tuned >= s_one && rates.rates[0] == 1.0,
        format!(
            "tokens/pass tuned ({} nodes) {s_tuned:.3}, initial ({} nodes) {s_init:.3}, 1-node {s_one:.3}",
            tuned.template.len(),
            initial.len()
        ),
    )
}

fn selfrep_anchors(b: &Bench) -> Verdict {
    let mut r = rng(5);
    let distinct: Vec<TokenId> = (0..40).collect();
    let none = self_repetition(&[], &distinct, None).unwrap().metric;
    let input = random_tokens(&mut r, 30, 50);
    let copy = input[4..22].to_vec();
    let full = self_repetition(&input, &copy, None).unwrap().metric;
    let mut rows = Vec::new();
    let mut monotone = true;
    for (name, pairs) in &b.corpora {
        let wo = self_repetition_dataset(pairs, None).unwrap();
        let w = self_repetition_dataset(pairs, Some(&b.store)).unwrap();
        monotone &= w >= wo;
        rows.push(format!("{name} {wo:.2}->{w:.2}"));
    }
    (
        none == 1.0 && full == copy.len() as f64 && monotone,
        format!(
            "no-repeat {none}, verbatim copy {full} (len {}), W/o->W/ DS: {}",
            copy.len(),
            rows.join(", ")
        ),
    )
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let commands: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (
            vec![
                "synth-corpus",
                "--kind",
                "copy-task",
                "--records",
                "16",
                "--seed",
                "3",
                "--out",
                "copy.jsonl",
            ],
            vec!["copy.jsonl"],
        ),
        (
            vec![
                "synth-corpus",
                "--kind",
                "markov",
                "--records",
                "16",
                "--seed",
                "4",
                "--out",
                "markov.jsonl",
            ],
            vec!["markov.jsonl"],
        ),
        (
            vec![
                "synth-corpus",
                "--kind",
                "mixed",
                "--records",
                "16",
                "--seed",
                "5",
                "--out",
                "mixed.jsonl",
            ],
            vec!["mixed.jsonl"],
        ),
        (
            vec![
                "build-model",
                "--corpus",
                "copy.jsonl",
                "--corpus",
                "markov.jsonl",
                "--corpus",
                "mixed.jsonl",
                "--out",
                "m.rdrm",
            ],
            vec!["m.rdrm", "m.rdrm.vocab.json"],
        ),
        (
            vec![
                "build-model",
                "--kind",
                "transformer",
                "--corpus",
                "markov.jsonl",
                "--max-positions",
                "256",
                "--out",
                "t.rdrm",
            ],
            vec!["t.rdrm", "t.rdrm.vocab.json"],
        ),
        (
            vec![
                "build-datastore",
                "--corpus",
                "mixed.jsonl",
                "--vocab",
                "m.rdrm.vocab.json",
                "--out",
                "ds.rdrs",
            ],
            vec!["ds.rdrs"],
        ),
        (
            vec![
                "generate",
                "--model",
                "m.rdrm",
                "--prompts",
                "copy.jsonl",
                "--datastore",
                "ds.rdrs",
                "--batch",
                "4",
                "--out",
                "g.jsonl",
                "--metrics",
                "g.json",
                "--histogram",
                "g.csv",
                "--occupancy",
                "go.csv",
            ],
            vec!["g.jsonl", "g.json", "g.csv", "go.csv"],
        ),
        (
            vec![
                "generate",
                "--model",
                "t.rdrm",
                "--prompts",
                "markov.jsonl",
                "--limit",
                "4",
                "--max-new-tokens",
                "12",
                "--out",
                "tg.jsonl",
                "--metrics",
                "tg.json",
            ],
            vec!["tg.jsonl", "tg.json"],
        ),
        (
            vec![
                "bench",
                "--model",
                "m.rdrm",
                "--corpus",
                "copy.jsonl",
                "--corpus",
                "mixed.jsonl",
                "--datastore",
                "ds.rdrs",
                "--batches",
                "1,8",
                "--out",
                "b.json",
                "--csv",
                "b.csv",
                "--plot-dir",
                "plots",
            ],
            vec![
                "b.json",
                "b.csv",
                "plots/copy_reader_b8_histogram.csv",
                "plots/mixed_stat-only_b1_occupancy.csv",
            ],
        ),
        (
            vec![
                "selfrep",
                "--corpus",
                "copy.jsonl",
                "--corpus",
                "markov.jsonl",
                "--vocab",
                "m.rdrm.vocab.json",
                "--datastore",
                "ds.rdrs",
                "--out",
                "s.json",
            ],
            vec!["s.json"],
        ),
        (
            vec![
                "tune-tree",
                "--model",
                "m.rdrm",
                "--prompts",
                "mixed.jsonl",
                "--limit",
                "6",
                "--template",
                "fan:3,2",
                "--max-new-tokens",
                "16",
                "--out",
                "t.json",
                "--rates-out",
                "r.json",
            ],
            vec!["t.json", "t.json.tune.json", "r.json"],
        ),
    ];
    let exe = env!("CARGO_BIN_EXE_reader");
    let invoke = |args: &[&str]| -> Result<Vec<u8>, String> {
        let out = Command::new(exe)
            .current_dir(d)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "{} failed: {}",
                args[0],
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        Ok(out.stdout)
    };
    let snapshot = |files: &[&str]| -> Vec<Vec<u8>> {
        files
            .iter()
            .map(|f| std::fs::read(d.join(f)).unwrap_or_default())
            .collect()
    };
    let mut differing = Vec::new();
    for (args, files) in &commands {
        let first = match invoke(args) {
            Ok(stdout) => (stdout, snapshot(files)),
            Err(e) => return (false, e),
        };
        let second = match invoke(args) {
            Ok(stdout) => (stdout, snapshot(files)),
            Err(e) => return (false, e),
        };
        if files.iter().any(|f| !Path::new(d).join(f).exists()) {
            return (false, format!("{} did not write {files:?}", args[0]));
        }
        if first != second {
            differing.push(args[0]);
        }
    }
    (
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} command runs repeated byte-identically", commands.len())
        } else {
            format!("differing: {differing:?}")
        },
    )
}

fn main() {
    let mut rows = Vec::new();
    run(&mut rows, "AC1", "losslessness suite", losslessness);
    run(&mut rows, "AC2", "oracle-equivalence suite", oracle_suite);
    let bench = Bench::new();
    println!(
        "      (benchmark corpora: {} records each, vocabulary {}, datastore {} tokens)",
        bench.corpora[0].1.len(),
        bench.tokenizer.vocab_size(),
        bench.store.len()
    );
    run(&mut rows, "AC3a", "outputs identical across N", || {
        rearrange_invariance(&bench)
    });
    run(
        &mut rows,
        "AC3b",
        "8-row cache rearrangement",
        rearrange_example,
    );
    run(&mut rows, "AC4", "copy-task acceptance ratio", || {
        rag_analog(&bench)
    });
    run(&mut rows, "AC5", "composition monotonicity", || {
        monotonicity(&bench)
    });
    run(
        &mut rows,
        "AC6a",
        "sdpa ratio doubles with t",
        sdpa_doubling,
    );
    run(&mut rows, "AC6b", "qkv ratio constant in t", qkv_constant);
    run(
        &mut rows,
        "AC6c",
        "long-sequence batch probability",
        long_seq,
    );
    run(
        &mut rows,
        "AC7a",
        "golden section vs exhaustive",
        golden_section_exact,
    );
    run(
        &mut rows,
        "AC7b",
        "tuned tree beats initial and 1-node",
        || tuned_tree(&bench),
    );
    run(&mut rows, "AC8", "self-repetition anchors", || {
        selfrep_anchors(&bench)
    });
    run(&mut rows, "AC9", "CLI determinism", cli_determinism);

    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    println!(
        "\n{} of {} criteria pass",
        rows.len() - failed.len(),
        rows.len()
    );
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        std::process::exit(1);
    }
}
