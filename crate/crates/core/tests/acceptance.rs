//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and a
//! summary. With `NEEDLESTACK_ACCEPTANCE_STRICT=1` any failure also makes the
//! process exit non-zero; otherwise failures are reported but do not stop
//! the rest of `cargo test`.
//!
//! `NEEDLESTACK_A4_STEPS` overrides the per-stage step budget of the
//! training criteria; `NEEDLESTACK_A4_SEEDS` the number of seeds (default 3).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use needlestack::analysis::{memory_change, memory_distance_matrix, memory_states, MemoryChange, Metric, SegmentedDocument};
use needlestack::autograd::Graph;
use needlestack::cli::run_command;
use needlestack::config::RunConfig;
use needlestack::corpus::BackgroundCorpus;
use needlestack::dataset::{generate, DatasetRecord, GenSpec};
use needlestack::encode::tokens_for_segments;
use needlestack::eval::{constant_baseline, evaluate, evaluate_oracle, EvalOptions};
use needlestack::gradcheck::{grad_check, ELEMENTWISE_OPS, REGISTERED_OPS};
use needlestack::mixer::{mix, MixSpec, Placement, NO_NOISE};
use needlestack::model::{grad_check_model, ModelConfig};
use needlestack::oracle::oracle_answer;
use needlestack::prompt::build_prompt;
use needlestack::retrieval::{recall_at_k, Chunking, TfIdf};
use needlestack::rmt::{Document, Mode, RmtConfig, RmtModel};
use needlestack::tokenizer::Tokenizer;
use needlestack::train::{LogRow, Synthetic, TrainHooks, TrainState, Trainer};
use needlestack::world::{gen_task, TaskId};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn corpus_dir() -> PathBuf {
    root().join("../../data/corpus")
}

fn env_usize(key: &str) -> Option<usize> {
    std::env::var(key).ok().and_then(|v| v.parse().ok())
}

fn a1(corpus: &BackgroundCorpus, tok: &Tokenizer) -> Outcome {
    let start = Instant::now();
    let longest = corpus.sentences().map(|s| tok.count(s)).max().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    let n = 10_000;
    for i in 0..n {
        let task = TaskId::ALL[i % 5];
        let (lo, hi) = task.fact_bounds();
        // Sweep each task's fact range end to end.
        let k = i / 5;
        let facts = lo + k % (hi - lo + 1);
        let s = match gen_task(task, facts, rng.random()) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("{task} n={facts}: {e}"));
                continue;
            }
        };
        let needed: usize = s.facts.iter().map(|f| tok.count(&f.text)).sum::<usize>() + tok.count(&s.question);
        let budget = needed + rng.random_range(0..600);
        let spec = MixSpec {
            target_tokens: budget,
            placement: Placement::Uniform,
            seed: rng.random(),
        };
        let m = match mix(&s, corpus, &spec, tok) {
            Ok(m) => m,
            Err(e) => {
                failures.push(format!("{task} mix: {e}"));
                continue;
            }
        };
        let extracted = m.extract_facts();
        if oracle_answer(task, &extracted, &s.question).ok().as_deref() != Some(s.answer.as_str()) {
            failures.push(format!("{task} sample {i}: oracle disagrees"));
        }
        if extracted != s.fact_texts() {
            failures.push(format!("{task} sample {i}: fact order"));
        }
        let mut from = 0;
        for (f, &off) in s.facts.iter().zip(&m.fact_char_offsets) {
            if off < from {
                failures.push(format!("{task} sample {i}: offsets out of order"));
            }
            from = off + f.text.chars().count();
        }
        if !(m.token_count <= budget && m.token_count + longest > budget) {
            failures.push(format!("{task} sample {i}: {} tokens for budget {budget}", m.token_count));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 120.0;
    let mut d = format!("{n} samples in {secs:.1}s, {} failures", failures.len());
    if let Some(f) = failures.first() {
        d += &format!(" (first: {f})");
    }
    outcome(pass, d)
}

fn shapes_for(op: &str) -> Vec<Vec<usize>> {
    match op {
        "matmul" => vec![vec![3, 4], vec![4, 2]],
        "matmul_nt" => vec![vec![3, 4], vec![5, 4]],
        "add" | "mul" => vec![vec![3, 4], vec![3, 4]],
        "embed" => vec![vec![6, 3], vec![5]],
        "concat" => vec![vec![2, 3], vec![4, 3], vec![1, 3]],
        "concat_cols" => vec![vec![3, 2], vec![3, 1], vec![3, 4]],
        "softmax" => vec![vec![5]],
        "causal_softmax" => vec![vec![4, 4]],
        "cross_entropy" => vec![vec![4, 7]],
        _ => vec![vec![3, 5]],
    }
}

fn a2() -> Outcome {
    let start = Instant::now();
    let mut worst_op = (0.0f64, "");
    let mut bad = Vec::new();
    for &op in REGISTERED_OPS {
        let tol = if ELEMENTWISE_OPS.contains(&op) { 1e-4 } else { 1e-3 };
        match grad_check(op, &shapes_for(op), 7) {
            Ok(e) => {
                if e > worst_op.0 {
                    worst_op = (e, op);
                }
                if e >= tol {
                    bad.push(format!("{op}={e:.2e}"));
                }
            }
            Err(e) => bad.push(format!("{op}: {e}")),
        }
    }
    let config = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        vocab_size: 11,
        max_positions: 6,
        seed: 5,
    };
    let model_err = grad_check_model(config, 9).unwrap_or(f64::INFINITY);
    if model_err >= 1e-3 {
        bad.push(format!("model={model_err:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && secs < 60.0,
        format!(
            "{} ops, worst op {} {:.2e}, model {:.2e}, {secs:.1}s{}",
            REGISTERED_OPS.len(),
            worst_op.1,
            worst_op.0,
            model_err,
            if bad.is_empty() { String::new() } else { format!(", failing: {}", bad.join(" ")) }
        ),
    )
}

fn a3() -> Outcome {
    let rmt = RmtConfig {
        mem_tokens: 3,
        segment_len: 6,
        retrieval: true,
    };
    let mc = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        vocab_size: 17,
        max_positions: rmt.positions_needed(),
        seed: 2,
    };
    let model = RmtModel::<f64>::new(mc, rmt).unwrap();
    let doc = Document {
        segments: vec![vec![1, 2, 3, 4, 5, 6]],
        targets: vec![(5, 7)],
    };
    let a = model.process_document(Mode::Rmt, &doc).unwrap();
    let b = model.process_document(Mode::RmtR, &doc).unwrap();
    let diff = a.segment_logits[0]
        .max_abs_diff(&b.segment_logits[0])
        .max(a.final_memory.matrix.max_abs_diff(&b.final_memory.matrix));
    let equal = diff < 1e-6;

    let (m, d) = (3, 8);
    let segments: Vec<Vec<usize>> = (0..5).map(|s| (0..6).map(|i| 1 + (s * 6 + i) % 16).collect()).collect();
    let mut sizes = Vec::new();
    let mut shapes_ok = true;
    for n in 1..=segments.len() {
        let carry = model.run_prefix(Mode::RmtR, &segments[..n]).unwrap();
        sizes.push((n, carry.archive.footprint()));
        let mut g = Graph::new();
        let bp = model.bind(&mut g);
        let past: Vec<_> = carry.archive.states.iter().map(|s| g.leaf(s.clone())).collect();
        let mem = g.leaf(carry.memory.clone());
        let (_, probs) = model.self_retrieve(&mut g, &bp, &past, mem).unwrap();
        shapes_ok &= g.shape(probs) == [m, n * m];
    }
    let archive_ok = sizes.iter().all(|&(n, f)| f == n * m * d);
    outcome(
        equal && archive_ok && shapes_ok,
        format!(
            "single-segment max diff {diff:.1e}; archive floats {:?} (n*m*d expected); score shapes m x n*m: {shapes_ok}",
            sizes.iter().map(|p| p.1).collect::<Vec<_>>()
        ),
    )
}

struct Quiet<'a> {
    seed: u64,
    start: &'a Instant,
}

impl TrainHooks for Quiet<'_> {
    fn on_step(&mut self, r: &LogRow) -> needlestack::Result<()> {
        if let Some(acc) = r.val_acc {
            eprintln!(
                "  [seed {} {:>6.0}s] step {} stage {} loss {:.3} val {:.3}",
                self.seed,
                self.start.elapsed().as_secs_f64(),
                r.step,
                r.stage,
                r.loss,
                acc
            );
        }
        Ok(())
    }
}

struct Trained {
    seed: u64,
    model: RmtModel<f32>,
    no_noise: f64,
    four: f64,
    eight: f64,
    secs: f64,
}

fn eval_set(corpus: &BackgroundCorpus, tok: &Tokenizer, target_tokens: usize, seed: u64) -> Vec<DatasetRecord> {
    let spec = GenSpec {
        task: TaskId::Qa1,
        n: 200,
        target_tokens,
        seed,
        placement: Placement::Uniform,
        facts: None,
    };
    generate(&spec, corpus, tok).unwrap()
}

fn train_toy(cfg: &RunConfig, corpus: &BackgroundCorpus, tok: &Tokenizer, seed: u64, sets: &EvalSets) -> Trained {
    let start = Instant::now();
    let mut train = cfg.train.clone();
    train.seed = seed;
    let mut mc = cfg.model_config(tok.vocab_size());
    mc.seed = seed;
    let model = RmtModel::<f32>::new(mc, cfg.rmt_config()).unwrap();
    let curriculum = cfg.curriculum().unwrap();
    let source = Synthetic {
        tasks: vec![TaskId::Qa1],
        corpus,
        tok,
        segment_len: cfg.rmt.segment_len,
        facts: cfg.data.facts,
    };
    let trainer = Trainer {
        config: &train,
        mode: Mode::Rmt,
        curriculum: &curriculum,
        source: &source,
        tok,
    };
    let mut state = TrainState::new(model, seed);
    let mut hooks = Quiet { seed, start: &start };
    trainer.run(&mut state, &mut hooks).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let acc = |r: &[DatasetRecord]| evaluate(&state.model, Mode::Rmt, tok, r, EvalOptions::default()).unwrap().overall();
    Trained {
        seed,
        no_noise: acc(&sets.no_noise),
        four: acc(&sets.four),
        eight: acc(&sets.eight),
        secs,
        model: state.model,
    }
}

struct EvalSets {
    no_noise: Vec<DatasetRecord>,
    four: Vec<DatasetRecord>,
    eight: Vec<DatasetRecord>,
}

fn a4(runs: &[Trained], budget: f64) -> Outcome {
    let passing = runs.iter().filter(|t| t.no_noise >= 0.95 && t.four >= 0.80).count();
    let slowest = runs.iter().map(|t| t.secs).fold(0.0, f64::max);
    let per_seed: Vec<String> = runs
        .iter()
        .map(|t| format!("seed {}: no-noise {:.3}, 4-seg {:.3}, {:.0}s", t.seed, t.no_noise, t.four, t.secs))
        .collect();
    outcome(
        passing >= 2.min(runs.len()) && slowest <= budget,
        format!("{passing}/{} seeds pass; {}; time budget {budget:.0}s", runs.len(), per_seed.join("; ")),
    )
}

fn a5(runs: &[Trained], baseline: f64) -> Outcome {
    let best = runs.iter().max_by(|a, b| a.four.total_cmp(&b.four)).unwrap();
    let drop = best.four - best.eight;
    outcome(
        drop < 0.20 && best.eight >= baseline + 0.25,
        format!(
            "seed {}: 4-seg {:.3}, 8-seg {:.3}, drop {:.1} points, constant baseline {:.3}",
            best.seed,
            best.four,
            best.eight,
            100.0 * drop,
            baseline
        ),
    )
}

/// Timed on a trained model: an untrained one never emits end-of-sequence,
/// so every sample pays the full decode budget regardless of length.
fn a6(model: &RmtModel<f32>, corpus: &BackgroundCorpus, tok: &Tokenizer, seg: usize) -> Outcome {
    let time_at = |segments: usize| -> f64 {
        let records = eval_set(corpus, tok, tokens_for_segments(segments, seg), 77);
        let records = &records[..64];
        // Warm once, then take the faster of two timed passes.
        let _ = evaluate(model, Mode::Rmt, tok, &records[..4], EvalOptions::default());
        (0..2)
            .map(|_| {
                let t = Instant::now();
                evaluate(model, Mode::Rmt, tok, records, EvalOptions::default()).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut parts = Vec::new();
    let mut pass = true;
    for (short, long) in [(2, 8), (4, 16)] {
        let (a, b) = (time_at(short), time_at(long));
        let ratio = b / a;
        pass &= (2.0..=6.0).contains(&ratio);
        parts.push(format!("{short}->{long} segments: {a:.2}s -> {b:.2}s, ratio {ratio:.2}"));
    }
    outcome(pass, parts.join("; "))
}

fn a7(model: &RmtModel<f32>, tok: &Tokenizer, records: &[DatasetRecord], seg: usize) -> Outcome {
    let mut total = MemoryChange::default();
    for r in records {
        let doc = SegmentedDocument::new(tok, r, seg).unwrap();
        let states = memory_states(model, Mode::Rmt, &doc).unwrap();
        let d = memory_distance_matrix(&states, Metric::Euclidean).unwrap();
        total.extend(memory_change(&d, &doc));
    }
    let (f, b) = (total.mean_fact(), total.mean_background());
    outcome(
        f > b,
        format!(
            "fact boundaries {f:.4} (n={}), background boundaries {b:.4} (n={})",
            total.fact.len(),
            total.background.len()
        ),
    )
}

fn a8(corpus: &BackgroundCorpus, tok: &Tokenizer) -> Outcome {
    const CONTEXT: &str = "The rain fell on the town. Mary moved to the hallway. A dog barked twice.";
    const QUESTION: &str = "Where is Mary?";
    let golden = |name: String| std::fs::read_to_string(root().join("tests/golden").join(name)).unwrap();
    let mut prompts_ok = true;
    for t in TaskId::ALL {
        prompts_ok &= build_prompt(t, CONTEXT, QUESTION) == golden(format!("prompt_{t}.txt"));
        prompts_ok &= build_prompt(t, "", QUESTION) == golden(format!("prompt_{t}_empty.txt"));
    }

    let mut records = Vec::new();
    for t in TaskId::ALL {
        for tokens in [NO_NOISE, 256, 1024] {
            let spec = GenSpec {
                task: t,
                n: 30,
                target_tokens: tokens,
                seed: 5,
                placement: Placement::Uniform,
                facts: None,
            };
            records.extend(generate(&spec, corpus, tok).unwrap());
        }
    }
    let oracle = evaluate_oracle(&records).unwrap();
    let oracle_ok = oracle.cells.iter().all(|c| c.accuracy == 1.0);

    let ks: Vec<usize> = (1..=10).collect();
    let chunkings = [Chunking::Sentence, Chunking::Tokens(64), Chunking::TOKENS512];
    let report = recall_at_k(&records, &chunkings, &ks, &TfIdf);
    let mut series: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in &report.rows {
        series.entry((r.chunking.clone(), r.length)).or_default().push(r.recall);
    }
    let monotone = series.values().all(|v| v.windows(2).all(|w| w[0] <= w[1]));
    outcome(
        prompts_ok && oracle_ok && monotone,
        format!(
            "golden prompts {prompts_ok}; oracle 1.0 on {} cells: {oracle_ok}; recall monotone over {} series: {monotone}",
            oracle.cells.len(),
            series.len()
        ),
    )
}

fn a9() -> Outcome {
    let t = tempfile::tempdir().unwrap();
    let corpus = format!("data.corpus={}", corpus_dir().display());
    let run = |dir: &Path, args: &[&str]| -> i32 {
        let mut argv: Vec<String> = vec!["needlestack".into(), "--threads".into(), "1".into(), "--run-dir".into()];
        argv.push(dir.display().to_string());
        argv.extend(args.iter().map(|s| s.to_string()));
        run_command(argv)
    };
    let same = |a: &Path, b: &Path, files: &[&str]| files.iter().all(|f| std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok());
    let gen = ["gen", "--task", "qa1,qa2,qa3,qa4,qa5", "--n", "50", "--tokens", "0,512", "--seed", "3", "--set", &corpus];
    let (g1, g2) = (t.path().join("g1"), t.path().join("g2"));
    let gen_ok = run(&g1, &gen) == 0 && run(&g2, &gen) == 0 && same(&g1, &g2, &["dataset.jsonl", "tokenizer.json"]);

    let train = [
        "train",
        "--set",
        &corpus,
        "--set",
        "curriculum.stages=[1]",
        "--set",
        "train.total_steps=100",
        "--set",
        "train.eval_every=50",
        "--set",
        "train.val_samples=20",
    ];
    let (t1, t2) = (t.path().join("t1"), t.path().join("t2"));
    let train_ok = run(&t1, &train) == 0
        && run(&t2, &train) == 0
        && same(&t1, &t2, &["metrics.csv", "checkpoints/last.ckpt", "tokenizer.json", "config.toml"]);
    outcome(gen_ok && train_ok, format!("gen identical: {gen_ok}; 100-step train identical: {train_ok}"))
}

fn main() {
    // Only the named criteria run when arguments are given.
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let want = |name: &str| only.is_empty() || only.iter().any(|o| o == name);

    let cfg = RunConfig {
        data: needlestack::config::DataSection {
            corpus: corpus_dir(),
            ..Default::default()
        },
        ..Default::default()
    };
    let corpus = BackgroundCorpus::load_dir(&corpus_dir()).unwrap();
    let tok = cfg.tokenizer(&corpus).unwrap();
    let seg = cfg.rmt.segment_len;

    let mut results: Vec<(&str, &str, Outcome)> = Vec::new();
    let mut record = |id: &'static str, title: &'static str, o: Outcome| {
        println!("{id} {} {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, title, o));
    };

    if want("A1") {
        record("A1", "generator soundness", a1(&corpus, &tok));
    }
    if want("A2") {
        record("A2", "gradient correctness", a2());
    }
    if want("A3") {
        record("A3", "architectural equivalences", a3());
    }
    if want("A4") || want("A5") || want("A6") || want("A7") {
        let mut cfg = cfg.clone();
        if let Some(steps) = env_usize("NEEDLESTACK_A4_STEPS") {
            cfg.train.total_steps = steps;
        }
        let seeds = env_usize("NEEDLESTACK_A4_SEEDS").unwrap_or(3) as u64;
        let sets = EvalSets {
            no_noise: eval_set(&corpus, &tok, NO_NOISE, 900),
            four: eval_set(&corpus, &tok, tokens_for_segments(4, seg), 901),
            eight: eval_set(&corpus, &tok, tokens_for_segments(8, seg), 902),
        };
        let runs: Vec<Trained> = (0..seeds).map(|s| train_toy(&cfg, &corpus, &tok, s, &sets)).collect();
        // 30 minutes on eight cores, scaled to the cores available here.
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get()) as f64;
        let budget = Duration::from_secs(30 * 60).as_secs_f64() * (8.0 / cores).max(1.0);
        let best = runs.iter().max_by(|a, b| a.four.total_cmp(&b.four)).unwrap();
        if want("A4") {
            record("A4", "desk-scale learning", a4(&runs, budget));
        }
        if want("A5") {
            let (_, base) = constant_baseline(&sets.eight);
            record("A5", "length extrapolation", a5(&runs, base.overall()));
        }
        if want("A6") {
            record("A6", "linear scaling", a6(&best.model, &corpus, &tok, seg));
        }
        if want("A7") {
            record("A7", "memory-analysis direction", a7(&best.model, &tok, &sets.four[..50], seg));
        }
    }
    if want("A8") {
        record("A8", "prompt and report fidelity", a8(&corpus, &tok));
    }
    if want("A9") {
        record("A9", "reproducibility", a9());
    }

    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("{} criteria, {} passed, {failed} failed", results.len(), results.len() - failed);
    if failed > 0 {
        let names: Vec<&str> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
        println!("failing: {}", names.join(", "));
        if std::env::var("NEEDLESTACK_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
