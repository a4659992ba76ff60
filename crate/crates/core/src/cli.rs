//! The `needlestack` command line: gen, train, eval, analyze, prompt, score.
//!
//! Every command writes into a fresh run directory holding the resolved
//! config, a `run.json` with seed and version, and all outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    export_attention_maps, matrix_csv, memory_change, memory_distance_matrix, memory_states, write_mass_on_facts,
    MemoryChange, Metric, SegmentedDocument,
};
use crate::checkpoint::Checkpoint;
use crate::config::{load_config, RunConfig};
use crate::corpus::BackgroundCorpus;
use crate::dataset::{generate, read_jsonl, read_lines, write_jsonl, DatasetRecord, GenSpec};
use crate::encode::tokens_for_segments;
use crate::error::Error;
use crate::eval::{
    constant_baseline, evaluate_oracle, predict_all, score_answer, score_transcripts, EvalMode, EvalOptions, EvalReport,
};
use crate::mixer::Placement;
use crate::prompt::build_prompt;
use crate::retrieval::{recall_at_k, Chunking, TfIdf};
use crate::rmt::{Mode, RmtModel};
use crate::tokenizer::Tokenizer;
use crate::train::{LogRow, Synthetic, TrainHooks, TrainState, Trainer, LOG_HEADER};
use crate::world::TaskId;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

pub const THREADS_ENV: &str = "NEEDLESTACK_THREADS";

pub fn version_string() -> String {
    format!(
        "{} ({})",
        env!("CARGO_PKG_VERSION"),
        option_env!("NEEDLESTACK_GIT_DESCRIBE").unwrap_or("unknown")
    )
}

#[derive(Debug, Parser)]
#[command(name = "needlestack", version = env!("CARGO_PKG_VERSION"), about = "Long-context memory laboratory")]
pub struct Cli {
    /// Worker threads (default: NEEDLESTACK_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Parent of the content-addressed run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub runs_dir: PathBuf,
    /// Write into exactly this directory instead (must be empty or absent).
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.lr=3e-5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate mixed-sample datasets as JSONL.
    Gen(GenArgs),
    /// Train a recurrent memory model with the curriculum.
    Train(TrainArgs),
    /// Accuracy grid of a checkpoint or a baseline.
    Eval(EvalArgs),
    /// Memory-state distances and attention maps.
    Analyze(AnalyzeArgs),
    /// Write LLM prompts for a dataset.
    Prompt(PromptArgs),
    /// Score external LLM transcripts.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Tasks, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub task: Vec<TaskId>,
    /// Samples per task and length.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Token budgets, comma separated; 0 is no noise. Defaults to the
    /// eval.segments lengths.
    #[arg(long, value_delimiter = ',')]
    pub tokens: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// uniform, q1, q2, q3 or q4.
    #[arg(long, default_value = "uniform", value_parser = parse_placement)]
    pub placement: Placement,
    /// Inclusive fact-count range, e.g. `2,4`.
    #[arg(long, value_parser = parse_range)]
    pub facts: Option<(usize, usize)>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// rmt, rmt-r, oracle, constant or retrieval. Defaults to the
    /// checkpoint's mode.
    #[arg(long, value_parser = parse_eval_mode)]
    pub mode: Option<EvalMode>,
    /// Datasets to score; generated from the eval section when absent.
    #[arg(long)]
    pub data: Vec<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Record whose distance matrix and attention maps are exported.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Segments to export attention for; defaults to the fact-bearing
    /// segments and the question segment.
    #[arg(long, value_delimiter = ',')]
    pub segments: Vec<usize>,
    #[arg(long, default_value = "euclidean", value_parser = parse_metric)]
    pub metric: Metric,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// JSONL of `{"id", "response"}` lines.
    #[arg(long)]
    pub transcripts: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn parse_placement(s: &str) -> Result<Placement, String> {
    match s {
        "uniform" => Ok(Placement::Uniform),
        "q1" | "q2" | "q3" | "q4" => Ok(Placement::Quartile(s[1..].parse().expect("digit"))),
        _ => Err(format!("unknown placement `{s}` (valid: uniform, q1, q2, q3, q4)")),
    }
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn parse_eval_mode(s: &str) -> Result<EvalMode, String> {
    match s {
        "rmt" => Ok(EvalMode::Rmt),
        "rmt-r" => Ok(EvalMode::RmtR),
        "oracle" => Ok(EvalMode::Oracle),
        "constant" => Ok(EvalMode::Constant),
        "retrieval" => Ok(EvalMode::Retrieval),
        _ => Err(format!("unknown mode `{s}` (valid: rmt, rmt-r, oracle, constant, retrieval)")),
    }
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s {
        "euclidean" => Ok(Metric::Euclidean),
        "cosine" => Ok(Metric::Cosine),
        _ => Err(format!("unknown metric `{s}` (valid: euclidean, cosine)")),
    }
}

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(&cli, &args) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            EXIT_CONFIG
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn threads(cli: &Cli) -> CliResult<Option<usize>> {
    if let Some(n) = cli.threads {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: &Cli, argv: &[String]) -> CliResult<PathBuf> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads(cli)? {
        if n == 0 {
            return Err(CliError::Usage("thread count must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(Error::Invalid(e.to_string())))?;
    pool.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(cli, argv, a),
        Command::Train(a) => cmd_train(cli, argv, a),
        Command::Eval(a) => cmd_eval(cli, argv, a),
        Command::Analyze(a) => cmd_analyze(cli, argv, a),
        Command::Prompt(a) => cmd_prompt(cli, argv, a),
        Command::Score(a) => cmd_score(cli, argv, a),
    })
}

fn resolve(args: &ConfigArgs) -> CliResult<RunConfig> {
    Ok(load_config(args.config.as_deref(), &args.overrides)?)
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    argv: &'a [String],
    seed: u64,
    version: String,
    config_sha256: String,
}

/// Creates the run directory and writes the provenance files.
fn open_run(cli: &Cli, argv: &[String], command: &str, cfg: &RunConfig, seed: u64) -> CliResult<PathBuf> {
    let text = cfg.to_toml();
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(text.as_bytes());
    for a in argv.iter().skip(1) {
        h.update(a.as_bytes());
        h.update([0]);
    }
    let hash: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let dir = match &cli.run_dir {
        Some(d) => {
            if d.exists() && fs::read_dir(d)?.next().is_some() {
                return Err(CliError::Usage(format!("run directory {} is not empty", d.display())));
            }
            fs::create_dir_all(d)?;
            d.clone()
        }
        None => {
            fs::create_dir_all(&cli.runs_dir)?;
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
            let base = format!("{command}-{}-{stamp}", &hash[..12]);
            let mut attempt = 0;
            loop {
                let name = if attempt == 0 { base.clone() } else { format!("{base}-{attempt}") };
                let d = cli.runs_dir.join(name);
                match fs::create_dir(&d) {
                    Ok(()) => break d,
                    Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => attempt += 1,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    };
    fs::write(dir.join("config.toml"), &text)?;
    let info = RunInfo {
        command,
        argv,
        seed,
        version: version_string(),
        config_sha256: hash,
    };
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&info).map_err(Error::from)? + "\n")?;
    Ok(dir)
}

fn load_corpus(cfg: &RunConfig) -> CliResult<BackgroundCorpus> {
    BackgroundCorpus::load_dir(&cfg.data.corpus).map_err(|e| {
        CliError::Runtime(Error::Invalid(format!(
            "cannot load corpus from {}: {e}",
            cfg.data.corpus.display()
        )))
    })
}

fn budgets(cfg: &RunConfig, segment_len: usize, explicit: &[usize]) -> Vec<usize> {
    if !explicit.is_empty() {
        return explicit.to_vec();
    }
    cfg.eval
        .segments
        .iter()
        .map(|&s| if s == 0 { 0 } else { tokens_for_segments(s, segment_len) })
        .collect()
}

/// Records for every task and budget, in that order. Each cell gets its
/// own seed so adding a cell leaves the others unchanged.
fn generate_grid(
    tasks: &[TaskId],
    tokens: &[usize],
    n: usize,
    seed: u64,
    placement: Placement,
    facts: Option<(usize, usize)>,
    corpus: &BackgroundCorpus,
    tok: &Tokenizer,
) -> CliResult<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for &task in tasks {
        for &t in tokens {
            let cell_seed = crate::dataset::derive_seed(crate::dataset::derive_seed(seed, task as u64), t as u64);
            let spec = GenSpec {
                task,
                n,
                target_tokens: t,
                seed: cell_seed,
                placement,
                facts,
            };
            out.extend(generate(&spec, corpus, tok)?);
        }
    }
    Ok(out)
}

fn cmd_gen(cli: &Cli, argv: &[String], a: &GenArgs) -> CliResult<PathBuf> {
    let cfg = resolve(&a.config)?;
    let corpus = load_corpus(&cfg)?;
    let tok = cfg.tokenizer(&corpus)?;
    let tokens = budgets(&cfg, cfg.rmt.segment_len, &a.tokens);
    let records = generate_grid(&a.task, &tokens, a.n, a.seed, a.placement, a.facts, &corpus, &tok)?;
    let dir = open_run(cli, argv, "gen", &cfg, a.seed)?;
    tok.save(&dir.join("tokenizer.json"))?;
    write_jsonl(&records, &dir.join("dataset.jsonl"))?;
    Ok(dir)
}

struct RunHooks<'a> {
    log: BufWriter<File>,
    dir: &'a Path,
    mode: Mode,
    tok: &'a Tokenizer,
    stages: &'a [usize],
}

impl RunHooks<'_> {
    fn save(&self, state: &TrainState, name: &str) -> crate::Result<()> {
        Checkpoint::from_state(state, self.mode, self.tok, self.stages).save(&self.dir.join("checkpoints").join(name))
    }
}

impl TrainHooks for RunHooks<'_> {
    fn on_step(&mut self, row: &LogRow) -> crate::Result<()> {
        writeln!(self.log, "{}", row.csv())?;
        if row.val_acc.is_some() {
            self.log.flush()?;
        }
        Ok(())
    }

    fn on_best(&mut self, state: &TrainState, _acc: f64) -> crate::Result<()> {
        self.save(state, &format!("stage{}-n{}-best.ckpt", state.stage, self.stages[state.stage]))
    }

    fn on_stage_end(&mut self, state: &TrainState) -> crate::Result<()> {
        self.save(state, "last.ckpt")
    }
}

fn cmd_train(cli: &Cli, argv: &[String], a: &TrainArgs) -> CliResult<PathBuf> {
    let cfg = resolve(&a.config)?;
    let corpus = load_corpus(&cfg)?;
    let curriculum = cfg.curriculum()?;
    let (state, tok) = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let tok = ck.tokenizer()?;
            if ck.model != cfg.model_config(tok.vocab_size()) || ck.rmt != cfg.rmt_config() || ck.mode != cfg.rmt.mode {
                return Err(CliError::Config(format!(
                    "{} was trained with a different model, rmt or mode section",
                    p.display()
                )));
            }
            if ck.curriculum != curriculum.stages {
                return Err(CliError::Config(format!(
                    "{} was trained with curriculum {:?}, config gives {:?}",
                    p.display(),
                    ck.curriculum,
                    curriculum.stages
                )));
            }
            (ck.to_state()?, tok)
        }
        None => {
            let tok = cfg.tokenizer(&corpus)?;
            let model = RmtModel::<f32>::new(cfg.model_config(tok.vocab_size()), cfg.rmt_config())?;
            (TrainState::new(model, cfg.train.seed), tok)
        }
    };
    let mut state = state;
    let dir = open_run(cli, argv, "train", &cfg, cfg.train.seed)?;
    fs::create_dir_all(dir.join("checkpoints"))?;
    tok.save(&dir.join("tokenizer.json"))?;
    let source = Synthetic {
        tasks: cfg.data.tasks.clone(),
        corpus: &corpus,
        tok: &tok,
        segment_len: cfg.rmt.segment_len,
        facts: cfg.data.facts,
    };
    let trainer = Trainer {
        config: &cfg.train,
        mode: cfg.rmt.mode,
        curriculum: &curriculum,
        source: &source,
        tok: &tok,
    };
    let mut log = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    writeln!(log, "{LOG_HEADER}")?;
    let mut hooks = RunHooks {
        log,
        dir: &dir,
        mode: cfg.rmt.mode,
        tok: &tok,
        stages: &curriculum.stages,
    };
    let result = trainer.run(&mut state, &mut hooks);
    hooks.log.flush()?;
    // On divergence `state` still holds the last good step.
    hooks.save(&state, "last.ckpt")?;
    result?;
    Ok(dir)
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    report: &'a EvalReport,
    overall: f64,
    seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    constant_answers: Option<std::collections::BTreeMap<TaskId, String>>,
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    prediction: String,
    answer: &'a str,
    correct: bool,
}

fn read_data(paths: &[PathBuf]) -> CliResult<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_jsonl(p)?);
    }
    Ok(out)
}

fn cmd_eval(cli: &Cli, argv: &[String], a: &EvalArgs) -> CliResult<PathBuf> {
    let cfg = resolve(&a.config)?;
    let ckpt = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let mode = match (a.mode, &ckpt) {
        (Some(m), _) => m,
        (None, Some(c)) => c.mode.into(),
        (None, None) => return Err(CliError::Usage("eval needs --checkpoint or a baseline --mode".into())),
    };
    let model_mode = match mode {
        EvalMode::Rmt => Some(Mode::Rmt),
        EvalMode::RmtR => Some(Mode::RmtR),
        _ => None,
    };
    if model_mode.is_some() && ckpt.is_none() {
        return Err(CliError::Usage(format!("--mode {} needs --checkpoint", mode.as_str())));
    }
    let records = if a.data.is_empty() {
        let corpus = load_corpus(&cfg)?;
        let (tok, segment_len) = match &ckpt {
            Some(c) => (c.tokenizer()?, c.rmt.segment_len),
            None => (cfg.tokenizer(&corpus)?, cfg.rmt.segment_len),
        };
        let tokens = budgets(&cfg, segment_len, &[]);
        generate_grid(
            &cfg.data.tasks,
            &tokens,
            cfg.eval.n_per_cell,
            cfg.eval.seed,
            Placement::Uniform,
            None,
            &corpus,
            &tok,
        )?
    } else {
        read_data(&a.data)?
    };
    if records.is_empty() {
        return Err(CliError::Usage("no records to evaluate".into()));
    }
    let dir = open_run(cli, argv, "eval", &cfg, cfg.eval.seed)?;
    if a.data.is_empty() {
        write_jsonl(&records, &dir.join("dataset.jsonl"))?;
    }
    let start = Instant::now();
    if mode == EvalMode::Retrieval {
        let report = recall_at_k(&records, &[Chunking::Sentence, Chunking::TOKENS512], &cfg.eval.k, &TfIdf);
        fs::write(dir.join("recall.csv"), report.to_csv())?;
        fs::write(dir.join("recall.json"), serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n")?;
        return Ok(dir);
    }
    let mut constant_answers = None;
    let report = match (mode, model_mode, &ckpt) {
        (_, Some(m), Some(c)) => {
            let model = c.build_model()?;
            let tok = c.tokenizer()?;
            let opts = EvalOptions {
                max_segments: cfg.eval.max_segments,
            };
            let preds = predict_all(&model, m, &tok, &records, opts)?;
            let correct: Vec<bool> = records
                .iter()
                .zip(&preds)
                .map(|(r, p)| score_answer(p, &r.answer, r.task))
                .collect();
            let report = EvalReport::from_outcomes(mode, &records, &correct);
            let mut w = BufWriter::new(File::create(dir.join("predictions.jsonl"))?);
            for ((r, p), correct) in records.iter().zip(preds).zip(correct) {
                let line = Prediction {
                    id: &r.id,
                    prediction: p,
                    answer: &r.answer,
                    correct,
                };
                serde_json::to_writer(&mut w, &line).map_err(Error::from)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            report
        }
        (EvalMode::Oracle, ..) => evaluate_oracle(&records)?,
        (EvalMode::Constant, ..) => {
            let (answers, report) = constant_baseline(&records);
            constant_answers = Some(answers);
            report
        }
        _ => return Err(CliError::Usage(format!("mode {} cannot be evaluated here", mode.as_str()))),
    };
    let summary = EvalSummary {
        report: &report,
        overall: report.overall(),
        seconds: start.elapsed().as_secs_f64(),
        constant_answers,
    };
    fs::write(dir.join("report.csv"), report.to_csv())?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&summary).map_err(Error::from)? + "\n")?;
    Ok(dir)
}

#[derive(Serialize)]
struct AnalysisSummary {
    id: String,
    segments: usize,
    fact_segment_indices: Vec<usize>,
    metric: Metric,
    exported_segments: Vec<usize>,
    /// Pooled over every record of the dataset.
    memory_change: MemoryChangeSummary,
    write_mass: Vec<WriteMass>,
}

#[derive(Serialize)]
struct MemoryChangeSummary {
    mean_fact: Option<f64>,
    mean_background: Option<f64>,
    n_fact: usize,
    n_background: usize,
}

#[derive(Serialize)]
struct WriteMass {
    segment: usize,
    layer: usize,
    head: usize,
    mass: f64,
    uniform: f64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn cmd_analyze(cli: &Cli, argv: &[String], a: &AnalyzeArgs) -> CliResult<PathBuf> {
    let cfg = resolve(&a.config)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.build_model()?;
    let tok = ck.tokenizer()?;
    let records = read_jsonl(&a.data)?;
    let record = records.get(a.index).ok_or(CliError::Usage(format!(
        "--index {} is out of range for {} records",
        a.index,
        records.len()
    )))?;
    let segment_len = ck.rmt.segment_len;
    let docs: Vec<SegmentedDocument> = records
        .iter()
        .map(|r| SegmentedDocument::new(&tok, r, segment_len))
        .collect::<crate::Result<_>>()?;
    let mut pooled = MemoryChange::default();
    for d in &docs {
        let states = memory_states(&model, ck.mode, d)?;
        pooled.extend(memory_change(&memory_distance_matrix(&states, a.metric)?, d));
    }
    let doc = &docs[a.index];
    let states = memory_states(&model, ck.mode, doc)?;
    let distances = memory_distance_matrix(&states, a.metric)?;
    let mut segments = a.segments.clone();
    if segments.is_empty() {
        segments = doc.fact_segments();
        let last = doc.segments.len() - 1;
        if !segments.contains(&last) {
            segments.push(last);
        }
    }
    let maps = export_attention_maps(&model, ck.mode, doc, &segments).map_err(|e| match e {
        Error::IndexOutOfRange { .. } => CliError::Usage(format!("--segments: {e}")),
        other => other.into(),
    })?;
    let dir = open_run(cli, argv, "analyze", &cfg, 0)?;
    fs::write(dir.join("distances.csv"), matrix_csv(&distances))?;
    let att = dir.join("attention");
    fs::create_dir_all(&att)?;
    let mut masses = Vec::new();
    for (map, layout) in &maps {
        fs::write(
            att.join(format!("seg{}_layer{}_head{}.csv", map.segment, map.layer, map.head)),
            map.to_csv(),
        )?;
        if doc.has_fact(map.segment) {
            let (mass, uniform) = write_mass_on_facts(map, layout, doc);
            masses.push(WriteMass {
                segment: map.segment,
                layer: map.layer,
                head: map.head,
                mass,
                uniform,
            });
        }
    }
    let summary = AnalysisSummary {
        id: record.id.clone(),
        segments: doc.segments.len(),
        fact_segment_indices: doc.fact_segments(),
        metric: a.metric,
        exported_segments: segments,
        memory_change: MemoryChangeSummary {
            mean_fact: finite(pooled.mean_fact()),
            mean_background: finite(pooled.mean_background()),
            n_fact: pooled.fact.len(),
            n_background: pooled.background.len(),
        },
        write_mass: masses,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).map_err(Error::from)? + "\n")?;
    Ok(dir)
}

fn cmd_prompt(cli: &Cli, argv: &[String], a: &PromptArgs) -> CliResult<PathBuf> {
    let cfg = resolve(&a.config)?;
    let records = read_data(&a.data)?;
    let dir = open_run(cli, argv, "prompt", &cfg, 0)?;
    let out = dir.join("prompts");
    fs::create_dir_all(&out)?;
    for r in &records {
        if r.id.is_empty() || r.id.contains(['/', '\\']) || r.id.starts_with('.') {
            return Err(CliError::Runtime(Error::Invalid(format!("record id `{}` is not a file name", r.id))));
        }
        fs::write(out.join(format!("{}.txt", r.id)), build_prompt(r.task, &r.context, &r.question))?;
    }
    Ok(dir)
}

fn cmd_score(cli: &Cli, argv: &[String], a: &ScoreArgs) -> CliResult<PathBuf> {
    let cfg = resolve(&a.config)?;
    let records = read_data(&a.data)?;
    let transcripts = read_lines(&a.transcripts)?;
    let report = score_transcripts(&records, &transcripts)?;
    let dir = open_run(cli, argv, "score", &cfg, 0)?;
    let summary = EvalSummary {
        report: &report,
        overall: report.overall(),
        seconds: 0.0,
        constant_answers: None,
    };
    fs::write(dir.join("report.csv"), report.to_csv())?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&summary).map_err(Error::from)? + "\n")?;
    Ok(dir)
}
