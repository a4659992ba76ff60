//! JSONL datasets of mixed samples.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::BackgroundCorpus;
use crate::error::{Error, Result};
use crate::mixer::{mix, MixSpec, MixedSample, Placement};
use crate::tokenizer::Tokenizer;
use crate::world::{gen_task, FactEvent, TaskId, TaskSample};

/// One JSONL line. Field names and order are part of the file format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub task: TaskId,
    pub target_tokens: usize,
    pub context: String,
    pub question: String,
    pub answer: String,
    pub facts: Vec<String>,
    pub fact_offsets: Vec<usize>,
    pub supporting: Vec<usize>,
    pub seed: u64,
}

impl DatasetRecord {
    pub fn from_mixed(id: String, m: &MixedSample) -> Self {
        Self {
            id,
            task: m.task.task,
            target_tokens: m.target_tokens,
            context: m.text.clone(),
            question: m.task.question.clone(),
            answer: m.task.answer.clone(),
            facts: m.task.facts.iter().map(|f| f.text.clone()).collect(),
            fact_offsets: m.fact_char_offsets.clone(),
            supporting: m.task.supporting.clone(),
            seed: m.seed,
        }
    }

    /// Rebuild the task sample; every fact must parse.
    pub fn task_sample(&self) -> Result<TaskSample> {
        Ok(TaskSample {
            task: self.task,
            facts: self.facts.iter().map(|f| FactEvent::parse(f)).collect::<Result<_>>()?,
            question: self.question.clone(),
            answer: self.answer.clone(),
            supporting: self.supporting.clone(),
            seed: self.seed,
        })
    }

    /// Context followed by the question, as presented to a model.
    pub fn input_text(&self) -> String {
        if self.context.is_empty() {
            self.question.clone()
        } else {
            format!("{} {}", self.context, self.question)
        }
    }
}

pub fn write_jsonl(records: &[DatasetRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Blank lines are skipped; any other malformed line is an error naming
/// its 1-based line number.
pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    read_lines(path)
}

/// Generic line-delimited JSON reader with line-numbered errors.
pub fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Settings for a generated dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    pub task: TaskId,
    pub n: usize,
    pub target_tokens: usize,
    pub seed: u64,
    pub placement: Placement,
    /// Inclusive fact-count range; defaults to the task's bounds.
    pub facts: Option<(usize, usize)>,
}

/// Independent per-sample seed so samples can be generated in any order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// One mixed sample. The fact count is drawn uniformly from the range and
/// redrawn from a shrinking range while facts and question overflow the
/// budget.
pub fn generate_one(spec: &GenSpec, index: usize, corpus: &BackgroundCorpus, tok: &Tokenizer) -> Result<MixedSample> {
    let seed = derive_seed(spec.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (tmin, tmax) = spec.task.fact_bounds();
    let (lo, mut hi) = spec.facts.unwrap_or((tmin, tmax));
    if lo > hi || lo < tmin || hi > tmax {
        return Err(Error::FactBounds {
            task: spec.task.to_string(),
            n: if lo < tmin { lo } else { hi },
            min: tmin,
            max: tmax,
        });
    }
    loop {
        let n = rng.random_range(lo..=hi);
        let sample = gen_task(spec.task, n, rng.next_u64())?;
        let mix_spec = MixSpec {
            target_tokens: spec.target_tokens,
            placement: spec.placement,
            seed: rng.next_u64(),
        };
        match mix(&sample, corpus, &mix_spec, tok) {
            Err(Error::Budget { .. }) if n > lo => hi = n - 1,
            other => return other,
        }
    }
}

/// `spec.n` records, generated in parallel, in index order.
pub fn generate(spec: &GenSpec, corpus: &BackgroundCorpus, tok: &Tokenizer) -> Result<Vec<DatasetRecord>> {
    (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let m = generate_one(spec, i, corpus, tok)?;
            Ok(DatasetRecord::from_mixed(format!("{}-{}-{i:06}", spec.task, spec.target_tokens), &m))
        })
        .collect()
}
