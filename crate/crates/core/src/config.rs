//! Run configuration: a TOML file plus `section.key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::BackgroundCorpus;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rmt::{Mode, RmtConfig};
use crate::tokenizer::{build_vocab, Tokenizer};
use crate::train::{make_curriculum, Curriculum, TrainConfig};
use crate::world::{template_sentences, TaskId};

/// Backbone shape. The vocabulary size comes from the tokenizer and the
/// position table from the segment layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            d_model: m.d_model,
            d_ff: m.d_ff,
            seed: m.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmtSection {
    pub mode: Mode,
    pub mem_tokens: usize,
    pub segment_len: usize,
}

impl Default for RmtSection {
    fn default() -> Self {
        let r = RmtConfig::default();
        Self {
            mode: Mode::Rmt,
            mem_tokens: r.mem_tokens,
            segment_len: r.segment_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSection {
    /// Canonical schedule cut at this many segments.
    pub max_segments: usize,
    /// Explicit stages; replaces the canonical schedule when non-empty.
    pub stages: Vec<usize>,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        Self {
            max_segments: 4,
            stages: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    #[default]
    Word,
    Bpe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub tasks: Vec<TaskId>,
    pub corpus: PathBuf,
    pub tokenizer: TokenizerKind,
    /// Word-level vocabulary size including specials and task words.
    pub vocab_size: usize,
    pub bpe_vocab: Option<PathBuf>,
    pub bpe_merges: Option<PathBuf>,
    /// Inclusive fact-count range for training samples.
    pub facts: Option<(usize, usize)>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            tasks: vec![TaskId::Qa1],
            corpus: PathBuf::from("data/corpus"),
            tokenizer: TokenizerKind::Word,
            vocab_size: 512,
            bpe_vocab: None,
            bpe_merges: None,
            facts: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Context lengths in segments; 0 is the no-noise condition.
    pub segments: Vec<usize>,
    pub n_per_cell: usize,
    pub seed: u64,
    /// Refuse samples longer than this many segments.
    pub max_segments: Option<usize>,
    pub k: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            segments: vec![0, 1, 2, 4, 8],
            n_per_cell: 100,
            seed: 12_345,
            max_segments: None,
            k: vec![1, 2, 3, 5, 10],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub rmt: RmtSection,
    pub curriculum: CurriculumSection,
    pub train: TrainConfig,
    pub data: DataSection,
    pub eval: EvalSection,
}

/// Keys that have no default value and so are absent from the serialized
/// defaults.
const OPTIONAL_KEYS: [&str; 5] = [
    "train.warmup_steps",
    "data.bpe_vocab",
    "data.bpe_merges",
    "data.facts",
    "eval.max_segments",
];

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("cannot parse config: {}", e.message())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        check_keys(&table)?;
        let cfg = RunConfig::deserialize(toml::Value::Table(table))
            .map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(1).validate()?;
        self.rmt_config().validate(&self.model_config(1))?;
        self.train.validate()?;
        self.curriculum()?;
        if self.data.tasks.is_empty() {
            return Err(Error::Config("data.tasks must name at least one task".into()));
        }
        if let Some((lo, hi)) = self.data.facts {
            for t in &self.data.tasks {
                let (min, max) = t.fact_bounds();
                if lo > hi || lo < min || hi > max {
                    return Err(Error::Config(format!(
                        "data.facts [{lo}, {hi}] is outside the {t} range [{min}, {max}]"
                    )));
                }
            }
        }
        if self.data.tokenizer == TokenizerKind::Bpe && (self.data.bpe_vocab.is_none() || self.data.bpe_merges.is_none()) {
            return Err(Error::Config(
                "data.tokenizer = \"bpe\" needs data.bpe_vocab and data.bpe_merges".into(),
            ));
        }
        if self.eval.n_per_cell == 0 {
            return Err(Error::Config("eval.n_per_cell must be >= 1".into()));
        }
        if self.eval.k.contains(&0) {
            return Err(Error::Config("eval.k values must be >= 1".into()));
        }
        Ok(())
    }

    pub fn rmt_config(&self) -> RmtConfig {
        RmtConfig {
            mem_tokens: self.rmt.mem_tokens,
            segment_len: self.rmt.segment_len,
            retrieval: self.rmt.mode == Mode::RmtR,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.model.n_layers,
            n_heads: self.model.n_heads,
            d_model: self.model.d_model,
            d_ff: self.model.d_ff,
            vocab_size,
            max_positions: self.rmt_config().positions_needed(),
            seed: self.model.seed,
        }
    }

    pub fn curriculum(&self) -> Result<Curriculum> {
        if self.curriculum.stages.is_empty() {
            make_curriculum(self.rmt.mode, self.curriculum.max_segments)
        } else {
            Curriculum::new(self.curriculum.stages.clone())
        }
    }

    /// The tokenizer: word-level from the task templates and the most
    /// frequent corpus words, or BPE from files.
    pub fn tokenizer(&self, corpus: &BackgroundCorpus) -> Result<Tokenizer> {
        match self.data.tokenizer {
            TokenizerKind::Bpe => Tokenizer::load_bpe(
                self.data.bpe_vocab.as_deref().expect("validated"),
                self.data.bpe_merges.as_deref().expect("validated"),
            ),
            TokenizerKind::Word => {
                let templates = template_sentences();
                let base = build_vocab(&[] as &[&str], &templates, 0).vocab_size();
                if self.data.vocab_size < base {
                    return Err(Error::Config(format!(
                        "data.vocab_size {} is below the {base} task tokens",
                        self.data.vocab_size
                    )));
                }
                let sentences: Vec<&str> = corpus.sentences().collect();
                Ok(build_vocab(&sentences, &templates, self.data.vocab_size - base))
            }
        }
    }
}

/// Reads `path` (absent means all defaults) and applies overrides, which
/// win over file values.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    RunConfig::from_toml(&text, overrides)
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form section.key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{spec}` has an empty key")));
    }
    // Anything that is not a TOML literal is taken as a bare string.
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("non-empty");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{spec}`: `{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn known_keys() -> Vec<String> {
    let defaults = toml::Value::try_from(RunConfig::default()).expect("defaults serialize");
    let mut out: Vec<String> = OPTIONAL_KEYS.iter().map(|s| s.to_string()).collect();
    for (section, v) in defaults.as_table().expect("table") {
        out.push(section.clone());
        if let Some(t) = v.as_table() {
            out.extend(t.keys().map(|k| format!("{section}.{k}")));
        }
    }
    out
}

fn check_keys(table: &toml::Table) -> Result<()> {
    let known = known_keys();
    let mut seen = Vec::new();
    for (section, v) in table {
        seen.push(section.clone());
        if let Some(t) = v.as_table() {
            seen.extend(t.keys().map(|k| format!("{section}.{k}")));
        }
    }
    for key in seen {
        if !known.contains(&key) {
            let nearest = known
                .iter()
                .min_by_key(|k| strsim::levenshtein(k, &key))
                .expect("non-empty");
            return Err(Error::Config(format!("unknown key `{key}` (did you mean `{nearest}`?)")));
        }
    }
    Ok(())
}
