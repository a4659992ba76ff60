//! Recurrent Memory Transformer around [`LanguageModel`], with optional
//! self-retrieval over the archive of past memory states (RMT-R).
//!
//! Segment layout fed to the backbone:
//!
//! ```text
//! RMT:    [M_prev | X | M_prev]
//! RMT-R:  [M_prev | R | X | M_prev]      (R only once the archive is non-empty)
//! ```
//!
//! The write copy of `M_prev` sits at the end so that, under the causal mask,
//! it sees the whole segment; its final-layer hidden states become the next
//! memory state. Position ids are fixed per span: read memory `0..m`, text
//! `m..m+L`, write memory `m+L..2m+L`, retrieved `2m+L..3m+L`. Text positions
//! restart at `m` in every segment.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::{AttentionTrace, BoundParams, LanguageModel, ModelConfig, ParamId, INIT_STD};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmtConfig {
    pub mem_tokens: usize,
    pub segment_len: usize,
    pub retrieval: bool,
}

impl Default for RmtConfig {
    fn default() -> Self {
        Self {
            mem_tokens: 8,
            segment_len: 64,
            retrieval: false,
        }
    }
}

impl RmtConfig {
    /// Positions the backbone must support for this layout.
    pub fn positions_needed(&self) -> usize {
        let extra = if self.retrieval { self.mem_tokens } else { 0 };
        2 * self.mem_tokens + extra + self.segment_len
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.mem_tokens == 0 {
            return Err(Error::Config("rmt.mem_tokens must be >= 1".into()));
        }
        if self.segment_len == 0 {
            return Err(Error::Config("rmt.segment_len must be >= 1".into()));
        }
        if self.positions_needed() > model.max_positions {
            return Err(Error::Config(format!(
                "rmt layout needs {} positions but model.max_positions is {}",
                self.positions_needed(),
                model.max_positions
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "rmt")]
    Rmt,
    #[serde(rename = "rmt-r")]
    RmtR,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rmt => "rmt",
            Mode::RmtR => "rmt-r",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmt" => Ok(Mode::Rmt),
            "rmt-r" | "rmtr" => Ok(Mode::RmtR),
            other => Err(Error::Invalid(format!("unknown mode `{other}` (expected rmt or rmt-r)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A memory state `M^t` of shape `m x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryState<T> {
    pub matrix: Tensor<T>,
    pub segment: usize,
}

/// Past memory states `[M^0, .., M^{t-1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryArchive<T> {
    pub states: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for MemoryArchive<T> {
    fn default() -> Self {
        Self { states: Vec::new() }
    }
}

impl<T: Scalar> MemoryArchive<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Stored scalars: `n * m * d`.
    pub fn footprint(&self) -> usize {
        self.states.iter().map(Tensor::numel).sum()
    }
}

/// Parameters of the single-head retrieval attention.
#[derive(Clone, Copy, Debug)]
pub struct RetrievalHead {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
}

/// Index ranges of each span inside a composed segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentLayout {
    pub read: Range<usize>,
    pub retrieved: Option<Range<usize>>,
    pub text: Range<usize>,
    pub write: Range<usize>,
    pub positions: Vec<usize>,
}

impl SegmentLayout {
    pub fn new(cfg: &RmtConfig, text_len: usize, with_retrieved: bool) -> Self {
        let m = cfg.mem_tokens;
        let l = cfg.segment_len;
        let mut positions: Vec<usize> = (0..m).collect();
        let read = 0..m;
        let mut cursor = m;
        let retrieved = if with_retrieved {
            positions.extend(2 * m + l..3 * m + l);
            cursor += m;
            Some(m..2 * m)
        } else {
            None
        };
        let text = cursor..cursor + text_len;
        positions.extend(m..m + text_len);
        cursor += text_len;
        let write = cursor..cursor + m;
        positions.extend(m + l..2 * m + l);
        Self {
            read,
            retrieved,
            text,
            write,
            positions,
        }
    }

    pub fn len(&self) -> usize {
        self.write.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Span label for every row, for attention-map exports.
    pub fn labels(&self) -> Vec<&'static str> {
        (0..self.len())
            .map(|i| {
                if self.read.contains(&i) {
                    "read-mem"
                } else if self.retrieved.as_ref().is_some_and(|r| r.contains(&i)) {
                    "retrieved"
                } else if self.text.contains(&i) {
                    "text"
                } else {
                    "write-mem"
                }
            })
            .collect()
    }
}

/// Graph nodes produced by one recurrent step.
#[derive(Clone, Debug)]
pub struct StepVars {
    pub text_hidden: Var,
    pub new_memory: Var,
    pub layout: SegmentLayout,
    /// Retrieval attention `[m, n*m]` when retrieval ran.
    pub retrieval_probs: Option<Var>,
}

/// Recurrent state threaded through one document on one graph.
#[derive(Clone, Debug)]
pub struct Unroll {
    pub memory: Var,
    pub archive: Vec<Var>,
    pub segment: usize,
}

/// A tokenised document: segments in order, plus supervised positions of the
/// final segment as `(text row, target id)`.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Document {
    pub segments: Vec<Vec<usize>>,
    pub targets: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct DocumentOutput<T> {
    pub segment_logits: Vec<Tensor<T>>,
    pub final_memory: MemoryState<T>,
    pub archive: MemoryArchive<T>,
    pub loss: Option<T>,
}

#[derive(Clone, Debug)]
pub struct RmtModel<T> {
    pub config: RmtConfig,
    pub lm: LanguageModel<T>,
    memory: ParamId,
    retrieval: Option<RetrievalHead>,
}

impl<T: Scalar> RmtModel<T> {
    /// Builds the backbone and registers the initial memory (and retrieval
    /// head when `config.retrieval`) in the same parameter store.
    pub fn new(model: ModelConfig, config: RmtConfig) -> Result<Self> {
        config.validate(&model)?;
        let seed = model.seed;
        let mut lm = LanguageModel::new(model)?;
        let d = lm.d_model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_3e3_0f_u64);
        let memory = lm
            .params
            .add("rmt.memory", Tensor::randn(&[config.mem_tokens, d], INIT_STD, &mut rng));
        let retrieval = if config.retrieval {
            let mut w = |name: &str, rng: &mut ChaCha8Rng| {
                lm.params
                    .add(format!("rmt.retrieval.{name}"), Tensor::randn(&[d, d], INIT_STD, rng))
            };
            Some(RetrievalHead {
                w_q: w("w_q", &mut rng),
                w_k: w("w_k", &mut rng),
                w_v: w("w_v", &mut rng),
                w_o: w("w_o", &mut rng),
            })
        } else {
            None
        };
        Ok(Self {
            config,
            lm,
            memory,
            retrieval,
        })
    }

    pub fn mem_tokens(&self) -> usize {
        self.config.mem_tokens
    }

    pub fn d_model(&self) -> usize {
        self.lm.d_model()
    }

    pub fn initial_memory_id(&self) -> ParamId {
        self.memory
    }

    pub fn retrieval_head(&self) -> Option<RetrievalHead> {
        self.retrieval
    }

    pub fn bind(&self, g: &mut Graph<T>) -> BoundParams {
        self.lm.params.bind(g)
    }

    pub fn start(&self, bp: &BoundParams) -> Unroll {
        Unroll {
            memory: bp.var(self.memory),
            archive: Vec::new(),
            segment: 0,
        }
    }

    fn check_mode(&self, mode: Mode) -> Result<()> {
        if mode == Mode::RmtR && self.retrieval.is_none() {
            return Err(Error::Config("rmt-r mode requires rmt.retrieval = true".into()));
        }
        Ok(())
    }

    fn check_memory(&self, g: &Graph<T>, v: Var, what: &str) -> Result<()> {
        let want = [self.config.mem_tokens, self.d_model()];
        if g.shape(v) != want {
            return Err(Error::Shape(format!("{what} has shape {:?}, expected {want:?}", g.shape(v))));
        }
        Ok(())
    }

    /// Concatenates `[M_prev, R?, X, M_prev]` and returns the layout.
    pub fn compose_segment_input(
        &self,
        g: &mut Graph<T>,
        memory: Var,
        retrieved: Option<Var>,
        text: Var,
    ) -> Result<(Var, SegmentLayout)> {
        self.check_memory(g, memory, "memory")?;
        if let Some(r) = retrieved {
            self.check_memory(g, r, "retrieved memory")?;
        }
        let d = self.d_model();
        let shape = g.shape(text).to_vec();
        if shape.len() != 2 || shape[1] != d {
            return Err(Error::Shape(format!("segment embeddings {shape:?}, expected [len, {d}]")));
        }
        if shape[0] > self.config.segment_len {
            return Err(Error::Shape(format!(
                "segment of {} tokens exceeds segment_len {}",
                shape[0], self.config.segment_len
            )));
        }
        let mut parts = vec![memory];
        parts.extend(retrieved);
        if shape[0] > 0 {
            parts.push(text);
        }
        parts.push(memory);
        let input = g.concat_rows(&parts);
        Ok((input, SegmentLayout::new(&self.config, shape[0], retrieved.is_some())))
    }

    /// Single-head attention from `memory` into the concatenated archive.
    /// Returns `(R, probabilities[m, n*m])`.
    pub fn self_retrieve(
        &self,
        g: &mut Graph<T>,
        bp: &BoundParams,
        archive: &[Var],
        memory: Var,
    ) -> Result<(Var, Var)> {
        let head = self
            .retrieval
            .ok_or_else(|| Error::Config("model has no retrieval head".into()))?;
        if archive.is_empty() {
            return Err(Error::EmptyArchive);
        }
        self.check_memory(g, memory, "memory")?;
        for &s in archive {
            self.check_memory(g, s, "archived memory")?;
        }
        let past = if archive.len() == 1 { archive[0] } else { g.concat_rows(archive) };
        let q = g.matmul(memory, bp.var(head.w_q));
        let k = g.matmul(past, bp.var(head.w_k));
        let v = g.matmul(past, bp.var(head.w_v));
        let scores = g.matmul_nt(q, k);
        let scores = g.scale(scores, 1.0 / (self.d_model() as f64).sqrt());
        let probs = g.softmax(scores);
        let mixed = g.matmul(probs, v);
        let r = g.matmul(mixed, bp.var(head.w_o));
        Ok((r, probs))
    }

    /// One recurrent step on an embedded segment. In [`Mode::RmtR`] the
    /// archive is consulted when non-empty and `M_prev` is appended to it.
    pub fn step_embedded(
        &self,
        g: &mut Graph<T>,
        bp: &BoundParams,
        mode: Mode,
        state: &mut Unroll,
        text: Var,
        trace: Option<&mut AttentionTrace>,
    ) -> Result<StepVars> {
        self.check_mode(mode)?;
        let (retrieved, retrieval_probs) = if mode == Mode::RmtR && !state.archive.is_empty() {
            let (r, p) = self.self_retrieve(g, bp, &state.archive, state.memory)?;
            (Some(r), Some(p))
        } else {
            (None, None)
        };
        let (input, layout) = self.compose_segment_input(g, state.memory, retrieved, text)?;
        let hidden = self.lm.hidden(g, bp, input, &layout.positions, true, trace)?;
        let text_hidden = g.slice_rows(hidden, layout.text.start, layout.text.end);
        let new_memory = g.slice_rows(hidden, layout.write.start, layout.write.end);
        state.archive.push(state.memory);
        state.memory = new_memory;
        state.segment += 1;
        Ok(StepVars {
            text_hidden,
            new_memory,
            layout,
            retrieval_probs,
        })
    }

    pub fn step_ids(
        &self,
        g: &mut Graph<T>,
        bp: &BoundParams,
        mode: Mode,
        state: &mut Unroll,
        ids: &[usize],
        trace: Option<&mut AttentionTrace>,
    ) -> Result<StepVars> {
        let x = self.lm.embed_tokens(g, bp, ids)?;
        self.step_embedded(g, bp, mode, state, x, trace)
    }

    /// Plain RMT step: returns text-span logits and the new memory.
    pub fn rmt_step(&self, g: &mut Graph<T>, bp: &BoundParams, memory: Var, ids: &[usize]) -> Result<(Var, Var)> {
        let mut state = Unroll {
            memory,
            archive: Vec::new(),
            segment: 0,
        };
        let out = self.step_ids(g, bp, Mode::Rmt, &mut state, ids, None)?;
        let logits = self.lm.head(g, bp, out.text_hidden);
        Ok((logits, out.new_memory))
    }

    /// RMT-R step: returns text-span logits and the new memory; `archive`
    /// gains `memory`.
    pub fn rmt_r_step(
        &self,
        g: &mut Graph<T>,
        bp: &BoundParams,
        archive: &mut Vec<Var>,
        memory: Var,
        ids: &[usize],
    ) -> Result<(Var, Var)> {
        let mut state = Unroll {
            memory,
            archive: std::mem::take(archive),
            segment: 0,
        };
        let out = self.step_ids(g, bp, Mode::RmtR, &mut state, ids, None);
        *archive = state.archive;
        let out = out?;
        let logits = self.lm.head(g, bp, out.text_hidden);
        Ok((logits, out.new_memory))
    }

    /// Unrolls a document on `g` with full backpropagation through the
    /// memory chain and returns the masked answer loss of the last segment.
    pub fn document_loss(&self, g: &mut Graph<T>, bp: &BoundParams, mode: Mode, doc: &Document) -> Result<Var> {
        let last = self.unroll_to_last(g, bp, mode, doc)?;
        self.answer_loss(g, bp, last, doc)
    }

    fn unroll_to_last(&self, g: &mut Graph<T>, bp: &BoundParams, mode: Mode, doc: &Document) -> Result<StepVars> {
        if doc.segments.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let mut state = self.start(bp);
        let mut last = None;
        for seg in &doc.segments {
            last = Some(self.step_ids(g, bp, mode, &mut state, seg, None)?);
        }
        Ok(last.expect("non-empty"))
    }

    fn answer_loss(&self, g: &mut Graph<T>, bp: &BoundParams, last: StepVars, doc: &Document) -> Result<Var> {
        if doc.targets.is_empty() {
            return Err(Error::EmptyMask);
        }
        let text_len = last.layout.text.len();
        let lo = doc.targets.iter().map(|t| t.0).min().expect("non-empty");
        let hi = doc.targets.iter().map(|t| t.0).max().expect("non-empty") + 1;
        if hi > text_len {
            return Err(Error::IndexOutOfRange {
                index: hi - 1,
                len: text_len,
            });
        }
        let rows = g.slice_rows(last.text_hidden, lo, hi);
        let logits = self.lm.head(g, bp, rows);
        let mut targets = vec![0; hi - lo];
        let mut mask = vec![false; hi - lo];
        for &(r, t) in &doc.targets {
            targets[r - lo] = t;
            mask[r - lo] = true;
        }
        g.cross_entropy(logits, &targets, &mask)
    }

    /// Full unroll on one graph, returning every segment's text logits, the
    /// final memory, the archive `[M^0..M^{n-1}]`, and the answer loss when
    /// the document carries targets.
    pub fn process_document(&self, mode: Mode, doc: &Document) -> Result<DocumentOutput<T>> {
        self.check_mode(mode)?;
        if doc.segments.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let mut g = Graph::new();
        let bp = self.bind(&mut g);
        let mut state = self.start(&bp);
        let mut logits = Vec::with_capacity(doc.segments.len());
        let mut last = None;
        for seg in &doc.segments {
            let out = self.step_ids(&mut g, &bp, mode, &mut state, seg, None)?;
            let l = self.lm.head(&mut g, &bp, out.text_hidden);
            logits.push(l);
            last = Some(out);
        }
        let loss = if doc.targets.is_empty() {
            None
        } else {
            let l = self.answer_loss(&mut g, &bp, last.expect("non-empty"), doc)?;
            Some(l)
        };
        g.check_finite()?;
        Ok(DocumentOutput {
            segment_logits: logits.into_iter().map(|v| g.value(v).clone()).collect(),
            final_memory: MemoryState {
                matrix: g.value(state.memory).clone(),
                segment: state.segment,
            },
            archive: MemoryArchive {
                states: state.archive.iter().map(|&v| g.value(v).clone()).collect(),
            },
            loss: loss.map(|l| g.value(l).item()),
        })
    }

    /// Streaming unroll without a tape: one short-lived graph per segment,
    /// memory carried as plain tensors. Returns the final memory, the archive
    /// and the recurrent context needed to run the last segment repeatedly.
    pub fn run_prefix(&self, mode: Mode, segments: &[Vec<usize>]) -> Result<Carry<T>> {
        self.check_mode(mode)?;
        let mut carry = Carry {
            memory: self.lm.params.get(self.memory).clone(),
            archive: MemoryArchive::default(),
        };
        for seg in segments {
            self.advance(mode, &mut carry, seg)?;
        }
        Ok(carry)
    }

    /// Processes one segment from `carry` without tracking gradients.
    pub fn advance(&self, mode: Mode, carry: &mut Carry<T>, ids: &[usize]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bp = self.bind(&mut g);
        let mut state = carry.load(&mut g);
        let out = self.step_ids(&mut g, &bp, mode, &mut state, ids, None)?;
        g.check_finite()?;
        let hidden = g.value(out.text_hidden).clone();
        carry.archive.states.push(std::mem::replace(&mut carry.memory, g.value(out.new_memory).clone()));
        Ok(hidden)
    }

    /// Runs `ids` as the next segment from `carry` without updating it and
    /// returns logits for the last text position, plus the attention trace
    /// when requested.
    pub fn peek_last_logits(&self, mode: Mode, carry: &Carry<T>, ids: &[usize]) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let bp = self.bind(&mut g);
        let mut state = carry.load(&mut g);
        let out = self.step_ids(&mut g, &bp, mode, &mut state, ids, None)?;
        let n = out.layout.text.len();
        if n == 0 {
            return Err(Error::Invalid("cannot decode from an empty segment".into()));
        }
        let row = g.slice_rows(out.text_hidden, n - 1, n);
        let logits = self.lm.head(&mut g, &bp, row);
        g.check_finite()?;
        Ok(g.value(logits).data().to_vec())
    }

    /// Attention probabilities of every layer/head for one segment run from
    /// `carry`, with the segment layout.
    pub fn trace_segment(&self, mode: Mode, carry: &Carry<T>, ids: &[usize]) -> Result<(Vec<Vec<Tensor<T>>>, SegmentLayout)> {
        let mut g = Graph::new();
        let bp = self.bind(&mut g);
        let mut state = carry.load(&mut g);
        let mut trace = AttentionTrace::new();
        let out = self.step_ids(&mut g, &bp, mode, &mut state, ids, Some(&mut trace))?;
        g.check_finite()?;
        let maps = trace
            .iter()
            .map(|heads| heads.iter().map(|&p| g.value(p).clone()).collect())
            .collect();
        Ok((maps, out.layout))
    }
}

/// Recurrent state carried between tape-free segment runs.
#[derive(Clone, Debug)]
pub struct Carry<T> {
    pub memory: Tensor<T>,
    pub archive: MemoryArchive<T>,
}

impl<T: Scalar> Carry<T> {
    fn load(&self, g: &mut Graph<T>) -> Unroll {
        let memory = g.leaf(self.memory.clone());
        let archive = self.archive.states.iter().map(|s| g.leaf(s.clone())).collect();
        Unroll {
            memory,
            archive,
            segment: self.archive.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfgs(retrieval: bool) -> (ModelConfig, RmtConfig) {
        let rmt = RmtConfig {
            mem_tokens: 2,
            segment_len: 8,
            retrieval,
        };
        let model = ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            vocab_size: 32,
            max_positions: rmt.positions_needed(),
            seed: 11,
        };
        (model, rmt)
    }

    #[test]
    fn layout_without_retrieval() {
        let (m, r) = cfgs(false);
        let model = RmtModel::<f64>::new(m, r).unwrap();
        let mut g = Graph::new();
        let bp = model.bind(&mut g);
        let mem = bp.var(model.initial_memory_id());
        let x = model.lm.embed_tokens(&mut g, &bp, &[1, 2, 3, 4, 5]).unwrap();
        let (input, layout) = model.compose_segment_input(&mut g, mem, None, x).unwrap();
        assert_eq!(g.shape(input), &[9, 16]);
        assert_eq!(layout.write, 7..9);
        assert_eq!(layout.text, 2..7);
        assert_eq!(layout.read, 0..2);
    }

    #[test]
    fn layout_with_retrieval_orders_spans() {
        let (m, r) = cfgs(true);
        let model = RmtModel::<f64>::new(m, r).unwrap();
        let mut g = Graph::new();
        let bp = model.bind(&mut g);
        let mem = bp.var(model.initial_memory_id());
        let x = model.lm.embed_tokens(&mut g, &bp, &[1, 2, 3, 4, 5]).unwrap();
        let (input, layout) = model.compose_segment_input(&mut g, mem, Some(mem), x).unwrap();
        assert_eq!(g.shape(input), &[11, 16]);
        assert_eq!(layout.retrieved, Some(2..4));
        assert_eq!(layout.text, 4..9);
        assert_eq!(layout.write, 9..11);
        let labels = layout.labels();
        assert_eq!(labels[0], "read-mem");
        assert_eq!(labels[2], "retrieved");
        assert_eq!(labels[4], "text");
        assert_eq!(labels[10], "write-mem");
    }

    #[test]
    fn empty_segment_is_valid() {
        let (m, r) = cfgs(true);
        let model = RmtModel::<f64>::new(m, r).unwrap();
        let mut g = Graph::new();
        let bp = model.bind(&mut g);
        let mem = bp.var(model.initial_memory_id());
        let x = model.lm.embed_tokens(&mut g, &bp, &[]).unwrap();
        let (_, plain) = model.compose_segment_input(&mut g, mem, None, x).unwrap();
        assert_eq!(plain.len(), 4);
        let (_, with_r) = model.compose_segment_input(&mut g, mem, Some(mem), x).unwrap();
        assert_eq!(with_r.len(), 6);
    }

    #[test]
    fn compose_rejects_wrong_width() {
        let (m, r) = cfgs(false);
        let model = RmtModel::<f64>::new(m, r).unwrap();
        let mut g = Graph::new();
        let bp = model.bind(&mut g);
        let mem = g.leaf(Tensor::zeros(&[2, 15]));
        let x = model.lm.embed_tokens(&mut g, &bp, &[1]).unwrap();
        assert!(matches!(
            model.compose_segment_input(&mut g, mem, None, x),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn retrieval_needs_archive() {
        let (m, r) = cfgs(true);
        let model = RmtModel::<f64>::new(m, r).unwrap();
        let mut g = Graph::new();
        let bp = model.bind(&mut g);
        let mem = bp.var(model.initial_memory_id());
        assert!(matches!(
            model.self_retrieve(&mut g, &bp, &[], mem),
            Err(Error::EmptyArchive)
        ));
    }

    #[test]
    fn config_rejects_too_few_positions() {
        let (mut m, r) = cfgs(true);
        m.max_positions -= 1;
        assert!(RmtModel::<f32>::new(m, r).is_err());
    }

    #[test]
    fn rmt_r_mode_requires_head() {
        let (m, r) = cfgs(false);
        let model = RmtModel::<f32>::new(m, r).unwrap();
        let doc = Document {
            segments: vec![vec![1, 2]],
            targets: vec![],
        };
        assert!(model.process_document(Mode::RmtR, &doc).is_err());
        assert!(matches!(
            model.process_document(Mode::Rmt, &Document::default()),
            Err(Error::EmptyDocument)
        ));
    }
}
