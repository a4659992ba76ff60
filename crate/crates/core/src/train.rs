//! Curriculum training: AdamW with warmup and linear decay, global-norm
//! clipping, plateau-based stage advance.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::corpus::BackgroundCorpus;
use crate::dataset::{generate_one, DatasetRecord, GenSpec};
use crate::encode::{encode_train, tokens_for_segments};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions};
use crate::mixer::Placement;
use crate::model::{ParamGrads, ParamStore};
use crate::rmt::{Mode, RmtModel};
use crate::tensor::{Scalar, Tensor};
use crate::tokenizer::Tokenizer;
use crate::world::TaskId;

pub const RMT_SCHEDULE: [usize; 7] = [1, 2, 4, 6, 8, 16, 32];
pub const RMT_R_SCHEDULE: [usize; 6] = [2, 4, 6, 8, 16, 32];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Curriculum {
    pub stages: Vec<usize>,
}

impl Curriculum {
    pub fn new(stages: Vec<usize>) -> Result<Self> {
        if stages.is_empty() || stages[0] == 0 || stages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "curriculum stages must be positive and strictly increasing, got {stages:?}"
            )));
        }
        Ok(Self { stages })
    }

    pub fn max_segments(&self) -> usize {
        *self.stages.last().expect("non-empty")
    }
}

/// The canonical schedule for `mode` cut after `max_segments`.
pub fn make_curriculum(mode: Mode, max_segments: usize) -> Result<Curriculum> {
    let full: &[usize] = match mode {
        Mode::Rmt => &RMT_SCHEDULE,
        Mode::RmtR => &RMT_R_SCHEDULE,
    };
    if max_segments < full[0] {
        return Err(Error::Config(format!(
            "max_segments {max_segments} is below the first {mode} stage ({})",
            full[0]
        )));
    }
    Curriculum::new(full.iter().copied().take_while(|&s| s <= max_segments).collect())
}

/// Segment count for one training sample at stage cap `stage_n`.
pub fn sample_num_segments(stage_n: usize, rng: &mut impl Rng) -> usize {
    rng.random_range(1..=stage_n.max(1))
}

/// Linear warmup from 0 to `base`, then linear decay to 0 at `total`.
pub fn lr_schedule(step: usize, warmup: usize, total: usize, base: f64) -> f64 {
    let step = step.min(total);
    if step < warmup {
        base * step as f64 / warmup as f64
    } else if total == warmup {
        base
    } else {
        base * (total - step) as f64 / (total - warmup) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One AdamW update. Weight decay is decoupled: parameters are shrunk by
/// `1 - lr * weight_decay` before the bias-corrected adaptive step.
pub fn adamw_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &ParamGrads<T>,
    state: &mut OptimState<T>,
    hyper: &AdamW,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite { op: "adamw_step" });
    }
    if grads.tensors.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = T::from_f64(1.0 - hyper.beta1.powi(t));
    let c2 = T::from_f64(1.0 - hyper.beta2.powi(t));
    let (b1, b2) = (T::from_f64(hyper.beta1), T::from_f64(hyper.beta2));
    let (lr, eps) = (T::from_f64(hyper.lr), T::from_f64(hyper.eps));
    let decay = T::from_f64(1.0 - hyper.lr * hyper.weight_decay);
    let one = T::one();
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads.tensors[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            *x = *x * decay - lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// Scales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping. `max_norm <= 0` disables clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut ParamGrads<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bptt {
    /// Gradients flow through every memory hop of a document.
    #[default]
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Warmup steps per stage; `None` means 10% of `total_steps`.
    pub warmup_steps: Option<usize>,
    /// Step budget of each curriculum stage.
    pub total_steps: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub clip_norm: f64,
    /// Evaluations without an improvement above `min_delta` before the stage
    /// is considered converged.
    pub patience: usize,
    pub min_delta: f64,
    pub eval_every: usize,
    pub val_samples: usize,
    pub seed: u64,
    pub val_seed: u64,
    pub bptt: Bptt,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            warmup_steps: None,
            total_steps: 2000,
            batch_size: 8,
            weight_decay: 0.01,
            betas: (0.9, 0.999),
            eps: 1e-8,
            clip_norm: 1.0,
            patience: 3,
            min_delta: 0.005,
            eval_every: 100,
            val_samples: 100,
            seed: 0,
            val_seed: 1_000_003,
            bptt: Bptt::Full,
        }
    }
}

impl TrainConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or(self.total_steps / 10)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("train.batch_size must be >= 1".into());
        }
        if self.total_steps == 0 {
            return bad("train.total_steps must be >= 1".into());
        }
        if self.warmup() > self.total_steps {
            return bad(format!(
                "train.warmup_steps ({}) exceeds train.total_steps ({})",
                self.warmup(),
                self.total_steps
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("train.lr must be positive, got {}", self.lr));
        }
        if self.eval_every == 0 {
            return bad("train.eval_every must be >= 1".into());
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad(format!("train.betas must lie in [0, 1), got {:?}", self.betas));
        }
        Ok(())
    }

    pub fn adamw(&self, lr: f64) -> AdamW {
        AdamW {
            lr,
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Produces a record that spans `segments` segments.
pub trait SampleSource: Sync {
    fn sample(&self, segments: usize, seed: u64) -> Result<DatasetRecord>;
}

/// Fresh samples from the task generator and mixer.
pub struct Synthetic<'a> {
    pub tasks: Vec<TaskId>,
    pub corpus: &'a BackgroundCorpus,
    pub tok: &'a Tokenizer,
    pub segment_len: usize,
    pub facts: Option<(usize, usize)>,
}

impl SampleSource for Synthetic<'_> {
    fn sample(&self, segments: usize, seed: u64) -> Result<DatasetRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task = self.tasks[rng.random_range(0..self.tasks.len())];
        let spec = GenSpec {
            task,
            n: 1,
            target_tokens: tokens_for_segments(segments, self.segment_len),
            seed: rng.next_u64(),
            placement: Placement::Uniform,
            facts: self.facts,
        };
        let m = generate_one(&spec, 0, self.corpus, self.tok)?;
        Ok(DatasetRecord::from_mixed(format!("{task}-s{segments}-{seed:016x}"), &m))
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: RmtModel<f32>,
    pub opt: OptimState<f32>,
    pub rng: ChaCha8Rng,
    pub step: usize,
    pub stage: usize,
    pub stage_step: usize,
    pub best_acc: f64,
    pub since_best: usize,
    pub finished: bool,
}

impl TrainState {
    pub fn new(model: RmtModel<f32>, seed: u64) -> Self {
        let opt = OptimState::new(&model.lm.params);
        Self {
            model,
            opt,
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            stage: 0,
            stage_step: 0,
            best_acc: -1.0,
            since_best: 0,
            finished: false,
        }
    }
}

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub stage: usize,
    pub segments: usize,
    pub loss: f64,
    pub val_acc: Option<f64>,
    pub lr: f64,
}

pub const LOG_HEADER: &str = "step,stage,segments,loss,val_acc,lr";

impl LogRow {
    pub fn csv(&self) -> String {
        let acc = self.val_acc.map(|a| format!("{a:.4}")).unwrap_or_default();
        format!("{},{},{},{:.6},{},{:.6e}", self.step, self.stage, self.segments, self.loss, acc, self.lr)
    }
}

/// Callbacks for persistence; all default to doing nothing.
pub trait TrainHooks {
    fn on_step(&mut self, _row: &LogRow) -> Result<()> {
        Ok(())
    }
    /// Validation accuracy of the current stage improved.
    fn on_best(&mut self, _state: &TrainState, _acc: f64) -> Result<()> {
        Ok(())
    }
    fn on_stage_end(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

impl TrainHooks for () {}

/// Collects log rows in memory.
#[derive(Default)]
pub struct LogHooks {
    pub rows: Vec<LogRow>,
}

impl TrainHooks for LogHooks {
    fn on_step(&mut self, row: &LogRow) -> Result<()> {
        self.rows.push(row.clone());
        Ok(())
    }
}

pub struct Trainer<'a> {
    pub config: &'a TrainConfig,
    pub mode: Mode,
    pub curriculum: &'a Curriculum,
    pub source: &'a dyn SampleSource,
    pub tok: &'a Tokenizer,
}

impl Trainer<'_> {
    /// Fixed validation records for stage `stage`.
    pub fn val_set(&self, stage: usize) -> Result<Vec<DatasetRecord>> {
        let cap = self.curriculum.stages[stage];
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.val_seed ^ cap as u64);
        (0..self.config.val_samples)
            .map(|_| {
                let n = sample_num_segments(cap, &mut rng);
                self.source.sample(n, rng.next_u64())
            })
            .collect()
    }

    /// Mean answer loss and its gradients over one batch. Per-document work
    /// runs in parallel; the reduction is sequential in batch order, so the
    /// result does not depend on the thread count.
    pub fn batch_gradients(&self, model: &RmtModel<f32>, records: &[DatasetRecord]) -> Result<(f64, ParamGrads<f32>)> {
        let segment_len = model.config.segment_len;
        let parts = records
            .par_iter()
            .map(|r| {
                let doc = encode_train(self.tok, r, segment_len)?;
                let mut g = Graph::new();
                let bp = model.bind(&mut g);
                let loss = model.document_loss(&mut g, &bp, self.mode, &doc)?;
                let value = g.value(loss).item() as f64;
                let mut grads = g.backward(loss)?;
                Ok((value, bp.gradients(&mut grads, &model.lm.params)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = ParamGrads::zeros_like(&model.lm.params);
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            total.accumulate(g);
        }
        let n = records.len() as f64;
        total.scale(1.0 / n);
        Ok((loss / n, total))
    }

    /// One optimizer step at the current stage. Leaves `state` untouched
    /// when the loss or gradients are not finite.
    pub fn step(&self, state: &mut TrainState) -> Result<LogRow> {
        let cap = self.curriculum.stages[state.stage];
        let mut rng = state.rng.clone();
        let mut records = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let n = sample_num_segments(cap, &mut rng);
            records.push(self.source.sample(n, rng.next_u64())?);
        }
        let (loss, mut grads) = self.batch_gradients(&state.model, &records)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Diverged {
                step: state.step + 1,
                reason: format!("loss {loss}, finite gradients: {}", grads.is_finite()),
            });
        }
        clip_grad_norm(&mut grads, self.config.clip_norm);
        let lr = lr_schedule(
            state.stage_step + 1,
            self.config.warmup(),
            self.config.total_steps,
            self.config.lr,
        );
        adamw_step(&mut state.model.lm.params, &grads, &mut state.opt, &self.config.adamw(lr))?;
        state.rng = rng;
        state.step += 1;
        state.stage_step += 1;
        Ok(LogRow {
            step: state.step,
            stage: state.stage,
            segments: cap,
            loss,
            val_acc: None,
            lr,
        })
    }

    fn validate(&self, state: &TrainState, val: &[DatasetRecord]) -> Result<f64> {
        Ok(evaluate(&state.model, self.mode, self.tok, val, EvalOptions::default())?.overall())
    }

    /// Runs until the last stage converges or exhausts its budget. Can be
    /// called again on a restored state to resume.
    pub fn run(&self, state: &mut TrainState, hooks: &mut dyn TrainHooks) -> Result<()> {
        self.config.validate()?;
        let mut val_stage = usize::MAX;
        let mut val = Vec::new();
        while !state.finished {
            if val_stage != state.stage {
                val = self.val_set(state.stage)?;
                val_stage = state.stage;
            }
            let mut row = self.step(state)?;
            let at_end = state.stage_step >= self.config.total_steps;
            let mut converged = false;
            if state.stage_step % self.config.eval_every == 0 || at_end {
                let acc = self.validate(state, &val)?;
                row.val_acc = Some(acc);
                if acc > state.best_acc + self.config.min_delta {
                    state.best_acc = acc;
                    state.since_best = 0;
                    hooks.on_best(state, acc)?;
                } else {
                    state.since_best += 1;
                    converged = state.since_best >= self.config.patience;
                }
            }
            hooks.on_step(&row)?;
            if converged || at_end {
                if state.stage + 1 == self.curriculum.stages.len() {
                    state.finished = true;
                } else {
                    state.stage += 1;
                    state.stage_step = 0;
                    state.best_acc = -1.0;
                    state.since_best = 0;
                }
                hooks.on_stage_end(state)?;
            }
        }
        Ok(())
    }
}
