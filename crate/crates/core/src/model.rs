//! Decoder-only transformer language model (GPT-2 layout: pre-norm blocks,
//! learned absolute positions, tanh-GELU MLP, tied input/output embedding).

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            n_heads: 2,
            d_model: 64,
            d_ff: 256,
            vocab_size: 512,
            max_positions: 96,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be >= 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "model.d_model ({}) must be divisible by model.n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    /// Number of scalar parameters of the backbone.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let per_layer = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * self.d_ff + self.d_ff) + (self.d_ff * d + d);
        self.vocab_size * d + self.max_positions * d + self.n_layers * per_layer + 2 * d
    }
}

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Registers every parameter as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> BoundParams {
        BoundParams {
            vars: self.tensors.iter().map(|t| g.leaf(t.clone())).collect(),
        }
    }
}

/// Graph handles for every parameter of a store, in store order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Collects per-parameter gradients; unreachable parameters get zeros.
    pub fn gradients<T: Scalar>(&self, grads: &mut Gradients<T>, store: &ParamStore<T>) -> ParamGrads<T> {
        let tensors = self
            .vars
            .iter()
            .zip(store.tensors())
            .map(|(&v, t)| match grads.take(v) {
                Some(g) => Tensor::new(t.shape().to_vec(), g).expect("gradient shape"),
                None => Tensor::zeros(t.shape()),
            })
            .collect();
        ParamGrads { tensors }
    }
}

/// Gradients aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            tensors: store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    /// Named view, the shape callers outside the crate usually want.
    pub fn named<'a>(&'a self, store: &'a ParamStore<T>) -> impl Iterator<Item = (&'a str, &'a Tensor<T>)> {
        store.names().iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        let s = T::from_f64(s);
        for t in &mut self.tensors {
            for x in t.data_mut() {
                *x *= s;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[derive(Clone, Debug)]
struct LayerIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    attn_w: ParamId,
    attn_b: ParamId,
    proj_w: ParamId,
    proj_b: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    fc_w: ParamId,
    fc_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// What a forward pass consumes: token ids, or an already embedded sequence
/// (used to splice memory tokens in front of and behind text).
#[derive(Clone, Copy, Debug)]
pub enum LmInput<'a> {
    Ids(&'a [usize]),
    Embeddings(Var),
}

/// Attention probabilities recorded during a forward pass, `[layer][head]`.
pub type AttentionTrace = Vec<Vec<Var>>;

#[derive(Clone, Debug)]
pub struct LanguageModel<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    wte: ParamId,
    wpe: ParamId,
    layers: Vec<LayerIds>,
    lnf_g: ParamId,
    lnf_b: ParamId,
}

impl<T: Scalar> LanguageModel<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        Self::with_init_std(config, INIT_STD)
    }

    /// Same layout as [`LanguageModel::new`] with a custom weight scale.
    pub fn with_init_std(config: ModelConfig, std: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let mut params = ParamStore::default();
        let normal = |shape: &[usize], rng: &mut ChaCha8Rng| Tensor::randn(shape, std, rng);

        let wte = params.add("wte", normal(&[config.vocab_size, d], &mut rng));
        let wpe = params.add("wpe", normal(&[config.max_positions, d], &mut rng));
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let p = |s: &str| format!("h.{i}.{s}");
            layers.push(LayerIds {
                ln1_g: params.add(p("ln_1.g"), Tensor::full(&[d], T::one())),
                ln1_b: params.add(p("ln_1.b"), Tensor::zeros(&[d])),
                attn_w: params.add(p("attn.c_attn.w"), normal(&[d, 3 * d], &mut rng)),
                attn_b: params.add(p("attn.c_attn.b"), Tensor::zeros(&[3 * d])),
                proj_w: params.add(p("attn.c_proj.w"), normal(&[d, d], &mut rng)),
                proj_b: params.add(p("attn.c_proj.b"), Tensor::zeros(&[d])),
                ln2_g: params.add(p("ln_2.g"), Tensor::full(&[d], T::one())),
                ln2_b: params.add(p("ln_2.b"), Tensor::zeros(&[d])),
                fc_w: params.add(p("mlp.c_fc.w"), normal(&[d, config.d_ff], &mut rng)),
                fc_b: params.add(p("mlp.c_fc.b"), Tensor::zeros(&[config.d_ff])),
                out_w: params.add(p("mlp.c_proj.w"), normal(&[config.d_ff, d], &mut rng)),
                out_b: params.add(p("mlp.c_proj.b"), Tensor::zeros(&[d])),
            });
        }
        let lnf_g = params.add("ln_f.g", Tensor::full(&[d], T::one()));
        let lnf_b = params.add("ln_f.b", Tensor::zeros(&[d]));
        Ok(Self {
            config,
            params,
            wte,
            wpe,
            layers,
            lnf_g,
            lnf_b,
        })
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    pub fn token_embedding_id(&self) -> ParamId {
        self.wte
    }

    /// Every backbone parameter set to zero (norm gains included).
    pub fn zero_weights(&mut self) {
        for t in self.params.tensors_mut() {
            for v in t.data_mut() {
                *v = T::zero();
            }
        }
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.config.vocab_size) {
            Some(&id) => Err(Error::TokenOutOfRange {
                id,
                vocab: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Token embeddings `[ids.len(), d]`.
    pub fn embed_tokens(&self, g: &mut Graph<T>, bp: &BoundParams, ids: &[usize]) -> Result<Var> {
        self.check_ids(ids)?;
        Ok(g.embed(bp.var(self.wte), ids))
    }

    /// Final-layer hidden states (after the last layer norm) for an embedded
    /// sequence `x[n, d]` placed at `positions`.
    pub fn hidden(
        &self,
        g: &mut Graph<T>,
        bp: &BoundParams,
        x: Var,
        positions: &[usize],
        causal: bool,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Var> {
        let d = self.config.d_model;
        let n = positions.len();
        if g.shape(x) != [n, d] {
            return Err(Error::Shape(format!(
                "input embeddings {:?} do not match {n} positions of width {d}",
                g.shape(x)
            )));
        }
        if let Some(&p) = positions.iter().max() {
            if p >= self.config.max_positions {
                return Err(Error::LengthOverflow {
                    len: p + 1,
                    max: self.config.max_positions,
                });
            }
        }
        let pos = g.embed(bp.var(self.wpe), positions);
        let mut h = g.add(x, pos);
        let heads = self.config.n_heads;
        let dh = d / heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        for layer in &self.layers {
            let a = g.layer_norm(h, bp.var(layer.ln1_g), bp.var(layer.ln1_b));
            let qkv = g.matmul(a, bp.var(layer.attn_w));
            let qkv = g.add_row(qkv, bp.var(layer.attn_b));
            let mut outs = Vec::with_capacity(heads);
            let mut probs = Vec::with_capacity(heads);
            for head in 0..heads {
                let q = g.slice_cols(qkv, head * dh, (head + 1) * dh);
                let k = g.slice_cols(qkv, d + head * dh, d + (head + 1) * dh);
                let v = g.slice_cols(qkv, 2 * d + head * dh, 2 * d + (head + 1) * dh);
                let s = g.matmul_nt(q, k);
                let s = g.scale(s, inv_sqrt);
                let p = if causal { g.causal_softmax(s) } else { g.softmax(s) };
                probs.push(p);
                outs.push(g.matmul(p, v));
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(probs);
            }
            let o = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
            let o = g.matmul(o, bp.var(layer.proj_w));
            let o = g.add_row(o, bp.var(layer.proj_b));
            h = g.add(h, o);

            let b = g.layer_norm(h, bp.var(layer.ln2_g), bp.var(layer.ln2_b));
            let f = g.matmul(b, bp.var(layer.fc_w));
            let f = g.add_row(f, bp.var(layer.fc_b));
            let f = g.gelu(f);
            let f = g.matmul(f, bp.var(layer.out_w));
            let f = g.add_row(f, bp.var(layer.out_b));
            h = g.add(h, f);
        }
        Ok(g.layer_norm(h, bp.var(self.lnf_g), bp.var(self.lnf_b)))
    }

    /// Output logits for hidden rows through the tied embedding.
    pub fn head(&self, g: &mut Graph<T>, bp: &BoundParams, h: Var) -> Var {
        g.matmul_nt(h, bp.var(self.wte))
    }

    /// Logits `[seq, vocab]` for a sequence placed at positions `0..seq`.
    pub fn forward_lm(&self, g: &mut Graph<T>, bp: &BoundParams, input: LmInput<'_>, causal: bool) -> Result<Var> {
        let x = match input {
            LmInput::Ids(ids) => {
                if ids.len() > self.config.max_positions {
                    return Err(Error::LengthOverflow {
                        len: ids.len(),
                        max: self.config.max_positions,
                    });
                }
                self.embed_tokens(g, bp, ids)?
            }
            LmInput::Embeddings(x) => x,
        };
        let n = g.shape(x)[0];
        if n > self.config.max_positions {
            return Err(Error::LengthOverflow {
                len: n,
                max: self.config.max_positions,
            });
        }
        let positions: Vec<usize> = (0..n).collect();
        let h = self.hidden(g, bp, x, &positions, causal, None)?;
        Ok(self.head(g, bp, h))
    }

    /// Convenience wrapper: logits for `ids` on a fresh graph.
    pub fn logits(&self, ids: &[usize], causal: bool) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bp = self.params.bind(&mut g);
        let out = self.forward_lm(&mut g, &bp, LmInput::Ids(ids), causal)?;
        g.check_finite()?;
        Ok(g.value(out).clone())
    }
}

/// Mean masked cross-entropy of `logits[seq, vocab]` against `targets`.
pub fn loss_lm<T: Scalar>(g: &mut Graph<T>, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
    g.cross_entropy(logits, targets, mask)
}

/// Maximum relative error between analytic parameter gradients of a masked
/// LM loss and central finite differences, over every parameter element.
pub fn grad_check_model(config: ModelConfig, seed: u64) -> Result<f64> {
    use rand::Rng;
    let model = LanguageModel::<f64>::with_init_std(config.clone(), 0.3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.max_positions;
    let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..config.vocab_size)).collect();
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..config.vocab_size)).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    mask[n - 1] = true;

    let loss_of = |store: &ParamStore<f64>| -> Result<f64> {
        let m = LanguageModel {
            params: store.clone(),
            ..model.clone()
        };
        let mut g = Graph::new();
        let bp = m.params.bind(&mut g);
        let logits = m.forward_lm(&mut g, &bp, LmInput::Ids(&ids), true)?;
        let loss = loss_lm(&mut g, logits, &targets, &mask)?;
        g.check_finite()?;
        Ok(g.value(loss).item())
    };

    let mut g = Graph::new();
    let bp = model.params.bind(&mut g);
    let logits = model.forward_lm(&mut g, &bp, LmInput::Ids(&ids), true)?;
    let loss = loss_lm(&mut g, logits, &targets, &mask)?;
    let mut grads = g.backward(loss)?;
    let analytic = bp.gradients(&mut grads, &model.params);

    let eps = crate::gradcheck::FD_EPS;
    let mut worst = 0.0f64;
    let mut store = model.params.clone();
    for p in 0..store.len() {
        for i in 0..store.tensors()[p].numel() {
            let orig = store.tensors()[p].data()[i];
            store.tensors_mut()[p].data_mut()[i] = orig + eps;
            let up = loss_of(&store)?;
            store.tensors_mut()[p].data_mut()[i] = orig - eps;
            let down = loss_of(&store)?;
            store.tensors_mut()[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.tensors[p].data()[i];
            worst = worst.max(crate::gradcheck::relative_error(a, numeric));
        }
    }
    Ok(worst)
}
