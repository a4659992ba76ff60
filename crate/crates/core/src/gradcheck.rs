//! Finite-difference gradient checks for every differentiable op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central-difference step.
pub const FD_EPS: f64 = 1e-5;

/// Ops accepted by [`grad_check`].
pub const REGISTERED_OPS: &[&str] = &[
    "identity",
    "matmul",
    "matmul_nt",
    "add",
    "add_row",
    "mul",
    "scale",
    "sum",
    "softmax",
    "causal_softmax",
    "layer_norm",
    "gelu",
    "embed",
    "concat",
    "concat_cols",
    "slice",
    "slice_cols",
    "transpose",
    "cross_entropy",
];

/// Ops whose output element depends only on the same input element.
pub const ELEMENTWISE_OPS: &[&str] = &["identity", "add", "mul", "scale", "gelu"];

/// Denominator floor for [`relative_error`]. Central differences on an O(1)
/// loss carry round-off of roughly `f64::EPSILON / FD_EPS` (about 2e-11), so
/// a derivative that is exactly zero analytically must not be judged
/// relative to that noise.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

struct Case {
    inputs: Vec<Tensor<f64>>,
    ids: Vec<usize>,
    targets: Vec<usize>,
    mask: Vec<bool>,
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape {
        [c] => (1, *c),
        _ => {
            let c = *shape.last().unwrap();
            (shape.iter().product::<usize>() / c, c)
        }
    }
}

fn expect_shapes(op: &str, shapes: &[Vec<usize>], n: usize) -> Result<()> {
    if shapes.len() < n || shapes.iter().any(|s| s.is_empty() || s.contains(&0)) {
        return Err(Error::Shape(format!("{op} needs {n} non-empty shapes, got {shapes:?}")));
    }
    Ok(())
}

fn make_case(op: &str, shapes: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Result<Case> {
    let rand_t = |shape: &[usize], rng: &mut ChaCha8Rng| {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    };
    let mut case = Case {
        inputs: Vec::new(),
        ids: Vec::new(),
        targets: Vec::new(),
        mask: Vec::new(),
    };
    match op {
        "identity" | "sum" | "scale" | "gelu" | "softmax" | "causal_softmax" | "slice" | "slice_cols"
        | "transpose" => {
            expect_shapes(op, shapes, 1)?;
            let mut x = rand_t(&shapes[0], rng);
            if op == "gelu" {
                for v in x.data_mut() {
                    *v *= 3.0;
                }
            }
            case.inputs.push(x);
        }
        "add" | "mul" => {
            expect_shapes(op, shapes, 2)?;
            if shapes[0] != shapes[1] {
                return Err(Error::Shape(format!("{op} shapes differ: {shapes:?}")));
            }
            case.inputs.push(rand_t(&shapes[0], rng));
            case.inputs.push(rand_t(&shapes[1], rng));
        }
        "matmul" | "matmul_nt" => {
            expect_shapes(op, shapes, 2)?;
            case.inputs.push(rand_t(&shapes[0], rng));
            case.inputs.push(rand_t(&shapes[1], rng));
        }
        "add_row" => {
            expect_shapes(op, shapes, 1)?;
            let (_, c) = dims2(&shapes[0]);
            case.inputs.push(rand_t(&shapes[0], rng));
            case.inputs.push(rand_t(&[c], rng));
        }
        "layer_norm" => {
            expect_shapes(op, shapes, 1)?;
            let (_, c) = dims2(&shapes[0]);
            case.inputs.push(rand_t(&shapes[0], rng));
            let mut gain = rand_t(&[c], rng);
            for v in gain.data_mut() {
                *v += 1.5;
            }
            case.inputs.push(gain);
            case.inputs.push(rand_t(&[c], rng));
        }
        "embed" => {
            expect_shapes(op, shapes, 1)?;
            let (vocab, _) = dims2(&shapes[0]);
            let n = shapes.get(1).map(|s| s.iter().product()).unwrap_or(4);
            case.inputs.push(rand_t(&shapes[0], rng));
            case.ids = (0..n).map(|_| rng.random_range(0..vocab)).collect();
        }
        "concat" | "concat_cols" => {
            expect_shapes(op, shapes, 1)?;
            for s in shapes {
                case.inputs.push(rand_t(s, rng));
            }
        }
        "cross_entropy" => {
            expect_shapes(op, shapes, 1)?;
            let (rows, vocab) = dims2(&shapes[0]);
            let mut z = rand_t(&shapes[0], rng);
            for v in z.data_mut() {
                *v *= 2.0;
            }
            case.inputs.push(z);
            case.targets = (0..rows).map(|_| rng.random_range(0..vocab)).collect();
            case.mask = (0..rows).map(|_| rng.random_bool(0.6)).collect();
            case.mask[rows - 1] = true;
        }
        other => return Err(Error::UnknownOp(other.to_string())),
    }
    Ok(case)
}

fn apply(op: &str, g: &mut Graph<f64>, xs: &[Var], case: &Case) -> Result<Var> {
    let x = xs[0];
    Ok(match op {
        "identity" => g.identity(x),
        "matmul" => g.matmul(x, xs[1]),
        "matmul_nt" => g.matmul_nt(x, xs[1]),
        "add" => g.add(x, xs[1]),
        "add_row" => g.add_row(x, xs[1]),
        "mul" => g.mul(x, xs[1]),
        "scale" => g.scale(x, -1.75),
        "sum" => g.sum(x),
        "softmax" => g.softmax(x),
        "causal_softmax" => g.causal_softmax(x),
        "layer_norm" => g.layer_norm(x, xs[1], xs[2]),
        "gelu" => g.gelu(x),
        "embed" => g.embed(x, &case.ids),
        "concat" => g.concat_rows(xs),
        "concat_cols" => g.concat_cols(xs),
        "slice" => {
            let rows = dims2(g.shape(x)).0;
            g.slice_rows(x, rows / 3, rows)
        }
        "slice_cols" => {
            let cols = dims2(g.shape(x)).1;
            g.slice_cols(x, cols / 3, cols)
        }
        "transpose" => g.transpose(x),
        "cross_entropy" => g.cross_entropy(x, &case.targets, &case.mask)?,
        other => return Err(Error::UnknownOp(other.to_string())),
    })
}

/// Scalar objective `sum(op(inputs) * weights)` for fixed random weights.
fn objective(op: &str, inputs: &[Tensor<f64>], case: &Case, weight_seed: u64) -> Result<(Graph<f64>, Vec<Var>, Var)> {
    let mut g = Graph::new();
    let xs: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = apply(op, &mut g, &xs, case)?;
    let mut wrng = ChaCha8Rng::seed_from_u64(weight_seed);
    let shape = g.shape(out).to_vec();
    let weights = Tensor::from_fn(&shape, |_| wrng.random_range(0.5..1.5) * if wrng.random_bool(0.5) { 1.0 } else { -1.0 });
    let w = g.leaf(weights);
    let prod = g.mul(out, w);
    let loss = g.sum(prod);
    Ok((g, xs, loss))
}

/// Maximum relative error between analytic and central-difference gradients
/// of `op` over every element of every input, on random inputs drawn from
/// `seed`.
pub fn grad_check(op_name: &str, shapes: &[Vec<usize>], seed: u64) -> Result<f64> {
    if !REGISTERED_OPS.contains(&op_name) {
        return Err(Error::UnknownOp(op_name.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = make_case(op_name, shapes, &mut rng)?;
    let weight_seed = seed ^ 0x9e37_79b9_7f4a_7c15;

    let (mut g, xs, loss) = objective(op_name, &case.inputs, &case, weight_seed)?;
    let grads = g.backward(loss)?;

    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let (g, _, loss) = objective(op_name, inputs, &case, weight_seed)?;
        g.check_finite()?;
        Ok(g.value(loss).item())
    };

    let mut worst = 0.0f64;
    for (k, x) in xs.iter().enumerate() {
        let analytic = grads.wrt(*x);
        for i in 0..case.inputs[k].numel() {
            let mut plus = case.inputs.clone();
            plus[k].data_mut()[i] += FD_EPS;
            let mut minus = case.inputs.clone();
            minus[k].data_mut()[i] -= FD_EPS;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_EPS);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
    }
    Ok(worst)
}
