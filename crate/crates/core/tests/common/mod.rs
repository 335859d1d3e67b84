//! Helpers shared by the integration tests: finite-difference gradient
//! checks, scalar reference implementations and small fixtures.
#![allow(dead_code)]

use csi_jigsaw::model::{Eta, ModelConfig, ModelParams};
use csi_jigsaw::synth::{generate_dataset, ChannelConfig, CsiMatrix, Dataset, SplitCounts};
use csi_jigsaw::tensor::{Graph, NodeId, Tensor};
use csi_jigsaw::trainer::{objective_step, TrainConfig};
use csi_jigsaw::jigsaw::PermutationSpec;
use csi_jigsaw::Result;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
pub const FD_FLOOR: f64 = 1e-7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Uniform values bounded away from zero, so a probe never steps across the
/// leaky-ReLU kink.
pub fn off_kink(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let mut t = uniform(rng, shape);
    for v in t.data_mut() {
        *v = v.signum() * (0.05 + 0.95 * v.abs());
    }
    t
}

type Build = Box<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>>;

/// One randomized instance of an op under test: its inputs (all trainable)
/// and a builder producing a scalar loss from them.
pub struct Case {
    pub inputs: Vec<Tensor>,
    pub build: Build,
}

/// Reduces any tensor to a scalar through fixed random weights.
fn project(weights: Tensor) -> impl Fn(&mut Graph, NodeId) -> Result<NodeId> {
    move |g: &mut Graph, out: NodeId| {
        let n = g.value(out).numel();
        let row = g.reshape(out, vec![1, n])?;
        let w = g.constant(weights.clone());
        let s = g.matmul(row, w)?;
        g.reshape(s, vec![1])
    }
}

fn projected(rng: &mut ChaCha8Rng, out_numel: usize, inputs: Vec<Tensor>, f: fn(&mut Graph, &[NodeId]) -> Result<NodeId>) -> Case {
    let p = project(uniform(rng, &[out_numel, 1]));
    Case {
        inputs,
        build: Box::new(move |g, ids| {
            let out = f(g, ids)?;
            p(g, out)
        }),
    }
}

pub const OP_KINDS: [&str; 11] = [
    "matmul", "conv2d", "add", "leaky_relu", "sigmoid", "softmax_columns", "mse", "reshape", "concat", "scale",
    "column_cross_entropy",
];

/// Draws a random instance of op `kind`.
pub fn op_case(kind: &str, rng: &mut ChaCha8Rng) -> Case {
    match kind {
        "matmul" => {
            let (m, k, n) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6));
            let inputs = vec![uniform(rng, &[m, k]), uniform(rng, &[k, n])];
            projected(rng, m * n, inputs, |g, x| g.matmul(x[0], x[1]))
        }
        "conv2d" => {
            let (c, o) = (rng.gen_range(1..4), rng.gen_range(1..4));
            let k = [1, 3, 5][rng.gen_range(0..3)];
            let (h, w) = (rng.gen_range(k..k + 4), rng.gen_range(k..k + 4));
            let inputs = vec![uniform(rng, &[c, h, w]), uniform(rng, &[o, c, k, k]), uniform(rng, &[o])];
            projected(rng, o * h * w, inputs, |g, x| g.conv2d(x[0], x[1], x[2]))
        }
        "add" => {
            let shape = [rng.gen_range(1..5), rng.gen_range(1..5)];
            let inputs = vec![uniform(rng, &shape), uniform(rng, &shape)];
            projected(rng, shape[0] * shape[1], inputs, |g, x| g.add(x[0], x[1]))
        }
        "leaky_relu" => {
            let shape = [rng.gen_range(1..5), rng.gen_range(1..7)];
            let inputs = vec![off_kink(rng, &shape)];
            projected(rng, shape[0] * shape[1], inputs, |g, x| g.leaky_relu(x[0], 0.3))
        }
        "sigmoid" => {
            let shape = [rng.gen_range(1..5), rng.gen_range(1..7)];
            let mut t = uniform(rng, &shape);
            t.data_mut().iter_mut().for_each(|v| *v *= 4.0);
            projected(rng, shape[0] * shape[1], vec![t], |g, x| g.sigmoid(x[0]))
        }
        "softmax_columns" => {
            let shape = [rng.gen_range(1..6), rng.gen_range(1..6)];
            let mut t = uniform(rng, &shape);
            t.data_mut().iter_mut().for_each(|v| *v *= 3.0);
            projected(rng, shape[0] * shape[1], vec![t], |g, x| g.softmax_columns(x[0]))
        }
        "mse" => {
            let shape = [rng.gen_range(1..4), rng.gen_range(1..6)];
            Case {
                inputs: vec![uniform(rng, &shape), uniform(rng, &shape)],
                build: Box::new(|g, x| g.mse(x[0], x[1])),
            }
        }
        "reshape" => {
            let (a, b) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let inputs = vec![uniform(rng, &[a, b])];
            let p = project(uniform(rng, &[a * b, 1]));
            Case {
                inputs,
                build: Box::new(move |g, x| {
                    let r = g.reshape(x[0], vec![b, a])?;
                    // Break the symmetry with the projection's own reshape.
                    let s = g.sigmoid(r)?;
                    p(g, s)
                }),
            }
        }
        "concat" => {
            let rank = rng.gen_range(1..4);
            let axis = rng.gen_range(0..rank);
            let base: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..4)).collect();
            let parts = rng.gen_range(1..4);
            let inputs: Vec<Tensor> = (0..parts)
                .map(|_| {
                    let mut s = base.clone();
                    s[axis] = rng.gen_range(1..4);
                    uniform(rng, &s)
                })
                .collect();
            let total: usize = inputs.iter().map(Tensor::numel).sum();
            let p = project(uniform(rng, &[total, 1]));
            Case {
                inputs,
                build: Box::new(move |g, x| {
                    let c = g.concat(x, axis)?;
                    p(g, c)
                }),
            }
        }
        "scale" => {
            let shape = [rng.gen_range(1..5), rng.gen_range(1..5)];
            let factor: f64 = rng.gen_range(-2.0..2.0);
            let inputs = vec![uniform(rng, &shape)];
            let p = project(uniform(rng, &[shape[0] * shape[1], 1]));
            Case {
                inputs,
                build: Box::new(move |g, x| {
                    let s = g.scale(x[0], factor)?;
                    p(g, s)
                }),
            }
        }
        "column_cross_entropy" => {
            let (r, c) = (rng.gen_range(2..10), rng.gen_range(1..10));
            let targets: Vec<usize> = (0..c).map(|_| rng.gen_range(0..r)).collect();
            let mut t = uniform(rng, &[r, c]);
            t.data_mut().iter_mut().for_each(|v| *v *= 3.0);
            Case {
                inputs: vec![t],
                build: Box::new(move |g, x| g.column_cross_entropy(x[0], targets.clone())),
            }
        }
        other => panic!("unknown op kind {other}"),
    }
}

fn eval_case(case: &Case, inputs: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = (case.build)(&mut g, &ids).unwrap();
    g.value(loss).data()[0]
}

/// Relative errors of `probes` randomly chosen input coordinates.
pub fn check_case(case: &Case, probes: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = case.inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = (case.build)(&mut g, &ids).unwrap();
    let grads = g.backward(loss).unwrap();
    (0..probes)
        .map(|_| {
            let k = rng.gen_range(0..case.inputs.len());
            let i = rng.gen_range(0..case.inputs[k].numel());
            let analytic = grads.get(ids[k]).expect("gradient for every input")[i];
            let mut plus = case.inputs.clone();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = case.inputs.clone();
            minus[k].data_mut()[i] -= FD_STEP;
            let numeric = (eval_case(case, &plus) - eval_case(case, &minus)) / (2.0 * FD_STEP);
            rel_err(analytic, numeric)
        })
        .collect()
}

/// `(probes, worst relative error)` for one op kind over `instances` random
/// instances, `per_instance` probes each.
pub fn op_gradient_check(kind: &str, instances: usize, per_instance: usize, seed: u64) -> (usize, f64) {
    let mut rng = rng(seed);
    let mut errs = Vec::new();
    for _ in 0..instances {
        let case = op_case(kind, &mut rng);
        errs.extend(check_case(&case, per_instance, &mut rng));
    }
    (errs.len(), errs.iter().copied().fold(0.0, f64::max))
}

/// Small synthetic dataset with the default generator.
pub fn small_dataset(total: usize, seed: u64) -> Dataset {
    let cfg = ChannelConfig {
        seed,
        ..ChannelConfig::default()
    };
    generate_dataset(&cfg, SplitCounts::proportional(total)).unwrap()
}

pub fn model(eta: Eta, tiles: usize, seed: u64) -> ModelParams {
    ModelParams::init(ModelConfig { eta, tiles, seed }).unwrap()
}

/// Full objective loss with one parameter coordinate shifted by `delta`.
pub fn shifted_loss(
    batch: &[&CsiMatrix],
    perms: &[PermutationSpec],
    params: &ModelParams,
    cfg: &TrainConfig,
    name: &str,
    index: usize,
    delta: f64,
) -> f64 {
    let mut p = params.clone();
    for (n, t) in p.params.iter_mut() {
        if n == name {
            t.data_mut()[index] += delta;
        }
    }
    objective_step(batch, perms, &p, cfg).unwrap().loss
}

/// Direct scalar NMSE in dB over pairs of raw real vectors.
pub fn nmse_db_oracle(original: &[Vec<f64>], recon: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in original.iter().zip(recon) {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..x.len() {
            num += (x[i] - y[i]) * (x[i] - y[i]);
            den += x[i] * x[i];
        }
        acc += num / den;
    }
    10.0 * (acc / original.len() as f64).log10()
}

use csi_jigsaw::synth::{channel_from_paths, synth_spatial_channel, AngularDelayTransform, ComplexMatrix, Path};
use num_complex::Complex64;
use rand_distr::StandardNormal;

pub fn random_complex(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let data = (0..rows * cols)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    ComplexMatrix::new(rows, cols, data).unwrap()
}

/// Largest energy fraction of `h` inside any 3x3 window; the angle axis
/// (columns) wraps around, the delay axis does not.
pub fn best_3x3_fraction(h: &ComplexMatrix) -> f64 {
    let (rows, cols) = (h.rows(), h.cols());
    let total = h.frobenius_norm_sqr();
    let mut best: f64 = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let mut e = 0.0;
            for dr in 0..3 {
                let rr = r + dr;
                if rr == 0 || rr > rows {
                    continue;
                }
                for dc in 0..3 {
                    let cc = (c + cols + dc - 1) % cols;
                    e += h.get(rr - 1, cc).norm_sqr();
                }
            }
            best = best.max(e);
        }
    }
    best / total
}

/// Energy concentration of one random single-path channel drawn with the
/// default generator's delay and angle laws.
pub fn single_path_concentration(seed: u64, transform: &AngularDelayTransform) -> f64 {
    let cfg = ChannelConfig {
        min_paths: 1,
        max_paths: 1,
        seed,
        ..ChannelConfig::default()
    };
    let h = synth_spatial_channel(&cfg, &mut rng(seed)).unwrap();
    best_3x3_fraction(&transform.forward(&h).unwrap())
}

/// Fraction of energy in the first `nt` delay rows of a default channel.
pub fn retained_energy(seed: u64, transform: &AngularDelayTransform) -> f64 {
    let cfg = ChannelConfig::default();
    let h = transform.forward(&synth_spatial_channel(&cfg, &mut rng(seed)).unwrap()).unwrap();
    let kept: f64 = h.data()[..cfg.nt * cfg.nt].iter().map(|z| z.norm_sqr()).sum();
    kept / h.frobenius_norm_sqr()
}

/// Fraction of `|H_a|` entries below 1% of the largest magnitude.
pub fn sparsity(x: &CsiMatrix) -> f64 {
    let h = x.to_complex();
    let max = h.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    h.data().iter().filter(|z| z.norm() < 0.01 * max).count() as f64 / h.data().len() as f64
}

/// Worst-case `(norm error, round-trip error)` of the transform on `count`
/// random `nc x nt` matrices.
pub fn transform_errors(count: usize, seed: u64) -> (f64, f64) {
    let t = AngularDelayTransform::new(1024, 32).unwrap();
    let mut r = rng(seed);
    let (mut norm_err, mut trip_err) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let h = random_complex(&mut r, 1024, 32);
        let a = t.forward(&h).unwrap();
        norm_err = norm_err.max((a.frobenius_norm_sqr().sqrt() - h.frobenius_norm_sqr().sqrt()).abs());
        let back = t.inverse(&a).unwrap();
        for (x, y) in back.data().iter().zip(h.data()) {
            trip_err = trip_err.max((x - y).norm());
        }
    }
    (norm_err, trip_err)
}

pub fn path(delay: f64, angle: f64, gain: Complex64) -> Path {
    Path { delay, angle, gain }
}

pub fn single_channel(nc: usize, nt: usize, p: Path) -> ComplexMatrix {
    channel_from_paths(nc, nt, &[p])
}

use csi_jigsaw::synth::Split;

/// Four training samples, reused as the validation and test splits.
pub fn memorization_set(seed: u64) -> Dataset {
    let src = small_dataset(7, seed);
    let train: Vec<CsiMatrix> = src.samples().iter().take(4).cloned().collect();
    let mut ds = Dataset::default();
    for split in [Split::Train, Split::Validation, Split::Test] {
        for x in &train {
            ds.push(x.clone(), split);
        }
    }
    ds
}

/// Baseline config that takes exactly one optimizer step per epoch on
/// [`memorization_set`].
pub fn overfit_config(steps: usize) -> TrainConfig {
    TrainConfig {
        strategy: csi_jigsaw::trainer::Strategy::Baseline,
        alpha: 1.0,
        eta: Eta::Quarter,
        epochs: steps,
        batch_size: 4,
        seed: 11,
        adam: csi_jigsaw::tensor::AdamConfig { lr: 3e-3, ..Default::default() },
        record_time: false,
        ..TrainConfig::default()
    }
}

/// Column cross-entropy summed over columns, by direct scalar evaluation.
pub fn cross_entropy_oracle(j: &[f64], n: usize, order: &[usize]) -> f64 {
    (0..n)
        .map(|c| {
            let col: Vec<f64> = (0..n).map(|r| j[r * n + c]).collect();
            let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + col.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - col[order[c]]
        })
        .sum()
}

pub fn mse_oracle(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}
