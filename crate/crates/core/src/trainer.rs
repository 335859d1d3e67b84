//! Training objectives and the seeded training loop.
//!
//! Per sample `x` with a freshly drawn permutation `s` (shuffled input `x̄`):
//!
//! * baseline:    `mse(x, D(E(x)))`
//! * jigsaw:      `α·mse(x, D(E(x))) + (1-α)·CE(S(E(x̄)), s)`
//! * alternative: `α·mse(x, D(E(x))) + (1-α)·mse(x, D(E(x̄)))`
//!
//! where `CE` is the column-wise cross-entropy of the permutation logits
//! against the one-hot target. Batch losses are sample means.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jigsaw::{decode_permutation, puzzle_loss, sample_permutation, shuffle_planes, PermutationLogits, PermutationSpec};
use crate::model::{bind, input_node, Eta, ModelConfig, ModelParams, Parts};
use crate::synth::{CsiMatrix, Dataset, Split};
use crate::tensor::{optimizer_step, AdamConfig, Graph, NodeId, OptimizerState, ParamGrads, Tensor};

/// Loss above which a run is considered diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

const ORDER_STREAM: u64 = 1;
const PERMUTATION_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Baseline,
    Alternative,
    Jpts,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Baseline, Strategy::Alternative, Strategy::Jpts];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Alternative => "alternative",
            Strategy::Jpts => "jpts",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub strategy: Strategy,
    /// Weight of the reconstruction term; ignored by the baseline.
    pub alpha: f64,
    pub eta: Eta,
    pub tiles: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Record wall-clock seconds per epoch. Off gives byte-identical logs.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::Jpts,
            alpha: 0.5,
            eta: Eta::Sixteenth,
            tiles: 4,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            record_time: true,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            eta: self.eta,
            tiles: self.tiles,
            seed: self.seed,
        }
    }

    /// Effective reconstruction weight.
    pub fn recon_weight(&self) -> f64 {
        match self.strategy {
            Strategy::Baseline => 1.0,
            _ => self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !crate::jigsaw::SUPPORTED_TILE_COUNTS.contains(&self.tiles) {
            return Err(Error::Config(format!("tile count {} unsupported", self.tiles)));
        }
        Ok(())
    }

    /// Extra keys stored next to a checkpoint.
    pub fn checkpoint_keys(&self) -> Vec<(String, String)> {
        vec![
            ("strategy".into(), self.strategy.to_string()),
            ("alpha".into(), self.alpha.to_string()),
        ]
    }
}

/// Result of one forward/backward pass over a batch.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: f64,
    /// Mean reconstruction MSE on the clean inputs.
    pub recon: f64,
    /// Mean auxiliary term: puzzle cross-entropy (jigsaw) or shuffled-input
    /// reconstruction MSE (alternative); zero for the baseline.
    pub aux: f64,
    /// Mean fraction of correctly placed tiles (jigsaw only).
    pub puzzle_acc: f64,
    pub grads: ParamGrads,
}

/// Forward and backward pass for `batch` with explicit permutations (one per
/// sample; ignored by the baseline).
pub fn objective_step(
    batch: &[&CsiMatrix],
    perms: &[PermutationSpec],
    params: &ModelParams,
    cfg: &TrainConfig,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    if cfg.strategy != Strategy::Baseline && perms.len() != batch.len() {
        return Err(Error::Contract(format!(
            "{} permutations for a batch of {}",
            perms.len(),
            batch.len()
        )));
    }
    let alpha = cfg.recon_weight();
    let mcfg = &params.config;
    let grid = mcfg.grid()?;
    let mut g = Graph::new();
    let parts = match cfg.strategy {
        Strategy::Jpts => Parts::ALL,
        _ => Parts::AUTOENCODER,
    };
    let bound = bind(params, &mut g, parts);

    let mut terms: Vec<NodeId> = Vec::with_capacity(batch.len());
    let (mut recon_sum, mut aux_sum, mut acc_sum) = (0.0, 0.0, 0.0);
    for (i, x) in batch.iter().enumerate() {
        let input = input_node(&mut g, x, mcfg)?;
        let target = g.constant(Tensor::new(vec![2, x.side(), x.side()], x.planes().to_vec())?);
        let code = bound.encoder(&mut g, input)?;
        let recon_out = bound.decoder(&mut g, code)?;
        let recon = g.mse(recon_out, target)?;
        recon_sum += g.value(recon).data()[0];

        let term = match cfg.strategy {
            Strategy::Baseline => recon,
            Strategy::Jpts | Strategy::Alternative => {
                let s = &perms[i];
                let side = grid.padded_side();
                let shuffled = g.constant(Tensor::new(vec![2, side, side], shuffle_planes(x.planes(), s, &grid)?)?);
                let shuffled_code = bound.encoder(&mut g, shuffled)?;
                let aux = if cfg.strategy == Strategy::Jpts {
                    let j = bound.head(&mut g, shuffled_code)?;
                    let logits = PermutationLogits::new(s.n(), g.value(j).data().to_vec())?;
                    let hits = decode_permutation(&logits).iter().zip(s.order()).filter(|(a, b)| a == b).count();
                    acc_sum += hits as f64 / s.n() as f64;
                    puzzle_loss(&mut g, j, s)?
                } else {
                    let out = bound.decoder(&mut g, shuffled_code)?;
                    g.mse(out, target)?
                };
                aux_sum += g.value(aux).data()[0];
                let a = g.scale(recon, alpha)?;
                let b = g.scale(aux, 1.0 - alpha)?;
                g.add(a, b)?
            }
        };
        terms.push(term);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    let n = batch.len() as f64;
    let loss = g.scale(total, 1.0 / n)?;

    let mut grads_by_node = g.backward(loss)?;
    let mut grads = ParamGrads::new();
    for (name, t) in params.params.iter() {
        let grad = bound
            .iter()
            .find(|(n, _)| *n == name)
            .and_then(|(_, id)| grads_by_node.take(id))
            .unwrap_or_else(|| vec![0.0; t.numel()]);
        grads.insert(name.to_string(), grad);
    }
    Ok(StepOutput {
        loss: g.value(loss).data()[0],
        recon: recon_sum / n,
        aux: aux_sum / n,
        puzzle_acc: acc_sum / n,
        grads,
    })
}

fn draw_perms(n: usize, count: usize, rng: &mut impl Rng) -> Result<Vec<PermutationSpec>> {
    (0..count).map(|_| sample_permutation(n, rng)).collect()
}

/// Jigsaw-aided objective with one fresh permutation per sample.
pub fn jpts_step(batch: &[&CsiMatrix], params: &ModelParams, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<StepOutput> {
    if cfg.strategy != Strategy::Jpts {
        return Err(Error::Contract(format!("jpts_step called with strategy {}", cfg.strategy)));
    }
    let perms = draw_perms(cfg.tiles, batch.len(), rng)?;
    objective_step(batch, &perms, params, cfg)
}

/// Alternative objective: reconstruct the clean sample from the shuffled one.
pub fn alternative_step(
    batch: &[&CsiMatrix],
    params: &ModelParams,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<StepOutput> {
    if cfg.strategy != Strategy::Alternative {
        return Err(Error::Contract(format!("alternative_step called with strategy {}", cfg.strategy)));
    }
    let perms = draw_perms(cfg.tiles, batch.len(), rng)?;
    objective_step(batch, &perms, params, cfg)
}

/// Plain reconstruction objective.
pub fn baseline_step(batch: &[&CsiMatrix], params: &ModelParams, cfg: &TrainConfig) -> Result<StepOutput> {
    let cfg = TrainConfig {
        strategy: Strategy::Baseline,
        ..cfg.clone()
    };
    objective_step(batch, &[], params, &cfg)
}

/// Seeded shuffle of `0..len` cut into batches; the last one may be short.
pub fn batch_iterator(len: usize, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Reconstruction MSE on the validation split.
    pub val_loss: f64,
    pub recon_term: f64,
    pub puzzle_term: f64,
    pub puzzle_acc: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,train_loss,val_loss,recon_term,puzzle_term,puzzle_acc,seconds";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.train_loss, self.val_loss, self.recon_term, self.puzzle_term, self.puzzle_acc, self.seconds
        )
    }
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(TRAIN_LOG_HEADER) {
            return Err(Error::Config("not a training log: header mismatch".into()));
        }
        let mut records = Vec::new();
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let bad = || Error::Config(format!("training log row {}: cannot parse {line:?}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |k: usize| f[k].trim().parse::<f64>().map_err(|_| bad());
            records.push(EpochRecord {
                epoch: f[0].trim().parse().map_err(|_| bad())?,
                train_loss: num(1)?,
                val_loss: num(2)?,
                recon_term: num(3)?,
                puzzle_term: num(4)?,
                puzzle_acc: num(5)?,
                seconds: num(6)?,
            });
        }
        Ok(TrainLog { records })
    }
}

/// Mean reconstruction MSE of the autoencoder over `samples`.
pub fn reconstruction_mse(samples: &[&CsiMatrix], params: &ModelParams) -> Result<f64> {
    let mut sum = 0.0;
    for x in samples {
        let y = crate::model::reconstruct(x, params)?;
        let se: f64 = x.planes().iter().zip(y.planes()).map(|(a, b)| (a - b) * (a - b)).sum();
        sum += se / x.planes().len() as f64;
    }
    Ok(sum / samples.len().max(1) as f64)
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    train_with(dataset, cfg, |_| Ok(()))
}

/// Like [`train`], calling `on_epoch` after every epoch so callers can stream
/// the log; on divergence the records seen so far have already been emitted.
pub fn train_with(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    let train_set = dataset.split(Split::Train);
    let val_set = dataset.split(Split::Validation);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty train and validation splits, got {} and {}",
            train_set.len(),
            val_set.len()
        )));
    }
    if cfg.batch_size > train_set.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} training samples",
            cfg.batch_size,
            train_set.len()
        )));
    }

    let mut params = ModelParams::init(cfg.model_config())?;
    let mut state = OptimizerState::new(&params.params, cfg.adam);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(ORDER_STREAM);
    let mut perm_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    perm_rng.set_stream(PERMUTATION_STREAM);

    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let (mut loss, mut recon, mut aux, mut acc) = (0.0, 0.0, 0.0, 0.0);
        for (b, idx) in batch_iterator(train_set.len(), cfg.batch_size, &mut order_rng)?.into_iter().enumerate() {
            let batch: Vec<&CsiMatrix> = idx.iter().map(|&i| train_set[i]).collect();
            let out = match cfg.strategy {
                Strategy::Baseline => baseline_step(&batch, &params, cfg)?,
                Strategy::Jpts => jpts_step(&batch, &params, cfg, &mut perm_rng)?,
                Strategy::Alternative => alternative_step(&batch, &params, cfg, &mut perm_rng)?,
            };
            if !out.loss.is_finite() || out.loss > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss: out.loss,
                });
            }
            let w = batch.len() as f64;
            loss += out.loss * w;
            recon += out.recon * w;
            aux += out.aux * w;
            acc += out.puzzle_acc * w;
            optimizer_step(&mut params.params, &out.grads, &mut state)?;
        }
        let n = train_set.len() as f64;
        let val_loss = reconstruction_mse(&val_set, &params)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss / n,
            val_loss,
            recon_term: recon / n,
            puzzle_term: aux / n,
            puzzle_acc: acc / n,
            seconds: if cfg.record_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        on_epoch(&record)?;
        log.records.push(record);
    }
    Ok((params, log))
}
