//! NMSE evaluation, alpha sweeps, strategy comparison and plots.

mod nmse;
mod plot;
mod report;

use std::collections::BTreeMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jigsaw::{puzzle_accuracy, sample_permutation, shuffle_planes, PermutationLogits};
use crate::model::{bind, reconstruct, ModelParams, Parts};
use crate::synth::{CsiMatrix, Dataset, Split};
use crate::tensor::{Graph, Tensor};
use crate::trainer::{train, Strategy, TrainConfig, TrainLog};

pub use nmse::{nmse_db, nmse_db_raw};
pub use plot::{axis_range, emit_report_plot, emit_train_plot, report_chart, train_log_chart, Chart, Series, MARGIN};
pub use report::{EvalReport, EvalRow, EXACT, REPORT_HEADER};

const EVAL_PERMUTATION_STREAM: u64 = 3;

/// How a checkpoint was trained, as recorded next to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub strategy: Strategy,
    pub alpha: f64,
}

impl Provenance {
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let strategy = kv.get("strategy").map_or(Ok(Strategy::Baseline), |s| s.parse())?;
        let alpha = match kv.get("alpha") {
            Some(a) => a
                .parse()
                .map_err(|_| Error::Config(format!("checkpoint alpha {a:?} is not a number")))?,
            None => 1.0,
        };
        Ok(Provenance { strategy, alpha })
    }
}

/// Mean puzzle accuracy of the permutation head on freshly shuffled samples,
/// seeded by the model seed.
pub fn puzzle_accuracy_on(samples: &[&CsiMatrix], params: &ModelParams) -> Result<f64> {
    let cfg = &params.config;
    let grid = cfg.grid()?;
    let side = grid.padded_side();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(EVAL_PERMUTATION_STREAM);
    let mut sum = 0.0;
    for x in samples {
        let s = sample_permutation(cfg.tiles, &mut rng)?;
        let mut g = Graph::new();
        let bound = bind(params, &mut g, Parts { encoder: true, decoder: false, head: true });
        let input = g.constant(Tensor::new(vec![2, side, side], shuffle_planes(x.planes(), &s, &grid)?)?);
        let code = bound.encoder(&mut g, input)?;
        let j = bound.head(&mut g, code)?;
        sum += puzzle_accuracy(&PermutationLogits::new(cfg.tiles, g.value(j).data().to_vec())?, &s)?;
    }
    Ok(sum / samples.len().max(1) as f64)
}

/// Runs the autoencoder over one split and reports raw-scale NMSE (and puzzle
/// accuracy for models trained with the permutation head).
pub fn evaluate(params: &ModelParams, provenance: &Provenance, dataset: &Dataset, split: Split) -> Result<EvalRow> {
    if dataset.side() != crate::model::NT {
        return Err(Error::Config(format!(
            "model expects {0}x{0} samples, dataset has side {1}",
            crate::model::NT,
            dataset.side()
        )));
    }
    let samples = dataset.split(split);
    if samples.is_empty() {
        return Err(Error::Config(format!("dataset has no {} samples", split.name())));
    }
    let originals: Vec<CsiMatrix> = samples.iter().map(|&x| x.clone()).collect();
    let recon = originals
        .iter()
        .map(|x| reconstruct(x, params))
        .collect::<Result<Vec<_>>>()?;
    let puzzle_acc = match provenance.strategy {
        Strategy::Jpts => Some(puzzle_accuracy_on(&samples, params)?),
        _ => None,
    };
    Ok(EvalRow {
        strategy: provenance.strategy,
        eta: params.config.eta,
        alpha: provenance.alpha,
        n: params.config.tiles,
        seed: params.config.seed,
        nmse_db: nmse_db(&originals, &recon)?,
        puzzle_acc,
        samples: samples.len(),
    })
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed of one sweep point: `seed XOR hash(alpha as text)`.
pub fn alpha_seed(seed: u64, alpha: f64) -> u64 {
    seed ^ fnv1a(alpha.to_string().as_bytes())
}

/// Parses `lo:hi:step` (inclusive) or a comma-separated list. Grid values
/// are rounded to 9 decimals so `0.3:0.8:0.1` yields exactly 0.3, 0.4, ...
pub fn parse_alphas(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse alpha list {spec:?}"));
    let alphas: Vec<f64> = if let [lo, hi, step] = spec.split(':').collect::<Vec<_>>()[..] {
        let (lo, hi, step): (f64, f64, f64) = (
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect()
    } else {
        spec.split(',').map(|a| a.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if alphas.is_empty() || alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Config(format!("alphas {alphas:?} must be non-empty and within [0, 1]")));
    }
    Ok(alphas)
}

/// Rows plus the training log behind each row.
#[derive(Clone, Debug, Default)]
pub struct Study {
    pub report: EvalReport,
    pub logs: Vec<TrainLog>,
}

fn train_and_evaluate(dataset: &Dataset, cfg: &TrainConfig) -> Result<(EvalRow, TrainLog)> {
    let (params, log) = train(dataset, cfg)?;
    let provenance = Provenance {
        strategy: cfg.strategy,
        alpha: cfg.recon_weight(),
    };
    Ok((evaluate(&params, &provenance, dataset, Split::Test)?, log))
}

/// One full train + test-split evaluation per alpha, with per-alpha seeds
/// from [`alpha_seed`]; rows sorted by alpha.
pub fn sweep_alpha(dataset: &Dataset, base: &TrainConfig, alphas: &[f64]) -> Result<Study> {
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut study = Study::default();
    for alpha in sorted {
        let cfg = TrainConfig {
            alpha,
            seed: alpha_seed(base.seed, alpha),
            ..base.clone()
        };
        let (row, log) = train_and_evaluate(dataset, &cfg)?;
        study.report.rows.push(row);
        study.logs.push(log);
    }
    Ok(study)
}

/// Trains baseline, alternative and jigsaw-aided models with identical data
/// and seed, for every seed in `seeds`.
pub fn compare_strategies(dataset: &Dataset, cfg: &TrainConfig, seeds: &[u64]) -> Result<Study> {
    if seeds.is_empty() {
        return Err(Error::Config("compare needs at least one seed".into()));
    }
    let mut study = Study::default();
    for &seed in seeds {
        for strategy in Strategy::ALL {
            let run = TrainConfig {
                strategy,
                seed,
                ..cfg.clone()
            };
            let (row, log) = train_and_evaluate(dataset, &run)?;
            study.report.rows.push(row);
            study.logs.push(log);
        }
    }
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_grid() {
        assert_eq!(parse_alphas("0.3:0.8:0.1").unwrap(), [0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        assert_eq!(parse_alphas("0.5").unwrap(), [0.5]);
        assert_eq!(parse_alphas("0,1").unwrap(), [0.0, 1.0]);
        assert!(parse_alphas("0.5:0.1:0.1").is_err());
        assert!(parse_alphas("1.5").is_err());
        assert!(parse_alphas("a:b:c").is_err());
    }

    #[test]
    fn alpha_seeds_differ_and_repeat() {
        assert_eq!(alpha_seed(7, 0.5), alpha_seed(7, 0.5));
        assert_ne!(alpha_seed(7, 0.5), alpha_seed(7, 0.6));
        // FNV-1a reference value for the empty input.
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn provenance_defaults() {
        let p = Provenance::from_kv(&BTreeMap::new()).unwrap();
        assert_eq!(p, Provenance { strategy: Strategy::Baseline, alpha: 1.0 });
    }
}
