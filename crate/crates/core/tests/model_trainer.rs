mod common;

use common::*;
use csi_jigsaw::eval::{evaluate, Provenance};
use csi_jigsaw::jigsaw::{sample_permutation, shuffle_planes, PermutationSpec, TileGrid};
use csi_jigsaw::model::*;
use csi_jigsaw::synth::{CsiMatrix, Normalization, Split};
use csi_jigsaw::tensor::{encode_checkpoint, Tensor};
use csi_jigsaw::trainer::*;
use csi_jigsaw::Error;
use rand::Rng;

fn cfg(strategy: Strategy, alpha: f64) -> TrainConfig {
    TrainConfig {
        strategy,
        alpha,
        eta: Eta::ThirtySecond,
        seed: 4,
        ..TrainConfig::default()
    }
}

fn batch(ds: &csi_jigsaw::synth::Dataset, k: usize) -> Vec<&CsiMatrix> {
    ds.split(Split::Train).into_iter().take(k).collect()
}

fn grad_norm(out: &StepOutput, prefix: &str) -> f64 {
    out.grads
        .iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .flat_map(|(_, g)| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Reconstruction MSE and puzzle cross-entropy via the deployed
/// encode/decode/head paths, one sample at a time.
fn independent_terms(x: &CsiMatrix, s: &PermutationSpec, params: &ModelParams) -> (f64, f64, f64) {
    let recon = mse_oracle(&decode(&encode(x, params).unwrap(), params).unwrap(), x.planes());
    let grid = TileGrid::new(s.n(), 32).unwrap();
    let shuffled = CsiMatrix::new(32, shuffle_planes(x.planes(), s, &grid).unwrap(), Normalization::CENTERED).unwrap();
    let code = encode(&shuffled, params).unwrap();
    let j = permutation_head(&code, params).unwrap();
    let puzzle = cross_entropy_oracle(j.values(), s.n(), s.order());
    let shuffled_recon = mse_oracle(&decode(&code, params).unwrap(), x.planes());
    (recon, puzzle, shuffled_recon)
}

#[test]
fn codeword_lengths() {
    let expected = [512, 256, 128, 64, 32];
    for (eta, v) in Eta::ALL.into_iter().zip(expected) {
        assert_eq!(eta.codeword_len(32), v);
        let p = model(eta, 4, 0);
        let x = small_dataset(7, 1).samples()[0].clone();
        assert_eq!(encode(&x, &p).unwrap().len(), v);
        assert_eq!(decode(&encode(&x, &p).unwrap(), &p).unwrap().len(), 2 * 32 * 32);
        assert_eq!(p.count("head"), v * 16 + 16);
    }
    assert_eq!("1/16".parse::<Eta>().unwrap(), Eta::Sixteenth);
    assert!("1/3".parse::<Eta>().is_err());
}

#[test]
fn deployed_encoder_never_builds_the_head() {
    let x = small_dataset(7, 2).samples()[0].clone();
    for tiles in [4, 9] {
        let p = model(Eta::Sixteenth, tiles, 1);
        let (g, c) = trace_encode(&x, &p).unwrap();
        assert_eq!(g.value(c).numel(), 128);
        for id in 0..g.len() {
            assert_ne!(g.value(id).shape(), [tiles, tiles], "node {id} looks like permutation logits");
            assert_ne!(g.value(id).shape(), [tiles * tiles, 128], "head weights bound in the encoder graph");
        }
        // Repeated evaluation is bit-identical.
        assert_eq!(encode(&x, &p).unwrap(), encode(&x, &p).unwrap());
    }
}

#[test]
fn zero_weights_give_zero_codeword_and_logits() {
    let mut p = model(Eta::Sixteenth, 4, 3);
    for (_, t) in p.params.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let x = CsiMatrix::new(32, vec![0.0; 2048], Normalization::CENTERED).unwrap();
    let c = encode(&x, &p).unwrap();
    assert!(c.values().iter().all(|&v| v == 0.0));
    assert!(permutation_head(&c, &p).unwrap().values().iter().all(|&v| v == 0.0));
}

#[test]
fn decoder_outputs_are_bounded() {
    let p = model(Eta::SixtyFourth, 4, 5);
    let mut r = rng(5);
    for _ in 0..1000 {
        let c = Codeword::new((0..32).map(|_| r.gen_range(-20.0..20.0)).collect());
        assert!(decode(&c, &p).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert!(matches!(decode(&Codeword::new(vec![0.0; 31]), &p), Err(Error::Shape(_))));
    assert!(matches!(permutation_head(&Codeword::new(vec![0.0; 33]), &p), Err(Error::Shape(_))));
}

#[test]
fn alpha_one_is_the_baseline() {
    let ds = small_dataset(14, 6);
    let b = batch(&ds, 3);
    let params = model(Eta::ThirtySecond, 4, 4);
    let base = baseline_step(&b, &params, &cfg(Strategy::Baseline, 0.3)).unwrap();
    for strategy in [Strategy::Jpts, Strategy::Alternative] {
        let out = objective_step(&b, &perms(3, 1), &params, &cfg(strategy, 1.0)).unwrap();
        assert!((out.loss - base.loss).abs() <= 1e-12, "{strategy}: {} vs {}", out.loss, base.loss);
        for (name, g) in &base.grads {
            let d = g.iter().zip(&out.grads[name]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-12, "{strategy} {name}: {d:e}");
        }
        assert_eq!(grad_norm(&out, "head"), 0.0);
    }
}

fn perms(count: usize, seed: u64) -> Vec<PermutationSpec> {
    let mut r = rng(seed);
    (0..count).map(|_| sample_permutation(4, &mut r).unwrap()).collect()
}

#[test]
fn alpha_zero_is_the_puzzle_alone() {
    let ds = small_dataset(14, 7);
    let b = batch(&ds, 3);
    let params = model(Eta::ThirtySecond, 4, 4);
    let ps = perms(3, 2);
    let out = objective_step(&b, &ps, &params, &cfg(Strategy::Jpts, 0.0)).unwrap();
    assert_eq!(grad_norm(&out, "dec"), 0.0);
    assert!(grad_norm(&out, "enc") > 0.0, "puzzle loss must reach the encoder");
    assert!(grad_norm(&out, "head") > 0.0);
    let puzzle: f64 = b.iter().zip(&ps).map(|(x, s)| independent_terms(x, s, &params).1).sum::<f64>() / 3.0;
    assert!((out.loss - puzzle).abs() <= 1e-12, "{} vs {puzzle}", out.loss);
}

#[test]
fn alpha_half_matches_independent_terms() {
    let ds = small_dataset(14, 8);
    let b = batch(&ds, 4);
    let params = model(Eta::ThirtySecond, 4, 9);
    let ps = perms(4, 3);
    let (mut recon, mut puzzle, mut shuffled) = (0.0, 0.0, 0.0);
    for (x, s) in b.iter().zip(&ps) {
        let t = independent_terms(x, s, &params);
        recon += t.0 / 4.0;
        puzzle += t.1 / 4.0;
        shuffled += t.2 / 4.0;
    }
    let jpts = objective_step(&b, &ps, &params, &cfg(Strategy::Jpts, 0.5)).unwrap();
    assert!((jpts.loss - (recon + puzzle) / 2.0).abs() <= 1e-12);
    assert!((jpts.recon - recon).abs() <= 1e-12 && (jpts.aux - puzzle).abs() <= 1e-12);
    let alt = objective_step(&b, &ps, &params, &cfg(Strategy::Alternative, 0.5)).unwrap();
    assert!((alt.loss - (recon + shuffled) / 2.0).abs() <= 1e-12);
    assert_eq!(grad_norm(&alt, "head"), 0.0);
}

#[test]
fn identity_permutation_makes_the_alternative_a_baseline() {
    let ds = small_dataset(14, 9);
    let b = batch(&ds, 2);
    let params = model(Eta::ThirtySecond, 4, 2);
    let ids = vec![PermutationSpec::identity(4); 2];
    let base = baseline_step(&b, &params, &cfg(Strategy::Baseline, 1.0)).unwrap();
    for alpha in [0.0, 0.25, 0.9] {
        let out = objective_step(&b, &ids, &params, &cfg(Strategy::Alternative, alpha)).unwrap();
        assert!((out.loss - base.loss).abs() <= 1e-12);
        assert!((out.recon - out.aux).abs() <= 1e-15);
    }
}

#[test]
fn step_functions_check_their_strategy() {
    let ds = small_dataset(7, 1);
    let b = batch(&ds, 1);
    let params = model(Eta::ThirtySecond, 4, 2);
    let mut r = rng(1);
    assert!(matches!(jpts_step(&b, &params, &cfg(Strategy::Baseline, 0.5), &mut r), Err(Error::Contract(_))));
    assert!(matches!(alternative_step(&b, &params, &cfg(Strategy::Jpts, 0.5), &mut r), Err(Error::Contract(_))));
    assert!(jpts_step(&b, &params, &cfg(Strategy::Jpts, 0.5), &mut r).is_ok());
}

#[test]
fn training_rejects_bad_configs() {
    let ds = small_dataset(7, 1);
    let bad = |c: TrainConfig| matches!(train(&ds, &c), Err(Error::Config(_)));
    assert!(bad(TrainConfig { alpha: 1.5, ..cfg(Strategy::Jpts, 0.5) }));
    assert!(bad(TrainConfig { tiles: 5, ..cfg(Strategy::Jpts, 0.5) }));
    assert!(bad(TrainConfig { batch_size: 6, ..cfg(Strategy::Jpts, 0.5) }));
    assert!(bad(TrainConfig { epochs: 0, ..cfg(Strategy::Jpts, 0.5) }));
    let mut only_train = csi_jigsaw::synth::Dataset::default();
    only_train.push(ds.samples()[0].clone(), Split::Train);
    assert!(matches!(train(&only_train, &cfg(Strategy::Baseline, 1.0)), Err(Error::Config(_))));
}

#[test]
fn divergence_aborts_with_the_log_flushed() {
    let ds = small_dataset(14, 2);
    let c = TrainConfig {
        epochs: 3,
        batch_size: 5,
        adam: csi_jigsaw::tensor::AdamConfig {
            lr: 1e9,
            ..Default::default()
        },
        ..cfg(Strategy::Jpts, 0.0)
    };
    let mut seen = Vec::new();
    match train_with(&ds, &c, |r| {
        seen.push(r.epoch);
        Ok(())
    }) {
        Err(Error::Divergence { epoch, .. }) => assert_eq!(seen.len(), epoch - 1),
        other => panic!("expected divergence, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn training_is_bit_reproducible() {
    let ds = small_dataset(21, 3);
    let c = TrainConfig {
        epochs: 2,
        batch_size: 5,
        tiles: 9,
        record_time: false,
        ..cfg(Strategy::Jpts, 0.6)
    };
    let (p1, l1) = train(&ds, &c).unwrap();
    let (p2, l2) = train(&ds, &c).unwrap();
    assert_eq!(l1.to_csv(), l2.to_csv());
    assert_eq!(l1.records.len(), 2);
    assert_eq!(encode_checkpoint(&p1.params), encode_checkpoint(&p2.params));
    let (p3, _) = train(&ds, &TrainConfig { seed: 5, ..c }).unwrap();
    assert_ne!(p1, p3);
}

#[test]
fn checkpoint_round_trip_keeps_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jptw");
    let c = cfg(Strategy::Alternative, 0.7);
    let p = ModelParams::init(c.model_config()).unwrap();
    save_model(&path, &p, &c.checkpoint_keys()).unwrap();
    let (back, kv) = load_model(&path).unwrap();
    assert_eq!(back, p);
    let prov = Provenance::from_kv(&kv).unwrap();
    assert_eq!((prov.strategy, prov.alpha), (Strategy::Alternative, 0.7));
    assert_eq!(kv["v"], "64");
}

#[test]
fn untrained_model_is_no_better_than_zero() {
    let ds = small_dataset(70, 4);
    let p = model(Eta::Sixteenth, 4, 4);
    let prov = Provenance { strategy: Strategy::Baseline, alpha: 1.0 };
    let row = evaluate(&p, &prov, &ds, Split::Test).unwrap();
    assert!(row.nmse_db > -1.0, "{}", row.nmse_db);
    assert_eq!(row.samples, 10);
    assert_eq!(evaluate(&p, &prov, &ds, Split::Test).unwrap(), row);
    assert!(row.puzzle_acc.is_none());
}

#[test]
fn parameter_set_shapes() {
    let p = model(Eta::Quarter, 9, 0);
    assert_eq!(p.params.get("enc.fc.w").unwrap().shape(), [512, 2 * 33 * 33]);
    assert_eq!(p.params.get("dec.fc.w").unwrap().shape(), [2048, 512]);
    assert_eq!(p.params.get("head.w").unwrap().shape(), [81, 512]);
    let bound = 1.0 / ((2 * 9) as f64).sqrt();
    assert!(p.params.get("enc.conv.w").unwrap().data().iter().all(|v| v.abs() <= bound));
    assert!(p.params.get("enc.conv.b").unwrap().data().iter().all(|&v| v == 0.0));
    let _ = Tensor::scalar(0.0);
}
