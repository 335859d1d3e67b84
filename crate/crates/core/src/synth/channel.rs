//! Clustered sparse multipath in place of a full geometric channel model.
//!
//! Each path contributes `gain * delay ramp (subcarriers) * ULA steering
//! (antennas)`. Rows of `H` are the conjugated per-subcarrier channel vectors,
//! so a path with delay `d` lands on delay bin `d` and a path with angle
//! `theta` lands near angle bin `nt * sin(theta) / 2 (mod nt)` after
//! [`AngularDelayTransform::forward`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::{truncate_and_normalize, AngularDelayTransform, ComplexMatrix, CsiMatrix, Dataset, Split, SplitCounts};

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    /// Base-station antennas (uniform linear array, half-wavelength spacing).
    pub nt: usize,
    /// Subcarriers.
    pub nc: usize,
    pub min_paths: usize,
    pub max_paths: usize,
    /// Delays are drawn from the integer taps in `[0, delay_spread * nc)`.
    pub delay_spread: f64,
    /// Exponential power-delay profile constant in delay taps; infinite for
    /// a flat profile.
    pub decay_taps: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Indoor,
    Outdoor,
}

impl Preset {
    pub fn config(self, seed: u64) -> ChannelConfig {
        match self {
            Preset::Indoor => ChannelConfig {
                seed,
                ..ChannelConfig::default()
            },
            Preset::Outdoor => ChannelConfig {
                min_paths: 6,
                max_paths: 16,
                decay_taps: 24.0,
                seed,
                ..ChannelConfig::default()
            },
        }
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            nt: 32,
            nc: 1024,
            min_paths: 3,
            max_paths: 12,
            delay_spread: 32.0 / 1024.0,
            decay_taps: 12.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nt == 0 || self.nc < self.nt {
            return Err(Error::Config(format!(
                "need nt >= 1 and nc >= nt, got nt={} nc={}",
                self.nt, self.nc
            )));
        }
        if self.min_paths == 0 || self.max_paths < self.min_paths {
            return Err(Error::Config(format!(
                "path count range [{}, {}] is empty or includes zero",
                self.min_paths, self.max_paths
            )));
        }
        if !(self.delay_spread > 0.0 && self.delay_spread <= 1.0) {
            return Err(Error::Config(format!("delay spread {} outside (0, 1]", self.delay_spread)));
        }
        if self.delay_taps() == 0 {
            return Err(Error::Config("delay spread covers no delay tap".into()));
        }
        if !(self.decay_taps > 0.0) {
            return Err(Error::Config(format!("decay constant {} must be positive", self.decay_taps)));
        }
        Ok(())
    }

    fn delay_taps(&self) -> usize {
        (self.delay_spread * self.nc as f64).ceil() as usize
    }
}

/// One propagation path. `delay` is in subcarrier-spacing units (delay
/// taps), `angle` in radians from broadside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    pub delay: f64,
    pub angle: f64,
    pub gain: Complex64,
}

/// Spatial-frequency channel (`nc x nt`) of a set of paths.
pub fn channel_from_paths(nc: usize, nt: usize, paths: &[Path]) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(nc, nt);
    for p in paths {
        let steering: Vec<Complex64> = (0..nt)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 * p.angle.sin()))
            .collect();
        for f in 0..nc {
            let ramp = p.gain * Complex64::from_polar(1.0, 2.0 * PI * f as f64 * p.delay / nc as f64);
            let row = &mut h.data_mut()[f * nt..(f + 1) * nt];
            for (z, s) in row.iter_mut().zip(&steering) {
                *z += ramp * s;
            }
        }
    }
    h
}

fn draw_paths(cfg: &ChannelConfig, rng: &mut impl Rng) -> Vec<Path> {
    let count = rng.gen_range(cfg.min_paths..=cfg.max_paths);
    let taps = cfg.delay_taps();
    (0..count)
        .map(|_| {
            let delay = rng.gen_range(0..taps) as f64;
            let angle = rng.gen_range(-PI / 2.0..PI / 2.0);
            let sigma = (-delay / cfg.decay_taps).exp().sqrt() / 2f64.sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Path {
                delay,
                angle,
                gain: Complex64::new(re * sigma, im * sigma),
            }
        })
        .collect()
}

/// Draws one random multipath channel from `rng`.
pub fn synth_spatial_channel(cfg: &ChannelConfig, rng: &mut impl Rng) -> Result<ComplexMatrix> {
    cfg.validate()?;
    Ok(channel_from_paths(cfg.nc, cfg.nt, &draw_paths(cfg, rng)))
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sample `index` of the stream defined by `cfg.seed`: channel, angular-delay
/// transform, truncation and normalization. Independent of every other index.
pub fn synth_sample(cfg: &ChannelConfig, transform: &AngularDelayTransform, index: u64) -> Result<CsiMatrix> {
    let h = synth_spatial_channel(cfg, &mut sample_rng(cfg.seed, index))?;
    truncate_and_normalize(&transform.forward(&h)?, cfg.nt)
}

/// Generates `counts.total()` samples tagged train, then validation, then test.
pub fn generate_dataset(cfg: &ChannelConfig, counts: SplitCounts) -> Result<Dataset> {
    cfg.validate()?;
    let transform = AngularDelayTransform::new(cfg.nc, cfg.nt)?;
    let mut ds = Dataset::default();
    let tags = std::iter::repeat(Split::Train)
        .take(counts.train)
        .chain(std::iter::repeat(Split::Validation).take(counts.validation))
        .chain(std::iter::repeat(Split::Test).take(counts.test));
    for (i, tag) in tags.enumerate() {
        ds.push(synth_sample(cfg, &transform, i as u64)?, tag);
    }
    Ok(ds)
}
