//! Reference encoder, decoder and permutation head.
//!
//! * encoder: 3x3 conv (2 -> 2) + leaky ReLU + flatten + dense (2·S·S -> v)
//! * decoder: dense (v -> 2·32·32) + reshape + two residual refinement
//!   blocks (3x3 convs 2 -> 8 -> 16 -> 2) + sigmoid
//! * permutation head: dense (v -> n·n) reshaped to `n x n` logits
//!
//! `S` is the padded side of the tile grid (32 for 4 tiles, 33 for 9); the
//! decoder always produces 2x32x32.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jigsaw::{pad_planes, PermutationLogits, TileGrid};
use crate::synth::CsiMatrix;
use crate::tensor::{read_checkpoint, write_checkpoint, Graph, NodeId, ParamSet, Tensor};

pub const ARCH_VERSION: u32 = 1;
pub const LEAKY_SLOPE: f64 = 0.3;
/// Antennas and retained delay rows of a CSI sample.
pub const NT: usize = 32;
const KERNEL: usize = 3;
const REFINE_CHANNELS: [usize; 4] = [2, 8, 16, 2];

/// Compression ratio: codeword length over the `2·32·32` input reals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Eta {
    Quarter,
    Eighth,
    Sixteenth,
    ThirtySecond,
    SixtyFourth,
}

impl Eta {
    pub const ALL: [Eta; 5] = [Eta::Quarter, Eta::Eighth, Eta::Sixteenth, Eta::ThirtySecond, Eta::SixtyFourth];

    pub fn denominator(self) -> usize {
        match self {
            Eta::Quarter => 4,
            Eta::Eighth => 8,
            Eta::Sixteenth => 16,
            Eta::ThirtySecond => 32,
            Eta::SixtyFourth => 64,
        }
    }

    /// Codeword length for `nt x nt` complex input.
    pub fn codeword_len(self, nt: usize) -> usize {
        2 * nt * nt / self.denominator()
    }
}

impl fmt::Display for Eta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1/{}", self.denominator())
    }
}

impl FromStr for Eta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let denom = s.trim().strip_prefix("1/").and_then(|d| d.parse::<usize>().ok());
        Eta::ALL
            .into_iter()
            .find(|e| Some(e.denominator()) == denom)
            .ok_or_else(|| Error::Config(format!("unsupported compression ratio {s:?}, expected 1/4 .. 1/64")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub eta: Eta,
    pub tiles: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn codeword_len(&self) -> usize {
        self.eta.codeword_len(NT)
    }

    pub fn grid(&self) -> Result<TileGrid> {
        TileGrid::new(self.tiles, NT)
    }

    /// Encoder input side after padding for the tile grid.
    pub fn input_side(&self) -> Result<usize> {
        Ok(self.grid()?.padded_side())
    }

    fn shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let v = self.codeword_len();
        let s = self.input_side()?;
        let nn = self.tiles * self.tiles;
        let mut out = vec![
            ("enc.conv.w".to_string(), vec![2, 2, KERNEL, KERNEL]),
            ("enc.conv.b".to_string(), vec![2]),
            ("enc.fc.w".to_string(), vec![v, 2 * s * s]),
            ("enc.fc.b".to_string(), vec![v, 1]),
            ("dec.fc.w".to_string(), vec![2 * NT * NT, v]),
            ("dec.fc.b".to_string(), vec![2 * NT * NT, 1]),
        ];
        for block in 1..=2 {
            for (i, pair) in REFINE_CHANNELS.windows(2).enumerate() {
                let name = format!("dec.refine{block}.conv{}", i + 1);
                out.push((format!("{name}.w"), vec![pair[1], pair[0], KERNEL, KERNEL]));
                out.push((format!("{name}.b"), vec![pair[1]]));
            }
        }
        out.push(("head.w".to_string(), vec![nn, v]));
        out.push(("head.b".to_string(), vec![nn, 1]));
        Ok(out)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("eta".into(), self.eta.to_string()),
            ("v".into(), self.codeword_len().to_string()),
            ("n".into(), self.tiles.to_string()),
            ("arch-version".into(), ARCH_VERSION.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Config(format!("model config lacks key {k:?}")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Config(format!("model config key {k:?} is not an integer")))
        };
        let cfg = ModelConfig {
            eta: get("eta")?.parse()?,
            tiles: num("n")? as usize,
            seed: num("seed")?,
        };
        if num("arch-version")? != u64::from(ARCH_VERSION) {
            return Err(Error::Config(format!(
                "checkpoint architecture version {} does not match {ARCH_VERSION}",
                get("arch-version")?
            )));
        }
        if num("v")? as usize != cfg.codeword_len() {
            return Err(Error::Config(format!(
                "codeword length {} inconsistent with eta {}",
                get("v")?,
                cfg.eta
            )));
        }
        cfg.grid()?;
        Ok(cfg)
    }
}

/// Learnable parameters of encoder (`enc.*`), decoder (`dec.*`) and
/// permutation head (`head.*`).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl ModelParams {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero, seeded by `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        for (name, shape) in config.shapes()? {
            let numel: usize = shape.iter().product();
            let data = if name.ends_with(".b") {
                vec![0.0; numel]
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..numel).map(|_| rng.gen_range(-bound..=bound)).collect()
            };
            params.insert(name, Tensor::new(shape, data)?)?;
        }
        Ok(ModelParams { config, params })
    }

    /// Wraps loaded tensors after checking every expected name and shape.
    pub fn from_parts(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let shapes = config.shapes()?;
        if params.len() != shapes.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} tensors, architecture needs {}",
                params.len(),
                shapes.len()
            )));
        }
        for (name, shape) in &shapes {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::Config(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::Config(format!("checkpoint lacks parameter {name}"))),
            }
        }
        Ok(ModelParams { config, params })
    }

    /// Number of scalars in tensors whose name starts with `prefix`.
    pub fn count(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.numel())
            .sum()
    }
}

/// Which parameter groups to place on a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Parts {
    pub encoder: bool,
    pub decoder: bool,
    pub head: bool,
}

impl Parts {
    pub const ALL: Parts = Parts {
        encoder: true,
        decoder: true,
        head: true,
    };
    pub const ENCODER: Parts = Parts {
        encoder: true,
        decoder: false,
        head: false,
    };
    pub const AUTOENCODER: Parts = Parts {
        encoder: true,
        decoder: true,
        head: false,
    };

    fn wants(&self, name: &str) -> bool {
        (self.encoder && name.starts_with("enc."))
            || (self.decoder && name.starts_with("dec."))
            || (self.head && name.starts_with("head."))
    }
}

/// Parameter leaves bound to one graph.
pub struct Bound {
    ids: Vec<(String, NodeId)>,
    config: ModelConfig,
}

impl Bound {
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, id)| id)
            .ok_or_else(|| Error::Contract(format!("parameter {name} is not bound to this graph")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.ids.iter().map(|(n, id)| (n.as_str(), *id))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Encoder: `planes` is `2 x S x S` (already padded).
    pub fn encoder(&self, g: &mut Graph, planes: NodeId) -> Result<NodeId> {
        let s = self.config.input_side()?;
        let shape = g.value(planes).shape();
        if shape != [2, s, s] {
            return Err(Error::Shape(format!("encoder expects [2, {s}, {s}], got {shape:?}")));
        }
        let h = g.conv2d(planes, self.id("enc.conv.w")?, self.id("enc.conv.b")?)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE)?;
        let flat = g.reshape(h, vec![2 * s * s, 1])?;
        let c = g.matmul(self.id("enc.fc.w")?, flat)?;
        g.add(c, self.id("enc.fc.b")?)
    }

    /// Decoder: codeword `v x 1` to `2 x 32 x 32` in `[0, 1]`.
    pub fn decoder(&self, g: &mut Graph, codeword: NodeId) -> Result<NodeId> {
        let d = g.matmul(self.id("dec.fc.w")?, codeword)?;
        let d = g.add(d, self.id("dec.fc.b")?)?;
        let mut x = g.reshape(d, vec![2, NT, NT])?;
        for block in 1..=2 {
            let mut r = x;
            for i in 1..=3 {
                let name = format!("dec.refine{block}.conv{i}");
                r = g.conv2d(r, self.id(&format!("{name}.w"))?, self.id(&format!("{name}.b"))?)?;
                if i < 3 {
                    r = g.leaky_relu(r, LEAKY_SLOPE)?;
                }
            }
            let sum = g.add(x, r)?;
            x = g.leaky_relu(sum, LEAKY_SLOPE)?;
        }
        g.sigmoid(x)
    }

    /// Permutation head: codeword `v x 1` to `n x n` logits.
    pub fn head(&self, g: &mut Graph, codeword: NodeId) -> Result<NodeId> {
        let n = self.config.tiles;
        let j = g.matmul(self.id("head.w")?, codeword)?;
        let j = g.add(j, self.id("head.b")?)?;
        g.reshape(j, vec![n, n])
    }
}

/// Places the selected parameter groups on `g` as trainable leaves.
pub fn bind(params: &ModelParams, g: &mut Graph, parts: Parts) -> Bound {
    let ids = params
        .params
        .iter()
        .filter(|(n, _)| parts.wants(n))
        .map(|(n, t)| (n.to_string(), g.param(t.clone())))
        .collect();
    Bound {
        ids,
        config: params.config.clone(),
    }
}

/// Encoder input for a sample: padded to the grid side as a graph constant.
pub fn input_node(g: &mut Graph, x: &CsiMatrix, config: &ModelConfig) -> Result<NodeId> {
    if x.side() != NT {
        return Err(Error::Shape(format!("expected {NT}x{NT} CSI, got side {}", x.side())));
    }
    let s = config.input_side()?;
    let planes = pad_planes(x.planes(), NT, s)?;
    Ok(g.constant(Tensor::new(vec![2, s, s], planes)?))
}

/// Compressed representation fed back from the user equipment.
#[derive(Clone, Debug, PartialEq)]
pub struct Codeword {
    values: Vec<f64>,
}

impl Codeword {
    pub fn new(values: Vec<f64>) -> Self {
        Codeword { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The graph the deployed encoder evaluates; only `enc.*` parameters are bound.
pub fn trace_encode(x: &CsiMatrix, params: &ModelParams) -> Result<(Graph, NodeId)> {
    let mut g = Graph::new();
    let bound = bind(params, &mut g, Parts::ENCODER);
    let input = input_node(&mut g, x, &params.config)?;
    let c = bound.encoder(&mut g, input)?;
    Ok((g, c))
}

pub fn encode(x: &CsiMatrix, params: &ModelParams) -> Result<Codeword> {
    let (g, c) = trace_encode(x, params)?;
    Ok(Codeword::new(g.value(c).data().to_vec()))
}

fn codeword_node(g: &mut Graph, c: &Codeword, params: &ModelParams) -> Result<NodeId> {
    let v = params.config.codeword_len();
    if c.len() != v {
        return Err(Error::Shape(format!("codeword has {} values, model expects {v}", c.len())));
    }
    Ok(g.constant(Tensor::new(vec![v, 1], c.values.clone())?))
}

/// Reconstructed `2 x 32 x 32` planes in the normalized domain.
pub fn decode(c: &Codeword, params: &ModelParams) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = bind(params, &mut g, Parts {
        encoder: false,
        decoder: true,
        head: false,
    });
    let cw = codeword_node(&mut g, c, params)?;
    let out = bound.decoder(&mut g, cw)?;
    Ok(g.value(out).data().to_vec())
}

pub fn permutation_head(c: &Codeword, params: &ModelParams) -> Result<PermutationLogits> {
    let mut g = Graph::new();
    let bound = bind(params, &mut g, Parts {
        encoder: false,
        decoder: false,
        head: true,
    });
    let cw = codeword_node(&mut g, c, params)?;
    let j = bound.head(&mut g, cw)?;
    PermutationLogits::new(params.config.tiles, g.value(j).data().to_vec())
}

/// `decode(encode(x))` wrapped with the normalization record of `x`.
pub fn reconstruct(x: &CsiMatrix, params: &ModelParams) -> Result<CsiMatrix> {
    let mut g = Graph::new();
    let bound = bind(params, &mut g, Parts::AUTOENCODER);
    let input = input_node(&mut g, x, &params.config)?;
    let c = bound.encoder(&mut g, input)?;
    let out = bound.decoder(&mut g, c)?;
    x.with_planes(g.value(out).data().to_vec())
}

fn config_path(checkpoint: &Path) -> PathBuf {
    let mut p = checkpoint.as_os_str().to_owned();
    p.push(".cfg");
    PathBuf::from(p)
}

/// Writes the tensors to `path` and `key=value` lines (model config plus
/// `extra`) to `path.cfg`.
pub fn save_model(path: impl AsRef<Path>, params: &ModelParams, extra: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    write_checkpoint(path, &params.params)?;
    let text: String = params
        .config
        .to_kv()
        .iter()
        .chain(extra)
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    let cfg = config_path(path);
    fs::write(&cfg, text).map_err(|e| Error::io(cfg, e))
}

/// Inverse of [`save_model`]; also returns every key of the config block.
pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelParams, BTreeMap<String, String>)> {
    let path = path.as_ref();
    let cfg = config_path(path);
    let text = fs::read_to_string(&cfg).map_err(|e| Error::io(&cfg, e))?;
    let mut kv = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}: malformed line {line:?}", cfg.display())))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let config = ModelConfig::from_kv(&kv)?;
    let params = ModelParams::from_parts(config, read_checkpoint(path)?)?;
    Ok((params, kv))
}
