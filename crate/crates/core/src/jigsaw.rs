//! Tile decomposition, permutation sampling and the permutation-prediction
//! loss.
//!
//! Conventions:
//! * tiles are numbered row-major over the grid, starting from 0;
//! * inputs whose side is not divisible by the grid are zero-padded at the
//!   right and bottom edges (32x32 with 9 tiles becomes 33x33);
//! * a permutation `s` places original tile `s[k]` at grid position `k`;
//! * both planes of a sample are split and shuffled identically.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{softmax_columns_in_place, Graph, NodeId};

/// Tile counts accepted by [`sample_permutation`].
pub const SUPPORTED_TILE_COUNTS: [usize; 2] = [4, 9];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileGrid {
    n: usize,
    per_side: usize,
    tile: usize,
    side: usize,
}

impl TileGrid {
    /// Grid of `n` square tiles over a `side x side` matrix.
    pub fn new(n: usize, side: usize) -> Result<Self> {
        let per_side = (n as f64).sqrt().round() as usize;
        if n == 0 || per_side * per_side != n {
            return Err(Error::Config(format!("tile count {n} is not a positive perfect square")));
        }
        if side == 0 {
            return Err(Error::Config("cannot tile an empty matrix".into()));
        }
        Ok(TileGrid {
            n,
            per_side,
            tile: side.div_ceil(per_side),
            side,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn per_side(&self) -> usize {
        self.per_side
    }

    pub fn tile_side(&self) -> usize {
        self.tile
    }

    /// Unpadded side length.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn padded_side(&self) -> usize {
        self.tile * self.per_side
    }

    /// Rows (and columns) of zeros appended at the bottom (and right).
    pub fn pad(&self) -> usize {
        self.padded_side() - self.side
    }
}

/// One tile across all planes: `planes x t x t`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    pub side: usize,
    pub data: Vec<f64>,
}

fn plane_count(len: usize, side: usize) -> Result<usize> {
    let area = side * side;
    if area == 0 || len == 0 || len % area != 0 {
        return Err(Error::Shape(format!(
            "{len} values do not form planes of {side}x{side}"
        )));
    }
    Ok(len / area)
}

/// Zero-pads `planes x side x side` data to `planes x padded x padded`.
pub fn pad_planes(x: &[f64], side: usize, padded: usize) -> Result<Vec<f64>> {
    let planes = plane_count(x.len(), side)?;
    if padded < side {
        return Err(Error::Shape(format!("cannot pad side {side} down to {padded}")));
    }
    if padded == side {
        return Ok(x.to_vec());
    }
    let mut out = vec![0.0; planes * padded * padded];
    for p in 0..planes {
        for r in 0..side {
            let src = (p * side + r) * side;
            let dst = (p * padded + r) * padded;
            out[dst..dst + side].copy_from_slice(&x[src..src + side]);
        }
    }
    Ok(out)
}

/// Inverse of [`pad_planes`]: keeps the top-left `side x side` of every plane.
pub fn crop_planes(x: &[f64], padded: usize, side: usize) -> Result<Vec<f64>> {
    let planes = plane_count(x.len(), padded)?;
    if side > padded {
        return Err(Error::Shape(format!("cannot crop side {padded} up to {side}")));
    }
    let mut out = Vec::with_capacity(planes * side * side);
    for p in 0..planes {
        for r in 0..side {
            let src = (p * padded + r) * padded;
            out.extend_from_slice(&x[src..src + side]);
        }
    }
    Ok(out)
}

/// Splits `planes x side x side` data into `grid.n()` tiles, row-major over
/// the grid, padding with zeros first when needed.
pub fn split_tiles(x: &[f64], grid: &TileGrid) -> Result<Vec<Tile>> {
    let padded = grid.padded_side();
    let x = pad_planes(x, grid.side(), padded)?;
    let planes = x.len() / (padded * padded);
    let t = grid.tile_side();
    let mut tiles = Vec::with_capacity(grid.n());
    for gr in 0..grid.per_side() {
        for gc in 0..grid.per_side() {
            let mut data = Vec::with_capacity(planes * t * t);
            for p in 0..planes {
                for r in 0..t {
                    let src = (p * padded + gr * t + r) * padded + gc * t;
                    data.extend_from_slice(&x[src..src + t]);
                }
            }
            tiles.push(Tile { side: t, data });
        }
    }
    Ok(tiles)
}

/// Places `tiles[k]` at grid position `k`; returns padded planes.
pub fn assemble_tiles(tiles: &[Tile], grid: &TileGrid) -> Result<Vec<f64>> {
    if tiles.len() != grid.n() {
        return Err(Error::Contract(format!("{} tiles for a grid of {}", tiles.len(), grid.n())));
    }
    let t = grid.tile_side();
    if let Some(bad) = tiles.iter().find(|tile| tile.side != t) {
        return Err(Error::Shape(format!("tile side {} on a grid of {t}", bad.side)));
    }
    let planes = plane_count(tiles[0].data.len(), t)?;
    let padded = grid.padded_side();
    let mut out = vec![0.0; planes * padded * padded];
    for (k, tile) in tiles.iter().enumerate() {
        let (gr, gc) = (k / grid.per_side(), k % grid.per_side());
        for p in 0..planes {
            for r in 0..t {
                let dst = (p * padded + gr * t + r) * padded + gc * t;
                let src = (p * t + r) * t;
                out[dst..dst + t].copy_from_slice(&tile.data[src..src + t]);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`split_tiles`]: assembles and removes the padding.
pub fn reassemble_tiles(tiles: &[Tile], grid: &TileGrid) -> Result<Vec<f64>> {
    crop_planes(&assemble_tiles(tiles, grid)?, grid.padded_side(), grid.side())
}

/// A permutation of tile indices plus its one-hot target.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PermutationSpec {
    order: Vec<usize>,
}

impl PermutationSpec {
    /// `order[k]` is the original index of the tile shown at position `k`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Contract(format!("{order:?} is not a permutation of 0..{n}")));
            }
        }
        Ok(PermutationSpec { order })
    }

    pub fn identity(n: usize) -> Self {
        PermutationSpec {
            order: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn inverse(&self) -> PermutationSpec {
        let mut inv = vec![0; self.n()];
        for (k, &i) in self.order.iter().enumerate() {
            inv[i] = k;
        }
        PermutationSpec { order: inv }
    }

    /// Row-major `n x n` matrix whose column `k` is one-hot at row `order[k]`.
    pub fn one_hot(&self) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n * n];
        for (k, &i) in self.order.iter().enumerate() {
            m[i * n + k] = 1.0;
        }
        m
    }
}

/// Reorders tiles so that position `k` holds `tiles[s[k]]`.
pub fn permute_tiles(tiles: &[Tile], s: &PermutationSpec) -> Result<Vec<Tile>> {
    if tiles.len() != s.n() {
        return Err(Error::Contract(format!(
            "{} tiles for a permutation of {}",
            tiles.len(),
            s.n()
        )));
    }
    Ok(s.order.iter().map(|&i| tiles[i].clone()).collect())
}

/// Builds the shuffled sample: padded planes with tile `s[k]` at position `k`.
pub fn shuffle_tiles(tiles: &[Tile], s: &PermutationSpec, grid: &TileGrid) -> Result<Vec<f64>> {
    assemble_tiles(&permute_tiles(tiles, s)?, grid)
}

/// Split, shuffle and return padded planes in one go.
pub fn shuffle_planes(x: &[f64], s: &PermutationSpec, grid: &TileGrid) -> Result<Vec<f64>> {
    shuffle_tiles(&split_tiles(x, grid)?, s, grid)
}

/// Undoes [`shuffle_planes`]: recovers the original unpadded planes.
pub fn unshuffle_planes(shuffled: &[f64], s: &PermutationSpec, grid: &TileGrid) -> Result<Vec<f64>> {
    let padded_grid = TileGrid::new(grid.n(), grid.padded_side())?;
    let tiles = split_tiles(shuffled, &padded_grid)?;
    reassemble_tiles(&permute_tiles(&tiles, &s.inverse())?, grid)
}

/// Uniform draw over all `n!` permutations.
pub fn sample_permutation(n: usize, rng: &mut impl Rng) -> Result<PermutationSpec> {
    if !SUPPORTED_TILE_COUNTS.contains(&n) {
        return Err(Error::Config(format!(
            "tile count {n} unsupported, expected one of {SUPPORTED_TILE_COUNTS:?}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(PermutationSpec { order })
}

/// Raw `n x n` permutation-head output, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutationLogits {
    n: usize,
    values: Vec<f64>,
}

impl PermutationLogits {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape(format!("{} logits for a {n}x{n} matrix", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("permutation logits must be finite".into()));
        }
        Ok(PermutationLogits { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_softmax(&self) -> Vec<f64> {
        let mut p = self.values.clone();
        softmax_columns_in_place(&mut p, self.n, self.n);
        p
    }
}

/// Predicted original index per position: argmax of each softmaxed column,
/// lowest row on ties.
pub fn decode_permutation(j: &PermutationLogits) -> Vec<usize> {
    let n = j.n;
    let p = j.column_softmax();
    (0..n)
        .map(|col| {
            let mut best = 0;
            for row in 1..n {
                if p[row * n + col] > p[best * n + col] {
                    best = row;
                }
            }
            best
        })
        .collect()
}

/// Sum over columns of the cross-entropy between the column softmax of `j`
/// and the one-hot target of `s`, recorded on `graph`.
pub fn puzzle_loss(graph: &mut Graph, j: NodeId, s: &PermutationSpec) -> Result<NodeId> {
    let shape = graph.value(j).shape();
    if shape != [s.n(), s.n()] {
        return Err(Error::Shape(format!(
            "logits of shape {shape:?} for a permutation of {}",
            s.n()
        )));
    }
    graph.column_cross_entropy(j, s.order.clone())
}

/// Fraction of positions whose decoded index matches `s`.
pub fn puzzle_accuracy(j: &PermutationLogits, s: &PermutationSpec) -> Result<f64> {
    if j.n != s.n() {
        return Err(Error::Shape(format!("{0}x{0} logits for a permutation of {1}", j.n, s.n())));
    }
    let hits = decode_permutation(j).iter().zip(&s.order).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / s.n() as f64)
}
