use num_complex::Complex64;

use crate::error::{Error, Result};

use super::ComplexMatrix;

/// Affine map between raw values and the `[0, 1]` training range:
/// `raw = normalized * scale + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub offset: f64,
    pub scale: f64,
}

impl Normalization {
    /// Convention of externally produced datasets that store the angular-delay
    /// matrix already mapped so that zero sits at 0.5.
    pub const CENTERED: Normalization = Normalization {
        offset: -0.5,
        scale: 1.0,
    };

    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }

    pub fn denormalize(&self, value: f64) -> f64 {
        value * self.scale + self.offset
    }
}

/// A `2 x side x side` real angular-delay sample: the real plane followed by
/// the imaginary plane, each row-major, normalized into `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiMatrix {
    side: usize,
    planes: Vec<f64>,
    norm: Normalization,
}

impl CsiMatrix {
    pub fn new(side: usize, planes: Vec<f64>, norm: Normalization) -> Result<Self> {
        if side == 0 || planes.len() != 2 * side * side {
            return Err(Error::Shape(format!(
                "CSI sample of side {side} needs {} values, got {}",
                2 * side * side,
                planes.len()
            )));
        }
        Ok(CsiMatrix { side, planes, norm })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn planes(&self) -> &[f64] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<f64> {
        self.planes
    }

    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    pub fn at(&self, plane: usize, row: usize, col: usize) -> f64 {
        self.planes[(plane * self.side + row) * self.side + col]
    }

    /// Same normalization record, different values (e.g. a reconstruction).
    pub fn with_planes(&self, planes: Vec<f64>) -> Result<Self> {
        CsiMatrix::new(self.side, planes, self.norm)
    }

    /// Raw-scale real/imaginary planes.
    pub fn raw_planes(&self) -> Vec<f64> {
        self.planes.iter().map(|&v| self.norm.denormalize(v)).collect()
    }

    /// Raw-scale complex matrix.
    pub fn to_complex(&self) -> ComplexMatrix {
        let raw = self.raw_planes();
        let n = self.side * self.side;
        let data = (0..n).map(|i| Complex64::new(raw[i], raw[n + i])).collect();
        ComplexMatrix::new(self.side, self.side, data).expect("square by construction")
    }
}

/// Keeps the first `nt` delay rows of an angular-delay matrix and maps its
/// real and imaginary parts jointly into `[0, 1]`.
///
/// A constant input cannot be stretched; its scale is forced to 1 and the
/// constant lands on 0.5.
pub fn truncate_and_normalize(h: &ComplexMatrix, nt: usize) -> Result<CsiMatrix> {
    if h.rows() < nt || h.cols() != nt {
        return Err(Error::Shape(format!(
            "cannot keep {nt} rows of a {}x{} matrix with {nt} antennas",
            h.rows(),
            h.cols()
        )));
    }
    let n = nt * nt;
    let mut raw = vec![0.0; 2 * n];
    for (i, z) in h.data()[..n].iter().enumerate() {
        raw[i] = z.re;
        raw[n + i] = z.im;
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm = if max > min {
        Normalization {
            offset: min,
            scale: max - min,
        }
    } else {
        Normalization {
            offset: min - 0.5,
            scale: 1.0,
        }
    };
    let planes = raw
        .iter()
        .map(|&v| norm.normalize(v).clamp(0.0, 1.0))
        .collect();
    CsiMatrix::new(nt, planes, norm)
}
