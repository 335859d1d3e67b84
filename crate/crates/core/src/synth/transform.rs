use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Unitary 2-D DFT between the spatial-frequency domain (`nc` subcarriers x
/// `nt` antennas) and the angular-delay domain: `H' = F_c H F_t^H`, with both
/// DFT matrices scaled by `1/sqrt(N)`.
pub struct AngularDelayTransform {
    nc: usize,
    nt: usize,
    fwd_c: Arc<dyn Fft<f64>>,
    inv_c: Arc<dyn Fft<f64>>,
    fwd_t: Arc<dyn Fft<f64>>,
    inv_t: Arc<dyn Fft<f64>>,
}

impl AngularDelayTransform {
    pub fn new(nc: usize, nt: usize) -> Result<Self> {
        if nc == 0 || nt == 0 {
            return Err(Error::Shape(format!("transform dimensions must be positive, got {nc}x{nt}")));
        }
        let mut planner = FftPlanner::new();
        Ok(AngularDelayTransform {
            nc,
            nt,
            fwd_c: planner.plan_fft_forward(nc),
            inv_c: planner.plan_fft_inverse(nc),
            fwd_t: planner.plan_fft_forward(nt),
            inv_t: planner.plan_fft_inverse(nt),
        })
    }

    fn check(&self, h: &ComplexMatrix) -> Result<()> {
        if h.rows != self.nc || h.cols != self.nt {
            return Err(Error::Shape(format!(
                "transform expects {}x{}, got {}x{}",
                self.nc, self.nt, h.rows, h.cols
            )));
        }
        Ok(())
    }

    /// Spatial-frequency -> angular-delay.
    pub fn forward(&self, h: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check(h)?;
        Ok(self.apply(h, &self.fwd_c, &self.inv_t))
    }

    /// Angular-delay -> spatial-frequency: `H = F_c^H H' F_t`.
    pub fn inverse(&self, h: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check(h)?;
        Ok(self.apply(h, &self.inv_c, &self.fwd_t))
    }

    // Left factor acts on columns (length nc), right factor on rows (length
    // nt). Right-multiplying by F_t^H is an inverse DFT along each row since
    // the DFT matrix is symmetric.
    fn apply(&self, h: &ComplexMatrix, col_fft: &Arc<dyn Fft<f64>>, row_fft: &Arc<dyn Fft<f64>>) -> ComplexMatrix {
        let (nc, nt) = (self.nc, self.nt);
        let mut out = h.clone();
        let mut column = vec![Complex64::new(0.0, 0.0); nc];
        for c in 0..nt {
            for r in 0..nc {
                column[r] = out.data[r * nt + c];
            }
            col_fft.process(&mut column);
            for r in 0..nc {
                out.data[r * nt + c] = column[r];
            }
        }
        for row in out.data.chunks_exact_mut(nt) {
            row_fft.process(row);
        }
        let scale = 1.0 / ((nc * nt) as f64).sqrt();
        for z in &mut out.data {
            *z *= scale;
        }
        out
    }
}
