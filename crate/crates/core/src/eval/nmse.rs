use crate::error::{Error, Result};
use crate::synth::CsiMatrix;

/// `10·log10` of the mean per-sample ratio `‖H - Ĥ‖² / ‖H‖²` over raw-scale
/// real/imaginary planes. Exact reconstruction gives `-inf`.
pub fn nmse_db_raw(originals: &[Vec<f64>], reconstructions: &[Vec<f64>]) -> Result<f64> {
    if originals.is_empty() || originals.len() != reconstructions.len() {
        return Err(Error::Contract(format!(
            "need equally many originals and reconstructions (at least one), got {} and {}",
            originals.len(),
            reconstructions.len()
        )));
    }
    let mut ratio_sum = 0.0;
    for (i, (h, h_hat)) in originals.iter().zip(reconstructions).enumerate() {
        if h.len() != h_hat.len() {
            return Err(Error::Shape(format!(
                "sample {i}: original has {} values, reconstruction {}",
                h.len(),
                h_hat.len()
            )));
        }
        let power: f64 = h.iter().map(|v| v * v).sum();
        if power == 0.0 {
            return Err(Error::Contract(format!("sample {i}: original is all zero, NMSE undefined")));
        }
        let err: f64 = h.iter().zip(h_hat).map(|(a, b)| (a - b) * (a - b)).sum();
        ratio_sum += err / power;
    }
    Ok(10.0 * (ratio_sum / originals.len() as f64).log10())
}

/// NMSE in dB of normalized samples, each de-normalized with its own record
/// before comparison.
pub fn nmse_db(originals: &[CsiMatrix], reconstructions: &[CsiMatrix]) -> Result<f64> {
    let raw = |xs: &[CsiMatrix]| xs.iter().map(CsiMatrix::raw_planes).collect::<Vec<_>>();
    nmse_db_raw(&raw(originals), &raw(reconstructions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_zero_reconstructions() {
        let h = vec![vec![1.0, -2.0, 0.5, 0.0]];
        assert_eq!(nmse_db_raw(&h, &h).unwrap(), f64::NEG_INFINITY);
        assert_eq!(nmse_db_raw(&h, &[vec![0.0; 4]]).unwrap(), 0.0);
    }

    #[test]
    fn half_energy_missing() {
        // H = I2, Ĥ keeps only the first diagonal entry (real plane then imaginary plane).
        let h = vec![vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]];
        let h_hat = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
        let db = nmse_db_raw(&h, &h_hat).unwrap();
        assert!((db + 3.0103).abs() < 1e-4, "{db}");
    }

    #[test]
    fn all_zero_original_names_the_sample() {
        let h = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let err = nmse_db_raw(&h, &h).unwrap_err();
        assert!(err.to_string().contains("sample 1"), "{err}");
        assert!(nmse_db_raw(&[], &[]).is_err());
    }
}
