use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};

use super::filterbank::{FilterBank, FilterBankKind};
use super::{FeatureKind, FeatureMatrix, LOG_FLOOR};
use crate::error::{Error, Result};

/// Orthonormal DCT-II basis, `n_out × n_in`: row `k` holds
/// `s_k cos(π k (2n + 1) / 2N)` with `s_0 = √(1/N)`, `s_k = √(2/N)`.
pub fn dct_ii_matrix(n_in: usize, n_out: usize) -> Array2<f64> {
    let n = n_in as f64;
    Array2::from_shape_fn((n_out, n_in), |(k, i)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos()
    })
}

fn check_ceps(n_ceps: usize, n_bands: usize) -> Result<()> {
    if n_ceps == 0 || n_ceps > n_bands {
        return Err(Error::invalid(format!(
            "n_ceps must be in 1..={n_bands}, got {n_ceps}"
        )));
    }
    Ok(())
}

fn check_bins(mag: &Array2<f64>, fb: &FilterBank) -> Result<()> {
    if mag.ncols() != fb.n_bins() {
        return Err(Error::DimensionMismatch {
            expected: fb.n_bins(),
            actual: mag.ncols(),
        });
    }
    Ok(())
}

fn log_dct(bands: ArrayView1<f64>, dct: &Array2<f64>) -> Array1<f64> {
    let logs = bands.mapv(|e| e.max(LOG_FLOOR).ln());
    dct.dot(&logs)
}

/// MFCC / IMFCC / LFCC depending on the filterbank warping: per frame,
/// `DCT(log(max(fb · |X|², floor)))`, first `n_ceps` coefficients (c0 kept).
pub fn filterbank_cepstra(mag: &Array2<f64>, fb: &FilterBank, n_ceps: usize) -> Result<FeatureMatrix> {
    check_bins(mag, fb)?;
    check_ceps(n_ceps, fb.n_filters())?;
    let dct = dct_ii_matrix(fb.n_filters(), n_ceps);
    let power = mag.mapv(|m| m * m);
    let energies = power.dot(&fb.matrix.t());
    let mut out = Array2::zeros((mag.nrows(), n_ceps));
    for (mut dst, e) in out.rows_mut().into_iter().zip(energies.rows()) {
        dst.assign(&log_dct(e, &dct));
    }
    let kind = match fb.kind {
        FilterBankKind::Mel => FeatureKind::Mfcc,
        FilterBankKind::InvertedMel => FeatureKind::Imfcc,
        FilterBankKind::Linear => FeatureKind::Lfcc,
    };
    Ok(FeatureMatrix::new(out, kind))
}

/// Sub-band centroid magnitude coefficients. For filter `m` the centroid
/// magnitude is `Σ_k w_m(k) f_k |X(k)| / Σ_k w_m(k) f_k`.
pub fn scmc(mag: &Array2<f64>, fb: &FilterBank, n_ceps: usize) -> Result<FeatureMatrix> {
    check_bins(mag, fb)?;
    check_ceps(n_ceps, fb.n_filters())?;
    let dct = dct_ii_matrix(fb.n_filters(), n_ceps);
    let freqs = Array1::from(fb.bin_freqs());
    // w_m(k) f_k
    let weighted = &fb.matrix * &freqs;
    let denom = weighted.sum_axis(ndarray::Axis(1));
    let numer = mag.dot(&weighted.t());
    let mut out = Array2::zeros((mag.nrows(), n_ceps));
    for (mut dst, num) in out.rows_mut().into_iter().zip(numer.rows()) {
        let centroid_mag = Array1::from_iter(
            num.iter()
                .zip(denom.iter())
                .map(|(&n, &d)| if d > 0.0 { n / d } else { 0.0 }),
        );
        dst.assign(&log_dct(centroid_mag.view(), &dct));
    }
    Ok(FeatureMatrix::new(out, FeatureKind::Scmc))
}

/// Long-term average spectrum: per bin, `log(max(mean_t |X_t(k)|², floor))`.
pub fn ltas(mag: &Array2<f64>) -> Result<Vec<f64>> {
    if mag.nrows() == 0 {
        return Err(Error::invalid("LTAS of an empty spectrogram"));
    }
    let n = mag.nrows() as f64;
    let mut acc = vec![0.0; mag.ncols()];
    for row in mag.rows() {
        for (a, &m) in acc.iter_mut().zip(row.iter()) {
            *a += m * m;
        }
    }
    Ok(acc.into_iter().map(|s| (s / n).max(LOG_FLOOR).ln()).collect())
}
