//! Constant-Q transform and constant-Q cepstral coefficients.
//!
//! Bin `j` sits at `f_j = f_min · 2^(j / B)`. Its kernel is a Hann-windowed
//! complex exponential of `ceil(sr / (f_j / Q + γ))` samples with
//! `Q = 1 / (2^(1/B) − 1)`; with `γ = 0` this is the classic constant-Q
//! length `Q · sr / f_j`. All kernels of a frame share one center, frames
//! advance by `hop`, and the correlations are evaluated in the frequency
//! domain against precomputed spectral kernels.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::cepstra::dct_ii_matrix;
use super::{FeatureKind, FeatureMatrix, LOG_FLOOR};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqtConfig {
    pub bins_per_octave: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub hop: usize,
    /// Bandwidth offset in Hz added to `f_j / Q` (variable-Q). Zero gives a
    /// strict constant-Q transform.
    pub gamma: f64,
    /// Spectral-kernel entries below `sparsity · max|K_j|` are dropped.
    /// Zero keeps the dense kernels and makes the transform exact.
    pub sparsity: f64,
}

impl CqtConfig {
    /// Reference CQCC setup: nine octaves below Nyquist at 96 bins per octave,
    /// with the usual variable-Q offset `228.7 · (2^(1/B) − 2^(−1/B))`.
    pub fn cqcc_default(sample_rate: u32, hop: usize) -> Self {
        let b = 96usize;
        let f_max = sample_rate as f64 / 2.0;
        let r = 2f64.powf(1.0 / b as f64);
        Self {
            bins_per_octave: b,
            f_min: f_max / 2f64.powi(9),
            f_max,
            hop,
            gamma: 228.7 * (r - 1.0 / r),
            sparsity: 0.0054,
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.bins_per_octave == 0 {
            return Err(Error::invalid("bins_per_octave must be at least 1"));
        }
        if !(self.f_min > 0.0 && self.f_min < self.f_max) {
            return Err(Error::invalid(format!(
                "need 0 < f_min < f_max, got {} and {}",
                self.f_min, self.f_max
            )));
        }
        if self.f_max > sample_rate as f64 / 2.0 + 1e-9 {
            return Err(Error::invalid(format!(
                "f_max {} above Nyquist {}",
                self.f_max,
                sample_rate as f64 / 2.0
            )));
        }
        if self.hop == 0 {
            return Err(Error::invalid("hop must be at least 1"));
        }
        if self.gamma < 0.0 || !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::invalid("gamma must be ≥ 0 and sparsity in [0, 1)"));
        }
        Ok(())
    }

    pub fn q_factor(&self) -> f64 {
        1.0 / (2f64.powf(1.0 / self.bins_per_octave as f64) - 1.0)
    }

    /// Geometrically spaced center frequencies strictly below `f_max`.
    pub fn frequencies(&self) -> Vec<f64> {
        let octaves = (self.f_max / self.f_min).log2();
        let n = ((self.bins_per_octave as f64 * octaves) - 1e-9).ceil().max(1.0) as usize;
        (0..n)
            .map(|j| self.f_min * 2f64.powf(j as f64 / self.bins_per_octave as f64))
            .collect()
    }

    pub fn kernel_lengths(&self, sample_rate: u32) -> Vec<usize> {
        let q = self.q_factor();
        self.frequencies()
            .iter()
            .map(|&f| ((sample_rate as f64 / (f / q + self.gamma)).ceil() as usize).max(2))
            .collect()
    }
}

/// Magnitudes of a constant-Q transform plus the bin frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtSpectrogram {
    /// frames × bins
    pub mag: Array2<f64>,
    pub freqs: Vec<f64>,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Time-domain kernel of bin `f`, normalized so a unit sinusoid at `f`
/// correlates to magnitude 1/2.
pub(crate) fn time_kernel(f: f64, len: usize, sample_rate: u32) -> Vec<Complex64> {
    let w = hann(len);
    let norm: f64 = w.iter().sum();
    w.iter()
        .enumerate()
        .map(|(n, &wn)| {
            let phase = 2.0 * PI * f * n as f64 / sample_rate as f64;
            Complex64::from_polar(wn / norm, phase)
        })
        .collect()
}

struct SpectralKernel {
    /// (fft bin, conj(K[f]) / L)
    taps: Vec<(usize, Complex64)>,
}

pub fn cqt_magnitude(buffer: &AudioBuffer, cfg: &CqtConfig) -> Result<CqtSpectrogram> {
    cfg.validate(buffer.sample_rate)?;
    let freqs = cfg.frequencies();
    let lengths = cfg.kernel_lengths(buffer.sample_rate);
    let frame_len = *lengths.iter().max().unwrap();
    if buffer.len() < frame_len {
        return Err(Error::invalid(format!(
            "{}: lowest CQT kernel needs {frame_len} samples, signal has {}",
            buffer.source_id,
            buffer.len()
        )));
    }
    let fft_len = frame_len.next_power_of_two();
    let center = frame_len / 2;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(fft_len);

    let kernels: Vec<SpectralKernel> = freqs
        .iter()
        .zip(&lengths)
        .map(|(&f, &len)| {
            let mut k = vec![Complex64::new(0.0, 0.0); fft_len];
            let start = center - len / 2;
            for (slot, v) in k[start..start + len]
                .iter_mut()
                .zip(time_kernel(f, len, buffer.sample_rate))
            {
                *slot = v;
            }
            fft.process(&mut k);
            let peak = k.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let cutoff = cfg.sparsity * peak;
            let taps = k
                .iter()
                .enumerate()
                .filter(|(_, c)| cfg.sparsity == 0.0 || c.norm() >= cutoff)
                .map(|(i, c)| (i, c.conj() / fft_len as f64))
                .collect();
            SpectralKernel { taps }
        })
        .collect();

    let n_frames = (buffer.len() - frame_len) / cfg.hop + 1;
    let mut mag = Array2::zeros((n_frames, freqs.len()));
    let mut frame = vec![Complex64::new(0.0, 0.0); fft_len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (t, mut row) in mag.rows_mut().into_iter().enumerate() {
        let start = t * cfg.hop;
        for (slot, &x) in frame.iter_mut().zip(&buffer.samples[start..start + frame_len]) {
            *slot = Complex64::new(x, 0.0);
        }
        for slot in frame[frame_len..].iter_mut() {
            *slot = Complex64::new(0.0, 0.0);
        }
        fft.process_with_scratch(&mut frame, &mut scratch);
        for (dst, kernel) in row.iter_mut().zip(&kernels) {
            let acc: Complex64 = kernel.taps.iter().map(|&(i, k)| frame[i] * k).sum();
            *dst = acc.norm();
        }
    }
    Ok(CqtSpectrogram { mag, freqs })
}

/// Piecewise-linear interpolation of `(x_src, y_src)` at `x_dst`. `x_src`
/// must be strictly increasing; queries outside are clamped to the ends.
pub fn interp_linear(x_src: &[f64], y_src: &[f64], x_dst: &[f64]) -> Vec<f64> {
    assert_eq!(x_src.len(), y_src.len());
    assert!(!x_src.is_empty());
    let last = x_src.len() - 1;
    let mut j = 0;
    x_dst
        .iter()
        .map(|&x| {
            if x <= x_src[0] {
                return y_src[0];
            }
            if x >= x_src[last] {
                return y_src[last];
            }
            // x_dst is normally sorted, so resume the scan; restart otherwise
            if x < x_src[j] {
                j = 0;
            }
            while x_src[j + 1] < x {
                j += 1;
            }
            let t = (x - x_src[j]) / (x_src[j + 1] - x_src[j]);
            (1.0 - t) * y_src[j] + t * y_src[j + 1]
        })
        .collect()
}

/// CQCC: per frame, log power of the CQT, resampled from the geometric
/// frequency axis onto `n_uniform_bins` linearly spaced frequencies, then
/// DCT-II, keeping `n_ceps` coefficients.
pub fn cqcc(spec: &CqtSpectrogram, n_ceps: usize, n_uniform_bins: usize) -> Result<FeatureMatrix> {
    if spec.mag.nrows() == 0 || spec.mag.ncols() == 0 {
        return Err(Error::invalid("empty constant-Q spectrogram"));
    }
    if spec.freqs.len() != spec.mag.ncols() {
        return Err(Error::DimensionMismatch {
            expected: spec.freqs.len(),
            actual: spec.mag.ncols(),
        });
    }
    if n_ceps == 0 || n_uniform_bins < n_ceps {
        return Err(Error::invalid(format!(
            "need 1 ≤ n_ceps ≤ n_uniform_bins, got {n_ceps} and {n_uniform_bins}"
        )));
    }
    let lo = spec.freqs[0];
    let hi = *spec.freqs.last().unwrap();
    let uniform: Vec<f64> = if n_uniform_bins == 1 {
        vec![lo]
    } else {
        (0..n_uniform_bins)
            .map(|i| lo + (hi - lo) * i as f64 / (n_uniform_bins - 1) as f64)
            .collect()
    };
    let dct = dct_ii_matrix(n_uniform_bins, n_ceps);
    let mut out = Array2::zeros((spec.mag.nrows(), n_ceps));
    for (mut dst, row) in out.rows_mut().into_iter().zip(spec.mag.rows()) {
        let log_power: Vec<f64> = row.iter().map(|m| (m * m).max(LOG_FLOOR).ln()).collect();
        let resampled = ndarray::Array1::from(interp_linear(&spec.freqs, &log_power, &uniform));
        dst.assign(&dct.dot(&resampled));
    }
    Ok(FeatureMatrix::new(out, FeatureKind::Cqcc))
}
