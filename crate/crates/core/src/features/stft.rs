use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Short-time Fourier transform framing. The analysis window is always a
/// symmetric Hamming window of `window_length` samples, zero-padded to
/// `fft_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl StftConfig {
    pub fn new(window_length: usize, hop: usize, fft_size: usize) -> Result<Self> {
        let cfg = Self {
            window_length,
            hop,
            fft_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Window and hop given in milliseconds; the FFT size is the next power of
    /// two at or above the window, and at least `min_fft`.
    pub fn from_millis(sample_rate: u32, window_ms: f64, hop_ms: f64, min_fft: usize) -> Result<Self> {
        let window_length = (window_ms * 1e-3 * sample_rate as f64).round() as usize;
        let hop = (hop_ms * 1e-3 * sample_rate as f64).round() as usize;
        let fft_size = window_length.next_power_of_two().max(min_fft);
        Self::new(window_length, hop, fft_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 {
            return Err(Error::invalid("window length must be positive"));
        }
        if self.hop == 0 {
            return Err(Error::invalid("hop must be at least 1"));
        }
        if self.fft_size < self.window_length {
            return Err(Error::invalid(format!(
                "fft size {} smaller than window {}",
                self.fft_size, self.window_length
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `floor((n - window) / hop) + 1`, or zero when the signal is shorter
    /// than one window.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        if n_samples < self.window_length {
            0
        } else {
            (n_samples - self.window_length) / self.hop + 1
        }
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Magnitude spectrogram, frames × (fft_size/2 + 1).
pub fn stft_magnitude(buffer: &AudioBuffer, cfg: &StftConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let n_frames = cfg.frame_count(buffer.len());
    if n_frames == 0 {
        return Err(Error::invalid(format!(
            "{}: {} samples is shorter than one {}-sample window",
            buffer.source_id,
            buffer.len(),
            cfg.window_length
        )));
    }
    let window = hamming(cfg.window_length);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let n_bins = cfg.n_bins();
    let mut out = Array2::zeros((n_frames, n_bins));
    let mut frame = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (t, mut row) in out.rows_mut().into_iter().enumerate() {
        let start = t * cfg.hop;
        let segment = &buffer.samples[start..start + cfg.window_length];
        for (slot, (&x, &w)) in frame.iter_mut().zip(segment.iter().zip(&window)) {
            *slot = Complex64::new(x * w, 0.0);
        }
        for slot in frame[cfg.window_length..].iter_mut() {
            *slot = Complex64::new(0.0, 0.0);
        }
        fft.process_with_scratch(&mut frame, &mut scratch);
        for (dst, c) in row.iter_mut().zip(&frame[..n_bins]) {
            *dst = c.norm();
        }
    }
    Ok(out)
}
