use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use super::stft::StftConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterBankKind {
    Mel,
    /// Mel filterbank mirrored on the linear frequency axis: dense at high
    /// frequencies, sparse at low ones.
    InvertedMel,
    Linear,
}

impl FromStr for FilterBankKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mel" => Ok(Self::Mel),
            "inverted-mel" | "imel" => Ok(Self::InvertedMel),
            "linear" => Ok(Self::Linear),
            other => Err(Error::Config(format!("unknown filterbank kind '{other}'"))),
        }
    }
}

impl fmt::Display for FilterBankKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mel => "mel",
            Self::InvertedMel => "inverted-mel",
            Self::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    /// n_filters × (fft_size/2 + 1), non-negative.
    pub matrix: Array2<f64>,
    pub kind: FilterBankKind,
    /// Center frequency of each filter in Hz.
    pub center_freqs: Vec<f64>,
    pub sample_rate: u32,
    pub fft_size: usize,
}

impl FilterBank {
    pub fn n_filters(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.matrix.ncols()
    }

    /// Frequency in Hz of every FFT bin.
    pub fn bin_freqs(&self) -> Vec<f64> {
        bin_freqs(self.n_bins(), self.sample_rate, self.fft_size)
    }
}

pub(crate) fn bin_freqs(n_bins: usize, sample_rate: u32, fft_size: usize) -> Vec<f64> {
    (0..n_bins)
        .map(|k| k as f64 * sample_rate as f64 / fft_size as f64)
        .collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters whose edges are `n_filters + 2` points equally spaced on
/// the warped axis between 0 Hz and Nyquist.
pub fn make_filterbank(
    kind: FilterBankKind,
    n_filters: usize,
    cfg: &StftConfig,
    sample_rate: u32,
) -> Result<FilterBank> {
    if n_filters < 2 {
        return Err(Error::invalid("a filterbank needs at least 2 filters"));
    }
    cfg.validate()?;
    let nyquist = sample_rate as f64 / 2.0;
    let n_bins = cfg.n_bins();
    let freqs = bin_freqs(n_bins, sample_rate, cfg.fft_size);

    let edges: Vec<f64> = match kind {
        FilterBankKind::Linear => (0..n_filters + 2)
            .map(|i| nyquist * i as f64 / (n_filters + 1) as f64)
            .collect(),
        FilterBankKind::Mel | FilterBankKind::InvertedMel => {
            let top = hz_to_mel(nyquist);
            (0..n_filters + 2)
                .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
                .collect()
        }
    };

    let mut matrix = Array2::zeros((n_filters, n_bins));
    for i in 0..n_filters {
        let (lo, c, hi) = (edges[i], edges[i + 1], edges[i + 2]);
        for (k, &f) in freqs.iter().enumerate() {
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= c {
                (f - lo) / (c - lo)
            } else {
                (hi - f) / (hi - c)
            };
            matrix[[i, k]] = w;
        }
    }
    let mut center_freqs: Vec<f64> = edges[1..=n_filters].to_vec();

    if kind == FilterBankKind::InvertedMel {
        // filter i ↔ filter n-1-i, bin k ↔ bin n_bins-1-k
        let mut flipped = Array2::zeros((n_filters, n_bins));
        for i in 0..n_filters {
            for k in 0..n_bins {
                flipped[[i, k]] = matrix[[n_filters - 1 - i, n_bins - 1 - k]];
            }
        }
        matrix = flipped;
        center_freqs = center_freqs.iter().rev().map(|c| nyquist - c).collect();
    }

    for (i, row) in matrix.rows().into_iter().enumerate() {
        if !row.iter().any(|&w| w > 0.0) {
            return Err(Error::invalid(format!(
                "{kind} filter {i} covers no FFT bin: {n_filters} filters too many for a {}-point FFT",
                cfg.fft_size
            )));
        }
    }

    Ok(FilterBank {
        matrix,
        kind,
        center_freqs,
        sample_rate,
        fft_size: cfg.fft_size,
    })
}
