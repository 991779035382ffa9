//! Frame-level and utterance-level spectral features.
//!
//! The cepstral front ends share one shape: magnitude spectrum → filterbank
//! (or centroid) → log with a floor → orthonormal DCT-II. Static cepstra are
//! then stacked with delta and acceleration coefficients.

mod cepstra;
mod cqt;
mod deltas;
mod filterbank;
mod normalize;
mod stft;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::container::{Reader, Writer};
use crate::error::{Error, Result};

pub use cepstra::{dct_ii_matrix, filterbank_cepstra, ltas, scmc};
pub use cqt::{cqcc, cqt_magnitude, interp_linear, CqtConfig, CqtSpectrogram};
pub use deltas::add_deltas;
pub use filterbank::{hz_to_mel, make_filterbank, mel_to_hz, FilterBank, FilterBankKind};
pub use normalize::{cmvn, CmvnStats};
pub use stft::{hamming, stft_magnitude, StftConfig};

/// Floor applied before every logarithm.
pub const LOG_FLOOR: f64 = 1e-10;
/// Floor applied to standard deviations in CMVN.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Mfcc,
    Imfcc,
    Lfcc,
    Scmc,
    Cqcc,
    Ltas,
    Ivector,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 7] = [
        FeatureKind::Mfcc,
        FeatureKind::Imfcc,
        FeatureKind::Lfcc,
        FeatureKind::Scmc,
        FeatureKind::Cqcc,
        FeatureKind::Ltas,
        FeatureKind::Ivector,
    ];

    pub fn tag(self) -> u32 {
        match self {
            FeatureKind::Mfcc => 1,
            FeatureKind::Imfcc => 2,
            FeatureKind::Lfcc => 3,
            FeatureKind::Scmc => 4,
            FeatureKind::Cqcc => 5,
            FeatureKind::Ltas => 6,
            FeatureKind::Ivector => 7,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| Error::Format(format!("unknown feature kind tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Imfcc => "imfcc",
            FeatureKind::Lfcc => "lfcc",
            FeatureKind::Scmc => "scmc",
            FeatureKind::Cqcc => "cqcc",
            FeatureKind::Ltas => "ltas",
            FeatureKind::Ivector => "ivector",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown feature kind '{s}'")))
    }
}

/// Frames × dimensions matrix with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub kind: FeatureKind,
    /// Number of static coefficients per frame before delta stacking.
    pub n_static: usize,
    pub includes_deltas: bool,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>, kind: FeatureKind) -> Self {
        let n_static = data.ncols();
        Self {
            data,
            kind,
            n_static,
            includes_deltas: false,
        }
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Writes the feature container: magic `ASFE`, version, kind tag,
    /// n_static, flags, frames (u64), dims, then row-major float32 values.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer::new(b"ASFE");
        w.u32(self.kind.tag())
            .u32(self.n_static as u32)
            .u32(u32::from(self.includes_deltas))
            .u64(self.frames() as u64)
            .u32(self.dims() as u32);
        for &v in self.data.iter() {
            w.f32(v as f32);
        }
        w.save(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = Reader::open(path.as_ref(), b"ASFE")?;
        let kind = FeatureKind::from_tag(r.u32()?)?;
        let n_static = r.u32()? as usize;
        let includes_deltas = r.u32()? & 1 == 1;
        let frames = r.u64()? as usize;
        let dims = r.u32()? as usize;
        let mut data = Vec::with_capacity(frames * dims);
        for _ in 0..frames * dims {
            data.push(r.f32()? as f64);
        }
        r.finish()?;
        let data = Array2::from_shape_vec((frames, dims), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            data,
            kind,
            n_static,
            includes_deltas,
        })
    }
}

/// Text manifest mapping utterance ids to feature files, one
/// `utterance_id path` pair per line.
pub fn write_feature_manifest(
    path: impl AsRef<Path>,
    entries: &BTreeMap<String, std::path::PathBuf>,
) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (utt, p) in entries {
        text.push_str(&format!("{utt} {}\n", p.display()));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a feature manifest. Relative feature paths are resolved against the
/// manifest's directory.
pub fn read_feature_manifest(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(utt), Some(p), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "expected 'utterance_id path'".into(),
            });
        };
        let p = Path::new(p);
        let full = if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if out.insert(utt.to_string(), full).is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("duplicate utterance id '{utt}'"),
            });
        }
    }
    Ok(out)
}
