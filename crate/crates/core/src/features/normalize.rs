use ndarray::{Array1, Array2, Axis};

use super::{FeatureMatrix, STD_FLOOR};
use crate::error::{Error, Result};

/// Per-dimension mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CmvnStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl CmvnStats {
    pub fn from_matrix(data: &Array2<f64>) -> Result<Self> {
        Self::from_matrices(std::iter::once(data))
    }

    /// Corpus statistics pooled over all frames. Matrices are reduced in the
    /// order given, so the result does not depend on how they were produced.
    pub fn from_matrices<'a>(mats: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum: Option<Array1<f64>> = None;
        let mut sum_sq: Option<Array1<f64>> = None;
        for m in mats {
            if m.nrows() == 0 {
                continue;
            }
            let s = m.sum_axis(Axis(0));
            let q = m.mapv(|v| v * v).sum_axis(Axis(0));
            match (&mut sum, &mut sum_sq) {
                (Some(a), Some(b)) => {
                    if a.len() != s.len() {
                        return Err(Error::DimensionMismatch {
                            expected: a.len(),
                            actual: s.len(),
                        });
                    }
                    *a += &s;
                    *b += &q;
                }
                _ => {
                    sum = Some(s);
                    sum_sq = Some(q);
                }
            }
            count += m.nrows();
        }
        let (Some(sum), Some(sum_sq)) = (sum, sum_sq) else {
            return Err(Error::invalid("CMVN statistics need at least one frame"));
        };
        let n = count as f64;
        let mean = sum / n;
        let var = (sum_sq / n - &mean * &mean).mapv(|v| v.max(0.0));
        Ok(Self {
            mean,
            std: var.mapv(f64::sqrt),
        })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: data.ncols(),
            });
        }
        let scale = self.std.mapv(|s| 1.0 / s.max(STD_FLOOR));
        Ok((data - &self.mean) * &scale)
    }
}

/// `x' = (x − μ) / max(σ, 1e-8)` per dimension. Without external statistics
/// the utterance's own mean and standard deviation are used.
pub fn cmvn(features: &FeatureMatrix, stats: Option<&CmvnStats>) -> Result<FeatureMatrix> {
    let data = match stats {
        Some(s) => s.apply(&features.data)?,
        None => CmvnStats::from_matrix(&features.data)?.apply(&features.data)?,
    };
    Ok(FeatureMatrix {
        data,
        ..features.clone()
    })
}
