//! Total-variability i-vectors.
//!
//! An utterance's GMM mean supervector is modelled as `m + T w` with
//! `w ~ N(0, I)`. Given zeroth- and first-order Baum–Welch statistics `N_k`,
//! `F_k` against a UBM with diagonal covariances `Σ_k`, the posterior of `w`
//! is Gaussian with
//!
//! ```text
//! precision  L = I + Σ_k N_k T_kᵀ Σ_k⁻¹ T_k
//! mean       E[w] = L⁻¹ Σ_k T_kᵀ Σ_k⁻¹ (F_k − N_k m_k)
//! ```
//!
//! and the i-vector is that posterior mean. `T` is trained by EM with the
//! UBM covariances held fixed.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::container::{Reader, Writer};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::gmm::DiagGmm;

const UTTERANCE_BLOCK: usize = 256;

/// Zeroth- and (uncentered) first-order statistics of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub n: Vec<f64>,
    /// K × D, `F_k = Σ_t γ_t(k) x_t`
    pub f: Array2<f64>,
    pub frame_count: usize,
}

impl SuffStats {
    pub fn n_components(&self) -> usize {
        self.n.len()
    }

    pub fn dims(&self) -> usize {
        self.f.ncols()
    }

    /// Same statistics as an utterance repeated `c` times (N and F scaled).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n.iter().map(|v| v * c).collect(),
            f: &self.f * c,
            frame_count: (self.frame_count as f64 * c).round() as usize,
        }
    }
}

pub fn baum_welch_stats(ubm: &DiagGmm, features: &FeatureMatrix) -> Result<SuffStats> {
    if features.dims() != ubm.dims() {
        return Err(Error::DimensionMismatch {
            expected: ubm.dims(),
            actual: features.dims(),
        });
    }
    if features.frames() == 0 {
        return Err(Error::invalid("Baum-Welch statistics of an empty utterance"));
    }
    let (k, d) = (ubm.n_components(), ubm.dims());
    let data = features.data.as_standard_layout();
    let scorer = ubm.scorer();
    let mut n = vec![0.0; k];
    let mut f = Array2::zeros((k, d));
    let mut gamma = vec![0.0; k];
    for x in data.rows() {
        scorer.responsibilities(x, &mut gamma);
        for (c, &g) in gamma.iter().enumerate() {
            n[c] += g;
            f.row_mut(c).scaled_add(g, &x);
        }
    }
    Ok(SuffStats {
        n,
        f,
        frame_count: features.frames(),
    })
}

/// Posterior of the latent factor for one utterance.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `−½ ln|L| + ½ bᵀ L⁻¹ b`: the part of the utterance log-likelihood that
    /// depends on `T`.
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvModel {
    ubm: DiagGmm,
    /// One D × R block per UBM component.
    blocks: Vec<DMatrix<f64>>,
    rank: usize,
}

struct Precomputed {
    /// T_kᵀ Σ_k⁻¹ T_k, R × R
    ttst: Vec<DMatrix<f64>>,
    /// T_kᵀ Σ_k⁻¹, R × D
    tts: Vec<DMatrix<f64>>,
}

impl TvModel {
    /// Builds a model from a `(K·D) × R` matrix whose row `k·D + d` belongs to
    /// component `k`, dimension `d`.
    pub fn from_matrix(ubm: DiagGmm, t: &Array2<f64>) -> Result<Self> {
        let (k, d) = (ubm.n_components(), ubm.dims());
        if t.nrows() != k * d {
            return Err(Error::DimensionMismatch {
                expected: k * d,
                actual: t.nrows(),
            });
        }
        let rank = t.ncols();
        if rank == 0 {
            return Err(Error::invalid("total variability rank must be at least 1"));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite T matrix"));
        }
        let blocks = (0..k)
            .map(|c| DMatrix::from_fn(d, rank, |i, r| t[[c * d + i, r]]))
            .collect();
        Ok(Self { ubm, blocks, rank })
    }

    pub fn ubm(&self) -> &DiagGmm {
        &self.ubm
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> Array2<f64> {
        let d = self.ubm.dims();
        let mut t = Array2::zeros((self.blocks.len() * d, self.rank));
        for (c, b) in self.blocks.iter().enumerate() {
            for i in 0..d {
                for r in 0..self.rank {
                    t[[c * d + i, r]] = b[(i, r)];
                }
            }
        }
        t
    }

    fn precompute(&self) -> Precomputed {
        let (tts, ttst) = self
            .blocks
            .par_iter()
            .enumerate()
            .map(|(c, t)| {
                let inv_var = self.ubm.variances().row(c).mapv(|v| 1.0 / v);
                let mut tts = t.transpose();
                for (j, mut col) in tts.column_iter_mut().enumerate() {
                    col *= inv_var[j];
                }
                let ttst = &tts * t;
                (tts, ttst)
            })
            .unzip();
        Precomputed { ttst, tts }
    }

    fn check_stats(&self, stats: &SuffStats) -> Result<()> {
        if stats.n_components() != self.ubm.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.ubm.n_components(),
                actual: stats.n_components(),
            });
        }
        if stats.dims() != self.ubm.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.ubm.dims(),
                actual: stats.dims(),
            });
        }
        Ok(())
    }

    /// `F_k − N_k m_k` for every component, as D-vectors.
    fn centered(&self, stats: &SuffStats) -> Vec<DVector<f64>> {
        let means = self.ubm.means();
        (0..stats.n_components())
            .map(|c| {
                DVector::from_iterator(
                    stats.dims(),
                    stats
                        .f
                        .row(c)
                        .iter()
                        .zip(means.row(c).iter())
                        .map(|(&f, &m)| f - stats.n[c] * m),
                )
            })
            .collect()
    }

    fn posterior_with(&self, pre: &Precomputed, stats: &SuffStats) -> Result<Posterior> {
        let r = self.rank;
        let mut precision = DMatrix::<f64>::identity(r, r);
        let mut b = DVector::<f64>::zeros(r);
        for (c, f) in self.centered(stats).iter().enumerate() {
            if stats.n[c] != 0.0 {
                let n = stats.n[c];
                precision.zip_apply(&pre.ttst[c], |a, b| *a += n * b);
            }
            b.gemv(1.0, &pre.tts[c], f, 1.0);
        }
        // symmetrize against accumulated rounding
        let precision = (&precision + precision.transpose()) * 0.5;
        let chol: Cholesky<f64, Dyn> = Cholesky::new(precision).ok_or_else(|| {
            Error::Numerical("posterior precision is not positive definite".into())
        })?;
        let mean = chol.solve(&b);
        let cov = chol.inverse();
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let loglik = -0.5 * log_det + 0.5 * b.dot(&mean);
        Ok(Posterior { mean, cov, loglik })
    }

    pub fn posterior(&self, stats: &SuffStats) -> Result<Posterior> {
        self.check_stats(stats)?;
        self.posterior_with(&self.precompute(), stats)
    }

    /// T-dependent part of the total log-likelihood of a set of utterances.
    pub fn loglik(&self, stats: &[SuffStats]) -> Result<f64> {
        let pre = self.precompute();
        let parts: Vec<f64> = stats
            .par_iter()
            .map(|s| {
                self.check_stats(s)?;
                Ok(self.posterior_with(&pre, s)?.loglik)
            })
            .collect::<Result<_>>()?;
        Ok(parts.iter().sum())
    }

    pub fn save(&self, path: impl AsRef<Path>, kind: FeatureKind) -> Result<()> {
        let mut w = Writer::new(b"ASTV");
        self.ubm.write_into(&mut w, kind);
        w.u32(self.rank as u32);
        w.f64s(self.matrix().iter().copied());
        w.save(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, FeatureKind)> {
        let mut r = Reader::open(path.as_ref(), b"ASTV")?;
        let (ubm, kind) = DiagGmm::read_from(&mut r)?;
        let rank = r.u32()? as usize;
        let rows = ubm.n_components() * ubm.dims();
        let t = Array2::from_shape_vec((rows, rank), r.f64s(rows * rank)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        r.finish()?;
        Ok((Self::from_matrix(ubm, &t)?, kind))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvConfig {
    pub rank: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            rank: 100,
            iters: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TvTraining {
    pub model: TvModel,
    /// T-dependent log-likelihood before the first and after every M-step.
    pub loglik_trace: Vec<f64>,
}

/// Gaussian initialization scaled by `0.1 ×` the mean UBM standard deviation.
pub fn init_tv(ubm: &DiagGmm, rank: usize, seed: u64) -> Result<TvModel> {
    let rows = ubm.n_components() * ubm.dims();
    let sigma = ubm.variances().mapv(f64::sqrt).mean().unwrap_or(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Array2::from_shape_simple_fn((rows, rank), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.1 * sigma * z
    });
    TvModel::from_matrix(ubm.clone(), &t)
}

/// EM starting from `init`, `iters` iterations.
pub fn train_tv_from(init: TvModel, stats: &[SuffStats], iters: usize) -> Result<TvTraining> {
    if stats.len() < 2 {
        return Err(Error::invalid("T-matrix training needs at least 2 utterances"));
    }
    for s in stats {
        init.check_stats(s)?;
    }
    let (k, d, r) = (init.ubm.n_components(), init.ubm.dims(), init.rank);
    let mut model = init;
    let mut trace = Vec::with_capacity(iters + 1);
    for it in 0..iters {
        let pre = model.precompute();
        let mut acc_a: Vec<DMatrix<f64>> = vec![DMatrix::zeros(r, r); k];
        let mut acc_c: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d, r); k];
        let mut total = 0.0;
        for chunk in stats.chunks(UTTERANCE_BLOCK) {
            let posts: Vec<(Posterior, Vec<DVector<f64>>)> = chunk
                .par_iter()
                .map(|s| Ok((model.posterior_with(&pre, s)?, model.centered(s))))
                .collect::<Result<_>>()?;
            total += posts.iter().map(|(p, _)| p.loglik).sum::<f64>();
            let second: Vec<DMatrix<f64>> = posts
                .iter()
                .map(|(p, _)| &p.cov + &p.mean * p.mean.transpose())
                .collect();
            acc_a
                .par_iter_mut()
                .zip(acc_c.par_iter_mut())
                .enumerate()
                .for_each(|(c, (a, cc))| {
                    for (u, (p, centered)) in posts.iter().enumerate() {
                        let n = chunk[u].n[c];
                        if n != 0.0 {
                            a.zip_apply(&second[u], |x, y| *x += n * y);
                        }
                        cc.ger(1.0, &centered[c], &p.mean, 1.0);
                    }
                });
        }
        trace.push(total);
        log::debug!("TV iteration {it}: loglik {total}");
        let blocks: Vec<DMatrix<f64>> = acc_a
            .into_par_iter()
            .zip(acc_c.into_par_iter())
            .map(|(a, c)| {
                let a = (&a + a.transpose()) * 0.5;
                let chol = Cholesky::new(a).ok_or_else(|| {
                    Error::Numerical("singular T-matrix M-step accumulator".into())
                })?;
                // T_k = C_k A_k⁻¹  ⇔  A_k T_kᵀ = C_kᵀ
                Ok(chol.solve(&c.transpose()).transpose())
            })
            .collect::<Result<_>>()?;
        model = TvModel {
            ubm: model.ubm,
            blocks,
            rank: r,
        };
    }
    trace.push(model.loglik(stats)?);
    Ok(TvTraining {
        model,
        loglik_trace: trace,
    })
}

pub fn train_tv(stats: &[SuffStats], ubm: &DiagGmm, cfg: &TvConfig) -> Result<TvTraining> {
    let kd = ubm.n_components() * ubm.dims();
    if cfg.rank == 0 || cfg.rank > kd {
        return Err(Error::invalid(format!(
            "rank must be in 1..={kd}, got {}",
            cfg.rank
        )));
    }
    train_tv_from(init_tv(ubm, cfg.rank, cfg.seed)?, stats, cfg.iters)
}

pub fn extract_ivector(tv: &TvModel, stats: &SuffStats) -> Result<Vec<f64>> {
    Ok(tv.posterior(stats)?.mean.iter().copied().collect())
}

/// Batch extraction sharing one precomputation.
pub fn extract_ivectors(tv: &TvModel, stats: &[SuffStats]) -> Result<Vec<Vec<f64>>> {
    let pre = tv.precompute();
    stats
        .par_iter()
        .map(|s| {
            tv.check_stats(s)?;
            Ok(tv.posterior_with(&pre, s)?.mean.iter().copied().collect())
        })
        .collect()
}

/// Concatenates per-extractor i-vectors in the given order.
pub fn fuse_ivectors(parts: &[Vec<f64>]) -> Result<Vec<f64>> {
    if parts.is_empty() {
        return Err(Error::invalid("nothing to fuse"));
    }
    Ok(parts.concat())
}

/// Fuses per-extractor tables for one utterance; a missing entry is an error.
pub fn fuse_for_utterance(
    utterance_id: &str,
    extractor_names: &[String],
    tables: &[std::collections::BTreeMap<String, Vec<f64>>],
) -> Result<Vec<f64>> {
    let parts = extractor_names
        .iter()
        .zip(tables)
        .map(|(name, table)| {
            table.get(utterance_id).cloned().ok_or_else(|| {
                Error::invalid(format!("no {name} i-vector for utterance '{utterance_id}'"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fuse_ivectors(&parts)
}
