//! Diagonal-covariance Gaussian mixture models.
//!
//! Training pools all frames of a class, seeds with k-means++ / Lloyd, and
//! runs EM in log space. The E-step works on fixed-size frame blocks whose
//! accumulators are summed in block order, so a model is bit-identical no
//! matter how many worker threads ran the blocks.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::container::{Reader, Writer};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};

const BLOCK: usize = 1024;
const MIN_WEIGHT: f64 = 1e-12;
const ABS_VARIANCE_FLOOR: f64 = 1e-10;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    weights: Vec<f64>,
    /// K × D
    means: Array2<f64>,
    /// K × D
    variances: Array2<f64>,
}

impl DiagGmm {
    pub fn new(weights: Vec<f64>, means: Array2<f64>, variances: Array2<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::invalid("GMM needs at least one component"));
        }
        if means.nrows() != k || variances.dim() != means.dim() {
            return Err(Error::invalid(format!(
                "inconsistent GMM shapes: {k} weights, means {:?}, variances {:?}",
                means.dim(),
                variances.dim()
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 || weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!(
                "GMM weights must be positive and sum to 1 (sum = {total})"
            )));
        }
        if means.iter().any(|v| !v.is_finite())
            || variances.iter().any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::invalid("GMM means must be finite and variances positive"));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn variances(&self) -> &Array2<f64> {
        &self.variances
    }

    pub(crate) fn scorer(&self) -> Scorer<'_> {
        let inv_var = self.variances.mapv(|v| 1.0 / v);
        let log_norm = self
            .weights
            .iter()
            .zip(self.variances.rows())
            .map(|(&w, var)| w.ln() - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>())
            .collect();
        Scorer {
            gmm: self,
            inv_var,
            log_norm,
        }
    }

    /// `log Σ_k w_k N(x; μ_k, σ²_k)`.
    pub fn frame_loglik(&self, x: ArrayView1<f64>) -> f64 {
        let scorer = self.scorer();
        let mut buf = vec![0.0; self.n_components()];
        scorer.component_logliks(x, &mut buf);
        log_sum_exp(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>, kind: FeatureKind) -> Result<()> {
        let mut w = Writer::new(b"ASGM");
        self.write_into(&mut w, kind);
        w.save(path.as_ref())
    }

    pub(crate) fn write_into(&self, w: &mut Writer, kind: FeatureKind) {
        w.u32(kind.tag())
            .u32(self.n_components() as u32)
            .u32(self.dims() as u32)
            .f64s(self.weights.iter().copied())
            .f64s(self.means.iter().copied())
            .f64s(self.variances.iter().copied());
    }

    /// Loads a model together with the feature kind it was trained on.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, FeatureKind)> {
        let mut r = Reader::open(path.as_ref(), b"ASGM")?;
        let out = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(out)
    }

    pub(crate) fn read_from(r: &mut Reader) -> Result<(Self, FeatureKind)> {
        let kind = FeatureKind::from_tag(r.u32()?)?;
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let weights = r.f64s(k)?;
        let means = Array2::from_shape_vec((k, d), r.f64s(k * d)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        let variances = Array2::from_shape_vec((k, d), r.f64s(k * d)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok((Self::new(weights, means, variances)?, kind))
    }
}

pub(crate) struct Scorer<'a> {
    gmm: &'a DiagGmm,
    inv_var: Array2<f64>,
    log_norm: Vec<f64>,
}

impl Scorer<'_> {
    /// Writes `log w_k + log N(x; μ_k, σ²_k)` for every component into `out`.
    pub(crate) fn component_logliks(&self, x: ArrayView1<f64>, out: &mut [f64]) {
        let x = x.as_slice().expect("contiguous frame");
        for (k, slot) in out.iter_mut().enumerate() {
            let mu = self.gmm.means.row(k);
            let iv = self.inv_var.row(k);
            let (mu, iv) = (mu.as_slice().unwrap(), iv.as_slice().unwrap());
            let mut q = 0.0;
            for d in 0..x.len() {
                let diff = x[d] - mu[d];
                q += diff * diff * iv[d];
            }
            *slot = self.log_norm[k] - 0.5 * q;
        }
    }

    /// Normalizes `lp` in place into responsibilities and returns the frame
    /// log-likelihood.
    pub(crate) fn responsibilities(&self, x: ArrayView1<f64>, lp: &mut [f64]) -> f64 {
        self.component_logliks(x, lp);
        let total = log_sum_exp(lp);
        for v in lp.iter_mut() {
            *v = (*v - total).exp();
        }
        total
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the relative gain in total log-likelihood drops below this.
    pub rel_tol: f64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor_ratio: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rel_tol: 1e-5,
            variance_floor_ratio: 1e-3,
            kmeans_iters: 20,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("EM max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("EM rel_tol must be positive".into()));
        }
        if !(self.variance_floor_ratio >= 0.0) {
            return Err(Error::Config("variance floor ratio must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub model: DiagGmm,
    /// Total log-likelihood of the data under the model after 0, 1, 2, …
    /// M-steps; the last entry belongs to `model`.
    pub trace: Vec<f64>,
    pub variance_floor: Array1<f64>,
}

/// `ratio ×` the global per-dimension variance, never below a tiny absolute
/// floor.
pub fn variance_floor(frames: ArrayView2<f64>, ratio: f64) -> Array1<f64> {
    let n = frames.nrows().max(1) as f64;
    let mean = frames.sum_axis(Axis(0)) / n;
    let mut var = Array1::zeros(frames.ncols());
    for row in frames.rows() {
        for ((v, &x), &m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
            *v += (x - m) * (x - m);
        }
    }
    var.mapv(|v: f64| (ratio * v / n).max(ABS_VARIANCE_FLOOR))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(x, c.as_slice().unwrap());
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. Weights are cluster
/// proportions (empty clusters count as one frame), variances the
/// within-cluster diagonal variances clamped to `floor`.
pub fn kmeans_init(
    frames: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
    floor: &Array1<f64>,
) -> Result<DiagGmm> {
    let (n, d) = frames.dim();
    if k == 0 || n < k {
        return Err(Error::invalid(format!(
            "k-means needs at least k = {k} frames, got {n}"
        )));
    }
    if floor.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: floor.len(),
        });
    }
    let frames = frames.as_standard_layout();
    let row = |i: usize| -> &[f64] { &frames.as_slice().unwrap()[i * d..(i + 1) * d] };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers = Array2::zeros((k, d));
    let first = rng.gen_range(0..n);
    centers.row_mut(0).assign(&ArrayView1::from(row(first)));
    let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    let mut degenerate = false;
    for c in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &dist) in min_d.iter().enumerate() {
                if target < dist {
                    idx = i;
                    break;
                }
                target -= dist;
            }
            idx
        } else {
            degenerate = true;
            first
        };
        centers.row_mut(c).assign(&ArrayView1::from(row(pick)));
        for (i, m) in min_d.iter_mut().enumerate() {
            *m = m.min(sq_dist(row(i), row(pick)));
        }
    }
    if degenerate {
        log::warn!("k-means: data has fewer than {k} distinct points; duplicate centers kept");
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iters.max(1) {
        let new_assign: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest(row(i), &centers).0)
            .collect();
        let changed = new_assign != assign;
        assign = new_assign;
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            sums.row_mut(a).zip_mut_with(&ArrayView1::from(row(i)), |s, x| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c).mapv(|s| s / counts[c] as f64);
                centers.row_mut(c).assign(&mean);
            }
        }
        if !changed {
            break;
        }
    }

    let mut counts = vec![0usize; k];
    let mut sq = Array2::<f64>::zeros((k, d));
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1;
        let c = centers.row(a);
        for (j, (&x, &m)) in row(i).iter().zip(c.iter()).enumerate() {
            sq[[a, j]] += (x - m) * (x - m);
        }
    }
    let global = variance_floor(frames.view(), 1.0);
    let mut variances = Array2::zeros((k, d));
    for c in 0..k {
        for j in 0..d {
            let v = if counts[c] >= 2 {
                sq[[c, j]] / counts[c] as f64
            } else {
                global[j]
            };
            variances[[c, j]] = v.max(floor[j]);
        }
    }
    let total: f64 = counts.iter().map(|&c| c.max(1) as f64).sum();
    let weights = counts.iter().map(|&c| c.max(1) as f64 / total).collect();
    DiagGmm::new(weights, centers, variances)
}

struct Accumulator {
    loglik: f64,
    n: Vec<f64>,
    f: Array2<f64>,
    s: Array2<f64>,
}

impl Accumulator {
    fn zeros(k: usize, d: usize) -> Self {
        Self {
            loglik: 0.0,
            n: vec![0.0; k],
            f: Array2::zeros((k, d)),
            s: Array2::zeros((k, d)),
        }
    }

    fn add(&mut self, other: &Accumulator) {
        self.loglik += other.loglik;
        for (a, b) in self.n.iter_mut().zip(&other.n) {
            *a += b;
        }
        self.f += &other.f;
        self.s += &other.s;
    }
}

fn e_step(model: &DiagGmm, frames: ArrayView2<f64>) -> Accumulator {
    let (k, d) = (model.n_components(), model.dims());
    let scorer = model.scorer();
    let blocks: Vec<Accumulator> = frames
        .axis_chunks_iter(Axis(0), BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|block| {
            let mut acc = Accumulator::zeros(k, d);
            let mut gamma = vec![0.0; k];
            for x in block.rows() {
                acc.loglik += scorer.responsibilities(x, &mut gamma);
                let xs = x.as_slice().unwrap();
                for (c, &g) in gamma.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    acc.n[c] += g;
                    let mut f = acc.f.row_mut(c);
                    let mut s = acc.s.row_mut(c);
                    let (f, s) = (f.as_slice_mut().unwrap(), s.as_slice_mut().unwrap());
                    for j in 0..d {
                        let gx = g * xs[j];
                        f[j] += gx;
                        s[j] += gx * xs[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = Accumulator::zeros(k, d);
    for b in &blocks {
        total.add(b);
    }
    total
}

fn m_step(prev: &DiagGmm, acc: &Accumulator, floor: &Array1<f64>) -> Result<DiagGmm> {
    let (k, d) = (prev.n_components(), prev.dims());
    let n_total: f64 = acc.n.iter().sum();
    let mut means = prev.means.clone();
    let mut variances = prev.variances.clone();
    let mut weights = Vec::with_capacity(k);
    for c in 0..k {
        let nc = acc.n[c];
        weights.push((nc / n_total).max(MIN_WEIGHT));
        if nc <= 1e-10 {
            continue;
        }
        for j in 0..d {
            let mu = acc.f[[c, j]] / nc;
            means[[c, j]] = mu;
            variances[[c, j]] = (acc.s[[c, j]] / nc - mu * mu).max(floor[j]);
        }
    }
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    DiagGmm::new(weights, means, variances)
}

fn check_frames(frames: ArrayView2<f64>, dims: usize) -> Result<()> {
    if frames.ncols() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: frames.ncols(),
        });
    }
    if frames.nrows() == 0 {
        return Err(Error::invalid("no frames"));
    }
    Ok(())
}

/// EM for a diagonal GMM starting from `init`.
pub fn em_fit(
    frames: ArrayView2<f64>,
    init: &DiagGmm,
    cfg: &EmConfig,
    floor: &Array1<f64>,
) -> Result<EmResult> {
    cfg.validate()?;
    check_frames(frames, init.dims())?;
    let frames = frames.as_standard_layout();
    let mut model = init.clone();
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    for it in 0..cfg.max_iters {
        let acc = e_step(&model, frames.view());
        if !acc.loglik.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite log-likelihood at EM iteration {it}; check features and variance floor"
            )));
        }
        if let Some(&prev) = trace.last() {
            let gain = (acc.loglik - prev) / f64::abs(prev).max(f64::MIN_POSITIVE);
            trace.push(acc.loglik);
            if gain < cfg.rel_tol {
                return Ok(EmResult {
                    model,
                    trace,
                    variance_floor: floor.clone(),
                });
            }
        } else {
            trace.push(acc.loglik);
        }
        model = m_step(&model, &acc, floor)?;
        log::debug!("EM iteration {it}: loglik {}", acc.loglik);
    }
    let final_ll = e_step(&model, frames.view()).loglik;
    if !final_ll.is_finite() {
        return Err(Error::Numerical("non-finite log-likelihood after EM".into()));
    }
    trace.push(final_ll);
    Ok(EmResult {
        model,
        trace,
        variance_floor: floor.clone(),
    })
}

/// Variance floor, k-means++ initialization and EM in one call.
pub fn train_gmm(frames: ArrayView2<f64>, k: usize, cfg: &EmConfig) -> Result<EmResult> {
    cfg.validate()?;
    let floor = variance_floor(frames, cfg.variance_floor_ratio);
    let init = kmeans_init(frames, k, cfg.seed, cfg.kmeans_iters, &floor)?;
    em_fit(frames, &init, cfg, &floor)
}

/// Mean over frames of the frame log-likelihood.
pub fn avg_loglik(model: &DiagGmm, features: &FeatureMatrix) -> Result<f64> {
    check_frames(features.data.view(), model.dims())?;
    let data = features.data.as_standard_layout();
    let scorer = model.scorer();
    let mut buf = vec![0.0; model.n_components()];
    let mut total = 0.0;
    for x in data.rows() {
        scorer.component_logliks(x, &mut buf);
        total += log_sum_exp(&buf);
    }
    Ok(total / features.frames() as f64)
}

/// Average log-likelihood ratio, bonafide minus spoof. Positive favours
/// bonafide.
pub fn llr_score(bonafide: &DiagGmm, spoof: &DiagGmm, features: &FeatureMatrix) -> Result<f64> {
    Ok(avg_loglik(bonafide, features)? - avg_loglik(spoof, features)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit_1d() -> DiagGmm {
        DiagGmm::new(vec![1.0], array![[0.0]], array![[1.0]]).unwrap()
    }

    #[test]
    fn closed_form_density_at_mean() {
        let f = FeatureMatrix::new(array![[0.0]], FeatureKind::Mfcc);
        let ll = avg_loglik(&unit_1d(), &f).unwrap();
        assert!((ll - (-0.9189385332046727)).abs() < 1e-12);
    }

    #[test]
    fn constructor_validates() {
        assert!(DiagGmm::new(vec![0.5, 0.4], array![[0.0], [1.0]], array![[1.0], [1.0]]).is_err());
        assert!(DiagGmm::new(vec![1.0], array![[0.0]], array![[0.0]]).is_err());
        assert!(DiagGmm::new(vec![1.0], array![[0.0, 1.0]], array![[1.0]]).is_err());
    }

    #[test]
    fn avg_loglik_errors() {
        let m = unit_1d();
        let empty = FeatureMatrix::new(Array2::zeros((0, 1)), FeatureKind::Mfcc);
        assert!(avg_loglik(&m, &empty).is_err());
        let wide = FeatureMatrix::new(Array2::zeros((3, 2)), FeatureKind::Mfcc);
        assert!(matches!(
            avg_loglik(&m, &wide),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kmeans_needs_enough_frames() {
        let frames = Array2::zeros((3, 2));
        let floor = Array1::from_elem(2, 1e-3);
        assert!(kmeans_init(frames.view(), 4, 0, 10, &floor).is_err());
    }

    #[test]
    fn identical_frames_give_floored_single_cluster() {
        let frames = Array2::from_elem((50, 2), 3.0);
        let floor = variance_floor(frames.view(), 1e-3);
        let m = kmeans_init(frames.view(), 4, 1, 10, &floor).unwrap();
        assert!(m.means().iter().all(|&v| v == 3.0));
        assert!(m.variances().iter().all(|&v| v == ABS_VARIANCE_FLOOR));
        let w = m.weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[0] > 0.9);
    }

    #[test]
    fn model_file_roundtrip_and_kind_tag() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.gmm");
        let m = DiagGmm::new(
            vec![0.25, 0.75],
            array![[0.0, 1.0], [-2.0, 0.5]],
            array![[1.0, 2.0], [0.1, 0.3]],
        )
        .unwrap();
        m.save(&p, FeatureKind::Lfcc).unwrap();
        let (back, kind) = DiagGmm::load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(kind, FeatureKind::Lfcc);
    }

    #[test]
    fn em_rejects_bad_config() {
        let frames = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let cfg = EmConfig {
            max_iters: 0,
            ..EmConfig::default()
        };
        assert!(train_gmm(frames.view(), 1, &cfg).is_err());
    }
}
