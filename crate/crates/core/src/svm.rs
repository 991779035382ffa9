//! Linear soft-margin SVM trained in the primal.
//!
//! Minimizes `½‖w‖² + C Σ_i max(0, 1 − y_i (w·x_i + b))` on per-dimension
//! standardized inputs. Each epoch is one shuffled pass of minibatch
//! subgradient steps; the pass is kept only if it lowers the full objective,
//! otherwise the step size is halved and the pass is discarded. Accepted
//! passes grow the step by 20%.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::container::{Reader, Writer};
use crate::error::{Error, Result};

const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("SVM C must be positive, got {}", self.c)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("SVM batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SvmModel {
    pub fn dims(&self) -> usize {
        self.w.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer::new(b"ASVM");
        w.u32(self.dims() as u32);
        w.f64(self.b);
        w.f64s(self.w.iter().copied());
        w.f64s(self.mean.iter().copied());
        w.f64s(self.std.iter().copied());
        w.save(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = Reader::open(path.as_ref(), b"ASVM")?;
        let d = r.u32()? as usize;
        let b = r.f64()?;
        let w = r.f64s(d)?;
        let mean = r.f64s(d)?;
        let std = r.f64s(d)?;
        r.finish()?;
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Format("SVM normalization std must be positive".into()));
        }
        Ok(Self { w, b, mean, std })
    }
}

#[derive(Debug, Clone)]
pub struct SvmTraining {
    pub model: SvmModel,
    /// Objective at initialization and after every epoch.
    pub objective_trace: Vec<f64>,
}

fn dot(a: &[f64], b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Primal objective on already-normalized rows.
pub fn svm_objective(w: &[f64], b: f64, x: &Array2<f64>, y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &yi)| (1.0 - yi * (dot(w, row) + b)).max(0.0))
        .sum();
    reg + c * hinge
}

fn check_labels(y: &[f64]) -> Result<()> {
    if let Some(v) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid(format!("SVM labels must be ±1, got {v}")));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::invalid("SVM training needs both classes"));
    }
    Ok(())
}

/// Trains on rows of `x` with labels `y` (+1 = bonafide, −1 = spoof).
pub fn train_linear_svm(x: &Array2<f64>, y: &[f64], cfg: &SvmConfig) -> Result<SvmTraining> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("SVM training on zero-dimensional vectors"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite SVM training input"));
    }
    check_labels(y)?;

    let n = x.nrows();
    let d = x.ncols();
    let mean: Vec<f64> = x.mean_axis(ndarray::Axis(0)).unwrap().to_vec();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let m = mean[j];
            let var = x.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            var.sqrt().max(STD_FLOOR)
        })
        .collect();
    let mut xn = x.clone();
    for (j, mut col) in xn.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| (v - mean[j]) / std[j]);
    }

    let c = cfg.c;
    let mean_sq = xn.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut eta = 1.0 / (1.0 + c * n as f64 * mean_sq);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut objective = svm_objective(&w, b, &xn, y, c);
    let mut trace = vec![objective];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grad = vec![0.0; d];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut wt = w.clone();
        let mut bt = b;
        for batch in order.chunks(cfg.batch_size) {
            // the hinge sum is rescaled so a batch stands in for the full set
            let scale = c * n as f64 / batch.len() as f64;
            grad.copy_from_slice(&wt);
            let mut grad_b = 0.0;
            for &i in batch {
                let row = xn.row(i);
                if y[i] * (dot(&wt, row) + bt) < 1.0 {
                    for (g, &v) in grad.iter_mut().zip(row.iter()) {
                        *g -= scale * y[i] * v;
                    }
                    grad_b -= scale * y[i];
                }
            }
            for (wj, g) in wt.iter_mut().zip(&grad) {
                *wj -= eta * g;
            }
            bt -= eta * grad_b;
        }
        let candidate = svm_objective(&wt, bt, &xn, y, c);
        if candidate <= objective {
            w = wt;
            b = bt;
            objective = candidate;
            eta *= 1.2;
        } else {
            eta *= 0.5;
        }
        trace.push(objective);
    }

    if w.iter().all(|&v| v == 0.0) {
        log::warn!("linear SVM finished with an all-zero weight vector");
    }
    Ok(SvmTraining {
        model: SvmModel { w, b, mean, std },
        objective_trace: trace,
    })
}

/// Decision value `w · normalize(x) + b`; positive means bonafide.
pub fn svm_score(model: &SvmModel, x: &[f64]) -> Result<f64> {
    let xn = model.normalize(x)?;
    Ok(xn.iter().zip(&model.w).map(|(a, b)| a * b).sum::<f64>() + model.b)
}
