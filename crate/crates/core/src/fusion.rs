//! Prior-weighted logistic regression fusion of countermeasure scores.
//!
//! The fused score of a row `x` is `s = α·x + β`. Training minimizes
//!
//! ```text
//! L = π/N_b Σ_bona log(1 + e^−(s + logit π)) + (1 − π)/N_s Σ_spoof log(1 + e^(s + logit π))
//! ```
//!
//! with damped Newton steps from `α = 0, β = 0`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::protocol::Key;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub input_ids: Vec<String>,
    pub alphas: Vec<f64>,
    pub beta: f64,
}

impl FusionModel {
    pub fn new(input_ids: Vec<String>, alphas: Vec<f64>, beta: f64) -> Result<Self> {
        if input_ids.is_empty() || input_ids.len() != alphas.len() {
            return Err(Error::invalid(format!(
                "fusion model needs one weight per input, got {} ids and {} weights",
                input_ids.len(),
                alphas.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = input_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("duplicate fusion input '{dup}'")));
        }
        if !beta.is_finite() || alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("non-finite fusion weights"));
        }
        Ok(Self {
            input_ids,
            alphas,
            beta,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# fusion model v1\n");
        writeln!(out, "beta {:e}", self.beta).unwrap();
        for (id, a) in self.input_ids.iter().zip(&self.alphas) {
            writeln!(out, "alpha {id} {a:e}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str, name: &str) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: name.to_string(),
            line,
            message,
        };
        let mut beta = None;
        let mut ids = Vec::new();
        let mut alphas = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| perr(i + 1, format!("bad number '{s}'")))
            };
            match cols.as_slice() {
                ["beta", v] => beta = Some(num(v)?),
                ["alpha", id, v] => {
                    ids.push(id.to_string());
                    alphas.push(num(v)?);
                }
                _ => return Err(perr(i + 1, format!("unrecognized line '{line}'"))),
            }
        }
        let beta = beta.ok_or_else(|| perr(0, "missing beta".into()))?;
        Self::new(ids, alphas, beta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub prior: f64,
    pub max_iters: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            prior: 0.5,
            max_iters: 100,
        }
    }
}

/// Scores and labels in the form the loss works on.
#[derive(Debug, Clone)]
pub struct FusionProblem {
    /// N × M
    pub scores: Array2<f64>,
    pub labels: Vec<Key>,
    pub prior: f64,
    n_bona: usize,
    n_spoof: usize,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl FusionProblem {
    pub fn new(scores: Array2<f64>, labels: Vec<Key>, prior: f64) -> Result<Self> {
        if scores.ncols() == 0 {
            return Err(Error::invalid("fusion needs at least one input column"));
        }
        if scores.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.nrows(),
                actual: labels.len(),
            });
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("NaN or infinite score in fusion input"));
        }
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::Config(format!("fusion prior must be in (0, 1), got {prior}")));
        }
        let n_bona = labels.iter().filter(|k| **k == Key::Bonafide).count();
        let n_spoof = labels.len() - n_bona;
        if n_bona == 0 || n_spoof == 0 {
            return Err(Error::invalid("fusion training needs both bonafide and spoof scores"));
        }
        Ok(Self {
            scores,
            labels,
            prior,
            n_bona,
            n_spoof,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.scores.ncols()
    }

    fn logit_prior(&self) -> f64 {
        (self.prior / (1.0 - self.prior)).ln()
    }

    /// `(signed margin argument, class weight, sign)` per row for `params =
    /// [α..., β]`. The per-row loss is `weight · softplus(sign · (s + logit π))`.
    fn rows<'a>(&'a self, params: &'a [f64]) -> impl Iterator<Item = (usize, f64, f64, f64)> + 'a {
        let m = self.n_inputs();
        let lp = self.logit_prior();
        let wb = self.prior / self.n_bona as f64;
        let ws = (1.0 - self.prior) / self.n_spoof as f64;
        self.scores.rows().into_iter().zip(&self.labels).enumerate().map(move |(i, (row, key))| {
            let s: f64 = row.iter().zip(&params[..m]).map(|(x, a)| x * a).sum::<f64>() + params[m];
            let (weight, sign) = match key {
                Key::Bonafide => (wb, -1.0),
                Key::Spoof => (ws, 1.0),
            };
            (i, weight, sign, sign * (s + lp))
        })
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.rows(params).map(|(_, w, _, z)| w * softplus(z)).sum()
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let m = self.n_inputs();
        let mut g = vec![0.0; m + 1];
        for (i, w, sign, z) in self.rows(params) {
            let d = w * sign * sigmoid(z);
            for (gj, x) in g.iter_mut().zip(self.scores.row(i).iter()) {
                *gj += d * x;
            }
            g[m] += d;
        }
        g
    }

    fn hessian(&self, params: &[f64]) -> DMatrix<f64> {
        let m = self.n_inputs();
        let mut h = DMatrix::zeros(m + 1, m + 1);
        let mut ext = DVector::zeros(m + 1);
        for (i, w, _, z) in self.rows(params) {
            let p = sigmoid(z);
            for (j, x) in self.scores.row(i).iter().enumerate() {
                ext[j] = *x;
            }
            ext[m] = 1.0;
            h.ger(w * p * (1.0 - p), &ext, &ext, 1.0);
        }
        h
    }
}

/// Pseudo-inverse Newton direction; falls back to steepest descent when the
/// curvature gives no descent.
fn newton_direction(h: DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let gv = DVector::from_column_slice(g);
    let eig = SymmetricEigen::new(h);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let tol = top * 1e-10;
    let mut d = DVector::zeros(g.len());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol && lambda > 0.0 {
            let v = eig.eigenvectors.column(k);
            d -= v * (v.dot(&gv) / lambda);
        }
    }
    if d.dot(&gv) < 0.0 {
        d.iter().copied().collect()
    } else {
        g.iter().map(|v| -v).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FusionTraining {
    pub model: FusionModel,
    pub loss_trace: Vec<f64>,
}

pub fn train_fusion(
    input_ids: Vec<String>,
    scores: Array2<f64>,
    labels: Vec<Key>,
    cfg: &FusionConfig,
) -> Result<FusionTraining> {
    if input_ids.len() != scores.ncols() {
        return Err(Error::DimensionMismatch {
            expected: scores.ncols(),
            actual: input_ids.len(),
        });
    }
    let problem = FusionProblem::new(scores, labels, cfg.prior)?;
    let mut params = vec![0.0; problem.n_inputs() + 1];
    let mut loss = problem.loss(&params);
    let mut trace = vec![loss];
    for _ in 0..cfg.max_iters {
        let g = problem.gradient(&params);
        if g.iter().all(|v| v.abs() < 1e-15) {
            break;
        }
        let d = newton_direction(problem.hessian(&params), &g);
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = params.iter().zip(&d).map(|(p, di)| p + t * di).collect();
            let l = problem.loss(&cand);
            if l <= loss + 1e-4 * t * slope {
                accepted = Some((cand, l));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((p, l)) => {
                let done = loss - l <= 1e-15 * loss.abs().max(1.0);
                params = p;
                loss = l;
                trace.push(loss);
                if done {
                    break;
                }
            }
            None => break,
        }
    }
    let m = problem.n_inputs();
    let model = FusionModel::new(input_ids, params[..m].to_vec(), params[m])?;
    Ok(FusionTraining {
        model,
        loss_trace: trace,
    })
}

/// `α·x + β` for one row ordered like `model.input_ids`.
pub fn apply_fusion(model: &FusionModel, row: &[f64]) -> Result<f64> {
    if row.len() != model.alphas.len() {
        return Err(Error::DimensionMismatch {
            expected: model.alphas.len(),
            actual: row.len(),
        });
    }
    Ok(row.iter().zip(&model.alphas).map(|(x, a)| x * a).sum::<f64>() + model.beta)
}

/// Named ensemble compositions over model ids A–J.
pub fn ensemble_preset(task: &str, name: &str) -> Option<Vec<&'static str>> {
    let ids: &[&str] = match (task.to_ascii_uppercase().as_str(), name.to_ascii_uppercase().as_str()) {
        ("LA", "E1") => &["A", "C", "D", "E", "F", "G", "I"],
        ("LA", "E2") => &["A", "B", "G"],
        ("PA", "E1") => &["A", "B", "C", "E", "F", "G", "H", "I", "J"],
        ("PA", "E2") => &["A", "B", "C", "D", "E"],
        (_, "E3") => &["A", "B"],
        _ => return None,
    };
    Some(ids.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn labels(n_b: usize, n_s: usize) -> Vec<Key> {
        let mut v = vec![Key::Bonafide; n_b];
        v.extend(vec![Key::Spoof; n_s]);
        v
    }

    #[test]
    fn zero_params_loss_is_log2_at_even_prior() {
        let p = FusionProblem::new(array![[1.0], [2.0], [0.0]], labels(1, 2), 0.5).unwrap();
        assert!((p.loss(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn training_improves_on_zero_init() {
        let s = array![[2.0], [1.5], [3.0], [-1.0], [0.5], [-2.0]];
        let t = train_fusion(vec!["A".into()], s, labels(3, 3), &FusionConfig::default()).unwrap();
        assert!(t.loss_trace.last().unwrap() <= &t.loss_trace[0]);
        assert!(t.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(t.model.alphas[0] > 0.0);
    }

    #[test]
    fn apply_is_affine() {
        let m = FusionModel::new(vec!["A".into(), "B".into()], vec![2.0, -1.0], 0.5).unwrap();
        assert_eq!(apply_fusion(&m, &[1.0, 3.0]).unwrap(), -0.5);
        assert!(apply_fusion(&m, &[1.0]).is_err());
        let id = FusionModel::new(vec!["A".into()], vec![1.0], 0.0).unwrap();
        assert_eq!(apply_fusion(&id, &[-3.25]).unwrap(), -3.25);
    }

    #[test]
    fn errors() {
        assert!(FusionProblem::new(array![[1.0], [2.0]], labels(2, 0), 0.5).is_err());
        assert!(FusionProblem::new(array![[f64::NAN], [2.0]], labels(1, 1), 0.5).is_err());
        assert!(FusionModel::new(vec!["A".into(), "A".into()], vec![1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let m = FusionModel::new(vec!["A".into(), "G".into()], vec![0.1 + 0.2, -1e-300], 1.0 / 3.0).unwrap();
        assert_eq!(FusionModel::from_text(&m.to_text(), "m").unwrap(), m);
        assert!(FusionModel::from_text("alpha A 1\n", "m").is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(ensemble_preset("LA", "E1").unwrap().len(), 7);
        assert_eq!(ensemble_preset("pa", "e1").unwrap().len(), 9);
        assert_eq!(ensemble_preset("PA", "E3").unwrap(), vec!["A", "B"]);
        assert!(ensemble_preset("PA", "E4").is_none());
    }
}
