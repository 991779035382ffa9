//! Equal error rate and minimum normalized tandem detection cost.
//!
//! Scores are "higher means bonafide". At threshold `τ` a trial is accepted
//! when `score ≥ τ`, so `P_miss(τ)` is the fraction of bonafide scores below
//! `τ` and `P_fa(τ)` the fraction of spoof scores at or above it. Thresholds
//! sweep every distinct score plus `+∞` (reject everything).
//!
//! The EER is read off the convex hull of the ROC step points: the value
//! where the lower-left hull boundary crosses `P_miss = P_fa`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub bonafide: Vec<f64>,
    pub spoof: Vec<f64>,
}

impl ScoreSet {
    pub fn new(bonafide: Vec<f64>, spoof: Vec<f64>) -> Self {
        Self { bonafide, spoof }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bonafide.is_empty() || self.spoof.is_empty() {
            return Err(Error::invalid(format!(
                "metrics need both classes, got {} bonafide and {} spoof scores",
                self.bonafide.len(),
                self.spoof.len()
            )));
        }
        if self.bonafide.iter().chain(&self.spoof).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite score"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// ROC step points ordered by increasing threshold; the last has `τ = +∞`.
pub fn roc_sweep(s: &ScoreSet) -> Result<Vec<RocPoint>> {
    s.validate()?;
    let bona = sorted(&s.bonafide);
    let spoof = sorted(&s.spoof);
    let mut thresholds: Vec<f64> = bona.iter().chain(&spoof).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let (nb, ns) = (bona.len() as f64, spoof.len() as f64);
    Ok(thresholds
        .into_iter()
        .map(|t| {
            let below_b = bona.partition_point(|&v| v < t);
            let below_s = spoof.partition_point(|&v| v < t);
            RocPoint {
                threshold: t,
                p_miss: below_b as f64 / nb,
                p_fa: (spoof.len() - below_s) as f64 / ns,
            }
        })
        .collect())
}

fn cross(o: &RocPoint, a: &RocPoint, b: &RocPoint) -> f64 {
    (a.p_fa - o.p_fa) * (b.p_miss - o.p_miss) - (a.p_miss - o.p_miss) * (b.p_fa - o.p_fa)
}

/// Returns `(eer, threshold)`. The threshold is that of the hull vertex
/// nearest the crossing.
pub fn compute_eer(s: &ScoreSet) -> Result<(f64, f64)> {
    let mut pts = roc_sweep(s)?;
    // x = P_fa ascending; ties broken by P_miss ascending
    pts.sort_by(|a, b| a.p_fa.total_cmp(&b.p_fa).then(a.p_miss.total_cmp(&b.p_miss)));
    let mut hull: Vec<RocPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    for seg in hull.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let da = a.p_miss - a.p_fa;
        let db = b.p_miss - b.p_fa;
        if da >= 0.0 && db <= 0.0 {
            if da == db {
                return Ok((a.p_fa, a.threshold));
            }
            let t = da / (da - db);
            let eer = a.p_fa + t * (b.p_fa - a.p_fa);
            let thr = if t <= 0.5 { a.threshold } else { b.threshold };
            return Ok((eer, thr));
        }
    }
    // unreachable for a valid sweep, which spans (0, 1) to (1, 0)
    Err(Error::Numerical("ROC hull does not cross the diagonal".into()))
}

/// ASV system error rates at its fixed operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsvOperatingPoint {
    pub p_miss: f64,
    pub p_fa: f64,
    pub p_miss_spoof: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub p_target: f64,
    pub p_nontarget: f64,
    pub p_spoof: f64,
    pub c_miss_asv: f64,
    pub c_fa_asv: f64,
    pub c_miss_cm: f64,
    pub c_fa_cm: f64,
    pub asv: AsvOperatingPoint,
}

impl CostModel {
    /// Priors and costs of the 2019 challenge evaluation plan. The ASV
    /// operating point has no default.
    pub fn asvspoof2019(asv: AsvOperatingPoint) -> Self {
        Self {
            p_target: 0.9405,
            p_nontarget: 0.0095,
            p_spoof: 0.05,
            c_miss_asv: 1.0,
            c_fa_asv: 10.0,
            c_miss_cm: 1.0,
            c_fa_cm: 10.0,
            asv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let priors = [self.p_target, self.p_nontarget, self.p_spoof];
        if priors.iter().any(|p| !(0.0..=1.0).contains(p)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::Config(format!(
                "priors must lie on the simplex, got {:?}",
                priors
            )));
        }
        let costs = [self.c_miss_asv, self.c_fa_asv, self.c_miss_cm, self.c_fa_cm];
        if costs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config(format!("costs must be positive, got {costs:?}")));
        }
        let rates = [self.asv.p_miss, self.asv.p_fa, self.asv.p_miss_spoof];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("ASV rates must be in [0, 1], got {rates:?}")));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "p_target={} p_nontarget={} p_spoof={} c_miss_asv={} c_fa_asv={} c_miss_cm={} c_fa_cm={} asv_p_miss={} asv_p_fa={} asv_p_miss_spoof={}",
            self.p_target,
            self.p_nontarget,
            self.p_spoof,
            self.c_miss_asv,
            self.c_fa_asv,
            self.c_miss_cm,
            self.c_fa_cm,
            self.asv.p_miss,
            self.asv.p_fa,
            self.asv.p_miss_spoof
        )
    }
}

/// `(C1, C2)` such that `t-DCF(τ) = C1 P_miss_cm(τ) + C2 P_fa_cm(τ)` up to a
/// constant that the normalization removes.
pub fn tdcf_coefficients(cost: &CostModel) -> Result<(f64, f64)> {
    cost.validate()?;
    let c1 = cost.p_target * (cost.c_miss_cm - cost.c_miss_asv * cost.asv.p_miss)
        - cost.p_nontarget * cost.c_fa_asv * cost.asv.p_fa;
    let c2 = cost.c_fa_cm * cost.p_spoof * (1.0 - cost.asv.p_miss_spoof);
    if !(c1 > 0.0) || !(c2 > 0.0) {
        return Err(Error::Config(format!(
            "normalized t-DCF undefined: C1 = {c1}, C2 = {c2} (both must be positive)"
        )));
    }
    Ok((c1, c2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdcfPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
    pub tdcf_norm: f64,
}

pub fn tdcf_sweep(s: &ScoreSet, cost: &CostModel) -> Result<Vec<TdcfPoint>> {
    let (c1, c2) = tdcf_coefficients(cost)?;
    let norm = c1.min(c2);
    Ok(roc_sweep(s)?
        .into_iter()
        .map(|p| TdcfPoint {
            threshold: p.threshold,
            p_miss: p.p_miss,
            p_fa: p.p_fa,
            tdcf_norm: (c1 * p.p_miss + c2 * p.p_fa) / norm,
        })
        .collect())
}

/// Returns `(min normalized t-DCF, threshold)`; the first minimizer wins.
pub fn compute_min_tdcf(s: &ScoreSet, cost: &CostModel) -> Result<(f64, f64)> {
    let sweep = tdcf_sweep(s, cost)?;
    let best = sweep
        .iter()
        .fold(None::<&TdcfPoint>, |acc, p| match acc {
            Some(b) if b.tdcf_norm <= p.tdcf_norm => Some(b),
            _ => Some(p),
        })
        .expect("sweep is never empty");
    Ok((best.tdcf_norm, best.threshold))
}

/// CSV export of the full sweep, for DET plotting.
pub fn sweep_csv(points: &[TdcfPoint]) -> String {
    let mut out = String::from("threshold,p_miss,p_fa,tdcf_norm\n");
    for p in points {
        writeln!(out, "{},{},{},{}", p.threshold, p.p_miss, p.p_fa, p.tdcf_norm).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_tdcf: f64,
    pub tdcf_threshold: f64,
    pub n_bonafide: usize,
    pub n_spoof: usize,
}

pub fn evaluate(s: &ScoreSet, cost: &CostModel) -> Result<Evaluation> {
    let (eer, eer_threshold) = compute_eer(s)?;
    let (min_tdcf, tdcf_threshold) = compute_min_tdcf(s, cost)?;
    Ok(Evaluation {
        eer,
        eer_threshold,
        min_tdcf,
        tdcf_threshold,
        n_bonafide: s.bonafide.len(),
        n_spoof: s.spoof.len(),
    })
}

impl Evaluation {
    pub fn report(&self, cost: &CostModel) -> String {
        format!(
            "EER: {:.2}% (threshold {})\nmin t-DCF: {:.4} (threshold {})\nbonafide trials: {}\nspoof trials: {}\ncost model: {}\n",
            100.0 * self.eer,
            self.eer_threshold,
            self.min_tdcf,
            self.tdcf_threshold,
            self.n_bonafide,
            self.n_spoof,
            cost.describe()
        )
    }
}
