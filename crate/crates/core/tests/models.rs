mod common;

use antispoof::fusion::{apply_fusion, train_fusion, FusionConfig, FusionModel, FusionProblem};
use antispoof::gmm::{avg_loglik, em_fit, train_gmm, variance_floor, EmConfig};
use antispoof::ivector::{baum_welch_stats, train_tv, SuffStats, TvConfig, TvModel};
use antispoof::svm::{svm_objective, train_linear_svm, SvmConfig};
use antispoof::{DiagGmm, FeatureKind, FeatureMatrix, Key};
use ndarray::{array, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_gmm(r: &mut ChaCha8Rng, k: usize, d: usize) -> DiagGmm {
    let raw: Vec<f64> = (0..k).map(|_| r.gen_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    DiagGmm::new(
        raw.iter().map(|w| w / s).collect(),
        Array2::from_shape_simple_fn((k, d), || r.gen_range(-3.0..3.0)),
        Array2::from_shape_simple_fn((k, d), || r.gen_range(0.3..2.0)),
    )
    .unwrap()
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[test]
fn avg_loglik_matches_direct_density() {
    let mut r = common::rng(1);
    for _ in 0..10 {
        let (k, d) = (r.gen_range(1..6), r.gen_range(1..5));
        let g = random_gmm(&mut r, k, d);
        let x = Array2::from_shape_simple_fn((40, d), || r.gen_range(-5.0..5.0));
        let (means, vars) = (rows(g.means()), rows(g.variances()));
        let want: f64 = x
            .rows()
            .into_iter()
            .map(|row| common::mixture_logpdf(&row.to_vec(), g.weights(), &means, &vars))
            .sum::<f64>()
            / 40.0;
        let got = avg_loglik(&g, &FeatureMatrix::new(x, FeatureKind::Mfcc)).unwrap();
        assert!(common::close(got, want, 1e-9 * want.abs().max(1.0)), "{got} vs {want}");
    }
}

#[test]
fn single_component_em_is_the_sample_gaussian() {
    let mut r = common::rng(2);
    let x = Array2::from_shape_simple_fn((500, 3), || 2.0 * common::gauss(&mut r) + 1.0);
    let cfg = EmConfig {
        variance_floor_ratio: 0.0,
        ..EmConfig::default()
    };
    let g = train_gmm(x.view(), 1, &cfg).unwrap().model;
    for d in 0..3 {
        let col = x.column(d);
        let mu = col.sum() / 500.0;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 500.0;
        assert!(common::close(g.means()[[0, d]], mu, 1e-9));
        assert!(common::close(g.variances()[[0, d]], var, 1e-9));
    }
    assert_eq!(g.weights(), &[1.0]);
}

#[test]
fn em_trace_never_decreases() {
    let mut r = common::rng(3);
    for _ in 0..10 {
        let truth = random_gmm(&mut r, 3, 2);
        let x = Array2::from_shape_simple_fn((300, 2), || r.gen_range(-4.0..4.0));
        let floor = variance_floor(x.view(), 1e-3);
        let cfg = EmConfig {
            max_iters: 30,
            rel_tol: 1e-14,
            ..EmConfig::default()
        };
        let trace = em_fit(x.view(), &truth, &cfg, &floor).unwrap().trace;
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }
}

// ------------------------------------------------------------ i-vectors

/// Dense Gauss-Jordan inverse and log-determinant.
fn inverse_logdet(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    let mut logdet = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        inv.swap(c, p);
        let piv = m[c][c];
        logdet += piv.abs().ln();
        for j in 0..n {
            m[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for i in 0..n {
            if i != c {
                let f = m[i][c];
                for j in 0..n {
                    m[i][j] -= f * m[c][j];
                    inv[i][j] -= f * inv[c][j];
                }
            }
        }
    }
    (inv, logdet)
}

fn random_stats(r: &mut ChaCha8Rng, k: usize, d: usize) -> SuffStats {
    let n: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..30.0)).collect();
    let f = Array2::from_shape_fn((k, d), |(c, _)| n[c] * r.gen_range(-2.0..2.0));
    SuffStats {
        frame_count: n.iter().sum::<f64>().round() as usize,
        n,
        f,
    }
}

#[test]
fn posterior_matches_dense_linear_algebra() {
    let mut r = common::rng(4);
    for _ in 0..10 {
        let (k, d, rank) = (3, 2, r.gen_range(1..5));
        let ubm = random_gmm(&mut r, k, d);
        let t = Array2::from_shape_simple_fn((k * d, rank), || r.gen_range(-1.0..1.0));
        let tv = TvModel::from_matrix(ubm.clone(), &t).unwrap();
        let s = random_stats(&mut r, k, d);
        let mut prec: Vec<Vec<f64>> = (0..rank).map(|i| (0..rank).map(|j| f64::from(i == j)).collect()).collect();
        let mut b = vec![0.0; rank];
        for c in 0..k {
            for dd in 0..d {
                let row = c * d + dd;
                let iv = 1.0 / ubm.variances()[[c, dd]];
                let centered = s.f[[c, dd]] - s.n[c] * ubm.means()[[c, dd]];
                for i in 0..rank {
                    b[i] += t[[row, i]] * iv * centered;
                    for j in 0..rank {
                        prec[i][j] += s.n[c] * t[[row, i]] * iv * t[[row, j]];
                    }
                }
            }
        }
        let (cov, logdet) = inverse_logdet(&prec);
        let mean: Vec<f64> = (0..rank).map(|i| (0..rank).map(|j| cov[i][j] * b[j]).sum()).collect();
        let post = tv.posterior(&s).unwrap();
        for i in 0..rank {
            assert!(common::close(post.mean[i], mean[i], 1e-9));
            for j in 0..rank {
                assert!(common::close(post.cov[(i, j)], cov[i][j], 1e-9));
            }
        }
        let ll = -0.5 * logdet + 0.5 * b.iter().zip(&mean).map(|(x, y)| x * y).sum::<f64>();
        assert!(common::close(post.loglik, ll, 1e-9 * ll.abs().max(1.0)));
    }
}

#[test]
fn zero_loading_matrix_gives_the_prior() {
    let mut r = common::rng(5);
    let ubm = random_gmm(&mut r, 4, 3);
    let tv = TvModel::from_matrix(ubm, &Array2::zeros((12, 5))).unwrap();
    let post = tv.posterior(&random_stats(&mut r, 4, 3)).unwrap();
    assert!(post.mean.iter().all(|&v| v == 0.0));
    assert_eq!(post.cov, nalgebra::DMatrix::identity(5, 5));
}

#[test]
fn zeroth_order_stats_sum_to_frame_count() {
    let mut r = common::rng(6);
    let ubm = random_gmm(&mut r, 5, 2);
    for frames in [1usize, 7, 120] {
        let x = Array2::from_shape_simple_fn((frames, 2), || r.gen_range(-6.0..6.0));
        let s = baum_welch_stats(&ubm, &FeatureMatrix::new(x, FeatureKind::Mfcc)).unwrap();
        assert!(common::close(s.n.iter().sum::<f64>(), frames as f64, 1e-9));
        assert_eq!(s.frame_count, frames);
    }
}

#[test]
fn tv_training_never_lowers_the_likelihood() {
    let mut r = common::rng(7);
    let ubm = random_gmm(&mut r, 4, 3);
    let stats: Vec<SuffStats> = (0..40).map(|_| random_stats(&mut r, 4, 3)).collect();
    let cfg = TvConfig {
        rank: 3,
        iters: 8,
        seed: 1,
    };
    let trace = train_tv(&stats, &ubm, &cfg).unwrap().loglik_trace;
    assert_eq!(trace.len(), 9);
    for w in trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{} -> {}", w[0], w[1]);
    }
}

// ------------------------------------------------------------ SVM

#[test]
fn two_point_svm_reaches_the_closed_form_optimum() {
    // x = ±1 with labels ±1: ½w² + C(2 max(0, 1 − w)) is minimized at w = 1, b = 0
    let x = array![[1.0], [-1.0]];
    let y = [1.0, -1.0];
    let cfg = SvmConfig {
        epochs: 400,
        ..SvmConfig::default()
    };
    let t = train_linear_svm(&x, &y, &cfg).unwrap();
    assert!(common::close(t.model.w[0], 1.0, 0.02), "w = {}", t.model.w[0]);
    assert!(t.model.b.abs() < 0.02);
    let obj = *t.objective_trace.last().unwrap();
    assert!(obj <= 0.5 + 1e-3 && obj >= 0.5 - 1e-12, "{obj}");
}

#[test]
fn duplicated_svm_columns_get_equal_weights() {
    let mut r = common::rng(8);
    let n = 120;
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x = Array2::from_shape_fn((n, 3), |(i, j)| {
        if j == 2 {
            0.0
        } else {
            y[i] * 0.8 + r.gen_range(-1.0..1.0) * (j as f64 + 1.0)
        }
    });
    let mut x = x;
    for i in 0..n {
        x[[i, 2]] = x[[i, 0]];
    }
    let t = train_linear_svm(&x, &y, &SvmConfig::default()).unwrap();
    assert!(common::close(t.model.w[0], t.model.w[2], 1e-12));
    for w in t.objective_trace.windows(2) {
        assert!(w[1] <= w[0]);
    }
    // the recorded objective is the primal on standardized rows
    let xn = Array2::from_shape_fn((n, 3), |(i, j)| (x[[i, j]] - t.model.mean[j]) / t.model.std[j]);
    let obj = svm_objective(&t.model.w, t.model.b, &xn, &y, 1.0);
    assert!(common::close(obj, *t.objective_trace.last().unwrap(), 1e-9 * obj));
}

// ------------------------------------------------------------ fusion

fn fusion_data(r: &mut ChaCha8Rng, n: usize, m: usize) -> (Array2<f64>, Vec<Key>) {
    let labels: Vec<Key> = (0..n).map(|i| if i % 3 == 0 { Key::Spoof } else { Key::Bonafide }).collect();
    let scores = Array2::from_shape_fn((n, m), |(i, j)| {
        let shift = if labels[i] == Key::Bonafide { 1.0 } else { -1.0 };
        shift * (j as f64 + 0.5) + 2.0 * common::gauss(r)
    });
    (scores, labels)
}

#[test]
fn fusion_gradient_matches_central_differences() {
    let mut r = common::rng(9);
    for _ in 0..50 {
        let m = r.gen_range(1..5);
        let n = r.gen_range(10..60);
        let (s, l) = fusion_data(&mut r, n, m);
        let p = FusionProblem::new(s, l, r.gen_range(0.1..0.9)).unwrap();
        let params: Vec<f64> = (0..=m).map(|_| r.gen_range(-2.0..2.0)).collect();
        let g = p.gradient(&params);
        let h = 1e-5;
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for j in 0..=m {
            let (mut up, mut dn) = (params.clone(), params.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (p.loss(&up) - p.loss(&dn)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6 * scale, "param {j}: {fd} vs {}", g[j]);
        }
    }
}

#[test]
fn fusion_loss_is_midpoint_convex() {
    let mut r = common::rng(10);
    for _ in 0..50 {
        let m = r.gen_range(1..4);
        let (s, l) = fusion_data(&mut r, 40, m);
        let pr = FusionProblem::new(s, l, 0.5).unwrap();
        let p: Vec<f64> = (0..=m).map(|_| r.gen_range(-5.0..5.0)).collect();
        let q: Vec<f64> = (0..=m).map(|_| r.gen_range(-5.0..5.0)).collect();
        let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        assert!(pr.loss(&mid) <= 0.5 * (pr.loss(&p) + pr.loss(&q)) + 1e-9);
    }
}

#[test]
fn fusion_splits_a_duplicated_input_evenly() {
    let mut r = common::rng(11);
    let (s, l) = fusion_data(&mut r, 200, 1);
    let dup = ndarray::concatenate![ndarray::Axis(1), s.view(), s.view()];
    let cfg = FusionConfig::default();
    let single = train_fusion(vec!["A".into()], s, l.clone(), &cfg).unwrap().model;
    let both = train_fusion(vec!["A".into(), "A2".into()], dup, l, &cfg).unwrap().model;
    assert!(common::close(both.alphas[0], both.alphas[1], 1e-6));
    assert!(common::close(both.alphas[0] + both.alphas[1], single.alphas[0], 1e-6));
    assert!(common::close(both.beta, single.beta, 1e-6));
}

#[test]
fn fused_loss_beats_each_single_calibration() {
    let mut r = common::rng(12);
    let (s, l) = fusion_data(&mut r, 150, 3);
    let cfg = FusionConfig::default();
    let ids: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let fused = train_fusion(ids, s.clone(), l.clone(), &cfg).unwrap();
    let fused_loss = *fused.loss_trace.last().unwrap();
    for j in 0..3 {
        let col = s.column(j).to_owned().insert_axis(ndarray::Axis(1));
        let one = train_fusion(vec!["X".into()], col, l.clone(), &cfg).unwrap();
        assert!(fused_loss <= one.loss_trace.last().unwrap() + 1e-6);
    }
}

#[test]
fn fusion_apply_follows_its_input_order() {
    let a = FusionModel::new(vec!["A".into(), "B".into()], vec![0.5, -2.0], 0.25).unwrap();
    let b = FusionModel::new(vec!["B".into(), "A".into()], vec![-2.0, 0.5], 0.25).unwrap();
    assert_eq!(apply_fusion(&a, &[3.0, 1.5]).unwrap(), apply_fusion(&b, &[1.5, 3.0]).unwrap());
}
