mod common;

use antispoof::audio::AudioBuffer;
use antispoof::features::{
    add_deltas, cmvn, cqcc, cqt_magnitude, filterbank_cepstra, ltas, make_filterbank, scmc, stft_magnitude,
    CmvnStats, CqtConfig, CqtSpectrogram, FilterBankKind, StftConfig,
};
use antispoof::{FeatureKind, FeatureMatrix};
use common::Warp;
use ndarray::Array2;
use rand::Rng;

const SR: u32 = 16000;

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = common::rng(seed);
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn buffer(x: Vec<f64>) -> AudioBuffer {
    AudioBuffer::new(x, SR, "t").unwrap()
}

fn stft_cfg() -> StftConfig {
    StftConfig::new(400, 160, 512).unwrap()
}

/// 20 random frame indices of a spectrogram with `frames` rows.
fn picks(frames: usize, seed: u64) -> Vec<usize> {
    let mut r = common::rng(seed);
    (0..20).map(|_| r.gen_range(0..frames)).collect()
}

fn warp(kind: FilterBankKind) -> Warp {
    match kind {
        FilterBankKind::Mel => Warp::Mel,
        FilterBankKind::InvertedMel => Warp::InvMel,
        FilterBankKind::Linear => Warp::Linear,
    }
}

const KINDS: [FilterBankKind; 3] = [FilterBankKind::Mel, FilterBankKind::InvertedMel, FilterBankKind::Linear];

#[test]
fn stft_matches_direct_dft() {
    let x = noise(16000, 1);
    let cfg = stft_cfg();
    let mag = stft_magnitude(&buffer(x.clone()), &cfg).unwrap();
    assert_eq!(mag.nrows(), (16000 - 400) / 160 + 1);
    let w = common::hamming(400);
    for t in picks(mag.nrows(), 2) {
        let oracle = common::dft_magnitude(&x[t * 160..t * 160 + 400], &w, 512);
        for (k, o) in oracle.iter().enumerate() {
            assert!(common::close(mag[[t, k]], *o, 1e-9), "frame {t} bin {k}: {} vs {o}", mag[[t, k]]);
        }
    }
}

#[test]
fn sinusoid_peaks_at_its_bin() {
    let f = 50.0 * SR as f64 / 512.0;
    let x: Vec<f64> = (0..4000).map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / SR as f64).sin()).collect();
    let mag = stft_magnitude(&buffer(x), &stft_cfg()).unwrap();
    for row in mag.rows() {
        let arg = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(arg, 50);
    }
}

#[test]
fn filterbanks_match_closed_form() {
    let cfg = stft_cfg();
    for kind in KINDS {
        let fb = make_filterbank(kind, 20, &cfg, SR).unwrap();
        let oracle = common::filterbank(warp(kind), 20, 512, SR as f64);
        for (i, row) in oracle.iter().enumerate() {
            for (k, w) in row.iter().enumerate() {
                assert!(common::close(fb.matrix[[i, k]], *w, 1e-12), "{kind} filter {i} bin {k}");
            }
        }
    }
}

#[test]
fn inverted_mel_is_exactly_the_flipped_mel_bank() {
    for (n, fft) in [(20, 512), (40, 1024), (13, 256)] {
        let cfg = StftConfig::new(fft / 2, fft / 4, fft).unwrap();
        let mel = make_filterbank(FilterBankKind::Mel, n, &cfg, SR).unwrap();
        let inv = make_filterbank(FilterBankKind::InvertedMel, n, &cfg, SR).unwrap();
        let b = mel.n_bins();
        for i in 0..n {
            for k in 0..b {
                assert_eq!(inv.matrix[[i, k]], mel.matrix[[n - 1 - i, b - 1 - k]]);
            }
        }
    }
}

#[test]
fn cepstra_match_direct_formula() {
    let x = noise(12000, 3);
    let cfg = stft_cfg();
    let mag = stft_magnitude(&buffer(x.clone()), &cfg).unwrap();
    let w = common::hamming(400);
    for kind in KINDS {
        let fb = make_filterbank(kind, 20, &cfg, SR).unwrap();
        let oracle_fb = common::filterbank(warp(kind), 20, 512, SR as f64);
        let got = filterbank_cepstra(&mag, &fb, 20).unwrap();
        let sc = scmc(&mag, &fb, 20).unwrap();
        for t in picks(mag.nrows(), 4) {
            let spec = common::dft_magnitude(&x[t * 160..t * 160 + 400], &w, 512);
            let want = common::cepstra(&spec, &oracle_fb, 20);
            let want_sc = common::scmc(&spec, &oracle_fb, 512, SR as f64, 20);
            for j in 0..20 {
                assert!(common::close(got.data[[t, j]], want[j], 1e-9), "{kind} c{j}");
                assert!(common::close(sc.data[[t, j]], want_sc[j], 1e-9), "{kind} scmc c{j}");
            }
        }
    }
}

#[test]
fn flat_inputs_leave_only_c0() {
    let cfg = stft_cfg();
    let flat = Array2::from_elem((3, cfg.n_bins()), 0.7);
    for kind in KINDS {
        let mut fb = make_filterbank(kind, 20, &cfg, SR).unwrap();
        // unit-area rows so a flat spectrum gives equal filter energies
        for mut row in fb.matrix.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        for feats in [filterbank_cepstra(&flat, &fb, 20).unwrap(), scmc(&flat, &fb, 20).unwrap()] {
            for row in feats.data.rows() {
                assert!(row[0].abs() > 1e-3);
                assert!(row.iter().skip(1).all(|c| c.abs() < 1e-12), "{kind}: {row}");
            }
        }
    }
    let spec = CqtSpectrogram {
        mag: Array2::from_elem((2, 30), 0.3),
        freqs: (0..30).map(|j| 100.0 * 2f64.powf(j as f64 / 12.0)).collect(),
    };
    for row in cqcc(&spec, 20, 64).unwrap().data.rows() {
        assert!(row[0].abs() > 1e-3);
        assert!(row.iter().skip(1).all(|c| c.abs() < 1e-12));
    }
}

fn small_cqt() -> CqtConfig {
    CqtConfig {
        bins_per_octave: 12,
        f_min: 250.0,
        f_max: 4000.0,
        hop: 128,
        gamma: 0.0,
        sparsity: 0.0,
    }
}

#[test]
fn cqt_matches_direct_correlation() {
    let x = noise(6000, 5);
    for gamma in [0.0, 30.0] {
        let cfg = CqtConfig { gamma, ..small_cqt() };
        let spec = cqt_magnitude(&buffer(x.clone()), &cfg).unwrap();
        let lengths = cfg.kernel_lengths(SR);
        let frame_len = *lengths.iter().max().unwrap();
        for t in picks(spec.mag.nrows(), 6) {
            for (j, (&f, &len)) in spec.freqs.iter().zip(&lengths).enumerate() {
                let want = common::cq_coefficient(&x, t * cfg.hop, frame_len / 2, f, len, SR as f64);
                assert!(common::close(spec.mag[[t, j]], want, 1e-9), "frame {t} bin {j}");
            }
        }
    }
}

#[test]
fn cqt_sinusoid_peaks_at_its_bin() {
    let cfg = small_cqt();
    for j in [5usize, 20, 40] {
        let f = cfg.frequencies()[j];
        let x: Vec<f64> = (0..5000).map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / SR as f64).cos()).collect();
        let spec = cqt_magnitude(&buffer(x), &cfg).unwrap();
        for row in spec.mag.rows() {
            let arg = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(arg, j);
        }
    }
}

#[test]
fn cqcc_matches_interpolate_then_dct() {
    let x = noise(6000, 7);
    let spec = cqt_magnitude(&buffer(x), &small_cqt()).unwrap();
    let feats = cqcc(&spec, 20, 100).unwrap();
    let (lo, hi) = (spec.freqs[0], *spec.freqs.last().unwrap());
    let grid: Vec<f64> = (0..100).map(|i| lo + (hi - lo) * i as f64 / 99.0).collect();
    for t in picks(spec.mag.nrows(), 8) {
        let logp: Vec<f64> = spec.mag.row(t).iter().map(|m| common::floor_log(m * m)).collect();
        let resampled: Vec<f64> = grid.iter().map(|&g| common::lerp_at(&spec.freqs, &logp, g)).collect();
        let want = common::dct(&resampled, 20);
        for j in 0..20 {
            assert!(common::close(feats.data[[t, j]], want[j], 1e-9));
        }
    }
}

#[test]
fn ltas_is_log_of_mean_power() {
    let mut r = common::rng(9);
    let mag = Array2::from_shape_simple_fn((37, 257), || r.gen_range(0.0..3.0));
    let got = ltas(&mag).unwrap();
    for (k, g) in got.iter().enumerate() {
        let mean: f64 = (0..37).map(|t| mag[[t, k]] * mag[[t, k]]).sum::<f64>() / 37.0;
        assert!(common::close(*g, common::floor_log(mean), 1e-12));
    }
    let twice = ndarray::concatenate![ndarray::Axis(0), mag.view(), mag.view()];
    let again = ltas(&twice).unwrap();
    assert!(got.iter().zip(&again).all(|(a, b)| common::close(*a, *b, 1e-12)));
}

#[test]
fn deltas_match_direct_formula() {
    let mut r = common::rng(10);
    let rows: Vec<Vec<f64>> = (0..23).map(|_| (0..5).map(|_| r.gen_range(-4.0..4.0)).collect()).collect();
    let m = Array2::from_shape_fn((23, 5), |(t, d)| rows[t][d]);
    let out = add_deltas(&FeatureMatrix::new(m, FeatureKind::Mfcc), 2);
    let d = common::regression_delta(&rows, 2);
    let a = common::regression_delta(&d, 2);
    assert_eq!((out.n_static, out.dims()), (5, 15));
    for t in 0..23 {
        for j in 0..5 {
            assert_eq!(out.data[[t, j]], rows[t][j]);
            assert!(common::close(out.data[[t, 5 + j]], d[t][j], 1e-12));
            assert!(common::close(out.data[[t, 10 + j]], a[t][j], 1e-12));
        }
    }
}

#[test]
fn delta_of_a_ramp_is_its_slope() {
    let m = Array2::from_shape_fn((30, 3), |(t, d)| (d as f64 + 0.5) * t as f64 - 2.0);
    let out = add_deltas(&FeatureMatrix::new(m, FeatureKind::Lfcc), 2);
    for t in 4..26 {
        for d in 0..3 {
            assert!(common::close(out.data[[t, 3 + d]], d as f64 + 0.5, 1e-12));
            assert!(out.data[[t, 6 + d]].abs() < 1e-12);
        }
    }
}

#[test]
fn cmvn_matches_two_pass_statistics() {
    let mut r = common::rng(11);
    let m = Array2::from_shape_simple_fn((50, 4), || r.gen_range(-10.0..10.0));
    let mut with_const = m.clone();
    with_const.column_mut(2).fill(3.0);
    let out = cmvn(&FeatureMatrix::new(with_const.clone(), FeatureKind::Mfcc), None).unwrap();
    for d in 0..4 {
        let col: Vec<f64> = with_const.column(d).to_vec();
        let mu = col.iter().sum::<f64>() / 50.0;
        let sd = (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 50.0).sqrt();
        for t in 0..50 {
            let want = (col[t] - mu) / sd.max(1e-8);
            assert!(common::close(out.data[[t, d]], want, 1e-9), "dim {d}");
        }
    }
    assert!(out.data.column(2).iter().all(|v| v.abs() < 1e-9));
    let ident = CmvnStats {
        mean: ndarray::Array1::zeros(4),
        std: ndarray::Array1::ones(4),
    };
    let same = cmvn(&FeatureMatrix::new(m.clone(), FeatureKind::Mfcc), Some(&ident)).unwrap();
    assert_eq!(same.data, m);
}

#[test]
fn silent_frames_give_finite_features() {
    let cfg = stft_cfg();
    let mag = stft_magnitude(&buffer(vec![0.0; 2000]), &cfg).unwrap();
    for kind in KINDS {
        let fb = make_filterbank(kind, 20, &cfg, SR).unwrap();
        assert!(filterbank_cepstra(&mag, &fb, 20).unwrap().is_finite());
        assert!(scmc(&mag, &fb, 20).unwrap().is_finite());
    }
    assert!(ltas(&mag).unwrap().iter().all(|v| v.is_finite()));
    let spec = cqt_magnitude(&buffer(vec![0.0; 4000]), &small_cqt()).unwrap();
    assert!(cqcc(&spec, 20, 64).unwrap().is_finite());
}
