//! Independent reference implementations used by the integration tests.
//! Everything here is written from the textbook formulas with plain loops,
//! sharing no code with the library beyond its data types.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- spectra

pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos())
        .collect()
}

/// |DFT| of the windowed, zero-padded frame, bins `0..=nfft/2`.
pub fn dft_magnitude(frame: &[f64], window: &[f64], nfft: usize) -> Vec<f64> {
    (0..=nfft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, (&x, &w)) in frame.iter().zip(window).enumerate() {
                let ang = -2.0 * PI * (k * n % nfft) as f64 / nfft as f64;
                re += x * w * ang.cos();
                im += x * w * ang.sin();
            }
            re.hypot(im)
        })
        .collect()
}

pub fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn imel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn triangle(f: f64, lo: f64, c: f64, hi: f64) -> f64 {
    if f <= lo || f >= hi {
        0.0
    } else if f <= c {
        (f - lo) / (c - lo)
    } else {
        (hi - f) / (hi - c)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Warp {
    Mel,
    InvMel,
    Linear,
}

/// `n × (nfft/2 + 1)` triangular filterbank. The inverted-mel bank places
/// filter `i` at the mirror image `nyquist − f` of mel filter `n − 1 − i`.
pub fn filterbank(warp: Warp, n: usize, nfft: usize, sr: f64) -> Vec<Vec<f64>> {
    let nyq = sr / 2.0;
    let edge = |i: usize| match warp {
        Warp::Linear => nyq * i as f64 / (n + 1) as f64,
        _ => imel(mel(nyq) * i as f64 / (n + 1) as f64),
    };
    (0..n)
        .map(|i| {
            (0..=nfft / 2)
                .map(|k| {
                    let f = k as f64 * sr / nfft as f64;
                    match warp {
                        Warp::InvMel => {
                            let j = n - 1 - i;
                            triangle(nyq - f, edge(j), edge(j + 1), edge(j + 2))
                        }
                        _ => triangle(f, edge(i), edge(i + 1), edge(i + 2)),
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II of `x`, first `n_out` coefficients.
pub fn dct(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
        })
        .collect()
}

pub fn floor_log(v: f64) -> f64 {
    v.max(1e-10).ln()
}

/// MFCC / IMFCC / LFCC of one frame of magnitudes.
pub fn cepstra(mag: &[f64], fb: &[Vec<f64>], n_ceps: usize) -> Vec<f64> {
    let logs: Vec<f64> = fb
        .iter()
        .map(|w| floor_log(w.iter().zip(mag).map(|(a, m)| a * m * m).sum()))
        .collect();
    dct(&logs, n_ceps)
}

pub fn scmc(mag: &[f64], fb: &[Vec<f64>], nfft: usize, sr: f64, n_ceps: usize) -> Vec<f64> {
    let logs: Vec<f64> = fb
        .iter()
        .map(|w| {
            let (mut num, mut den) = (0.0, 0.0);
            for (k, (&a, &m)) in w.iter().zip(mag).enumerate() {
                let f = k as f64 * sr / nfft as f64;
                num += a * f * m;
                den += a * f;
            }
            floor_log(if den > 0.0 { num / den } else { 0.0 })
        })
        .collect();
    dct(&logs, n_ceps)
}

/// Time-domain constant-Q correlation of `x[start..]` with a Hann-windowed
/// complex exponential of `len` samples centred at `start + center`.
pub fn cq_coefficient(x: &[f64], start: usize, center: usize, f: f64, len: usize, sr: f64) -> f64 {
    let hann: Vec<f64> = (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (len as f64 - 1.0)).cos())
        .collect();
    let norm: f64 = hann.iter().sum();
    let off = start + center - len / 2;
    let (mut re, mut im) = (0.0, 0.0);
    for (m, w) in hann.iter().enumerate() {
        let ang = 2.0 * PI * f * m as f64 / sr;
        // x · conj(w e^{iθ})
        re += x[off + m] * w / norm * ang.cos();
        im -= x[off + m] * w / norm * ang.sin();
    }
    re.hypot(im)
}

pub fn lerp_at(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    for j in 0..xs.len() - 1 {
        if x <= xs[j + 1] {
            let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
            return ys[j] + t * (ys[j + 1] - ys[j]);
        }
    }
    *ys.last().unwrap()
}

pub fn regression_delta(c: &[Vec<f64>], w: usize) -> Vec<Vec<f64>> {
    let t_max = c.len() as isize - 1;
    let denom: f64 = 2.0 * (1..=w).map(|n| (n * n) as f64).sum::<f64>();
    (0..c.len())
        .map(|t| {
            (0..c[0].len())
                .map(|d| {
                    (1..=w)
                        .map(|n| {
                            let a = (t as isize + n as isize).min(t_max) as usize;
                            let b = (t as isize - n as isize).max(0) as usize;
                            n as f64 * (c[a][d] - c[b][d])
                        })
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------- GMM

pub fn diag_gauss_logpdf(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| -0.5 * ((2.0 * PI * v).ln() + (x - m) * (x - m) / v))
        .sum()
}

pub fn mixture_logpdf(x: &[f64], w: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>]) -> f64 {
    let parts: Vec<f64> = (0..w.len())
        .map(|k| w[k].ln() + diag_gauss_logpdf(x, &means[k], &vars[k]))
        .collect();
    let m = parts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + parts.iter().map(|p| (p - m).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------- metrics

pub struct BruteMetrics {
    pub eer: f64,
    pub min_tdcf: f64,
}

/// Every distinct score and `+∞` as a threshold; acceptance is `score ≥ τ`.
pub fn roc_points(bona: &[f64], spoof: &[f64]) -> Vec<(f64, f64)> {
    let mut th: Vec<f64> = bona.iter().chain(spoof).copied().collect();
    th.push(f64::INFINITY);
    th.iter()
        .map(|&t| {
            let miss = bona.iter().filter(|&&s| s < t).count() as f64 / bona.len() as f64;
            let fa = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
            (fa, miss)
        })
        .collect()
}

/// EER of the ROC convex hull: the smallest point of the diagonal reached by
/// any segment between two ROC points.
pub fn hull_eer(points: &[(f64, f64)]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, &(fa_a, miss_a)) in points.iter().enumerate() {
        let da = miss_a - fa_a;
        if da == 0.0 {
            best = best.min(fa_a);
        }
        for &(fa_b, miss_b) in &points[i + 1..] {
            let db = miss_b - fa_b;
            if (da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0) {
                let t = da / (da - db);
                best = best.min(fa_a + t * (fa_b - fa_a));
            }
        }
    }
    best
}

pub fn brute_metrics(bona: &[f64], spoof: &[f64], c1: f64, c2: f64) -> BruteMetrics {
    let pts = roc_points(bona, spoof);
    let norm = c1.min(c2);
    let min_tdcf = pts
        .iter()
        .map(|&(fa, miss)| (c1 * miss + c2 * fa) / norm)
        .fold(f64::INFINITY, f64::min);
    BruteMetrics {
        eer: hull_eer(&pts),
        min_tdcf,
    }
}

// ---------------------------------------------------------------- partition

#[derive(Clone, Debug)]
pub struct Row {
    pub speaker: String,
    pub utt: String,
    pub attack: String,
    pub bonafide: bool,
}

pub fn attack_set<'a>(rows: impl IntoIterator<Item = &'a Row>) -> BTreeSet<String> {
    rows.into_iter()
        .filter(|r| !r.bonafide)
        .map(|r| r.attack.clone())
        .collect()
}

pub fn speaker_set<'a>(rows: impl IntoIterator<Item = &'a Row>) -> BTreeSet<String> {
    rows.into_iter().map(|r| r.speaker.clone()).collect()
}

pub fn utt_set<'a>(rows: impl IntoIterator<Item = &'a Row>) -> BTreeSet<String> {
    rows.into_iter().map(|r| r.utt.clone()).collect()
}

/// Utterance sets of (train_tr, train_discarded, dev_es, dev_lr,
/// dev_discarded) by set algebra, or `None` when a subset would lack a class
/// or dev_lr would lose an attack.
pub fn expected_partition(
    train: &[Row],
    dev: &[Row],
    heldout: &BTreeSet<String>,
    es_speakers: &BTreeSet<String>,
) -> Option<[BTreeSet<String>; 5]> {
    let all_train = utt_set(train);
    let held_train = utt_set(train.iter().filter(|r| !r.bonafide && heldout.contains(&r.attack)));
    let train_tr: BTreeSet<String> = all_train.difference(&held_train).cloned().collect();

    let es_rows = utt_set(dev.iter().filter(|r| es_speakers.contains(&r.speaker)));
    let all_dev = utt_set(dev);
    let dev_lr: BTreeSet<String> = all_dev.difference(&es_rows).cloned().collect();
    let es_keep = utt_set(dev.iter().filter(|r| r.bonafide || heldout.contains(&r.attack)));
    let dev_es: BTreeSet<String> = es_rows.intersection(&es_keep).cloned().collect();
    let dev_disc: BTreeSet<String> = es_rows.difference(&es_keep).cloned().collect();

    let has_both = |set: &BTreeSet<String>, rows: &[Row]| {
        let picked: Vec<&Row> = rows.iter().filter(|r| set.contains(&r.utt)).collect();
        picked.iter().any(|r| r.bonafide) && picked.iter().any(|r| !r.bonafide)
    };
    let lr_rows: Vec<&Row> = dev.iter().filter(|r| dev_lr.contains(&r.utt)).collect();
    if !has_both(&train_tr, train)
        || !has_both(&dev_es, dev)
        || !has_both(&dev_lr, dev)
        || attack_set(lr_rows) != attack_set(dev)
    {
        return None;
    }
    Some([train_tr, held_train, dev_es, dev_lr, dev_disc])
}

// ---------------------------------------------------------------- FLAC

struct Bits {
    out: Vec<u8>,
    acc: u64,
    n: u32,
}

impl Bits {
    fn new() -> Self {
        Self {
            out: Vec::new(),
            acc: 0,
            n: 0,
        }
    }

    fn put(&mut self, value: u64, bits: u32) {
        for i in (0..bits).rev() {
            self.acc = (self.acc << 1) | ((value >> i) & 1);
            self.n += 1;
            if self.n == 8 {
                self.out.push(self.acc as u8);
                self.acc = 0;
                self.n = 0;
            }
        }
    }
}

fn crc8(data: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &b in data {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 { (crc << 1) ^ 0x07 } else { crc << 1 };
        }
    }
    crc
}

fn crc16(data: &[u8]) -> u16 {
    let mut crc = 0u16;
    for &b in data {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x8005 } else { crc << 1 };
        }
    }
    crc
}

/// Mono 16-bit FLAC using only VERBATIM subframes, blocks of `block`
/// samples (16 ≤ block, fewer than 128 frames).
pub fn encode_flac(samples: &[i16], sample_rate: u32, block: usize) -> Vec<u8> {
    assert!(block >= 16 && samples.len() >= 16);
    let blocks: Vec<&[i16]> = samples.chunks(block).collect();
    assert!(blocks.len() < 128);
    let mut out = b"fLaC".to_vec();
    let mut h = Bits::new();
    h.put(1, 1); // last metadata block
    h.put(0, 7); // STREAMINFO
    h.put(34, 24);
    h.put(block.min(samples.len()) as u64, 16);
    h.put(block.min(samples.len()) as u64, 16);
    h.put(0, 24);
    h.put(0, 24);
    h.put(sample_rate as u64, 20);
    h.put(0, 3); // one channel
    h.put(15, 5); // 16 bits per sample
    h.put(samples.len() as u64, 36);
    h.put(0, 64);
    h.put(0, 64); // MD5 unknown
    out.extend(h.out);
    for (i, b) in blocks.iter().enumerate() {
        let mut f = Bits::new();
        f.put(0b11111111111110, 14);
        f.put(0, 1);
        f.put(0, 1); // fixed block size
        f.put(0b0111, 4); // 16-bit block size follows
        f.put(0, 4); // rate from STREAMINFO
        f.put(0, 4); // mono
        f.put(0b100, 3); // 16 bits
        f.put(0, 1);
        f.put(i as u64, 8); // frame number, one UTF-8 byte
        f.put(b.len() as u64 - 1, 16);
        let c = crc8(&f.out);
        f.put(c as u64, 8);
        f.put(0, 1);
        f.put(1, 6); // VERBATIM
        f.put(0, 1);
        for &s in *b {
            f.put(s as u16 as u64, 16);
        }
        let c = crc16(&f.out);
        f.put(c as u64, 16);
        out.extend(f.out);
    }
    out
}
