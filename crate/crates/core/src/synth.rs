//! Synthetic two-class corpora whose classes differ only in trailing silence.
//!
//! Every utterance is a voiced harmonic signal with random pitch, formants,
//! syllable-rate amplitude modulation and breath noise, quantized to the
//! 16-bit grid with no exact zeros inside the voiced part. Utterance `i` of
//! either class gets the same leading and trailing base silence, drawn from a
//! stream shared by index, so the silence distributions match. Spoof
//! utterances then get `spoof_extra_trailing` more zeros at the end.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::audio::{quantize_pcm16, write_audio, AudioBuffer, MemorySource};
use crate::error::{Error, Result};
use crate::protocol::{write_protocol, Key, TrialEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub per_class: usize,
    pub sample_rate: u32,
    pub min_speech_secs: f64,
    pub max_speech_secs: f64,
    /// Base silence lengths are uniform in `0..=max`.
    pub max_base_leading: usize,
    pub max_base_trailing: usize,
    pub spoof_extra_trailing: usize,
    /// Leading fraction of each class's indices that goes to training.
    pub train_fraction: f64,
    pub n_speakers: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class: 500,
            sample_rate: 16000,
            min_speech_secs: 0.4,
            max_speech_secs: 0.8,
            max_base_leading: 400,
            max_base_trailing: 800,
            spoof_extra_trailing: 8000,
            train_fraction: 0.5,
            n_speakers: 10,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// No silence anywhere: trimming is then a no-op.
    pub fn silence_free(self) -> Self {
        Self {
            max_base_leading: 0,
            max_base_trailing: 0,
            spoof_extra_trailing: 0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_class < 2 {
            return Err(Error::Config("per_class must be at least 2".into()));
        }
        if !(self.min_speech_secs > 0.0 && self.min_speech_secs <= self.max_speech_secs) {
            return Err(Error::Config("need 0 < min_speech_secs ≤ max_speech_secs".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        if self.n_speakers == 0 || self.sample_rate < 8000 {
            return Err(Error::Config("need ≥ 1 speaker and a sample rate of at least 8 kHz".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<TrialEntry>,
    pub test: Vec<TrialEntry>,
    pub audio: MemorySource,
}

const SPEECH_STREAM: u64 = 1 << 40;
const SILENCE_STREAM: u64 = 2 << 40;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn voiced(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<f64> {
    let sr = cfg.sample_rate as f64;
    let n = (rng.gen_range(cfg.min_speech_secs..=cfg.max_speech_secs) * sr).round() as usize;
    let f0 = rng.gen_range(90.0..220.0);
    let vibrato_rate = rng.gen_range(3.0..7.0);
    let vibrato_depth = rng.gen_range(0.01..0.04);
    let formants = [
        (rng.gen_range(300.0..900.0), rng.gen_range(80.0..200.0)),
        (rng.gen_range(900.0..2500.0), rng.gen_range(100.0..300.0)),
        (rng.gen_range(2500.0..3500.0), rng.gen_range(150.0..400.0)),
    ];
    let syllable_rate = rng.gen_range(3.0..6.0);
    let syllable_phase = rng.gen_range(0.0..2.0 * PI);
    let noise = Normal::new(0.0, rng.gen_range(0.005..0.02)).expect("positive std");
    let n_harm = ((0.45 * sr / f0) as usize).min(40);
    let amps: Vec<f64> = (1..=n_harm)
        .map(|h| {
            let f = h as f64 * f0;
            let env: f64 = formants
                .iter()
                .map(|&(c, bw)| (-0.5 * ((f - c) / bw).powi(2)).exp())
                .sum();
            (0.05 + env) / h as f64
        })
        .collect();
    let fade = (0.01 * sr) as usize;
    let mut phase = 0.0;
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            phase += 2.0 * PI * f0 * (1.0 + vibrato_depth * (2.0 * PI * vibrato_rate * t).sin()) / sr;
            let harmonic: f64 = amps
                .iter()
                .enumerate()
                .map(|(h, a)| a * ((h + 1) as f64 * phase).sin())
                .sum();
            let syllable = 0.55 + 0.45 * (2.0 * PI * syllable_rate * t + syllable_phase).sin().abs();
            let ramp = (i.min(n - 1 - i) as f64 / fade as f64).min(1.0);
            ramp * syllable * harmonic + noise.sample(rng)
        })
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = rng.gen_range(0.3..0.7) / peak.max(1e-12);
    for v in &mut x {
        let q = quantize_pcm16(*v * gain);
        // exact zeros are reserved for silence
        let q = if q == 0 { if *v < 0.0 { -1 } else { 1 } } else { q };
        *v = q as f64 / 32768.0;
    }
    x
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let n_train = ((cfg.per_class as f64 * cfg.train_fraction).round() as usize).clamp(1, cfg.per_class - 1);
    let jobs: Vec<(Key, usize)> = [Key::Bonafide, Key::Spoof]
        .into_iter()
        .flat_map(|k| (0..cfg.per_class).map(move |i| (k, i)))
        .collect();
    let made: Vec<(TrialEntry, AudioBuffer)> = jobs
        .par_iter()
        .map(|&(key, i)| {
            let class_tag = if key == Key::Bonafide { 0 } else { 1u64 << 32 };
            let mut speech_rng = stream(cfg.seed, SPEECH_STREAM | class_tag | i as u64);
            let mut silence_rng = stream(cfg.seed, SILENCE_STREAM | i as u64);
            let lead = silence_rng.gen_range(0..=cfg.max_base_leading);
            let mut trail = silence_rng.gen_range(0..=cfg.max_base_trailing);
            if key == Key::Spoof {
                trail += cfg.spoof_extra_trailing;
            }
            let mut x = vec![0.0; lead];
            x.extend(voiced(&mut speech_rng, cfg));
            x.extend(std::iter::repeat(0.0).take(trail));
            let (tag, attack) = match key {
                Key::Bonafide => ("B", "-"),
                Key::Spoof => ("S", "SX"),
            };
            let id = format!("SYN_{tag}_{i:05}");
            let speaker = format!("SPK{:02}", i % cfg.n_speakers);
            let entry = TrialEntry::new(&speaker, &id, attack, key)?;
            Ok((entry, AudioBuffer::new(x, cfg.sample_rate, id)?))
        })
        .collect::<Result<_>>()?;

    let mut corpus = SynthCorpus {
        train: Vec::new(),
        test: Vec::new(),
        audio: MemorySource::default(),
    };
    for ((_, i), (entry, buf)) in jobs.iter().zip(made) {
        if *i < n_train {
            corpus.train.push(entry);
        } else {
            corpus.test.push(entry);
        }
        corpus.audio.buffers.insert(buf.source_id.clone(), buf);
    }
    Ok(corpus)
}

/// Writes `audio/<id>.wav`, `train.txt` and `dev.txt` under `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let mut ids: Vec<&String> = corpus.audio.buffers.keys().collect();
    ids.sort();
    ids.par_iter()
        .map(|id| write_audio(audio_dir.join(format!("{id}.wav")), &corpus.audio.buffers[*id]))
        .collect::<Result<Vec<()>>>()?;
    write_protocol(dir.join("train.txt"), &corpus.train)?;
    write_protocol(dir.join("dev.txt"), &corpus.test)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::silence::measure_zero_runs;

    fn small() -> SynthConfig {
        SynthConfig {
            per_class: 6,
            ..Default::default()
        }
    }

    #[test]
    fn classes_differ_only_by_the_extra_tail() {
        let c = generate_corpus(&small()).unwrap();
        assert_eq!(c.train.len() + c.test.len(), 12);
        for i in 0..6 {
            let b = &c.audio.buffers[&format!("SYN_B_{i:05}")];
            let s = &c.audio.buffers[&format!("SYN_S_{i:05}")];
            let pb = measure_zero_runs(b, 0.0);
            let ps = measure_zero_runs(s, 0.0);
            assert_eq!(pb.leading_run, ps.leading_run);
            assert_eq!(ps.trailing_run, pb.trailing_run + 8000);
            // voiced part has no zeros
            let inner = &b.samples[pb.leading_run..b.len() - pb.trailing_run];
            assert!(inner.iter().all(|&v| v != 0.0));
        }
    }

    #[test]
    fn deterministic_and_grid_aligned() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(a.train, b.train);
        for (id, buf) in &a.audio.buffers {
            assert_eq!(buf, &b.audio.buffers[id]);
            assert!(buf.samples.iter().all(|v| (v * 32768.0).fract() == 0.0));
        }
    }

    #[test]
    fn silence_free_variant() {
        let c = generate_corpus(&small().silence_free()).unwrap();
        for buf in c.audio.buffers.values() {
            let p = measure_zero_runs(buf, 0.0);
            assert_eq!((p.leading_run, p.trailing_run), (0, 0));
        }
    }

    #[test]
    fn written_corpus_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_corpus(&SynthConfig { per_class: 2, ..Default::default() }).unwrap();
        write_corpus(&c, dir.path()).unwrap();
        let train = crate::protocol::parse_protocol(dir.path().join("train.txt")).unwrap();
        assert_eq!(train, c.train);
        let id = &train[0].utterance_id;
        let back = crate::audio::read_audio(dir.path().join("audio").join(format!("{id}.wav"))).unwrap();
        assert_eq!(back.samples, c.audio.buffers[id].samples);
    }
}
