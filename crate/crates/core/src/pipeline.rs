//! End-to-end countermeasures: a feature front end plus a GMM, i-vector/SVM
//! or LTAS/SVM back end, trained and scored over a protocol.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::audio::{AudioBuffer, AudioSource};
use crate::error::{Error, Result};
use crate::features::{
    add_deltas, cmvn, cqcc, cqt_magnitude, filterbank_cepstra, ltas, make_filterbank, scmc, stft_magnitude,
    CqtConfig, FeatureKind, FeatureMatrix, FilterBankKind, StftConfig,
};
use crate::gmm::{llr_score, train_gmm, DiagGmm, EmConfig};
use crate::ivector::{baum_welch_stats, extract_ivectors, train_tv, SuffStats, TvConfig, TvModel};
use crate::protocol::{Key, ScoreRecord, TrialEntry};
use crate::silence::{trim_silence, TrimMode};
use crate::svm::{svm_score, train_linear_svm, SvmConfig, SvmModel};

/// How one utterance becomes a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEnd {
    pub kind: FeatureKind,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub min_fft: usize,
    pub n_filters: usize,
    pub n_ceps: usize,
    /// Filterbank warping used for SCMC.
    pub scmc_filterbank: FilterBankKind,
    /// Delta half-width; 0 keeps static coefficients only.
    pub delta_width: usize,
    pub utterance_cmvn: bool,
    pub cqt_bins_per_octave: usize,
    pub cqt_octaves: f64,
    /// `None` selects the usual variable-Q offset for the bin resolution.
    pub cqt_gamma: Option<f64>,
    pub cqt_sparsity: f64,
    pub cqt_uniform_bins: usize,
}

impl FrontEnd {
    pub fn for_kind(kind: FeatureKind) -> Self {
        Self {
            kind,
            window_ms: 25.0,
            hop_ms: 10.0,
            min_fft: 512,
            n_filters: 20,
            n_ceps: 20,
            scmc_filterbank: FilterBankKind::Linear,
            delta_width: if kind == FeatureKind::Ltas { 0 } else { 2 },
            utterance_cmvn: false,
            cqt_bins_per_octave: 96,
            cqt_octaves: 9.0,
            cqt_gamma: None,
            cqt_sparsity: 0.0054,
            cqt_uniform_bins: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == FeatureKind::Ivector {
            return Err(Error::Config("i-vectors are a back end, not a frame front end".into()));
        }
        if !(self.window_ms > 0.0 && self.hop_ms > 0.0) {
            return Err(Error::Config("window_ms and hop_ms must be positive".into()));
        }
        if self.n_ceps == 0 {
            return Err(Error::Config("n_ceps must be at least 1".into()));
        }
        if self.kind == FeatureKind::Ltas && self.delta_width != 0 {
            return Err(Error::Config("LTAS is one vector per utterance; deltas do not apply".into()));
        }
        if !(self.cqt_octaves > 0.0) {
            return Err(Error::Config("cqt_octaves must be positive".into()));
        }
        Ok(())
    }

    fn stft(&self, sample_rate: u32) -> Result<StftConfig> {
        StftConfig::from_millis(sample_rate, self.window_ms, self.hop_ms, self.min_fft)
    }

    pub fn cqt_config(&self, sample_rate: u32) -> CqtConfig {
        let hop = ((self.hop_ms * sample_rate as f64 / 1000.0).round() as usize).max(1);
        let mut c = CqtConfig::cqcc_default(sample_rate, hop);
        let r = 2f64.powf(1.0 / self.cqt_bins_per_octave as f64);
        c.bins_per_octave = self.cqt_bins_per_octave;
        c.f_min = c.f_max / 2f64.powf(self.cqt_octaves);
        c.gamma = self.cqt_gamma.unwrap_or(228.7 * (r - 1.0 / r));
        c.sparsity = self.cqt_sparsity;
        c
    }

    /// Shortest signal the front end can analyse. Shorter inputs (such as a
    /// fully silent file trimmed to one sample) are zero-padded to it.
    pub fn min_samples(&self, sample_rate: u32) -> Result<usize> {
        Ok(match self.kind {
            FeatureKind::Cqcc => {
                let c = self.cqt_config(sample_rate);
                c.validate(sample_rate)?;
                c.kernel_lengths(sample_rate).into_iter().max().unwrap_or(1)
            }
            _ => self.stft(sample_rate)?.window_length,
        })
    }

    pub fn extract(&self, buffer: &AudioBuffer) -> Result<FeatureMatrix> {
        self.validate()?;
        let need = self.min_samples(buffer.sample_rate)?;
        let padded;
        let buffer = if buffer.len() < need {
            let mut x = buffer.samples.clone();
            x.resize(need, 0.0);
            padded = buffer.with_samples(x);
            &padded
        } else {
            buffer
        };
        let sr = buffer.sample_rate;
        let stat = match self.kind {
            FeatureKind::Mfcc | FeatureKind::Imfcc | FeatureKind::Lfcc => {
                let fb_kind = match self.kind {
                    FeatureKind::Mfcc => FilterBankKind::Mel,
                    FeatureKind::Imfcc => FilterBankKind::InvertedMel,
                    _ => FilterBankKind::Linear,
                };
                let cfg = self.stft(sr)?;
                let fb = make_filterbank(fb_kind, self.n_filters, &cfg, sr)?;
                filterbank_cepstra(&stft_magnitude(buffer, &cfg)?, &fb, self.n_ceps)?
            }
            FeatureKind::Scmc => {
                let cfg = self.stft(sr)?;
                let fb = make_filterbank(self.scmc_filterbank, self.n_filters, &cfg, sr)?;
                scmc(&stft_magnitude(buffer, &cfg)?, &fb, self.n_ceps)?
            }
            FeatureKind::Cqcc => {
                let spec = cqt_magnitude(buffer, &self.cqt_config(sr))?;
                cqcc(&spec, self.n_ceps, self.cqt_uniform_bins)?
            }
            FeatureKind::Ltas => {
                let v = ltas(&stft_magnitude(buffer, &self.stft(sr)?)?)?;
                let n = v.len();
                FeatureMatrix::new(Array2::from_shape_vec((1, n), v).expect("1 × n"), FeatureKind::Ltas)
            }
            FeatureKind::Ivector => unreachable!("rejected by validate"),
        };
        let full = if self.delta_width > 0 {
            add_deltas(&stat, self.delta_width)
        } else {
            stat
        };
        if self.utterance_cmvn {
            cmvn(&full, None)
        } else {
            Ok(full)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    /// One GMM per class, scored by average log-likelihood ratio.
    Gmm { components: usize, em: EmConfig },
    /// One UBM + T matrix per front end, fused i-vectors, linear SVM.
    IvectorSvm {
        ubm_components: usize,
        ubm_em: EmConfig,
        tv: TvConfig,
        svm: SvmConfig,
    },
    /// Utterance LTAS vectors, linear SVM.
    LtasSvm { svm: SvmConfig },
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Gmm { .. } => "gmm",
            Backend::IvectorSvm { .. } => "ivector-svm",
            Backend::LtasSvm { .. } => "ltas-svm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub front_ends: Vec<FrontEnd>,
    pub backend: Backend,
}

impl PipelineSpec {
    pub fn validate(&self) -> Result<()> {
        for f in &self.front_ends {
            f.validate()?;
        }
        match (&self.backend, self.front_ends.as_slice()) {
            (Backend::Gmm { components, em }, [f]) => {
                if *components == 0 {
                    return Err(Error::Config("GMM needs at least one component".into()));
                }
                if f.kind == FeatureKind::Ltas {
                    return Err(Error::Config("GMM back end needs frame-level features".into()));
                }
                em.validate()
            }
            (Backend::IvectorSvm { ubm_em, svm, .. }, fs) if !fs.is_empty() => {
                if fs.iter().any(|f| f.kind == FeatureKind::Ltas) {
                    return Err(Error::Config("i-vector extractors need frame-level features".into()));
                }
                ubm_em.validate()?;
                svm.validate()
            }
            (Backend::LtasSvm { svm }, [f]) if f.kind == FeatureKind::Ltas => svm.validate(),
            (b, fs) => Err(Error::Config(format!(
                "{} back end cannot use front ends {:?}",
                b.name(),
                fs.iter().map(|f| f.kind.name()).collect::<Vec<_>>()
            ))),
        }
    }
}

/// Protocol rows with their audio, optionally silence-trimmed on load.
pub struct Corpus<'a> {
    pub entries: &'a [TrialEntry],
    pub source: &'a dyn AudioSource,
    pub trim: Option<(TrimMode, f64)>,
    full_silence: AtomicUsize,
}

impl<'a> Corpus<'a> {
    pub fn new(entries: &'a [TrialEntry], source: &'a dyn AudioSource) -> Self {
        Self {
            entries,
            source,
            trim: None,
            full_silence: AtomicUsize::new(0),
        }
    }

    pub fn trimmed(mut self, mode: TrimMode, epsilon: f64) -> Self {
        self.trim = Some((mode, epsilon));
        self
    }

    pub fn load(&self, entry: &TrialEntry) -> Result<AudioBuffer> {
        let buf = self.source.load(&entry.utterance_id)?;
        if buf.is_empty() {
            return Err(Error::Audio(format!("empty audio: {}", entry.utterance_id)));
        }
        Ok(match self.trim {
            Some((mode, eps)) => {
                let t = trim_silence(&buf, mode, eps);
                if t.full_silence {
                    self.full_silence.fetch_add(1, Ordering::Relaxed);
                }
                t.buffer
            }
            None => buf,
        })
    }

    /// Fully silent files seen while trimming so far.
    pub fn full_silence_count(&self) -> usize {
        self.full_silence.load(Ordering::Relaxed)
    }

    pub fn labels(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| if e.key == Key::Bonafide { 1.0 } else { -1.0 })
            .collect()
    }

    fn require_both_classes(&self) -> Result<()> {
        let has = |k| self.entries.iter().any(|e| e.key == k);
        if !has(Key::Bonafide) || !has(Key::Spoof) {
            return Err(Error::invalid("training data needs both bonafide and spoof utterances"));
        }
        Ok(())
    }
}

/// Features of every corpus utterance, in protocol order.
pub fn extract_corpus(front: &FrontEnd, corpus: &Corpus) -> Result<Vec<FeatureMatrix>> {
    corpus
        .entries
        .par_iter()
        .map(|e| {
            let f = front.extract(&corpus.load(e)?)?;
            if !f.is_finite() {
                return Err(Error::Numerical(format!("non-finite features for '{}'", e.utterance_id)));
            }
            Ok(f)
        })
        .collect()
}

/// Stacks the frames of the selected matrices in order.
pub fn pool_frames<'m>(mats: impl IntoIterator<Item = &'m FeatureMatrix>) -> Result<Array2<f64>> {
    let views: Vec<ArrayView2<f64>> = mats.into_iter().map(|m| m.data.view()).collect();
    if views.is_empty() {
        return Err(Error::invalid("no feature matrices to pool"));
    }
    let d = views[0].ncols();
    if let Some(v) = views.iter().find(|v| v.ncols() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: v.ncols(),
        });
    }
    Ok(ndarray::concatenate(Axis(0), &views).expect("column counts checked"))
}

pub fn train_class_gmms(
    feats: &[FeatureMatrix],
    entries: &[TrialEntry],
    components: usize,
    em: &EmConfig,
) -> Result<(DiagGmm, DiagGmm)> {
    let pick = |k: Key| {
        feats
            .iter()
            .zip(entries)
            .filter(move |(_, e)| e.key == k)
            .map(|(f, _)| f)
    };
    let bona = pool_frames(pick(Key::Bonafide))?;
    let spoof = pool_frames(pick(Key::Spoof))?;
    log::info!(
        "training GMMs with {components} components on {} bonafide and {} spoof frames",
        bona.nrows(),
        spoof.nrows()
    );
    let b = train_gmm(bona.view(), components, em)?;
    let s = train_gmm(spoof.view(), components, em)?;
    Ok((b.model, s.model))
}

pub fn train_ubm(feats: &[FeatureMatrix], components: usize, em: &EmConfig) -> Result<DiagGmm> {
    let frames = pool_frames(feats)?;
    Ok(train_gmm(frames.view(), components, em)?.model)
}

pub fn corpus_stats(ubm: &DiagGmm, feats: &[FeatureMatrix]) -> Result<Vec<SuffStats>> {
    feats.par_iter().map(|f| baum_welch_stats(ubm, f)).collect()
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    let n = rows.len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: r.len(),
        });
    }
    Ok(Array2::from_shape_vec((n, d), rows.concat()).expect("checked shape"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Countermeasure {
    Gmm {
        front: FrontEnd,
        bonafide: DiagGmm,
        spoof: DiagGmm,
    },
    IvectorSvm {
        extractors: Vec<(FrontEnd, TvModel)>,
        svm: SvmModel,
    },
    LtasSvm {
        front: FrontEnd,
        svm: SvmModel,
    },
}

pub fn train_countermeasure(spec: &PipelineSpec, corpus: &Corpus) -> Result<Countermeasure> {
    spec.validate()?;
    corpus.require_both_classes()?;
    match &spec.backend {
        Backend::Gmm { components, em } => {
            let front = spec.front_ends[0].clone();
            let feats = extract_corpus(&front, corpus)?;
            let (bonafide, spoof) = train_class_gmms(&feats, corpus.entries, *components, em)?;
            Ok(Countermeasure::Gmm { front, bonafide, spoof })
        }
        Backend::IvectorSvm {
            ubm_components,
            ubm_em,
            tv,
            svm,
        } => {
            let mut extractors = Vec::new();
            let mut per_extractor = Vec::new();
            for front in &spec.front_ends {
                let feats = extract_corpus(front, corpus)?;
                let ubm = train_ubm(&feats, *ubm_components, ubm_em)?;
                let stats = corpus_stats(&ubm, &feats)?;
                drop(feats);
                let model = train_tv(&stats, &ubm, tv)?.model;
                per_extractor.push(extract_ivectors(&model, &stats)?);
                extractors.push((front.clone(), model));
            }
            let fused: Vec<Vec<f64>> = (0..corpus.entries.len())
                .map(|u| per_extractor.iter().flat_map(|v| v[u].iter().copied()).collect())
                .collect();
            let x = rows_to_matrix(fused)?;
            let svm = train_linear_svm(&x, &corpus.labels(), svm)?.model;
            Ok(Countermeasure::IvectorSvm { extractors, svm })
        }
        Backend::LtasSvm { svm } => {
            let front = spec.front_ends[0].clone();
            let feats = extract_corpus(&front, corpus)?;
            let x = rows_to_matrix(feats.iter().map(|f| f.data.row(0).to_vec()).collect())?;
            let svm = train_linear_svm(&x, &corpus.labels(), svm)?.model;
            Ok(Countermeasure::LtasSvm { front, svm })
        }
    }
}

impl Countermeasure {
    /// Higher means more likely bonafide.
    pub fn score(&self, buffer: &AudioBuffer) -> Result<f64> {
        match self {
            Countermeasure::Gmm { front, bonafide, spoof } => llr_score(bonafide, spoof, &front.extract(buffer)?),
            Countermeasure::IvectorSvm { extractors, svm } => {
                let mut fused = Vec::new();
                for (front, tv) in extractors {
                    let stats = baum_welch_stats(tv.ubm(), &front.extract(buffer)?)?;
                    fused.extend(crate::ivector::extract_ivector(tv, &stats)?);
                }
                svm_score(svm, &fused)
            }
            Countermeasure::LtasSvm { front, svm } => {
                let f = front.extract(buffer)?;
                svm_score(svm, f.data.row(0).as_slice().expect("standard layout"))
            }
        }
    }
}

pub fn score_corpus(cm: &Countermeasure, corpus: &Corpus) -> Result<Vec<ScoreRecord>> {
    corpus
        .entries
        .par_iter()
        .map(|e| {
            Ok(ScoreRecord {
                utterance_id: e.utterance_id.clone(),
                score: cm.score(&corpus.load(e)?)?,
            })
        })
        .collect()
}
