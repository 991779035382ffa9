//! Train/test silence-trimming interventions.
//!
//! | mode | train audio | test audio |
//! |------|-------------|------------|
//! | I    | original    | trimmed    |
//! | II   | trimmed     | original   |
//! | III  | trimmed     | trimmed    |
//!
//! Each is compared with a baseline trained and tested on original audio.

use std::fmt;
use std::str::FromStr;

use super::TrimMode;
use crate::audio::AudioSource;
use crate::error::{Error, Result};
use crate::metrics::{compute_eer, compute_min_tdcf, CostModel};
use crate::pipeline::{score_corpus, train_countermeasure, Corpus, PipelineSpec};
use crate::protocol::{join_scores, ScoreRecord, TrialEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterventionMode {
    I,
    II,
    III,
}

impl InterventionMode {
    pub fn trims_train(self) -> bool {
        matches!(self, InterventionMode::II | InterventionMode::III)
    }

    pub fn trims_test(self) -> bool {
        matches!(self, InterventionMode::I | InterventionMode::III)
    }
}

impl FromStr for InterventionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(InterventionMode::I),
            "II" | "2" => Ok(InterventionMode::II),
            "III" | "3" => Ok(InterventionMode::III),
            _ => Err(Error::Config(format!("unknown intervention '{s}' (I, II or III)"))),
        }
    }
}

impl fmt::Display for InterventionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterventionMode::I => "I",
            InterventionMode::II => "II",
            InterventionMode::III => "III",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPair {
    pub min_tdcf: f64,
    pub eer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionReport {
    pub mode: InterventionMode,
    pub trim_mode: TrimMode,
    pub label: String,
    pub before: MetricPair,
    pub after: MetricPair,
    pub before_scores: Vec<ScoreRecord>,
    pub after_scores: Vec<ScoreRecord>,
    /// Fully silent files reduced to one sample, in train and test.
    pub full_silence_train: usize,
    pub full_silence_test: usize,
}

fn metrics(scores: &[ScoreRecord], test: &[TrialEntry], cost: &CostModel) -> Result<MetricPair> {
    let set = join_scores(scores, test)?;
    Ok(MetricPair {
        eer: compute_eer(&set)?.0,
        min_tdcf: compute_min_tdcf(&set, cost)?.0,
    })
}

pub struct InterventionSetup<'a> {
    pub mode: InterventionMode,
    pub trim_mode: TrimMode,
    pub epsilon: f64,
    pub cost: &'a CostModel,
    /// Row label in the report, e.g. the model name.
    pub label: String,
}

/// Trains and scores the baseline and the intervention variant.
pub fn run_intervention(
    spec: &PipelineSpec,
    train: &[TrialEntry],
    test: &[TrialEntry],
    source: &dyn AudioSource,
    setup: &InterventionSetup,
) -> Result<InterventionReport> {
    spec.validate()?;
    let (mode, trim, eps) = (setup.mode, setup.trim_mode, setup.epsilon);

    let base_train = Corpus::new(train, source);
    let base_test = Corpus::new(test, source);
    let baseline = train_countermeasure(spec, &base_train)?;
    let before_scores = score_corpus(&baseline, &base_test)?;
    let before = metrics(&before_scores, test, setup.cost)?;

    let trimmed_train = Corpus::new(train, source).trimmed(trim, eps);
    let model = if mode.trims_train() {
        train_countermeasure(spec, &trimmed_train)?
    } else {
        baseline
    };
    let test_corpus = if mode.trims_test() {
        Corpus::new(test, source).trimmed(trim, eps)
    } else {
        Corpus::new(test, source)
    };
    let after_scores = score_corpus(&model, &test_corpus)?;
    let after = metrics(&after_scores, test, setup.cost)?;

    Ok(InterventionReport {
        mode,
        trim_mode: trim,
        label: setup.label.clone(),
        before,
        after,
        before_scores,
        after_scores,
        full_silence_train: trimmed_train.full_silence_count(),
        full_silence_test: test_corpus.full_silence_count(),
    })
}

impl InterventionReport {
    pub fn table(&self) -> String {
        let what = match self.mode {
            InterventionMode::I => "test only",
            InterventionMode::II => "train only",
            InterventionMode::III => "train and test",
        };
        format!(
            "Intervention {} ({} silence removed, {what})\n\
             {:<12} {:>24} {:>24}\n\
             {:<12} {:>24} {:>24}\n\
             fully silent files kept as one sample: train {}, test {}\n",
            self.mode,
            self.trim_mode,
            "model",
            "t-DCF before -> after",
            "EER % before -> after",
            self.label,
            format!("{:.4} -> {:.4}", self.before.min_tdcf, self.after.min_tdcf),
            format!("{:.2} -> {:.2}", 100.0 * self.before.eer, 100.0 * self.after.eer),
            self.full_silence_train,
            self.full_silence_test,
        )
    }
}
