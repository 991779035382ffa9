//! Shallow spoofing countermeasures for speaker verification.
//!
//! The crate covers the non-deep half of a replay / synthetic speech
//! detection toolkit:
//!
//! - [`audio`]: PCM16 WAV and FLAC decoding, PCM16 WAV encoding.
//! - [`features`]: STFT, mel / inverted-mel / linear filterbanks, MFCC, IMFCC,
//!   LFCC, SCMC, constant-Q transform and CQCC, LTAS, delta stacking, CMVN.
//! - [`gmm`]: diagonal GMMs trained with EM and scored by average
//!   log-likelihood ratio.
//! - [`ivector`] and [`svm`]: UBM sufficient statistics, total variability
//!   training, i-vector extraction and a linear SVM back end.
//! - [`fusion`]: prior-weighted logistic regression score fusion.
//! - [`metrics`]: EER and minimum normalized tandem detection cost.
//! - [`protocol`]: protocol / score files and the attack-disjoint
//!   train / validation / fusion partition.
//! - [`silence`]: digital-silence measurement, trimming, corpus audits and
//!   the train/test trimming interventions.
//! - [`pipeline`], [`config`] and [`synth`]: end-to-end countermeasure
//!   training, experiment configuration and synthetic test corpora.

pub mod audio;
pub mod config;
pub mod container;
pub mod error;
pub mod features;
pub mod fusion;
pub mod gmm;
pub mod ivector;
pub mod metrics;
pub mod pipeline;
pub mod protocol;
pub mod silence;
pub mod svm;
pub mod synth;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureMatrix};
pub use gmm::DiagGmm;
pub use metrics::{CostModel, ScoreSet};
pub use protocol::{Key, TrialEntry};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
