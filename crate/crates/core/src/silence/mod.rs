//! Digital silence: runs of (near-)zero samples at the start and end of a
//! recording.

mod intervention;
mod report;

use std::fmt;
use std::str::FromStr;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub use intervention::{run_intervention, InterventionMode, InterventionReport, InterventionSetup, MetricPair};
pub use report::{silence_report, GroupSummary, RunStats, SilenceReport, REPORT_SCHEMA};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SilenceProfile {
    pub utterance_id: String,
    pub leading_run: usize,
    pub trailing_run: usize,
    pub total_len: usize,
    /// Every sample is silent; both runs then equal `total_len`.
    pub full_silence: bool,
}

/// Leading and trailing runs of samples with `|x| ≤ epsilon`.
pub fn measure_zero_runs(buffer: &AudioBuffer, epsilon: f64) -> SilenceProfile {
    let silent = |x: &f64| x.abs() <= epsilon;
    let n = buffer.len();
    let leading = buffer.samples.iter().take_while(|x| silent(x)).count();
    let full = leading == n;
    let trailing = if full {
        n
    } else {
        buffer.samples.iter().rev().take_while(|x| silent(x)).count()
    };
    SilenceProfile {
        utterance_id: buffer.source_id.clone(),
        leading_run: leading,
        trailing_run: trailing,
        total_len: n,
        full_silence: full,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimMode {
    Leading,
    Trailing,
    Both,
}

impl FromStr for TrimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "leading" => Ok(TrimMode::Leading),
            "trailing" => Ok(TrimMode::Trailing),
            "both" => Ok(TrimMode::Both),
            _ => Err(Error::Config(format!(
                "unknown trim mode '{s}' (leading, trailing or both)"
            ))),
        }
    }
}

impl fmt::Display for TrimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrimMode::Leading => "leading",
            TrimMode::Trailing => "trailing",
            TrimMode::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trimmed {
    pub buffer: AudioBuffer,
    pub removed_leading: usize,
    pub removed_trailing: usize,
    /// The input was entirely silent and a single zero sample was kept.
    pub full_silence: bool,
}

pub fn trim_silence(buffer: &AudioBuffer, mode: TrimMode, epsilon: f64) -> Trimmed {
    let p = measure_zero_runs(buffer, epsilon);
    let cut_lead = matches!(mode, TrimMode::Leading | TrimMode::Both);
    let cut_trail = matches!(mode, TrimMode::Trailing | TrimMode::Both);
    if p.full_silence && (cut_lead || cut_trail) {
        return Trimmed {
            buffer: buffer.with_samples(vec![0.0]),
            removed_leading: if cut_lead { p.total_len - 1 } else { 0 },
            removed_trailing: if cut_lead { 0 } else { p.total_len - 1 },
            full_silence: true,
        };
    }
    let start = if cut_lead { p.leading_run } else { 0 };
    let end = if cut_trail { p.total_len - p.trailing_run } else { p.total_len };
    Trimmed {
        buffer: buffer.with_samples(buffer.samples[start..end].to_vec()),
        removed_leading: start,
        removed_trailing: p.total_len - end,
        full_silence: false,
    }
}
