//! Corpus-level silence audit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::{measure_zero_runs, SilenceProfile};
use crate::audio::AudioSource;
use crate::error::{Error, Result};
use crate::protocol::{Key, TrialEntry};

/// First line of both CSV outputs; bumped whenever columns change.
pub const REPORT_SCHEMA: &str = "# silence-report v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
}

/// Linear-interpolation percentile of a sorted, non-empty slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl RunStats {
    pub fn from_values(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: percentile(&v, 0.5),
            p90: percentile(&v, 0.9),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    /// `class:bonafide`, `class:spoof` or `attack:<id>`
    pub group: String,
    pub count: usize,
    pub leading_samples: RunStats,
    pub trailing_samples: RunStats,
    pub leading_secs: RunStats,
    pub trailing_secs: RunStats,
    pub full_silence: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditedUtterance {
    pub entry: TrialEntry,
    pub profile: SilenceProfile,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilenceReport {
    pub utterances: Vec<AuditedUtterance>,
    pub groups: Vec<GroupSummary>,
    /// Protocol rows whose audio could not be loaded, with the reason.
    pub missing: Vec<(String, String)>,
    /// spoof / bonafide trailing-run median; `None` when a class is absent.
    pub trailing_median_ratio: Option<f64>,
    pub horse_warning: Option<String>,
}

fn summarize(group: String, items: &[&AuditedUtterance]) -> GroupSummary {
    let col = |f: &dyn Fn(&AuditedUtterance) -> f64| -> RunStats {
        RunStats::from_values(&items.iter().map(|u| f(u)).collect::<Vec<_>>())
    };
    GroupSummary {
        group,
        count: items.len(),
        leading_samples: col(&|u| u.profile.leading_run as f64),
        trailing_samples: col(&|u| u.profile.trailing_run as f64),
        leading_secs: col(&|u| u.profile.leading_run as f64 / u.sample_rate as f64),
        trailing_secs: col(&|u| u.profile.trailing_run as f64 / u.sample_rate as f64),
        full_silence: items.iter().filter(|u| u.profile.full_silence).count(),
    }
}

/// Measures every protocol utterance and summarizes per class and attack.
/// Unloadable files are listed in `missing`; the report is then partial.
pub fn silence_report(
    entries: &[TrialEntry],
    source: &dyn AudioSource,
    epsilon: f64,
    warn_ratio: f64,
) -> Result<SilenceReport> {
    if entries.is_empty() {
        return Err(Error::invalid("silence audit of an empty protocol"));
    }
    let loaded: Vec<std::result::Result<AuditedUtterance, (String, String)>> = entries
        .par_iter()
        .map(|e| match source.load(&e.utterance_id) {
            Ok(buf) if buf.is_empty() => Err((e.utterance_id.clone(), "empty audio".to_string())),
            Ok(buf) => {
                let mut profile = measure_zero_runs(&buf, epsilon);
                profile.utterance_id = e.utterance_id.clone();
                Ok(AuditedUtterance {
                    entry: e.clone(),
                    profile,
                    sample_rate: buf.sample_rate,
                })
            }
            Err(err) => Err((e.utterance_id.clone(), err.to_string())),
        })
        .collect();
    let mut utterances = Vec::new();
    let mut missing = Vec::new();
    for r in loaded {
        match r {
            Ok(u) => utterances.push(u),
            Err(m) => missing.push(m),
        }
    }
    if utterances.is_empty() {
        return Err(Error::invalid(format!(
            "none of the {} protocol utterances could be loaded",
            entries.len()
        )));
    }
    if !missing.is_empty() {
        log::warn!("{} utterances missing, silence report is partial", missing.len());
    }

    let mut groups = Vec::new();
    for key in [Key::Bonafide, Key::Spoof] {
        let items: Vec<&AuditedUtterance> = utterances.iter().filter(|u| u.entry.key == key).collect();
        if !items.is_empty() {
            groups.push(summarize(format!("class:{key}"), &items));
        }
    }
    let mut by_attack: BTreeMap<&str, Vec<&AuditedUtterance>> = BTreeMap::new();
    for u in &utterances {
        by_attack.entry(u.entry.attack_id.as_str()).or_default().push(u);
    }
    for (attack, items) in by_attack {
        groups.push(summarize(format!("attack:{attack}"), &items));
    }

    let median = |name: &str| {
        groups
            .iter()
            .find(|g| g.group == name)
            .map(|g| g.trailing_samples.median)
    };
    let ratio = match (median("class:spoof"), median("class:bonafide")) {
        (Some(s), Some(b)) if s == b => Some(1.0),
        (Some(s), Some(b)) if b == 0.0 => Some(if s > 0.0 { f64::INFINITY } else { 1.0 }),
        (Some(s), Some(b)) => Some(s / b),
        _ => None,
    };
    let horse_warning = ratio.and_then(|r| {
        let spread = if r >= 1.0 { r } else { 1.0 / r };
        (spread > warn_ratio).then(|| {
            let (more, less) = if r >= 1.0 { ("spoof", "bonafide") } else { ("bonafide", "spoof") };
            format!(
                "trailing-silence median of {more} is {spread:.2}x that of {less} (threshold {warn_ratio}x): \
                 a classifier can separate the classes by silence length alone"
            )
        })
    });

    Ok(SilenceReport {
        utterances,
        groups,
        missing,
        trailing_median_ratio: ratio,
        horse_warning,
    })
}

impl SilenceReport {
    pub fn is_partial(&self) -> bool {
        !self.missing.is_empty()
    }

    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{REPORT_SCHEMA}\n");
        out.push_str(
            "group,count,full_silence,\
             leading_mean_samples,leading_median_samples,leading_p90_samples,\
             trailing_mean_samples,trailing_median_samples,trailing_p90_samples,\
             leading_mean_s,leading_median_s,leading_p90_s,\
             trailing_mean_s,trailing_median_s,trailing_p90_s\n",
        );
        for g in &self.groups {
            write!(out, "{},{},{}", g.group, g.count, g.full_silence).unwrap();
            for s in [&g.leading_samples, &g.trailing_samples, &g.leading_secs, &g.trailing_secs] {
                write!(out, ",{},{},{}", s.mean, s.median, s.p90).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn utterance_csv(&self) -> String {
        let mut out = format!("{REPORT_SCHEMA}\n");
        out.push_str("utterance_id,key,attack_id,total_len,leading_run,trailing_run,full_silence,sample_rate\n");
        for u in &self.utterances {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                u.entry.utterance_id,
                u.entry.key,
                u.entry.attack_id,
                u.profile.total_len,
                u.profile.leading_run,
                u.profile.trailing_run,
                u.profile.full_silence,
                u.sample_rate
            )
            .unwrap();
        }
        out
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            writeln!(
                out,
                "{:<20} n={:<6} trailing median {:>9.1} samples ({:.3} s), leading median {:>9.1} samples",
                g.group, g.count, g.trailing_samples.median, g.trailing_secs.median, g.leading_samples.median
            )
            .unwrap();
        }
        if self.is_partial() {
            writeln!(out, "PARTIAL: {} utterances missing", self.missing.len()).unwrap();
        }
        match &self.horse_warning {
            Some(w) => writeln!(out, "WARNING: {w}").unwrap(),
            None => writeln!(out, "no class-dependent trailing silence detected").unwrap(),
        }
        out
    }
}
