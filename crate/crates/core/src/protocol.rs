//! Protocol files, score files and the train / validation / fusion partition.
//!
//! Protocol lines are whitespace separated, either
//! `speaker utterance attack key` or
//! `speaker utterance environment attack key`. Bonafide rows carry the attack
//! id `-`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::ScoreSet;

pub const BONAFIDE_ATTACK: &str = "-";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Bonafide,
    Spoof,
}

impl FromStr for Key {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bonafide" => Ok(Key::Bonafide),
            "spoof" => Ok(Key::Spoof),
            _ => Err(Error::invalid(format!("unknown key '{s}' (expected bonafide or spoof)"))),
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Key::Bonafide => "bonafide",
            Key::Spoof => "spoof",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialEntry {
    pub speaker_id: String,
    pub utterance_id: String,
    pub environment_id: Option<String>,
    pub attack_id: String,
    pub key: Key,
}

impl TrialEntry {
    pub fn new(speaker: &str, utterance: &str, attack: &str, key: Key) -> Result<Self> {
        let e = Self {
            speaker_id: speaker.to_string(),
            utterance_id: utterance.to_string(),
            environment_id: None,
            attack_id: attack.to_string(),
            key,
        };
        e.check()?;
        Ok(e)
    }

    fn check(&self) -> Result<()> {
        match (self.key, self.attack_id == BONAFIDE_ATTACK) {
            (Key::Bonafide, false) => Err(Error::invalid(format!(
                "bonafide utterance '{}' has attack id '{}'",
                self.utterance_id, self.attack_id
            ))),
            (Key::Spoof, true) => Err(Error::invalid(format!(
                "spoof utterance '{}' has the bonafide attack id '-'",
                self.utterance_id
            ))),
            _ => Ok(()),
        }
    }

    pub fn is_bonafide(&self) -> bool {
        self.key == Key::Bonafide
    }

    fn to_line(&self) -> String {
        match &self.environment_id {
            Some(env) => format!(
                "{} {} {} {} {}",
                self.speaker_id, self.utterance_id, env, self.attack_id, self.key
            ),
            None => format!(
                "{} {} {} {}",
                self.speaker_id, self.utterance_id, self.attack_id, self.key
            ),
        }
    }
}

pub fn parse_protocol_str(text: &str, name: &str) -> Result<Vec<TrialEntry>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let perr = |message: String| Error::Parse {
            path: name.to_string(),
            line: i + 1,
            message,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let (speaker, utt, env, attack, key) = match cols.as_slice() {
            [s, u, a, k] => (*s, *u, None, *a, *k),
            [s, u, e, a, k] => (*s, *u, Some(*e), *a, *k),
            _ => {
                return Err(perr(format!(
                    "expected 4 or 5 columns, found {}",
                    cols.len()
                )))
            }
        };
        let key: Key = key.parse().map_err(|e: Error| perr(e.to_string()))?;
        let entry = TrialEntry {
            speaker_id: speaker.to_string(),
            utterance_id: utt.to_string(),
            environment_id: env.map(str::to_string),
            attack_id: attack.to_string(),
            key,
        };
        entry.check().map_err(|e| perr(e.to_string()))?;
        if !seen.insert(entry.utterance_id.clone()) {
            return Err(perr(format!("duplicate utterance id '{utt}'")));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn parse_protocol(path: impl AsRef<Path>) -> Result<Vec<TrialEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_protocol_str(&text, &path.display().to_string())
}

pub fn format_protocol(entries: &[TrialEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

pub fn write_protocol(path: impl AsRef<Path>, entries: &[TrialEntry]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_protocol(entries)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpeakerSelection {
    /// Seeded shuffle of the sorted dev speakers, first `round(f · n)` kept
    /// (at least one, at most `n − 1`).
    Fraction(f64),
    Explicit(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub heldout_attacks: BTreeSet<String>,
    pub dev_es_speakers: SpeakerSelection,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.heldout_attacks.is_empty() {
            return Err(Error::Config("heldout_attacks must not be empty".into()));
        }
        if self.heldout_attacks.contains(BONAFIDE_ATTACK) {
            return Err(Error::Config("'-' cannot be a held-out attack".into()));
        }
        match &self.dev_es_speakers {
            SpeakerSelection::Fraction(f) if !(*f > 0.0 && *f < 1.0) => Err(Error::Config(format!(
                "dev_es speaker fraction must be in (0, 1), got {f}"
            ))),
            SpeakerSelection::Explicit(s) if s.is_empty() => {
                Err(Error::Config("explicit dev_es speaker set is empty".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subset {
    TrainTr,
    TrainDiscarded,
    DevEs,
    DevLr,
    DevDiscarded,
}

impl Subset {
    pub const ALL: [Subset; 5] = [
        Subset::TrainTr,
        Subset::TrainDiscarded,
        Subset::DevEs,
        Subset::DevLr,
        Subset::DevDiscarded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subset::TrainTr => "train_tr",
            Subset::TrainDiscarded => "train_discarded",
            Subset::DevEs => "dev_es",
            Subset::DevLr => "dev_lr",
            Subset::DevDiscarded => "dev_discarded",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subset::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown subset '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub train_tr: Vec<TrialEntry>,
    pub train_discarded: Vec<TrialEntry>,
    pub dev_es: Vec<TrialEntry>,
    pub dev_lr: Vec<TrialEntry>,
    pub dev_discarded: Vec<TrialEntry>,
    pub dev_es_speakers: BTreeSet<String>,
}

fn attacks(entries: &[TrialEntry]) -> BTreeSet<&str> {
    entries
        .iter()
        .filter(|e| !e.is_bonafide())
        .map(|e| e.attack_id.as_str())
        .collect()
}

fn require_both_classes(entries: &[TrialEntry], name: &str) -> Result<()> {
    let has = |k| entries.iter().any(|e| e.key == k);
    if !has(Key::Bonafide) || !has(Key::Spoof) {
        return Err(Error::Config(format!(
            "partition leaves {name} without {} rows",
            if has(Key::Bonafide) { "spoof" } else { "bonafide" }
        )));
    }
    Ok(())
}

pub fn partition_dataset(train: &[TrialEntry], dev: &[TrialEntry], spec: &PartitionSpec) -> Result<Partition> {
    spec.validate()?;
    let dev_attacks = attacks(dev);
    let train_attacks = attacks(train);
    for a in &spec.heldout_attacks {
        if !dev_attacks.contains(a.as_str()) {
            return Err(Error::Config(format!("held-out attack '{a}' does not occur in dev")));
        }
        if !train_attacks.contains(a.as_str()) {
            log::warn!("held-out attack '{a}' does not occur in train");
        }
    }

    let speakers: BTreeSet<&str> = dev.iter().map(|e| e.speaker_id.as_str()).collect();
    let es_speakers: BTreeSet<String> = match &spec.dev_es_speakers {
        SpeakerSelection::Explicit(set) => {
            if let Some(s) = set.iter().find(|s| !speakers.contains(s.as_str())) {
                return Err(Error::Config(format!("dev_es speaker '{s}' not in dev protocol")));
            }
            set.clone()
        }
        SpeakerSelection::Fraction(f) => {
            if speakers.len() < 2 {
                return Err(Error::Config("dev needs at least 2 speakers to split".into()));
            }
            let mut order: Vec<&str> = speakers.iter().copied().collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
            let take = ((f * order.len() as f64).round() as usize).clamp(1, order.len() - 1);
            order[..take].iter().map(|s| s.to_string()).collect()
        }
    };

    let (train_tr, train_discarded): (Vec<_>, Vec<_>) = train
        .iter()
        .cloned()
        .partition(|e| e.is_bonafide() || !spec.heldout_attacks.contains(&e.attack_id));

    let mut dev_es = Vec::new();
    let mut dev_lr = Vec::new();
    let mut dev_discarded = Vec::new();
    for e in dev {
        if !es_speakers.contains(&e.speaker_id) {
            dev_lr.push(e.clone());
        } else if e.is_bonafide() || spec.heldout_attacks.contains(&e.attack_id) {
            dev_es.push(e.clone());
        } else {
            dev_discarded.push(e.clone());
        }
    }

    require_both_classes(&train_tr, "train_tr")?;
    require_both_classes(&dev_es, "dev_es")?;
    require_both_classes(&dev_lr, "dev_lr")?;
    let lr_attacks = attacks(&dev_lr);
    if let Some(a) = dev_attacks.iter().find(|a| !lr_attacks.contains(*a)) {
        return Err(Error::Config(format!(
            "dev_lr lost attack '{a}': every attack must keep a speaker outside dev_es"
        )));
    }
    let train_speakers: BTreeSet<&str> = train_tr.iter().map(|e| e.speaker_id.as_str()).collect();
    if es_speakers.iter().any(|s| train_speakers.contains(s.as_str())) {
        log::warn!("train_tr and dev_es share speakers");
    }

    Ok(Partition {
        train_tr,
        train_discarded,
        dev_es,
        dev_lr,
        dev_discarded,
        dev_es_speakers: es_speakers,
    })
}

impl Partition {
    pub fn subset(&self, s: Subset) -> &[TrialEntry] {
        match s {
            Subset::TrainTr => &self.train_tr,
            Subset::TrainDiscarded => &self.train_discarded,
            Subset::DevEs => &self.dev_es,
            Subset::DevLr => &self.dev_lr,
            Subset::DevDiscarded => &self.dev_discarded,
        }
    }

    /// `utterance_id,subset` for every input row.
    pub fn manifest_csv(&self) -> String {
        let mut out = String::from("utterance_id,subset\n");
        for s in Subset::ALL {
            for e in self.subset(s) {
                writeln!(out, "{},{}", e.utterance_id, s).unwrap();
            }
        }
        out
    }

    /// Row counts per subset, attack and speaker.
    pub fn summary(&self) -> String {
        let mut out = String::from("subset,field,value,rows\n");
        for s in Subset::ALL {
            let rows = self.subset(s);
            let mut by_attack: BTreeMap<&str, usize> = BTreeMap::new();
            let mut by_speaker: BTreeMap<&str, usize> = BTreeMap::new();
            for e in rows {
                *by_attack.entry(&e.attack_id).or_default() += 1;
                *by_speaker.entry(&e.speaker_id).or_default() += 1;
            }
            writeln!(out, "{s},total,,{}", rows.len()).unwrap();
            for (a, n) in by_attack {
                writeln!(out, "{s},attack,{a},{n}").unwrap();
            }
            for (sp, n) in by_speaker {
                writeln!(out, "{s},speaker,{sp},{n}").unwrap();
            }
        }
        out
    }
}

/// Reads a `utterance_id,subset` manifest.
pub fn read_partition_manifest(path: impl AsRef<Path>) -> Result<HashMap<String, Subset>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let (utt, subset) = line
            .split_once(',')
            .ok_or_else(|| perr("expected utterance_id,subset".into()))?;
        let subset: Subset = subset.trim().parse().map_err(|e: Error| perr(e.to_string()))?;
        if out.insert(utt.trim().to_string(), subset).is_some() {
            return Err(perr(format!("duplicate utterance id '{utt}'")));
        }
    }
    Ok(out)
}

pub fn filter_subset(entries: &[TrialEntry], manifest: &HashMap<String, Subset>, subset: Subset) -> Vec<TrialEntry> {
    entries
        .iter()
        .filter(|e| manifest.get(&e.utterance_id) == Some(&subset))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub utterance_id: String,
    pub score: f64,
}

pub fn parse_scores_str(text: &str, name: &str) -> Result<Vec<ScoreRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |message: String| Error::Parse {
            path: name.to_string(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [utt, score] = cols.as_slice() else {
            return Err(perr(format!("expected 'utterance_id score', found {} columns", cols.len())));
        };
        let score: f64 = score
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| perr(format!("unparseable score '{score}'")))?;
        if !seen.insert(utt.to_string()) {
            return Err(perr(format!("duplicate utterance id '{utt}'")));
        }
        out.push(ScoreRecord {
            utterance_id: utt.to_string(),
            score,
        });
    }
    Ok(out)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores_str(&text, &path.display().to_string())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_scores(records: &[ScoreRecord]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{} {:?}", r.utterance_id, r.score).unwrap();
    }
    out
}

pub fn write_scores(path: impl AsRef<Path>, records: &[ScoreRecord]) -> Result<()> {
    let path = path.as_ref();
    if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::invalid(format!("non-finite score for '{}'", r.utterance_id)));
    }
    std::fs::write(path, format_scores(records)).map_err(|e| Error::io(path, e))
}

/// Splits scores by the protocol key. Every protocol row must be scored.
pub fn join_scores(records: &[ScoreRecord], protocol: &[TrialEntry]) -> Result<ScoreSet> {
    let table: HashMap<&str, f64> = records.iter().map(|r| (r.utterance_id.as_str(), r.score)).collect();
    let mut set = ScoreSet::default();
    let mut missing = Vec::new();
    for e in protocol {
        match table.get(e.utterance_id.as_str()) {
            Some(&s) => match e.key {
                Key::Bonafide => set.bonafide.push(s),
                Key::Spoof => set.spoof.push(s),
            },
            None => missing.push(e.utterance_id.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "{} protocol utterances have no score (first: '{}')",
            missing.len(),
            missing[0]
        )));
    }
    Ok(set)
}
