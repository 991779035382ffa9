//! INI experiment configuration.
//!
//! Every hyperparameter has a key; [`ExperimentConfig::default_ini`] prints
//! them all with their defaults. The `seed` key has no default. Paths may be
//! overridden with `ANTISPOOF_AUDIO_ROOT`, `ANTISPOOF_TRAIN_PROTOCOL`,
//! `ANTISPOOF_DEV_PROTOCOL` and `ANTISPOOF_WORK_DIR`.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FilterBankKind};
use crate::fusion::FusionConfig;
use crate::gmm::EmConfig;
use crate::ivector::TvConfig;
use crate::metrics::{AsvOperatingPoint, CostModel};
use crate::pipeline::{Backend, FrontEnd, PipelineSpec};
use crate::protocol::{PartitionSpec, SpeakerSelection};
use crate::silence::TrimMode;
use crate::svm::SvmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    La,
    Pa,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LA" => Ok(Task::La),
            "PA" => Ok(Task::Pa),
            _ => Err(Error::Config(format!("unknown task '{s}' (LA or PA)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::La => "LA",
            Task::Pa => "PA",
        })
    }
}

impl Task {
    pub fn default_components(self) -> usize {
        match self {
            Task::La => 128,
            Task::Pa => 256,
        }
    }

    pub fn default_ivector_kinds(self) -> Vec<FeatureKind> {
        match self {
            Task::La => vec![FeatureKind::Mfcc, FeatureKind::Imfcc, FeatureKind::Cqcc, FeatureKind::Scmc],
            Task::Pa => vec![FeatureKind::Mfcc, FeatureKind::Imfcc, FeatureKind::Scmc],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub audio_root: Option<PathBuf>,
    pub train_protocol: Option<PathBuf>,
    pub dev_protocol: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSettings {
    pub heldout_attacks: BTreeSet<String>,
    pub dev_es_speaker_fraction: f64,
    pub dev_es_speakers: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSettings {
    pub p_target: f64,
    pub p_nontarget: f64,
    pub p_spoof: f64,
    pub c_miss_asv: f64,
    pub c_fa_asv: f64,
    pub c_miss_cm: f64,
    pub c_fa_cm: f64,
    pub asv_p_miss: Option<f64>,
    pub asv_p_fa: Option<f64>,
    pub asv_p_miss_spoof: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilenceSettings {
    pub epsilon: f64,
    pub trim_mode: TrimMode,
    pub horse_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    pub paths: Paths,
    pub pipeline: PipelineSpec,
    pub partition: PartitionSettings,
    pub cost: CostSettings,
    pub fusion: FusionConfig,
    pub silence: SilenceSettings,
}

/// Recognized `(section, key)` pairs.
const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["task", "seed"]),
    ("paths", &["audio_root", "train_protocol", "dev_protocol", "work_dir"]),
    (
        "features",
        &[
            "kinds",
            "window_ms",
            "hop_ms",
            "min_fft",
            "n_filters",
            "n_ceps",
            "scmc_filterbank",
            "delta_width",
            "utterance_cmvn",
            "cqt_bins_per_octave",
            "cqt_octaves",
            "cqt_gamma",
            "cqt_sparsity",
            "cqt_uniform_bins",
        ],
    ),
    ("backend", &["type"]),
    ("gmm", &["components", "max_iters", "rel_tol", "variance_floor_ratio", "kmeans_iters"]),
    ("ivector", &["ubm_components", "rank", "tv_iters"]),
    ("svm", &["c", "epochs", "batch_size"]),
    ("fusion", &["prior", "max_iters"]),
    ("partition", &["heldout_attacks", "dev_es_speaker_fraction", "dev_es_speakers"]),
    (
        "cost",
        &[
            "p_target",
            "p_nontarget",
            "p_spoof",
            "c_miss_asv",
            "c_fa_asv",
            "c_miss_cm",
            "c_fa_cm",
            "asv_p_miss",
            "asv_p_fa",
            "asv_p_miss_spoof",
        ],
    ),
    ("silence", &["epsilon", "trim_mode", "horse_ratio"]),
];

struct Values<'a> {
    ini: &'a Ini,
}

impl Values<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini
            .section(Some(section))
            .and_then(|s| s.get(key))
            .map(str::trim)
            .filter(|v| !v.is_empty())
    }

    fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        self.raw(section, key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse '{v}'")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    fn list(&self, section: &str, key: &str) -> BTreeSet<String> {
        self.raw(section, key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }
}

fn check_schema(ini: &Ini) -> Result<()> {
    for (section, props) in ini.iter() {
        let Some(name) = section else {
            if let Some((k, _)) = props.iter().next() {
                return Err(Error::Config(format!("key '{k}' outside any section")));
            }
            continue;
        };
        let keys = SCHEMA
            .iter()
            .find(|(s, _)| *s == name)
            .map(|(_, k)| *k)
            .ok_or_else(|| Error::Config(format!("unknown section [{name}]")))?;
        for (k, _) in props.iter() {
            if !keys.contains(&k) {
                return Err(Error::Config(format!("unknown key '{k}' in [{name}]")));
            }
        }
    }
    Ok(())
}

fn parse_kinds(s: &str) -> Result<Vec<FeatureKind>> {
    s.split(',')
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(|k| k.parse::<FeatureKind>().map_err(|e| Error::Config(e.to_string())))
        .collect()
}

impl ExperimentConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("malformed INI: {e}")))?;
        check_schema(&ini)?;
        let v = Values { ini: &ini };

        let task: Task = v.or("experiment", "task", Task::La)?;
        let seed: u64 = v
            .get("experiment", "seed")?
            .ok_or_else(|| Error::Config("[experiment] seed is required".into()))?;

        let paths = Paths {
            audio_root: v.get("paths", "audio_root")?,
            train_protocol: v.get("paths", "train_protocol")?,
            dev_protocol: v.get("paths", "dev_protocol")?,
            work_dir: v.get("paths", "work_dir")?,
        };

        let backend_type = v.raw("backend", "type").unwrap_or("gmm").to_ascii_lowercase();
        let kinds = match v.raw("features", "kinds") {
            Some(s) => parse_kinds(s)?,
            None => match backend_type.as_str() {
                "ivector-svm" => task.default_ivector_kinds(),
                "ltas-svm" => vec![FeatureKind::Ltas],
                _ => vec![FeatureKind::Lfcc],
            },
        };
        if kinds.is_empty() {
            return Err(Error::Config("[features] kinds is empty".into()));
        }
        let cqt_gamma = match v.raw("features", "cqt_gamma") {
            None | Some("auto") => None,
            Some(g) => Some(
                g.parse::<f64>()
                    .map_err(|_| Error::Config(format!("[features] cqt_gamma: cannot parse '{g}'")))?,
            ),
        };
        let mut front_ends = Vec::new();
        for kind in kinds {
            let d = FrontEnd::for_kind(kind);
            front_ends.push(FrontEnd {
                kind,
                window_ms: v.or("features", "window_ms", d.window_ms)?,
                hop_ms: v.or("features", "hop_ms", d.hop_ms)?,
                min_fft: v.or("features", "min_fft", d.min_fft)?,
                n_filters: v.or("features", "n_filters", d.n_filters)?,
                n_ceps: v.or("features", "n_ceps", d.n_ceps)?,
                scmc_filterbank: v.or::<FilterBankKind>("features", "scmc_filterbank", d.scmc_filterbank)?,
                delta_width: if kind == FeatureKind::Ltas {
                    0
                } else {
                    v.or("features", "delta_width", d.delta_width)?
                },
                utterance_cmvn: v.or("features", "utterance_cmvn", d.utterance_cmvn)?,
                cqt_bins_per_octave: v.or("features", "cqt_bins_per_octave", d.cqt_bins_per_octave)?,
                cqt_octaves: v.or("features", "cqt_octaves", d.cqt_octaves)?,
                cqt_gamma,
                cqt_sparsity: v.or("features", "cqt_sparsity", d.cqt_sparsity)?,
                cqt_uniform_bins: v.or("features", "cqt_uniform_bins", d.cqt_uniform_bins)?,
            });
        }

        let em_default = EmConfig::default();
        let em = EmConfig {
            max_iters: v.or("gmm", "max_iters", em_default.max_iters)?,
            rel_tol: v.or("gmm", "rel_tol", em_default.rel_tol)?,
            variance_floor_ratio: v.or("gmm", "variance_floor_ratio", em_default.variance_floor_ratio)?,
            kmeans_iters: v.or("gmm", "kmeans_iters", em_default.kmeans_iters)?,
            seed,
        };
        let svm_default = SvmConfig::default();
        let svm = SvmConfig {
            c: v.or("svm", "c", svm_default.c)?,
            epochs: v.or("svm", "epochs", svm_default.epochs)?,
            batch_size: v.or("svm", "batch_size", svm_default.batch_size)?,
            seed: seed.wrapping_add(2),
        };
        let backend = match backend_type.as_str() {
            "gmm" => Backend::Gmm {
                components: v.or("gmm", "components", task.default_components())?,
                em,
            },
            "ivector-svm" => Backend::IvectorSvm {
                ubm_components: v.or("ivector", "ubm_components", task.default_components())?,
                ubm_em: em,
                tv: TvConfig {
                    rank: v.or("ivector", "rank", TvConfig::default().rank)?,
                    iters: v.or("ivector", "tv_iters", TvConfig::default().iters)?,
                    seed: seed.wrapping_add(1),
                },
                svm,
            },
            "ltas-svm" => Backend::LtasSvm { svm },
            other => {
                return Err(Error::Config(format!(
                    "unknown backend '{other}' (gmm, ivector-svm or ltas-svm)"
                )))
            }
        };
        let pipeline = PipelineSpec { front_ends, backend };
        pipeline.validate()?;

        let partition = PartitionSettings {
            heldout_attacks: v.list("partition", "heldout_attacks"),
            dev_es_speaker_fraction: v.or("partition", "dev_es_speaker_fraction", 0.5)?,
            dev_es_speakers: v.list("partition", "dev_es_speakers"),
        };
        let d = CostModel::asvspoof2019(AsvOperatingPoint {
            p_miss: 0.0,
            p_fa: 0.0,
            p_miss_spoof: 0.0,
        });
        let cost = CostSettings {
            p_target: v.or("cost", "p_target", d.p_target)?,
            p_nontarget: v.or("cost", "p_nontarget", d.p_nontarget)?,
            p_spoof: v.or("cost", "p_spoof", d.p_spoof)?,
            c_miss_asv: v.or("cost", "c_miss_asv", d.c_miss_asv)?,
            c_fa_asv: v.or("cost", "c_fa_asv", d.c_fa_asv)?,
            c_miss_cm: v.or("cost", "c_miss_cm", d.c_miss_cm)?,
            c_fa_cm: v.or("cost", "c_fa_cm", d.c_fa_cm)?,
            asv_p_miss: v.get("cost", "asv_p_miss")?,
            asv_p_fa: v.get("cost", "asv_p_fa")?,
            asv_p_miss_spoof: v.get("cost", "asv_p_miss_spoof")?,
        };
        let fusion = FusionConfig {
            prior: v.or("fusion", "prior", FusionConfig::default().prior)?,
            max_iters: v.or("fusion", "max_iters", FusionConfig::default().max_iters)?,
        };
        let silence = SilenceSettings {
            epsilon: v.or("silence", "epsilon", 0.0)?,
            trim_mode: v.or("silence", "trim_mode", TrimMode::Trailing)?,
            horse_ratio: v.or("silence", "horse_ratio", 1.5)?,
        };
        if silence.epsilon < 0.0 || !(silence.horse_ratio >= 1.0) {
            return Err(Error::Config("[silence] needs epsilon ≥ 0 and horse_ratio ≥ 1".into()));
        }

        Ok(Self {
            task,
            seed,
            paths,
            pipeline,
            partition,
            cost,
            fusion,
            silence,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_ini_str(&text)
    }

    /// Replaces paths from `ANTISPOOF_*` environment variables.
    pub fn apply_env_overrides(&mut self) {
        let env = |name: &str| std::env::var_os(name).filter(|v| !v.is_empty()).map(PathBuf::from);
        if let Some(p) = env("ANTISPOOF_AUDIO_ROOT") {
            self.paths.audio_root = Some(p);
        }
        if let Some(p) = env("ANTISPOOF_TRAIN_PROTOCOL") {
            self.paths.train_protocol = Some(p);
        }
        if let Some(p) = env("ANTISPOOF_DEV_PROTOCOL") {
            self.paths.dev_protocol = Some(p);
        }
        if let Some(p) = env("ANTISPOOF_WORK_DIR") {
            self.paths.work_dir = Some(p);
        }
    }

    pub fn require_path<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
        p.as_ref()
            .ok_or_else(|| Error::Config(format!("[paths] {key} is required for this command")))
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        let c = &self.cost;
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| Error::Config(format!("[cost] {key} is required to compute t-DCF")))
        };
        let model = CostModel {
            p_target: c.p_target,
            p_nontarget: c.p_nontarget,
            p_spoof: c.p_spoof,
            c_miss_asv: c.c_miss_asv,
            c_fa_asv: c.c_fa_asv,
            c_miss_cm: c.c_miss_cm,
            c_fa_cm: c.c_fa_cm,
            asv: AsvOperatingPoint {
                p_miss: need(c.asv_p_miss, "asv_p_miss")?,
                p_fa: need(c.asv_p_fa, "asv_p_fa")?,
                p_miss_spoof: need(c.asv_p_miss_spoof, "asv_p_miss_spoof")?,
            },
        };
        model.validate()?;
        Ok(model)
    }

    pub fn partition_spec(&self) -> Result<PartitionSpec> {
        let p = &self.partition;
        let spec = PartitionSpec {
            heldout_attacks: p.heldout_attacks.clone(),
            dev_es_speakers: if p.dev_es_speakers.is_empty() {
                SpeakerSelection::Fraction(p.dev_es_speaker_fraction)
            } else {
                SpeakerSelection::Explicit(p.dev_es_speakers.clone())
            },
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// All keys with their defaults for `task`. `seed` is left blank.
    pub fn default_ini(task: Task) -> String {
        let fe = FrontEnd::for_kind(FeatureKind::Lfcc);
        let em = EmConfig::default();
        let svm = SvmConfig::default();
        let tv = TvConfig::default();
        let fusion = FusionConfig::default();
        let cost = CostModel::asvspoof2019(AsvOperatingPoint {
            p_miss: 0.0,
            p_fa: 0.0,
            p_miss_spoof: 0.0,
        });
        let ivec_kinds: Vec<&str> = task.default_ivector_kinds().iter().map(|k| k.name()).collect();
        let mut s = String::new();
        let k = task.default_components();
        writeln!(s, "[experiment]\ntask = {task}\n# required; seeds k-means, EM, T-matrix (seed+1), SVM (seed+2) and the partition\nseed =\n").unwrap();
        writeln!(s, "[paths]\n# ANTISPOOF_AUDIO_ROOT, ANTISPOOF_TRAIN_PROTOCOL, ANTISPOOF_DEV_PROTOCOL and ANTISPOOF_WORK_DIR override these\naudio_root =\ntrain_protocol =\ndev_protocol =\nwork_dir =\n").unwrap();
        writeln!(
            s,
            "[features]\n# comma separated; default depends on [backend] type: gmm -> lfcc, ivector-svm -> {}, ltas-svm -> ltas\nkinds =\nwindow_ms = {}\nhop_ms = {}\nmin_fft = {}\nn_filters = {}\nn_ceps = {}\nscmc_filterbank = {}\ndelta_width = {}\nutterance_cmvn = {}\ncqt_bins_per_octave = {}\ncqt_octaves = {}\ncqt_gamma = auto\ncqt_sparsity = {}\ncqt_uniform_bins = {}\n",
            ivec_kinds.join(","),
            fe.window_ms,
            fe.hop_ms,
            fe.min_fft,
            fe.n_filters,
            fe.n_ceps,
            fe.scmc_filterbank,
            fe.delta_width,
            fe.utterance_cmvn,
            fe.cqt_bins_per_octave,
            fe.cqt_octaves,
            fe.cqt_sparsity,
            fe.cqt_uniform_bins
        )
        .unwrap();
        writeln!(s, "[backend]\n# gmm, ivector-svm or ltas-svm\ntype = gmm\n").unwrap();
        writeln!(
            s,
            "[gmm]\ncomponents = {k}\nmax_iters = {}\nrel_tol = {}\nvariance_floor_ratio = {}\nkmeans_iters = {}\n",
            em.max_iters, em.rel_tol, em.variance_floor_ratio, em.kmeans_iters
        )
        .unwrap();
        writeln!(s, "[ivector]\nubm_components = {k}\nrank = {}\ntv_iters = {}\n", tv.rank, tv.iters).unwrap();
        writeln!(s, "[svm]\nc = {}\nepochs = {}\nbatch_size = {}\n", svm.c, svm.epochs, svm.batch_size).unwrap();
        writeln!(s, "[fusion]\nprior = {}\nmax_iters = {}\n", fusion.prior, fusion.max_iters).unwrap();
        writeln!(s, "[partition]\n# comma separated; required by the partition command\nheldout_attacks =\ndev_es_speaker_fraction = 0.5\n# explicit comma separated list; overrides the fraction when set\ndev_es_speakers =\n").unwrap();
        writeln!(
            s,
            "[cost]\np_target = {}\np_nontarget = {}\np_spoof = {}\nc_miss_asv = {}\nc_fa_asv = {}\nc_miss_cm = {}\nc_fa_cm = {}\n# ASV operating point; required for t-DCF\nasv_p_miss =\nasv_p_fa =\nasv_p_miss_spoof =\n",
            cost.p_target, cost.p_nontarget, cost.p_spoof, cost.c_miss_asv, cost.c_fa_asv, cost.c_miss_cm, cost.c_fa_cm
        )
        .unwrap();
        writeln!(s, "[silence]\nepsilon = 0\n# leading, trailing or both\ntrim_mode = trailing\nhorse_ratio = 1.5").unwrap();
        s
    }
}
