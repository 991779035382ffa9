use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use antispoof::audio::{write_audio, AudioSource, DirectorySource};
use antispoof::config::ExperimentConfig;
use antispoof::features::{read_feature_manifest, write_feature_manifest};
use antispoof::fusion::{apply_fusion, ensemble_preset, train_fusion, FusionModel};
use antispoof::gmm::DiagGmm;
use antispoof::ivector::{extract_ivectors, train_tv, TvModel};
use antispoof::metrics::{evaluate, sweep_csv, tdcf_sweep, AsvOperatingPoint, CostModel};
use antispoof::pipeline::{corpus_stats, extract_corpus, train_class_gmms, train_ubm, Backend, Corpus};
use antispoof::protocol::{
    filter_subset, format_protocol, join_scores, parse_protocol, partition_dataset, read_partition_manifest,
    read_scores, write_scores, ScoreRecord, Subset,
};
use antispoof::silence::{run_intervention, silence_report, trim_silence, InterventionSetup};
use antispoof::svm::{svm_score, train_linear_svm, SvmConfig, SvmModel};
use antispoof::synth::{generate_corpus, write_corpus, SynthConfig};
use antispoof::{Error, FeatureKind, FeatureMatrix, Key, Result, TrialEntry};
use ndarray::Array2;
use rayon::prelude::*;

use crate::output::{io_err, sha256_file, Outputs, RunInfo};
use crate::{AsvArgs, Command, ProtocolArgs};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Partition { config, out } => partition(&config.config, &out),
        Command::Extract {
            config,
            protocol,
            audio_root,
            kind,
            trim,
            out,
        } => {
            let (cfg, mut info) = load_config("extract", &config.config)?;
            let entries = load_entries(&protocol)?;
            let root = match audio_root {
                Some(r) => r,
                None => cfg.require_path(&cfg.paths.audio_root, "audio_root")?.clone(),
            };
            let source = DirectorySource::new(root);
            let fronts: Vec<_> = cfg
                .pipeline
                .front_ends
                .iter()
                .filter(|f| kind.map_or(true, |k| f.kind == k))
                .cloned()
                .collect();
            if fronts.is_empty() {
                return Err(Error::Config(format!(
                    "feature kind {} is not configured in [features] kinds",
                    kind.map_or("?", |k| k.name())
                )));
            }
            let mut corpus = Corpus::new(&entries, &source);
            if let Some(mode) = trim {
                corpus = corpus.trimmed(mode, cfg.silence.epsilon);
                info.set("trim", mode);
            }
            let mut outputs = Outputs::in_dir(&out)?;
            for front in &fronts {
                let name = front.kind.name();
                let feats = extract_corpus(front, &corpus)?;
                let mut list = BTreeMap::new();
                let mut paths = Vec::with_capacity(entries.len());
                for e in &entries {
                    let rel = PathBuf::from(name).join(format!("{}.feat", e.utterance_id));
                    paths.push(outputs.file(&out.join(&rel))?);
                    list.insert(e.utterance_id.clone(), rel);
                }
                paths
                    .par_iter()
                    .zip(feats.par_iter())
                    .try_for_each(|(p, f)| f.save(p))?;
                let list_path = outputs.file(&out.join(format!("{name}.list")))?;
                write_feature_manifest(&list_path, &list)?;
                log::info!("{name}: {} utterances", entries.len());
            }
            outputs.commit(&info)
        }
        Command::TrainGmm {
            config,
            protocol,
            features,
            out,
        } => {
            let (cfg, info) = load_config("train-gmm", &config.config)?;
            let Backend::Gmm { components, em } = &cfg.pipeline.backend else {
                return Err(backend_error("train-gmm", "gmm", &cfg));
            };
            let entries = load_entries(&protocol)?;
            let (feats, kind) = load_features(&features, &entries)?;
            let (bona, spoof) = train_class_gmms(&feats, &entries, *components, em)?;
            let mut outputs = Outputs::in_dir(&out)?;
            let b = outputs.file(&out.join("bonafide.gmm"))?;
            bona.save(&b, kind)?;
            let s = outputs.file(&out.join("spoof.gmm"))?;
            spoof.save(&s, kind)?;
            outputs.commit(&info)
        }
        Command::TrainUbm {
            config,
            protocol,
            features,
            out,
        } => {
            let (cfg, info) = load_config("train-ubm", &config.config)?;
            let Backend::IvectorSvm {
                ubm_components, ubm_em, ..
            } = &cfg.pipeline.backend
            else {
                return Err(backend_error("train-ubm", "ivector-svm", &cfg));
            };
            let entries = load_entries(&protocol)?;
            let (feats, kind) = load_features(&features, &entries)?;
            let outputs = Outputs::for_file(&out)?;
            train_ubm(&feats, *ubm_components, ubm_em)?.save(&out, kind)?;
            outputs.commit(&info)
        }
        Command::TrainTv {
            config,
            protocol,
            ubm,
            features,
            out,
        } => {
            let (cfg, info) = load_config("train-tv", &config.config)?;
            let Backend::IvectorSvm { tv, .. } = &cfg.pipeline.backend else {
                return Err(backend_error("train-tv", "ivector-svm", &cfg));
            };
            let (ubm, ubm_kind) = DiagGmm::load(&ubm)?;
            let entries = load_entries(&protocol)?;
            let (feats, kind) = load_features(&features, &entries)?;
            check_kind(ubm_kind, kind)?;
            let stats = corpus_stats(&ubm, &feats)?;
            drop(feats);
            let outputs = Outputs::for_file(&out)?;
            let trained = train_tv(&stats, &ubm, tv)?;
            for (i, ll) in trained.loglik_trace.iter().enumerate() {
                log::info!("TV iteration {i}: loglik {ll}");
            }
            trained.model.save(&out, kind)?;
            outputs.commit(&info)
        }
        Command::ExtractIvectors {
            protocol,
            tv,
            features,
            out,
        } => {
            let mut info = RunInfo::new("extract-ivectors");
            let (tv, tv_kind) = TvModel::load(&tv)?;
            let entries = load_entries(&protocol)?;
            let (feats, kind) = load_features(&features, &entries)?;
            check_kind(tv_kind, kind)?;
            info.set("source_kind", kind.name());
            let stats = corpus_stats(tv.ubm(), &feats)?;
            let ivecs = extract_ivectors(&tv, &stats)?;
            let mut outputs = Outputs::in_dir(&out)?;
            let mut list = BTreeMap::new();
            let mut paths = Vec::with_capacity(entries.len());
            for e in &entries {
                let rel = PathBuf::from(format!("{}.ivec", e.utterance_id));
                paths.push(outputs.file(&out.join(&rel))?);
                list.insert(e.utterance_id.clone(), rel);
            }
            paths.par_iter().zip(ivecs).try_for_each(|(p, v)| {
                let r = v.len();
                let data = Array2::from_shape_vec((1, r), v).expect("1 × R");
                FeatureMatrix::new(data, FeatureKind::Ivector).save(p)
            })?;
            let list_path = outputs.file(&out.join(format!("{}.list", FeatureKind::Ivector.name())))?;
            write_feature_manifest(&list_path, &list)?;
            outputs.commit(&info)
        }
        Command::TrainSvm {
            config,
            protocol,
            features,
            out,
        } => {
            let (cfg, info) = load_config("train-svm", &config.config)?;
            let svm_cfg: &SvmConfig = match &cfg.pipeline.backend {
                Backend::IvectorSvm { svm, .. } | Backend::LtasSvm { svm } => svm,
                Backend::Gmm { .. } => return Err(backend_error("train-svm", "ivector-svm or ltas-svm", &cfg)),
            };
            let entries = load_entries(&protocol)?;
            let x = rows_matrix(utterance_rows(&entries, &features)?)?;
            let y: Vec<f64> = entries.iter().map(|e| if e.is_bonafide() { 1.0 } else { -1.0 }).collect();
            let outputs = Outputs::for_file(&out)?;
            train_linear_svm(&x, &y, svm_cfg)?.model.save(&out)?;
            outputs.commit(&info)
        }
        Command::Score {
            protocol,
            gmm,
            svm,
            features,
            out,
        } => {
            let info = RunInfo::new("score");
            let entries = load_entries(&protocol)?;
            let scores: Vec<f64> = if let Some(dir) = gmm {
                let (bona, bk) = DiagGmm::load(dir.join("bonafide.gmm"))?;
                let (spoof, sk) = DiagGmm::load(dir.join("spoof.gmm"))?;
                check_kind(bk, sk)?;
                let [list] = features.as_slice() else {
                    return Err(Error::InvalidInput("GMM scoring takes exactly one --features list".into()));
                };
                let (feats, kind) = load_features(list, &entries)?;
                check_kind(bk, kind)?;
                feats
                    .par_iter()
                    .map(|f| antispoof::gmm::llr_score(&bona, &spoof, f))
                    .collect::<Result<_>>()?
            } else {
                let model = SvmModel::load(svm.as_deref().expect("clap requires --svm or --gmm"))?;
                utterance_rows(&entries, &features)?
                    .par_iter()
                    .map(|row| svm_score(&model, row))
                    .collect::<Result<_>>()?
            };
            let records = records(&entries, scores);
            let outputs = Outputs::for_file(&out)?;
            write_scores(&out, &records)?;
            outputs.commit(&info)
        }
        Command::FuseTrain {
            config,
            protocol,
            inputs,
            preset,
            out,
        } => {
            let (cfg, mut info) = load_config("fuse-train", &config.config)?;
            let entries = load_entries(&protocol)?;
            let inputs = match &preset {
                Some(name) => {
                    let task = cfg.task.to_string();
                    let ids = ensemble_preset(&task, name)
                        .ok_or_else(|| Error::Config(format!("no ensemble preset {name} for {task}")))?;
                    info.set("preset", name);
                    ids.iter()
                        .map(|id| {
                            inputs
                                .iter()
                                .find(|(i, _)| i == id)
                                .cloned()
                                .ok_or_else(|| Error::InvalidInput(format!("preset {name} needs --input {id}=…")))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                None => inputs,
            };
            let ids: Vec<String> = inputs.iter().map(|(id, _)| id.clone()).collect();
            let utts: Vec<&str> = entries.iter().map(|e| e.utterance_id.as_str()).collect();
            let scores = score_matrix(&inputs, &utts)?;
            let labels: Vec<Key> = entries.iter().map(|e| e.key).collect();
            let trained = train_fusion(ids, scores, labels, &cfg.fusion)?;
            log::info!("fusion loss {:?}", trained.loss_trace.last());
            let outputs = Outputs::for_file(&out)?;
            trained.model.save(&out)?;
            outputs.commit(&info)
        }
        Command::FuseApply { model, inputs, out } => {
            let info = RunInfo::new("fuse-apply");
            let model = FusionModel::load(&model)?;
            let ordered = model
                .input_ids
                .iter()
                .map(|id| {
                    inputs
                        .iter()
                        .find(|(i, _)| i == id)
                        .cloned()
                        .ok_or_else(|| Error::InvalidInput(format!("fusion model needs --input {id}=…")))
                })
                .collect::<Result<Vec<_>>>()?;
            let first = read_scores(&ordered[0].1)?;
            let utts: Vec<&str> = first.iter().map(|r| r.utterance_id.as_str()).collect();
            let m = score_matrix(&ordered, &utts)?;
            let fused = m
                .rows()
                .into_iter()
                .zip(&utts)
                .map(|(row, u)| {
                    Ok(ScoreRecord {
                        utterance_id: u.to_string(),
                        score: apply_fusion(&model, &row.to_vec())?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let outputs = Outputs::for_file(&out)?;
            write_scores(&out, &fused)?;
            outputs.commit(&info)
        }
        Command::Evaluate {
            protocol,
            scores,
            config,
            asv,
            sweep_csv: sweep_path,
            out,
        } => {
            let entries = load_entries(&protocol)?;
            let records = read_scores(&scores)?;
            let set = join_scores(&records, &entries)?;
            let (cost, info) = cost_model(config.as_deref(), &asv)?;
            let ev = evaluate(&set, &cost)?;
            let report = format!(
                "EER {:.2}%, min t-DCF {:.4}\n{}",
                100.0 * ev.eer,
                ev.min_tdcf,
                ev.report(&cost)
            );
            print!("{report}");
            if let Some(p) = out {
                let mut outputs = Outputs::for_file(&p)?;
                outputs.write(&p, &report)?;
                outputs.commit(&info)?;
            }
            if let Some(p) = sweep_path {
                let mut outputs = Outputs::for_file(&p)?;
                outputs.write(&p, sweep_csv(&tdcf_sweep(&set, &cost)?))?;
                outputs.commit(&info)?;
            }
            Ok(())
        }
        Command::AuditSilence {
            protocol,
            audio_root,
            config,
            epsilon,
            warn_ratio,
            out,
        } => {
            let mut info = RunInfo::new("audit-silence");
            let settings = match config {
                Some(p) => {
                    let (cfg, i) = load_config("audit-silence", &p)?;
                    info = i;
                    Some(cfg.silence)
                }
                None => None,
            };
            let epsilon = epsilon.or(settings.as_ref().map(|s| s.epsilon)).unwrap_or(0.0);
            let ratio = warn_ratio.or(settings.as_ref().map(|s| s.horse_ratio)).unwrap_or(1.5);
            info.set("epsilon", epsilon).set("warn_ratio", ratio);
            let entries = load_entries(&protocol)?;
            let source = DirectorySource::new(audio_root);
            let report = silence_report(&entries, &source, epsilon, ratio)?;
            let mut outputs = Outputs::in_dir(&out)?;
            outputs.write(&out.join("summary.csv"), report.summary_csv())?;
            outputs.write(&out.join("utterances.csv"), report.utterance_csv())?;
            outputs.write(&out.join("report.txt"), report.text())?;
            print!("{}", report.text());
            outputs.commit(&info)
        }
        Command::Trim {
            protocol,
            audio_root,
            mode,
            epsilon,
            out,
        } => {
            let mut info = RunInfo::new("trim");
            info.set("mode", mode).set("epsilon", epsilon);
            let entries = load_entries(&protocol)?;
            let source = DirectorySource::new(audio_root);
            let mut outputs = Outputs::in_dir(&out)?;
            let paths = entries
                .iter()
                .map(|e| outputs.file(&out.join("audio").join(format!("{}.wav", e.utterance_id))))
                .collect::<Result<Vec<_>>>()?;
            let rows = entries
                .par_iter()
                .zip(paths.par_iter())
                .map(|(e, p)| {
                    let t = trim_silence(&source.load(&e.utterance_id)?, mode, epsilon);
                    write_audio(p, &t.buffer)?;
                    Ok(format!(
                        "{},{},{},{}\n",
                        e.utterance_id, t.removed_leading, t.removed_trailing, t.full_silence
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let csv = format!(
                "utterance_id,removed_leading,removed_trailing,full_silence\n{}",
                rows.concat()
            );
            outputs.write(&out.join("trim.csv"), csv)?;
            outputs.write(&out.join("protocol.txt"), format_protocol(&entries))?;
            let full = rows.iter().filter(|r| r.trim_end().ends_with("true")).count();
            println!("trimmed {} files ({mode}), {full} fully silent", entries.len());
            outputs.commit(&info)
        }
        Command::Intervene {
            config,
            mode,
            train_protocol,
            test_protocol,
            audio_root,
            out,
        } => {
            let (cfg, mut info) = load_config("intervene", &config.config)?;
            let train_path = match train_protocol {
                Some(p) => p,
                None => cfg.require_path(&cfg.paths.train_protocol, "train_protocol")?.clone(),
            };
            let test_path = match test_protocol {
                Some(p) => p,
                None => cfg.require_path(&cfg.paths.dev_protocol, "dev_protocol")?.clone(),
            };
            let root = match audio_root {
                Some(r) => r,
                None => cfg.require_path(&cfg.paths.audio_root, "audio_root")?.clone(),
            };
            let train = parse_protocol(&train_path)?;
            let test = parse_protocol(&test_path)?;
            let source = DirectorySource::new(root);
            let cost = cfg.cost_model()?;
            let setup = InterventionSetup {
                mode,
                trim_mode: cfg.silence.trim_mode,
                epsilon: cfg.silence.epsilon,
                cost: &cost,
                label: pipeline_label(&cfg),
            };
            info.set("mode", mode);
            let report = run_intervention(&cfg.pipeline, &train, &test, &source, &setup)?;
            let mut outputs = Outputs::in_dir(&out)?;
            outputs.write(&out.join("report.txt"), report.table())?;
            let b = outputs.file(&out.join("before_scores.txt"))?;
            write_scores(&b, &report.before_scores)?;
            let a = outputs.file(&out.join("after_scores.txt"))?;
            write_scores(&a, &report.after_scores)?;
            print!("{}", report.table());
            outputs.commit(&info)
        }
        Command::SynthCorpus {
            seed,
            per_class,
            spoof_extra_trailing,
            silence_free,
            out,
        } => {
            let mut cfg = SynthConfig {
                per_class,
                spoof_extra_trailing,
                seed,
                ..Default::default()
            };
            if silence_free {
                cfg = cfg.silence_free();
            }
            let mut info = RunInfo::new("synth-corpus");
            info.seed("base", seed)
                .set("per_class", per_class)
                .set("spoof_extra_trailing", cfg.spoof_extra_trailing)
                .set("silence_free", silence_free);
            let corpus = generate_corpus(&cfg)?;
            let mut outputs = Outputs::in_dir(&out)?;
            for id in corpus.audio.buffers.keys() {
                outputs.file(&out.join("audio").join(format!("{id}.wav")))?;
            }
            outputs.file(&out.join("train.txt"))?;
            outputs.file(&out.join("dev.txt"))?;
            write_corpus(&corpus, &out)?;
            println!(
                "{} train and {} test utterances in {}",
                corpus.train.len(),
                corpus.test.len(),
                out.display()
            );
            outputs.commit(&info)
        }
    }
}

fn partition(config: &Path, out: &Path) -> Result<()> {
    let (cfg, mut info) = load_config("partition", config)?;
    let spec = cfg.partition_spec()?;
    let train = parse_protocol(cfg.require_path(&cfg.paths.train_protocol, "train_protocol")?)?;
    let dev = parse_protocol(cfg.require_path(&cfg.paths.dev_protocol, "dev_protocol")?)?;
    let part = partition_dataset(&train, &dev, &spec)?;
    info.seed("partition", spec.seed);
    let mut outputs = Outputs::in_dir(out)?;
    outputs.write(&out.join("partition.csv"), part.manifest_csv())?;
    for s in Subset::ALL {
        outputs.write(&out.join(format!("{}.txt", s.name())), format_protocol(part.subset(s)))?;
    }
    outputs.write(&out.join("summary.txt"), part.summary())?;
    print!("{}", part.summary());
    outputs.commit(&info)
}

fn load_config(command: &str, path: &Path) -> Result<(ExperimentConfig, RunInfo)> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
    let mut cfg = ExperimentConfig::from_ini_str(&text)?;
    cfg.apply_env_overrides();
    let mut info = RunInfo::new(command);
    info.config = Some((path.to_path_buf(), sha256_file(path)?));
    info.seed("base", cfg.seed);
    match &cfg.pipeline.backend {
        Backend::Gmm { em, .. } => {
            info.seed("em", em.seed);
        }
        Backend::IvectorSvm { ubm_em, tv, svm, .. } => {
            info.seed("em", ubm_em.seed).seed("tv", tv.seed).seed("svm", svm.seed);
        }
        Backend::LtasSvm { svm } => {
            info.seed("svm", svm.seed);
        }
    }
    info.set("task", cfg.task).set("pipeline", pipeline_label(&cfg));
    let p = &cfg.paths;
    for (k, v) in [
        ("paths.audio_root", &p.audio_root),
        ("paths.train_protocol", &p.train_protocol),
        ("paths.dev_protocol", &p.dev_protocol),
        ("paths.work_dir", &p.work_dir),
    ] {
        if let Some(v) = v {
            info.set(k, v.display());
        }
    }
    Ok((cfg, info))
}

fn pipeline_label(cfg: &ExperimentConfig) -> String {
    let kinds: Vec<&str> = cfg.pipeline.front_ends.iter().map(|f| f.kind.name()).collect();
    format!("{}-{}", kinds.join("+"), cfg.pipeline.backend.name())
}

fn backend_error(command: &str, want: &str, cfg: &ExperimentConfig) -> Error {
    Error::Config(format!(
        "{command} needs [backend] type = {want}, config has {}",
        cfg.pipeline.backend.name()
    ))
}

fn check_kind(model: FeatureKind, features: FeatureKind) -> Result<()> {
    if model != features {
        return Err(Error::InvalidInput(format!(
            "model was trained on {} features, got {}",
            model.name(),
            features.name()
        )));
    }
    Ok(())
}

fn load_entries(args: &ProtocolArgs) -> Result<Vec<TrialEntry>> {
    let entries = parse_protocol(&args.protocol)?;
    let entries = match (&args.partition, args.subset) {
        (Some(manifest), Some(subset)) => filter_subset(&entries, &read_partition_manifest(manifest)?, subset),
        _ => entries,
    };
    if entries.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no protocol rows selected from {}",
            args.protocol.display()
        )));
    }
    Ok(entries)
}

/// Features for `entries`, in protocol order.
fn load_features(list: &Path, entries: &[TrialEntry]) -> Result<(Vec<FeatureMatrix>, FeatureKind)> {
    let map = read_feature_manifest(list)?;
    let feats = entries
        .par_iter()
        .map(|e| {
            let p = map.get(&e.utterance_id).ok_or_else(|| {
                Error::InvalidInput(format!("{} has no features for {}", list.display(), e.utterance_id))
            })?;
            FeatureMatrix::load(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let kind = feats[0].kind;
    if let Some(f) = feats.iter().find(|f| f.kind != kind) {
        return Err(Error::InvalidInput(format!(
            "feature list mixes {} and {}",
            kind.name(),
            f.kind.name()
        )));
    }
    Ok((feats, kind))
}

/// One row per entry: the single frame of each list's feature matrix,
/// concatenated in list order.
fn utterance_rows(entries: &[TrialEntry], lists: &[PathBuf]) -> Result<Vec<Vec<f64>>> {
    let mut rows = vec![Vec::new(); entries.len()];
    for list in lists {
        let (feats, _) = load_features(list, entries)?;
        for ((row, f), e) in rows.iter_mut().zip(feats).zip(entries) {
            if f.frames() != 1 {
                return Err(Error::InvalidInput(format!(
                    "{}: expected one utterance-level vector, got {} frames",
                    e.utterance_id,
                    f.frames()
                )));
            }
            row.extend(f.data.row(0).iter().copied());
        }
    }
    Ok(rows)
}

fn rows_matrix(rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    Array2::from_shape_vec((n, d), rows.concat()).map_err(|e| Error::InvalidInput(e.to_string()))
}

fn records(entries: &[TrialEntry], scores: Vec<f64>) -> Vec<ScoreRecord> {
    entries
        .iter()
        .zip(scores)
        .map(|(e, score)| ScoreRecord {
            utterance_id: e.utterance_id.clone(),
            score,
        })
        .collect()
}

/// Scores of every input for every utterance, N × M.
fn score_matrix(inputs: &[(String, PathBuf)], utts: &[&str]) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((utts.len(), inputs.len()));
    for (j, (id, path)) in inputs.iter().enumerate() {
        let table: HashMap<String, f64> = read_scores(path)?
            .into_iter()
            .map(|r| (r.utterance_id, r.score))
            .collect();
        for (i, u) in utts.iter().enumerate() {
            m[[i, j]] = *table.get(*u).ok_or_else(|| {
                Error::InvalidInput(format!("input {id} ({}) has no score for {u}", path.display()))
            })?;
        }
    }
    Ok(m)
}

fn cost_model(config: Option<&Path>, asv: &AsvArgs) -> Result<(CostModel, RunInfo)> {
    match config {
        Some(p) => {
            let (mut cfg, info) = load_config("evaluate", p)?;
            let c = &mut cfg.cost;
            c.asv_p_miss = asv.asv_p_miss.or(c.asv_p_miss);
            c.asv_p_fa = asv.asv_p_fa.or(c.asv_p_fa);
            c.asv_p_miss_spoof = asv.asv_p_miss_spoof.or(c.asv_p_miss_spoof);
            Ok((cfg.cost_model()?, info))
        }
        None => {
            let (Some(p_miss), Some(p_fa), Some(p_miss_spoof)) = (asv.asv_p_miss, asv.asv_p_fa, asv.asv_p_miss_spoof)
            else {
                return Err(Error::Config(
                    "t-DCF needs the ASV operating point: pass --config or all of --asv-p-miss, --asv-p-fa, --asv-p-miss-spoof".into(),
                ));
            };
            let cost = CostModel::asvspoof2019(AsvOperatingPoint {
                p_miss,
                p_fa,
                p_miss_spoof,
            });
            cost.validate()?;
            let mut info = RunInfo::new("evaluate");
            info.set("cost", cost.describe());
            Ok((cost, info))
        }
    }
}
