use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::data::{load_dataset, save_dataset, ClassTable, Dataset};
use super::{Command, ConfigArgs, Subset};
use crate::baseline::{stat_features, train_baseline, LinearProbe, STAT_FEATURE_NAMES};
use crate::encoder::{log_to_csv, pretrain, FrozenEncoder, PretrainSinks};
use crate::evalkit::{
    apply_mapping, emit_report, evaluate, read_predictions_csv, read_truth_csv, subject_split, write_predictions_csv,
    write_truth_csv, EvalReport, LabelMapping, TruthRow,
};
use crate::head::{predict_embeddings, train_head, Head, HeadConfig, LabeledEmbedding};
use crate::ingest::synth::{synth_corpus, SynthSpec};
use crate::ingest::table::{read_csv_dataset, write_csv_dataset, CsvSchema};
use crate::ingest::{pamap2, windows_from_series, Window};
use crate::pairing::{dump_batches, CorpusIndex};
use crate::{Error, Result};

pub(super) fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::Synth {
            out,
            seed,
            subjects,
            seconds_per_class,
        } => synth(&out, seed, subjects, seconds_per_class),
        Command::Ingest {
            csv,
            schema,
            pamap2,
            classes,
            out,
            cfg,
        } => ingest(csv, schema, pamap2, classes, &out, &load_config(&cfg)?),
        Command::Pretrain {
            data,
            steps,
            batch_pairs,
            out,
            log,
            checkpoint,
            dump_batches,
            dump_out,
            cfg,
        } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(s) = steps {
                cfg.pretrain.steps = s;
            }
            if let Some(b) = batch_pairs {
                cfg.pairing.batch_pairs = b;
            }
            let sinks = PretrainSinks {
                checkpoint,
                dump_batches,
            };
            pretrain_cmd(&data, &cfg, &out, log.as_deref(), &sinks, dump_out.as_deref())
        }
        Command::Embed { encoder, data, out } => embed(&encoder, &data, &out),
        Command::TrainHead {
            encoder,
            data,
            classes,
            subset,
            out,
            cfg,
        } => train_head_cmd(&encoder, &data, classes.as_deref(), subset, &out, &load_config(&cfg)?),
        Command::Featurize { data, out } => featurize(&data, &out),
        Command::TrainBaseline {
            data,
            classes,
            subset,
            out,
            cfg,
        } => train_baseline_cmd(&data, classes.as_deref(), subset, &out, &load_config(&cfg)?),
        Command::Predict {
            encoder,
            head,
            data,
            classes,
            subset,
            out,
            truth_out,
            cfg,
        } => predict_cmd(
            &encoder,
            &head,
            &data,
            classes.as_deref(),
            subset,
            &out,
            truth_out.as_deref(),
            &load_config(&cfg)?,
        ),
        Command::Eval {
            preds,
            truth,
            mapping,
            out,
        } => {
            let mapping = mapping.map(|m| LabelMapping::from_path(&m)).transpose()?;
            let report = eval_files(&preds, &truth, mapping.as_ref(), &out)?;
            Ok(report.summary())
        }
        Command::Pipeline { data, out, cfg } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(d) = data {
                cfg.data.windows = Some(d);
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            pipeline(&cfg)
        }
        Command::CheckConfig { cfg } => {
            let cfg = load_config(&cfg)?;
            cfg.validate()?;
            Ok(cfg.to_toml())
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("config file {} does not exist", p.display())));
            }
            RunConfig::load(p, &args.overrides)?
        }
        None => RunConfig::from_toml_str("seed = 0", &args.overrides)?,
    };
    if let Some(s) = args.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn synth(out: &Path, seed: u64, subjects: Option<usize>, seconds: Option<f64>) -> Result<String> {
    let mut spec = SynthSpec { seed, ..Default::default() };
    if let Some(s) = subjects {
        spec.subjects = s;
    }
    if let Some(s) = seconds {
        spec.seconds_per_class = s;
    }
    let series = synth_corpus(&spec)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let schema = write_csv_dataset(&out.join("corpus.csv"), &series)?;
    write_file(&out.join("schema.toml"), schema.to_toml())?;
    let windows = windows_from_series(&series, &Default::default())?;
    let classes = ClassTable::new(spec.class_names().into_iter().enumerate().map(|(i, n)| (i as i32, n)))?;
    save_dataset(out, &windows, &classes)?;
    Ok(format!(
        "synthetic corpus: {} subjects, {} classes, {} windows -> {}\n",
        spec.subjects,
        classes.len(),
        windows.len(),
        out.display()
    ))
}

fn ingest(
    csv: Option<PathBuf>,
    schema: Option<PathBuf>,
    pamap2_dir: Option<PathBuf>,
    classes: Option<PathBuf>,
    out: &Path,
    cfg: &RunConfig,
) -> Result<String> {
    let (series, skipped, classes) = match (csv, pamap2_dir) {
        (Some(csv), None) => {
            let schema = schema.ok_or_else(|| Error::Config("--csv needs --schema".into()))?;
            let ds = read_csv_dataset(&csv, &CsvSchema::from_path(&schema)?)?;
            let classes = classes.map(|c| ClassTable::load(&c)).transpose()?;
            (ds.series, ds.skipped_rows, classes)
        }
        (None, Some(dir)) => {
            let (series, stats) = pamap2::read_pamap2(&dir)?;
            let table = ClassTable::new(pamap2::ACTIVITIES.iter().map(|(i, n)| (*i, n.to_string())))?;
            (series, stats.skipped_rows, Some(table))
        }
        _ => return Err(Error::Config("give exactly one of --csv or --pamap2".into())),
    };
    let windows = windows_from_series(&series, &cfg.ingest)?;
    let classes = match classes {
        Some(c) => c,
        None => ClassTable::from_windows(&windows)?,
    };
    save_dataset(out, &windows, &classes)?;
    let labeled = windows.iter().filter(|w| w.label.is_some()).count();
    Ok(format!(
        "ingested {} series: {} windows ({labeled} labeled), {skipped} rows skipped -> {}\n",
        series.len(),
        windows.len(),
        out.display()
    ))
}

fn pretrain_cmd(
    data: &Path,
    cfg: &RunConfig,
    out: &Path,
    log_path: Option<&Path>,
    sinks: &PretrainSinks,
    dump_out: Option<&Path>,
) -> Result<String> {
    cfg.validate()?;
    let ds = load_dataset(data, None)?;
    let index = CorpusIndex::new(ds.windows, cfg.pairing.delta_t_max)?;
    if let Some(c) = &sinks.checkpoint {
        create_parent(c)?;
    }
    let (result, dumped) = pretrain(&index, &cfg.encoder, &cfg.pairing, &cfg.augment, &cfg.pretrain, sinks)?;
    create_parent(out)?;
    result.encoder.save(out)?;
    if let Some(p) = log_path {
        write_file(p, log_to_csv(&result.log))?;
    }
    if let Some(p) = dump_out {
        let refs: Vec<_> = dumped.iter().collect();
        write_file(p, dump_batches(&refs))?;
    }
    Ok(format!(
        "pretrained {} steps on {} windows; final loss {:.4} -> {}\n",
        result.losses.len(),
        index.num_windows(),
        result.log.last().map_or(f64::NAN, |e| e.loss),
        out.display()
    ))
}

fn embed(encoder: &Path, data: &Path, out: &Path) -> Result<String> {
    let enc = FrozenEncoder::load(encoder)?;
    let ds = load_dataset(data, None)?;
    let emb = enc.embed(&ds.windows)?;
    create_parent(out)?;
    let mut w = csv::Writer::from_path(out).map_err(|e| Error::csv(out, e))?;
    let mut header = vec!["subject_id".to_string(), "start_time".into(), "label".into()];
    header.extend((0..enc.embedding_dim()).map(|i| format!("e{i}")));
    let err = |e: csv::Error| Error::csv(out, e);
    w.write_record(&header).map_err(err)?;
    for (win, e) in ds.windows.iter().zip(&emb) {
        let mut rec = vec![
            win.subject_id.clone(),
            win.start_time.to_string(),
            win.label.map(|l| l.to_string()).unwrap_or_default(),
        ];
        rec.extend(e.0.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(format!("embedded {} windows -> {}\n", emb.len(), out.display()))
}

fn select_subset(windows: Vec<Window>, subset: Subset, cfg: &RunConfig) -> Result<Vec<Window>> {
    if subset == Subset::All {
        return Ok(windows);
    }
    let subjects: Vec<&str> = windows.iter().map(|w| w.subject_id.as_str()).collect();
    let (train, test) = subject_split(&subjects, cfg.eval.split, cfg.seed)?;
    let keep = if subset == Subset::Train { train } else { test };
    Ok(keep.into_iter().map(|i| windows[i].clone()).collect())
}

fn labeled_embeddings(windows: &[Window], enc_out: &[crate::encoder::EmbeddingVector], classes: &ClassTable) -> Vec<LabeledEmbedding> {
    windows
        .iter()
        .zip(enc_out)
        .filter_map(|(w, e)| {
            let label = classes.index_of(w.label?)?;
            Some(LabeledEmbedding {
                embedding: e.clone(),
                label,
                subject_id: w.subject_id.clone(),
                start_time: w.start_time,
            })
        })
        .collect()
}

fn fit_head(enc: &FrozenEncoder, windows: &[Window], classes: &ClassTable, cfg: &HeadConfig) -> Result<(Head, Vec<f64>)> {
    let labeled: Vec<Window> = windows.iter().filter(|w| w.label.is_some()).cloned().collect();
    let emb = enc.embed(&labeled)?;
    let data = labeled_embeddings(&labeled, &emb, classes);
    let cfg = HeadConfig {
        num_classes: classes.len(),
        ..cfg.clone()
    };
    train_head(&data, &cfg, classes.names())
}

fn train_head_cmd(
    encoder: &Path,
    data: &Path,
    classes: Option<&Path>,
    subset: Subset,
    out: &Path,
    cfg: &RunConfig,
) -> Result<String> {
    let enc = FrozenEncoder::load(encoder)?;
    let ds = load_dataset(data, classes)?;
    let table = ds.classes_or_numeric()?;
    let windows = select_subset(ds.windows, subset, cfg)?;
    let (head, losses) = fit_head(&enc, &windows, &table, &cfg.head)?;
    create_parent(out)?;
    head.save(out)?;
    Ok(format!(
        "trained head on {} windows, {} classes; final loss {:.4} -> {}\n",
        windows.iter().filter(|w| w.label.is_some()).count(),
        table.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        out.display()
    ))
}

fn featurize(data: &Path, out: &Path) -> Result<String> {
    let ds = load_dataset(data, None)?;
    create_parent(out)?;
    let err = |e: csv::Error| Error::csv(out, e);
    let mut w = csv::Writer::from_path(out).map_err(err)?;
    let mut header = vec!["subject_id", "start_time"];
    header.extend(STAT_FEATURE_NAMES);
    header.push("label");
    w.write_record(&header).map_err(err)?;
    for win in &ds.windows {
        let mut rec = vec![win.subject_id.clone(), win.start_time.to_string()];
        rec.extend(stat_features(win).to_array().iter().map(|v| v.to_string()));
        rec.push(match (win.label, &ds.classes) {
            (Some(l), Some(c)) => c.name_of(l).unwrap_or_default().to_string(),
            (Some(l), None) => l.to_string(),
            (None, _) => String::new(),
        });
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(format!("featurized {} windows -> {}\n", ds.windows.len(), out.display()))
}

fn fit_baseline(windows: &[Window], classes: &ClassTable, cfg: &RunConfig) -> Result<LinearProbe> {
    let (feats, labels): (Vec<_>, Vec<_>) = windows
        .iter()
        .filter_map(|w| Some((stat_features(w), classes.index_of(w.label?)?)))
        .unzip();
    if feats.is_empty() {
        return Err(Error::Data("no labeled windows for the baseline".into()));
    }
    train_baseline(&feats, &labels, classes.names(), &cfg.baseline)
}

fn train_baseline_cmd(
    data: &Path,
    classes: Option<&Path>,
    subset: Subset,
    out: &Path,
    cfg: &RunConfig,
) -> Result<String> {
    let ds = load_dataset(data, classes)?;
    let table = ds.classes_or_numeric()?;
    let windows = select_subset(ds.windows, subset, cfg)?;
    let probe = fit_baseline(&windows, &table, cfg)?;
    create_parent(out)?;
    probe.save(out)?;
    Ok(format!("trained baseline on {} windows -> {}\n", windows.len(), out.display()))
}

fn truth_rows(windows: &[Window], classes: &ClassTable) -> Vec<TruthRow> {
    windows
        .iter()
        .map(|w| TruthRow {
            subject_id: w.subject_id.clone(),
            start_time: w.start_time,
            label: w.label.and_then(|l| classes.name_of(l)).unwrap_or_default().to_string(),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn predict_cmd(
    encoder: &Path,
    head: &Path,
    data: &Path,
    classes: Option<&Path>,
    subset: Subset,
    out: &Path,
    truth_out: Option<&Path>,
    cfg: &RunConfig,
) -> Result<String> {
    let enc = FrozenEncoder::load(encoder)?;
    let head = Head::load(head)?;
    let ds = load_dataset(data, classes)?;
    let table = ds.classes_or_numeric()?;
    let windows = select_subset(ds.windows, subset, cfg)?;
    let preds = predict_embeddings(&head, &windows, &enc.embed(&windows)?)?;
    create_parent(out)?;
    write_predictions_csv(out, head.classes(), &preds)?;
    if let Some(t) = truth_out {
        create_parent(t)?;
        write_truth_csv(t, &truth_rows(&windows, &table))?;
    }
    Ok(format!("predicted {} windows -> {}\n", preds.len(), out.display()))
}

/// Join predictions with truth on (subject, start time), map both, score.
fn score(
    pred_classes: &[String],
    preds: &[(String, f64, String)],
    truth: &[TruthRow],
    mapping: Option<&LabelMapping>,
) -> Result<EvalReport> {
    let identity;
    let mapping = match mapping {
        Some(m) => m,
        None => {
            identity = LabelMapping::identity(pred_classes)?;
            &identity
        }
    };
    let by_key: HashMap<(&str, u64), &str> = preds
        .iter()
        .map(|(s, t, p)| ((s.as_str(), t.to_bits()), p.as_str()))
        .collect();
    let (mut t_names, mut p_names) = (Vec::new(), Vec::new());
    for row in truth.iter().filter(|r| !r.label.is_empty()) {
        let p = by_key.get(&(row.subject_id.as_str(), row.start_time.to_bits())).ok_or_else(|| {
            Error::Data(format!("no prediction for subject {} at t={}", row.subject_id, row.start_time))
        })?;
        t_names.push(row.label.as_str());
        p_names.push(*p);
    }
    let t = apply_mapping(&t_names, mapping)?;
    let p = apply_mapping(&p_names, mapping)?;
    evaluate(&t.labels, &p.labels, mapping.target_classes(), &mapping.coverage())
}

fn eval_files(preds: &Path, truth: &Path, mapping: Option<&LabelMapping>, out: &Path) -> Result<EvalReport> {
    let (classes, rows) = read_predictions_csv(preds)?;
    let truth = read_truth_csv(truth)?;
    let preds: Vec<(String, f64, String)> = rows
        .into_iter()
        .map(|r| (r.subject_id, r.start_time, r.pred_class))
        .collect();
    let report = score(&classes, &preds, &truth, mapping)?;
    create_parent(out)?;
    emit_report(&report, out)?;
    Ok(report)
}

fn pipeline(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let data = cfg
        .data
        .windows
        .as_deref()
        .ok_or_else(|| Error::Config("pipeline needs data.windows in the config or --data".into()))?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let Dataset { windows, classes } = load_dataset(data, cfg.data.classes.as_deref())?;
    let table = match classes {
        Some(c) => c,
        None => ClassTable::from_windows(&windows)?,
    };
    let mapping = cfg.eval.mapping.as_deref().map(LabelMapping::from_path).transpose()?;

    let index = CorpusIndex::new(windows.clone(), cfg.pairing.delta_t_max)?;
    let sinks = PretrainSinks {
        checkpoint: Some(out.join("encoder.checkpoint")),
        dump_batches: 0,
    };
    let (trained, _) = pretrain(&index, &cfg.encoder, &cfg.pairing, &cfg.augment, &cfg.pretrain, &sinks)?;
    let enc = trained.encoder;
    enc.save(&out.join("encoder.model"))?;
    write_file(&out.join("train_log.csv"), log_to_csv(&trained.log))?;

    let train = select_subset(windows.clone(), Subset::Train, cfg)?;
    let test = select_subset(windows, Subset::Test, cfg)?;
    let (head, _) = fit_head(&enc, &train, &table, &cfg.head)?;
    head.save(&out.join("head.model"))?;

    let preds = predict_embeddings(&head, &test, &enc.embed(&test)?)?;
    write_predictions_csv(&out.join("preds.csv"), head.classes(), &preds)?;
    write_truth_csv(&out.join("truth.csv"), &truth_rows(&test, &table))?;
    let report = eval_files(&out.join("preds.csv"), &out.join("truth.csv"), mapping.as_ref(), &out.join("report.json"))?;

    let probe = fit_baseline(&train, &table, cfg)?;
    probe.save(&out.join("baseline.model"))?;
    let rows: Vec<Vec<f64>> = test.iter().map(|w| stat_features(w).to_array().to_vec()).collect();
    let base_preds: Vec<(String, f64, String)> = test
        .iter()
        .zip(probe.predict(&rows)?)
        .map(|(w, p)| (w.subject_id.clone(), w.start_time, table.names()[p].clone()))
        .collect();
    let base_report = score(table.names(), &base_preds, &truth_rows(&test, &table), mapping.as_ref())?;
    emit_report(&base_report, &out.join("baseline_report.json"))?;

    let mut s = String::new();
    let _ = writeln!(s, "pipeline outputs in {}", out.display());
    let _ = writeln!(
        s,
        "pretrain: {} steps, final loss {:.4}",
        trained.losses.len(),
        trained.log.last().map_or(f64::NAN, |e| e.loss)
    );
    let _ = writeln!(s, "head:     accuracy {:.3}  kappa {:.3}", report.accuracy, report.kappa);
    let _ = writeln!(s, "baseline: accuracy {:.3}  kappa {:.3}", base_report.accuracy, base_report.kappa);
    Ok(s)
}
