use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use fraclab_core::analysis::emit::{bifurcation_svg, write_report, write_roc, ReportOptions};
use fraclab_core::analysis::EvaluationReport;
use fraclab_core::bifurcation::{sweep, SweepRequest};
use fraclab_core::datagen::{
    build_classification_corpora, corpus_csv_path, read_corpus, write_classification_dir, write_corpus_dir, GridSpec, Split,
    SplitQuotas, TrajectoryRecord,
};
use fraclab_core::dynamics::{generate, MapSpec};
use fraclab_core::nn::checkpoint::load_checkpoint;
use fraclab_core::nn::{Head, NetworkConfig};
use fraclab_core::parallel::{resolve_workers, with_workers};
use fraclab_core::pipeline::{predict, prediction_rows, read_predictions, train, write_predictions, Target, TrainConfig};
use fraclab_core::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::args::*;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

fn log_config<T: Serialize>(command: &str, config: &T) -> Result<()> {
    eprintln!("resolved config ({command}): {}", serde_json::to_string(config)?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let workers = resolve_workers(cli.threads);
    with_workers(workers, move || dispatch(cli.command, workers))?
}

fn dispatch(command: Command, workers: Option<usize>) -> Result<()> {
    match command {
        Command::Trajectory(a) => trajectory(a),
        Command::Feigenbaum(a) => feigenbaum(a),
        Command::Corpus(a) => corpus(a, workers),
        Command::ClassifyCorpus(a) => classify_corpus(a, workers),
        Command::Train(a) => train_cmd(a, workers),
        Command::Evaluate(a) => evaluate(a),
        Command::Roc(a) => roc(a),
        Command::Report(a) => report(a),
    }
}

fn trajectory(a: TrajectoryArgs) -> Result<()> {
    let spec = MapSpec { kind: a.kind, mu: a.mu, nu: a.nu, x0: a.x0, y0: a.y0.unwrap_or(a.x0) };
    log_config("trajectory", &json!({ "spec": spec, "steps": a.steps }))?;
    let t = generate(&spec, a.steps)?;
    if t.truncated {
        eprintln!("trajectory left [-1, 3] after {} values", t.len());
    }
    match a.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(&path)?);
            writeln!(f, "n,x")?;
            for (n, v) in t.values.iter().enumerate() {
                writeln!(f, "{n},{}", fraclab_core::numfmt::g17(*v))?;
            }
            f.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for v in &t.values {
                writeln!(out, "{v}")?;
            }
        }
    }
    Ok(())
}

fn feigenbaum(a: FeigenbaumArgs) -> Result<()> {
    let req = SweepRequest {
        kind: a.kind,
        nu: a.nu,
        x0: a.x0,
        mu_lo: a.mu_lo,
        mu_hi: a.mu_hi,
        mu_step: a.mu_step,
        n_total: a.total,
        n_keep: a.keep,
    };
    log_config(
        "feigenbaum",
        &json!({ "kind": a.kind, "nu": a.nu, "x0": a.x0, "mu_lo": a.mu_lo, "mu_hi": a.mu_hi,
                 "mu_step": a.mu_step, "total": a.total, "keep": a.keep }),
    )?;
    let s = sweep(&req)?;
    let mut f = BufWriter::new(File::create(&a.out)?);
    s.write_csv(&mut f)?;
    f.flush()?;
    if let Some(svg) = a.svg {
        std::fs::write(svg, bifurcation_svg(&s))?;
    }
    let truncated = s.columns.iter().filter(|c| c.truncated).count();
    eprintln!("{} mu values, {} points, {truncated} truncated columns", s.columns.len(), s.point_count());
    Ok(())
}

fn corpus(a: CorpusArgs, workers: Option<usize>) -> Result<()> {
    let grid = GridSpec::preset(&a.preset)?;
    log_config("corpus", &json!({ "preset": a.preset, "grid": grid, "seed": a.seed, "pad_length": a.pad_length, "workers": workers }))?;
    let m = write_corpus_dir(&a.out, &grid, a.seed, a.pad_length, workers)?;
    eprintln!(
        "wrote {} records (train {}, validation {}, test {}) to {}",
        m.counts.total(),
        m.counts.train,
        m.counts.validation,
        m.counts.test,
        a.out.display()
    );
    Ok(())
}

fn classify_corpus(a: ClassifyCorpusArgs, workers: Option<usize>) -> Result<()> {
    let delayed = GridSpec::preset(&a.delayed_preset)?;
    let plain = GridSpec::preset(&a.plain_preset)?;
    let base = match a.quotas {
        QuotaPreset::Desk => SplitQuotas::DESK,
        QuotaPreset::Paper => SplitQuotas::PAPER,
    };
    let quotas = SplitQuotas {
        train: a.train.unwrap_or(base.train),
        validation: a.validation.unwrap_or(base.validation),
        test: a.test.unwrap_or(base.test),
    };
    log_config(
        "classify-corpus",
        &json!({ "delayed": delayed, "plain": plain, "quotas": quotas, "seed": a.seed, "pad_length": a.pad_length, "workers": workers }),
    )?;
    let (m, records) = build_classification_corpora(&delayed, &plain, quotas, a.seed, a.pad_length, workers)?;
    write_classification_dir(&a.out, &m, &records)?;
    eprintln!("wrote {} balanced records to {}", records.len(), a.out.display());
    Ok(())
}

fn network_config(a: &TrainArgs, input_length: usize) -> NetworkConfig {
    let base = match a.network {
        NetworkPreset::Full => NetworkConfig::default(),
        NetworkPreset::Desk => NetworkConfig { conv_filters: (8, 16), lstm_layers: 1, lstm_units: 16, ..NetworkConfig::default() },
    };
    NetworkConfig {
        conv_filters: (a.conv1.unwrap_or(base.conv_filters.0), a.conv2.unwrap_or(base.conv_filters.1)),
        kernel_size: a.kernel_size.unwrap_or(base.kernel_size),
        lstm_layers: a.lstm_layers.unwrap_or(base.lstm_layers),
        lstm_units: a.lstm_units.unwrap_or(base.lstm_units),
        dropout_rate: a.dropout.unwrap_or(base.dropout_rate),
        dense_units: a.dense_units.unwrap_or(base.dense_units),
        head: a.target.head(),
        input_length,
    }
}

fn load_records(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let records = read_corpus(&corpus_csv_path(path))?;
    if records.is_empty() {
        return Err(Error::Insufficient(format!("corpus {} has no records", path.display())));
    }
    Ok(records)
}

fn train_cmd(a: TrainArgs, workers: Option<usize>) -> Result<()> {
    let records = load_records(&a.corpus)?;
    let network = network_config(&a, records[0].pad_length());
    let mut config = TrainConfig {
        max_epochs: a.max_epochs,
        patience: a.patience,
        batch_size: a.batch_size,
        target: a.target,
        seed: a.seed,
        ..TrainConfig::default()
    };
    config.adam.lr = a.lr;
    log_config("train", &json!({ "corpus": a.corpus, "network": network, "train": config, "workers": workers }))?;
    std::fs::create_dir_all(&a.out)?;
    let ckpt = a.out.join(CHECKPOINT_FILE);
    let (_, report) = train(&records, &network, &config, Some(&ckpt), |m| {
        let acc = m.validation_accuracy.map(|v| format!(" validation_accuracy={v:.4}")).unwrap_or_default();
        eprintln!("epoch {:>3} train_loss={:.6} validation={:.6}{acc}", m.epoch, m.train_loss, m.validation_metric);
    })?;
    let mut f = BufWriter::new(File::create(a.out.join(TRAIN_REPORT_FILE))?);
    serde_json::to_writer_pretty(&mut f, &report)?;
    f.write_all(b"\n")?;
    f.flush()?;
    println!(
        "best epoch {} validation {:.6} ({:?} after {} epochs, {:.1}s); checkpoint {}",
        report.best_epoch,
        report.best_validation_metric,
        report.stop_reason,
        report.epochs.len(),
        report.wall_clock_secs,
        ckpt.display()
    );
    Ok(())
}

fn resolve_target(head: Head, requested: Option<Target>) -> Result<Target> {
    let inferred = match head {
        Head::Sigmoid => Some(Target::DelayClass),
        Head::Linear { outputs: 2 } => Some(Target::Both),
        Head::Linear { .. } => None,
    };
    match (requested, inferred) {
        (Some(t), _) if t.head() != head => Err(Error::Config(format!("--target {t:?} does not fit a checkpoint with head {head:?}"))),
        (Some(t), _) => Ok(t),
        (None, Some(t)) => Ok(t),
        (None, None) => Err(Error::Config("single-output checkpoint: pass --target mu or --target nu".into())),
    }
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let params = load_checkpoint(&a.checkpoint)?;
    let target = resolve_target(params.config.head, a.target)?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Validation => Split::Validation,
        SplitArg::Test => Split::Test,
    };
    log_config("evaluate", &json!({ "checkpoint": a.checkpoint, "corpus": a.corpus, "target": target, "split": split.as_str() }))?;
    let all = load_records(&a.corpus)?;
    let (ids, records): (Vec<usize>, Vec<TrajectoryRecord>) = all.into_iter().enumerate().filter(|(_, r)| r.split == split).unzip();
    if records.is_empty() {
        return Err(Error::Insufficient(format!("corpus has no {split} records")));
    }
    let preds = predict(&params, &records)?;
    let rows = prediction_rows(&ids, &records, &preds, target);
    let f = BufWriter::new(File::create(&a.out)?);
    write_predictions(f, &rows)?;

    for (k, name) in target.output_names().iter().enumerate() {
        let col = rows.iter().skip(k).step_by(target.output_names().len());
        if target == Target::DelayClass {
            let hits = col.clone().filter(|r| (r.prediction >= 0.5) == (r.truth >= 0.5)).count();
            println!("{name}: accuracy {:.6} over {} records", hits as f64 / records.len() as f64, records.len());
        } else {
            let mae = col.map(|r| (r.prediction - r.truth).abs()).sum::<f64>() / records.len() as f64;
            println!("{name}: MAE {mae:.6} over {} records", records.len());
        }
    }
    Ok(())
}

fn roc(a: RocArgs) -> Result<()> {
    log_config("roc", &json!({ "predictions": a.predictions, "corpus": a.corpus, "out": a.out }))?;
    let records = load_records(&a.corpus)?;
    let report = EvaluationReport::join(&records, &read_predictions(&a.predictions)?)?;
    let roc = report.roc()?;
    write_roc(&a.out, &roc)?;
    println!("AUC {:.6} ({} delayed, {} plain)", roc.auc, roc.positives, roc.negatives);
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let options = ReportOptions { threshold: a.threshold, min_length: a.min_length, density_bins: a.density_bins };
    log_config("report", &json!({ "predictions": a.predictions, "corpus": a.corpus, "out": a.out, "options": options }))?;
    let records = load_records(&a.corpus)?;
    let mut rows = Vec::new();
    for p in &a.predictions {
        rows.extend(read_predictions(p)?);
    }
    let report = EvaluationReport::join(&records, &rows)?;
    let index = write_report(&a.out, &report, &options)?;
    for (p, mae) in &index.mae_all {
        println!("{}: MAE {mae:.6}", p.as_str());
    }
    if let Some(auc) = index.auc {
        println!("AUC {auc:.6}");
    }
    println!("{} artifacts in {}", index.artifacts.len(), a.out.display());
    Ok(())
}
