//! Training with early stopping, and prediction over corpus records.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{Split, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::nn::adam::{adam_step, AdamConfig, AdamState};
use crate::nn::checkpoint::save_checkpoint;
use crate::nn::config::{Head, NetworkConfig};
use crate::nn::network::{evaluate_loss, loss_and_gradients, predict_many, Example, Loss, Mode, ModelParameters};
use crate::numfmt::g17;
use crate::rng::{derive_seed, SplitMix64};

/// What the network learns to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Mu,
    Nu,
    Both,
    DelayClass,
}

impl Target {
    pub fn head(self) -> Head {
        match self {
            Target::Mu | Target::Nu => Head::Linear { outputs: 1 },
            Target::Both => Head::Linear { outputs: 2 },
            Target::DelayClass => Head::Sigmoid,
        }
    }

    pub fn loss(self) -> Loss {
        match self {
            Target::DelayClass => Loss::Bce,
            _ => Loss::Mae,
        }
    }

    /// Names of the predicted quantities, one per head output.
    pub fn output_names(self) -> &'static [&'static str] {
        match self {
            Target::Mu => &["mu"],
            Target::Nu => &["nu"],
            Target::Both => &["mu", "nu"],
            Target::DelayClass => &["delayed"],
        }
    }

    pub fn truth(self, r: &TrajectoryRecord) -> Vec<f64> {
        match self {
            Target::Mu => vec![r.mu],
            Target::Nu => vec![r.nu],
            Target::Both => vec![r.mu, r.nu],
            Target::DelayClass => vec![r.kind.label()],
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(Target::Mu),
            "nu" => Ok(Target::Nu),
            "both" => Ok(Target::Both),
            "delay-class" | "delay" => Ok(Target::DelayClass),
            other => Err(Error::Config(format!("unknown target `{other}` (mu, nu, both, delay-class)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub target: Target,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_epochs: 200, patience: 20, batch_size: 256, target: Target::Mu, seed: 0, adam: AdamConfig::default() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be positive".into()));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience must lie in [1, max_epochs], got {} with max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

/// Patience-based stopping on a metric that should decrease. Improvement
/// means strictly smaller; epochs are numbered from 1.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    max_epochs: usize,
    epoch: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize, max_epochs: usize) -> Self {
        EarlyStopping { patience, max_epochs, epoch: 0, best: None }
    }

    /// Records the next epoch's metric. Returns whether it improved and
    /// whether training must stop now.
    pub fn observe(&mut self, metric: f64) -> (bool, Option<StopReason>) {
        self.epoch += 1;
        let improved = match self.best {
            None => true,
            Some((_, best)) => metric < best,
        };
        if improved {
            self.best = Some((self.epoch, metric));
        }
        let best_epoch = self.best.map(|b| b.0).unwrap_or(0);
        let stop = if self.epoch - best_epoch >= self.patience {
            Some(StopReason::Patience)
        } else if self.epoch >= self.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
        (improved, stop)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Replays a metric sequence through [`EarlyStopping`]: returns the epoch
/// training stops after, the best epoch and the reason (`None` if the
/// sequence runs out first).
pub fn simulate_early_stopping(metrics: &[f64], patience: usize, max_epochs: usize) -> (usize, usize, Option<StopReason>) {
    let mut es = EarlyStopping::new(patience, max_epochs);
    for (i, &m) in metrics.iter().enumerate() {
        if let (_, Some(reason)) = es.observe(m) {
            return (i + 1, es.best().unwrap().0, Some(reason));
        }
    }
    (metrics.len(), es.best().map(|b| b.0).unwrap_or(0), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Monitored quantity: MAE for regression, BCE for classification.
    pub validation_metric: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub target: Target,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_validation_metric: f64,
    pub stop_reason: StopReason,
    pub wall_clock_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

struct Prepared {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl Prepared {
    fn from_records<'a>(records: impl Iterator<Item = &'a TrajectoryRecord>, target: Target) -> Self {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for r in records {
            inputs.push(r.padded.clone());
            targets.push(target.truth(r));
        }
        Prepared { inputs, targets }
    }

    fn examples(&self) -> Vec<Example<'_>> {
        self.inputs.iter().zip(&self.targets).map(|(x, y)| Example { input: x, target: y }).collect()
    }

    fn len(&self) -> usize {
        self.inputs.len()
    }
}

fn accuracy(params: &ModelParameters, data: &Prepared) -> Result<f64> {
    let inputs: Vec<&[f64]> = data.inputs.iter().map(|v| v.as_slice()).collect();
    let preds = predict_many(params, &inputs)?;
    let hits = preds.iter().zip(&data.targets).filter(|(p, t)| (p[0] >= 0.5) == (t[0] >= 0.5)).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Trains from scratch on the train split, monitoring the validation split.
/// Returns the best-epoch parameters; they are also written to `checkpoint`
/// when given. `on_epoch` sees each epoch's metrics as they are produced.
pub fn train(
    records: &[TrajectoryRecord],
    network: &NetworkConfig,
    config: &TrainConfig,
    checkpoint: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(ModelParameters, TrainReport)> {
    config.validate()?;
    network.validate()?;
    if network.head != config.target.head() {
        return Err(Error::Config(format!("target {:?} needs head {:?}, network has {:?}", config.target, config.target.head(), network.head)));
    }
    if let Some(r) = records.iter().find(|r| r.pad_length() != network.input_length) {
        return Err(Error::Shape(format!("record padded to {} but network input length is {}", r.pad_length(), network.input_length)));
    }
    let train_set = Prepared::from_records(records.iter().filter(|r| r.split == Split::Train), config.target);
    let val_set = Prepared::from_records(records.iter().filter(|r| r.split == Split::Validation), config.target);
    if train_set.len() == 0 || val_set.len() == 0 {
        return Err(Error::Insufficient(format!(
            "need non-empty train and validation splits, have {} and {}",
            train_set.len(),
            val_set.len()
        )));
    }

    let start = Instant::now();
    let loss = config.target.loss();
    let mut params = ModelParameters::init(network, derive_seed(config.seed, &[0]))?;
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = SplitMix64::new(derive_seed(config.seed, &[1]));
    let train_examples = train_set.examples();
    let val_examples = val_set.examples();

    let mut stopper = EarlyStopping::new(config.patience, config.max_epochs);
    let mut best_params = params.clone();
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_examples.len()).collect();
    let stop_reason = loop {
        let epoch = epochs.len() + 1;
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_examples[i]).collect();
            let mut dropout_rng = SplitMix64::new(params.rng_state);
            let seed = dropout_rng.next_u64();
            params.rng_state = dropout_rng.state();
            let (value, grads) = loss_and_gradients(&params, &batch, loss, Mode::Train { seed })
                .map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
            total += value * batch.len() as f64;
            adam_step(&mut params, &grads, &mut adam, &config.adam)?;
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!("epoch {epoch}: parameters became non-finite")));
        }
        let validation_metric = evaluate_loss(&params, &val_examples, loss).map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
        let validation_accuracy = match config.target {
            Target::DelayClass => Some(accuracy(&params, &val_set)?),
            _ => None,
        };
        let metrics = EpochMetrics { epoch, train_loss: total / train_examples.len() as f64, validation_metric, validation_accuracy };
        on_epoch(&metrics);
        epochs.push(metrics);
        let (improved, stop) = stopper.observe(validation_metric);
        if improved {
            best_params = params.clone();
        }
        if let Some(reason) = stop {
            break reason;
        }
    };

    let (best_epoch, best_metric) = stopper.best().expect("at least one epoch");
    if let Some(path) = checkpoint {
        save_checkpoint(&best_params, path)?;
    }
    let report = TrainReport {
        target: config.target,
        epochs,
        best_epoch,
        best_validation_metric: best_metric,
        stop_reason,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        checkpoint: checkpoint.map(Path::to_path_buf),
    };
    Ok((best_params, report))
}

/// Evaluation-mode predictions, one vector per record, in record order.
pub fn predict(params: &ModelParameters, records: &[TrajectoryRecord]) -> Result<Vec<Vec<f64>>> {
    if let Some(r) = records.iter().find(|r| r.pad_length() != params.config.input_length) {
        return Err(Error::Shape(format!(
            "record padded to {} but network input length is {}",
            r.pad_length(),
            params.config.input_length
        )));
    }
    let inputs: Vec<&[f64]> = records.iter().map(|r| r.padded.as_slice()).collect();
    predict_many(params, &inputs)
}

/// Mean validation metric of `params` on the validation split, as monitored
/// during training.
pub fn validation_metric(params: &ModelParameters, records: &[TrajectoryRecord], target: Target) -> Result<f64> {
    let val = Prepared::from_records(records.iter().filter(|r| r.split == Split::Validation), target);
    evaluate_loss(params, &val.examples(), target.loss())
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub record_id: usize,
    pub target: String,
    pub truth: f64,
    pub prediction: f64,
}

/// Flattens per-record outputs into rows; `ids[i]` is the corpus index of
/// `records[i]`.
pub fn prediction_rows(ids: &[usize], records: &[TrajectoryRecord], predictions: &[Vec<f64>], target: Target) -> Vec<PredictionRow> {
    let names = target.output_names();
    let mut rows = Vec::with_capacity(records.len() * names.len());
    for ((&id, r), p) in ids.iter().zip(records).zip(predictions) {
        for (k, (name, truth)) in names.iter().zip(target.truth(r)).enumerate() {
            rows.push(PredictionRow { record_id: id, target: name.to_string(), truth, prediction: p[k] });
        }
    }
    rows
}

pub fn write_predictions<W: Write>(out: W, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["record_id", "target", "truth", "prediction"])?;
    for r in rows {
        w.write_record([r.record_id.to_string(), r.target.clone(), g17(r.truth), g17(r.prediction)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let bad = |line: usize, what: &str| Error::Parse { path: path.to_path_buf(), msg: format!("line {line}: bad {what}") };
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 4 {
            return Err(bad(line, "column count"));
        }
        rows.push(PredictionRow {
            record_id: rec[0].parse().map_err(|_| bad(line, "record_id"))?,
            target: rec[1].to_string(),
            truth: rec[2].parse().map_err(|_| bad(line, "truth"))?,
            prediction: rec[3].parse().map_err(|_| bad(line, "prediction"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_one_stops_after_no_improvement() {
        assert_eq!(simulate_early_stopping(&[0.5, 0.5, 0.1], 1, 200), (2, 1, Some(StopReason::Patience)));
        assert_eq!(simulate_early_stopping(&[0.5, 0.6], 1, 200), (2, 1, Some(StopReason::Patience)));
    }

    #[test]
    fn improvements_reset_patience() {
        let m = [5.0, 4.0, 4.5, 4.6, 3.0, 3.5, 3.2, 3.1];
        assert_eq!(simulate_early_stopping(&m, 3, 200), (8, 5, Some(StopReason::Patience)));
    }

    #[test]
    fn max_epochs_cap() {
        let m: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
        assert_eq!(simulate_early_stopping(&m, 3, 5), (5, 5, Some(StopReason::MaxEpochs)));
    }

    #[test]
    fn equal_metric_is_not_improvement() {
        let mut es = EarlyStopping::new(20, 200);
        assert!(es.observe(1.0).0);
        assert!(!es.observe(1.0).0);
        assert_eq!(es.best(), Some((1, 1.0)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { patience: 300, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn prediction_csv_round_trip() {
        let rows = vec![
            PredictionRow { record_id: 3, target: "mu".into(), truth: 0.3, prediction: 0.31 },
            PredictionRow { record_id: 3, target: "nu".into(), truth: 0.07, prediction: -0.01 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_predictions(std::fs::File::create(&path).unwrap(), &rows).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("record_id,target,truth,prediction\n3,mu,0.29999999999999999,"));
    }

    #[test]
    fn target_parsing() {
        assert_eq!("mu".parse::<Target>().unwrap(), Target::Mu);
        assert_eq!("delay-class".parse::<Target>().unwrap(), Target::DelayClass);
        assert!("x".parse::<Target>().is_err());
    }
}
