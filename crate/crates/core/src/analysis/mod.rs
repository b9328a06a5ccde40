//! Evaluation of trained models: error tables by trajectory length, error
//! histograms, quartile curves, heatmaps, box statistics, density grids and
//! ROC curves.

pub mod emit;
pub mod roc;
pub mod stats;
pub mod svg;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::datagen::TrajectoryRecord;
use crate::dynamics::MapKind;
use crate::error::{Error, Result};
use crate::pipeline::PredictionRow;

pub use roc::{roc_auc, Roc, RocPoint};
pub use stats::{box_summary, quantile_sorted, quartiles, BoxSummary, Quartiles};

/// Regression parameter an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Mu,
    Nu,
}

impl Parameter {
    pub const ALL: [Parameter; 2] = [Parameter::Mu, Parameter::Nu];

    pub fn as_str(self) -> &'static str {
        match self {
            Parameter::Mu => "mu",
            Parameter::Nu => "nu",
        }
    }
}

impl std::str::FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(Parameter::Mu),
            "nu" => Ok(Parameter::Nu),
            other => Err(Error::Config(format!("unknown parameter `{other}` (mu or nu)"))),
        }
    }
}

/// One test record together with whatever predictions exist for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinedRecord {
    pub record_id: usize,
    pub kind: MapKind,
    pub mu: f64,
    pub nu: f64,
    pub x0: f64,
    pub raw_length: usize,
    pub mu_pred: Option<f64>,
    pub nu_pred: Option<f64>,
    /// Predicted probability that the trajectory comes from the delayed map.
    pub score: Option<f64>,
}

impl JoinedRecord {
    pub fn truth(&self, p: Parameter) -> f64 {
        match p {
            Parameter::Mu => self.mu,
            Parameter::Nu => self.nu,
        }
    }

    pub fn prediction(&self, p: Parameter) -> Option<f64> {
        match p {
            Parameter::Mu => self.mu_pred,
            Parameter::Nu => self.nu_pred,
        }
    }

    pub fn abs_error(&self, p: Parameter) -> Option<f64> {
        self.prediction(p).map(|v| (v - self.truth(p)).abs())
    }

    pub fn covariate(&self, c: Covariate) -> f64 {
        match c {
            Covariate::X0 => self.x0,
            Covariate::Length => self.raw_length as f64,
            Covariate::Mu => self.mu,
            Covariate::Nu => self.nu,
        }
    }
}

/// Records joined with predictions. All aggregates are recomputed from
/// `records` on demand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub records: Vec<JoinedRecord>,
}

impl EvaluationReport {
    /// Joins prediction rows (targets `mu`, `nu`, `delayed`) onto the corpus
    /// records they were made for. Only records with at least one prediction
    /// are kept, in `record_id` order.
    pub fn join(corpus: &[TrajectoryRecord], predictions: &[PredictionRow]) -> Result<Self> {
        let mut joined: BTreeMap<usize, JoinedRecord> = BTreeMap::new();
        for row in predictions {
            let r = corpus.get(row.record_id).ok_or_else(|| {
                Error::Range(format!("prediction for record {} but corpus has {}", row.record_id, corpus.len()))
            })?;
            let entry = joined.entry(row.record_id).or_insert_with(|| JoinedRecord {
                record_id: row.record_id,
                kind: r.kind,
                mu: r.mu,
                nu: r.nu,
                x0: r.x0,
                raw_length: r.raw_length,
                mu_pred: None,
                nu_pred: None,
                score: None,
            });
            let (slot, truth) = match row.target.as_str() {
                "mu" => (&mut entry.mu_pred, r.mu),
                "nu" => (&mut entry.nu_pred, r.nu),
                "delayed" => (&mut entry.score, r.kind.label()),
                other => return Err(Error::Config(format!("unknown prediction target `{other}`"))),
            };
            if row.truth != truth {
                return Err(Error::Config(format!(
                    "record {}: {} truth {} does not match corpus value {truth}; wrong corpus?",
                    row.record_id, row.target, row.truth
                )));
            }
            if slot.replace(row.prediction).is_some() {
                return Err(Error::Config(format!("record {}: duplicate {} prediction", row.record_id, row.target)));
            }
        }
        Ok(EvaluationReport { records: joined.into_values().collect() })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Parameters with a prediction on every record.
    pub fn parameters(&self) -> Vec<Parameter> {
        Parameter::ALL
            .into_iter()
            .filter(|&p| !self.is_empty() && self.records.iter().all(|r| r.prediction(p).is_some()))
            .collect()
    }

    pub fn has_scores(&self) -> bool {
        !self.is_empty() && self.records.iter().all(|r| r.score.is_some())
    }

    fn require(&self, p: Parameter) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Insufficient("evaluation report is empty".into()));
        }
        if let Some(r) = self.records.iter().find(|r| r.prediction(p).is_none()) {
            return Err(Error::Insufficient(format!("record {} has no {} prediction", r.record_id, p.as_str())));
        }
        Ok(())
    }

    fn errors(&self, p: Parameter) -> impl Iterator<Item = (&JoinedRecord, f64)> {
        self.records.iter().filter_map(move |r| r.abs_error(p).map(|e| (r, e)))
    }

    /// Scores and delayed/plain labels for ROC analysis.
    pub fn scores_and_labels(&self) -> Result<(Vec<f64>, Vec<bool>)> {
        if !self.has_scores() {
            return Err(Error::Insufficient("report has no classification scores".into()));
        }
        Ok(self.records.iter().map(|r| (r.score.unwrap_or(0.0), r.kind == MapKind::Delayed)).unzip())
    }

    pub fn roc(&self) -> Result<Roc> {
        let (scores, labels) = self.scores_and_labels()?;
        roc_auc(&scores, &labels)
    }
}

// ---------------------------------------------------------------------------
// MAE by trajectory length

/// Length bins 10–19, 20–29, 30–39 and 40–50. Shorter or longer records fall
/// into the first or last bin so that bin counts always add up.
pub const LENGTH_BINS: [(&str, usize, usize); 4] = [("10-19", 0, 19), ("20-29", 20, 29), ("30-39", 30, 39), ("40-50", 40, usize::MAX)];

pub fn length_bin(raw_length: usize) -> usize {
    LENGTH_BINS.iter().position(|&(_, lo, hi)| lo <= raw_length && raw_length <= hi).expect("bins cover all lengths")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaeRow {
    pub bin: String,
    pub count: usize,
    /// `None` when the bin is empty or the parameter was not predicted.
    pub mae_mu: Option<f64>,
    pub mae_nu: Option<f64>,
}

impl MaeRow {
    pub fn mae(&self, p: Parameter) -> Option<f64> {
        match p {
            Parameter::Mu => self.mae_mu,
            Parameter::Nu => self.mae_nu,
        }
    }
}

/// Mean absolute error per length bin, followed by an `all` row.
pub fn mae_by_length(report: &EvaluationReport) -> Result<Vec<MaeRow>> {
    let params = report.parameters();
    if params.is_empty() {
        return Err(Error::Insufficient("no record has a regression prediction for every record".into()));
    }
    let mut sums = [[0.0f64; 2]; 5];
    let mut counts = [0usize; 5];
    for r in &report.records {
        let b = length_bin(r.raw_length);
        for slot in [b, 4] {
            counts[slot] += 1;
            for (k, p) in Parameter::ALL.into_iter().enumerate() {
                sums[slot][k] += r.abs_error(p).unwrap_or(0.0);
            }
        }
    }
    let labels = LENGTH_BINS.iter().map(|b| b.0).chain(std::iter::once("all"));
    Ok(labels
        .enumerate()
        .map(|(i, label)| {
            let mae = |k: usize| (counts[i] > 0 && params.contains(&Parameter::ALL[k])).then(|| sums[i][k] / counts[i] as f64);
            MaeRow { bin: label.to_string(), count: counts[i], mae_mu: mae(0), mae_nu: mae(1) }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Histograms of high-error records

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariate {
    X0,
    Length,
    Mu,
    Nu,
}

impl Covariate {
    pub const ALL: [Covariate; 4] = [Covariate::X0, Covariate::Length, Covariate::Mu, Covariate::Nu];

    pub fn as_str(self) -> &'static str {
        match self {
            Covariate::X0 => "x0",
            Covariate::Length => "length",
            Covariate::Mu => "mu",
            Covariate::Nu => "nu",
        }
    }
}

/// Equal-width bins over `[lo, hi]`; the right edge belongs to the last bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub covariate: Covariate,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(covariate: Covariate, lo: f64, hi: f64, bins: usize) -> Self {
        Histogram { covariate, lo, hi, counts: vec![0; bins.max(1)] }
    }

    pub fn bin_of(&self, v: f64) -> usize {
        let n = self.counts.len();
        if self.hi <= self.lo {
            return 0;
        }
        let i = ((v - self.lo) / (self.hi - self.lo) * n as f64).floor();
        (i.max(0.0) as usize).min(n - 1)
    }

    pub fn add(&mut self, v: f64) {
        let i = self.bin_of(v);
        self.counts[i] += 1;
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64).collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Index of the fullest bin (first on ties).
    pub fn mode(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).unwrap_or(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorHistograms {
    pub parameter: Parameter,
    pub threshold: f64,
    pub min_length: usize,
    pub selected: usize,
    pub histograms: Vec<Histogram>,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Histograms of x0, length, μ and ν over the records whose absolute error
/// exceeds `threshold` and whose raw length exceeds `min_length` (0 keeps
/// every length). Bin ranges come from the whole report so that histograms
/// for different thresholds line up.
pub fn high_error_histograms(report: &EvaluationReport, parameter: Parameter, threshold: f64, min_length: usize) -> Result<ErrorHistograms> {
    report.require(parameter)?;
    let mut histograms: Vec<Histogram> = Covariate::ALL
        .into_iter()
        .map(|c| {
            let (lo, hi) = match c {
                Covariate::X0 => (0.0, 1.0),
                _ => range_of(report.records.iter().map(|r| r.covariate(c))),
            };
            let bins = match c {
                Covariate::X0 => 10,
                Covariate::Length => ((hi - lo) as usize + 1).clamp(1, HISTOGRAM_BINS),
                _ => HISTOGRAM_BINS,
            };
            Histogram::new(c, lo, hi, bins)
        })
        .collect();
    let mut selected = 0;
    for (r, e) in report.errors(parameter) {
        if e > threshold && r.raw_length > min_length {
            selected += 1;
            for h in &mut histograms {
                h.add(r.covariate(h.covariate));
            }
        }
    }
    Ok(ErrorHistograms { parameter, threshold, min_length, selected, histograms })
}

fn range_of(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

// ---------------------------------------------------------------------------
// Quartile curves and box statistics

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuartileRow {
    pub truth: f64,
    pub count: usize,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

fn group_errors(report: &EvaluationReport, p: Parameter, key: impl Fn(&JoinedRecord) -> f64) -> Vec<(f64, Vec<f64>)> {
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for (r, e) in report.errors(p) {
        let k = key(r);
        // order-preserving key for non-negative and negative doubles alike
        let bits = k.to_bits();
        let ord = if k.is_sign_negative() { !bits } else { bits | (1 << 63) };
        groups.entry(ord).or_insert_with(|| (k, Vec::new())).1.push(e);
    }
    groups.into_values().collect()
}

/// Quartiles of the absolute error for each distinct true value of `p`.
pub fn quartile_curves(report: &EvaluationReport, p: Parameter) -> Result<Vec<QuartileRow>> {
    report.require(p)?;
    Ok(group_errors(report, p, |r| r.truth(p))
        .into_iter()
        .map(|(truth, errs)| {
            let q = quartiles(&errs);
            QuartileRow { truth, count: errs.len(), q1: q.q1, q2: q.q2, q3: q.q3 }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxRow {
    pub x0: f64,
    pub count: usize,
    #[serde(flatten)]
    pub summary: BoxSummary,
}

/// Box statistics of the absolute error of `p` for each distinct x0.
pub fn box_stats(report: &EvaluationReport, p: Parameter) -> Result<Vec<BoxRow>> {
    report.require(p)?;
    Ok(group_errors(report, p, |r| r.x0)
        .into_iter()
        .map(|(x0, errs)| BoxRow { x0, count: errs.len(), summary: box_summary(&errs) })
        .collect())
}

// ---------------------------------------------------------------------------
// Heatmap and density grid

/// Mean absolute error of `parameter` per (x0, true parameter value) cell.
/// Cells without records hold `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub parameter: Parameter,
    pub x0_values: Vec<f64>,
    pub column_values: Vec<f64>,
    pub cells: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn index_of(sorted: &[f64], v: f64) -> usize {
    sorted.binary_search_by(|p| p.total_cmp(&v)).expect("value comes from the same set")
}

pub fn heatmap(report: &EvaluationReport, parameter: Parameter) -> Result<Heatmap> {
    report.require(parameter)?;
    let x0_values = distinct_sorted(report.records.iter().map(|r| r.x0));
    let column_values = distinct_sorted(report.records.iter().map(|r| r.truth(parameter)));
    let mut sums = vec![vec![0.0; column_values.len()]; x0_values.len()];
    let mut counts = vec![vec![0usize; column_values.len()]; x0_values.len()];
    for (r, e) in report.errors(parameter) {
        let (i, j) = (index_of(&x0_values, r.x0), index_of(&column_values, r.truth(parameter)));
        sums[i][j] += e;
        counts[i][j] += 1;
    }
    let cells = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| s.iter().zip(c).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect())
        .collect();
    Ok(Heatmap { parameter, x0_values, column_values, cells, counts })
}

/// Two-dimensional histogram of (truth, prediction) on a square range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub parameter: Parameter,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// `counts[truth_bin][prediction_bin]`.
    pub counts: Vec<Vec<usize>>,
}

/// The range spans the true values; predictions outside it are clamped into
/// the edge bins.
pub fn density_grid(report: &EvaluationReport, parameter: Parameter, bins: usize) -> Result<DensityGrid> {
    report.require(parameter)?;
    if bins == 0 {
        return Err(Error::Config("density grid needs at least one bin".into()));
    }
    let (lo, hi) = range_of(report.records.iter().map(|r| r.truth(parameter)));
    let axis = Histogram::new(Covariate::Mu, lo, hi, bins);
    let mut counts = vec![vec![0usize; bins]; bins];
    for r in &report.records {
        let pred = r.prediction(parameter).unwrap_or(f64::NAN);
        let pb = if pred.is_nan() { 0 } else { axis.bin_of(pred) };
        counts[axis.bin_of(r.truth(parameter))][pb] += 1;
    }
    Ok(DensityGrid { parameter, lo, hi, bins, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(id: usize, mu: f64, x0: f64, len: usize, err: f64) -> JoinedRecord {
        JoinedRecord {
            record_id: id,
            kind: MapKind::Delayed,
            mu,
            nu: 0.5,
            x0,
            raw_length: len,
            mu_pred: Some(mu + err),
            nu_pred: Some(0.5 - err),
            score: None,
        }
    }

    #[test]
    fn two_records_same_bin() {
        let rep = EvaluationReport { records: vec![rec(0, 1.0, 0.1, 12, 0.1), rec(1, 1.0, 0.1, 15, -0.3)] };
        let t = mae_by_length(&rep).unwrap();
        assert!((t[0].mae_mu.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(t[1].count, 0);
        assert_eq!(t[1].mae_mu, None);
        assert_eq!(t[4].count, 2);
    }

    #[test]
    fn perfect_predictions_give_zero_everywhere() {
        let rep = EvaluationReport { records: (0..40).map(|i| rec(i, (i % 4) as f64 * 0.5, 0.01 * i as f64, 10 + i, 0.0)).collect() };
        for row in mae_by_length(&rep).unwrap() {
            assert_eq!(row.mae_mu, Some(0.0));
            assert_eq!(row.mae_nu, Some(0.0));
        }
        let h = heatmap(&rep, Parameter::Mu).unwrap();
        assert!(h.cells.iter().flatten().all(|c| matches!(c, None | Some(0.0))));
    }

    #[test]
    fn length_bins_partition() {
        assert_eq!(length_bin(10), 0);
        assert_eq!(length_bin(19), 0);
        assert_eq!(length_bin(20), 1);
        assert_eq!(length_bin(39), 2);
        assert_eq!(length_bin(50), 3);
    }

    #[test]
    fn histogram_thresholds() {
        let rep = EvaluationReport {
            records: (0..30).map(|i| rec(i, 1.0, if i < 20 { 0.0 } else { 0.7 }, 30, if i < 20 { 0.4 } else { 0.01 })).collect(),
        };
        let none = high_error_histograms(&rep, Parameter::Mu, 1.0, 0).unwrap();
        assert_eq!(none.selected, 0);
        assert!(none.histograms.iter().all(|h| h.total() == 0));
        let all = high_error_histograms(&rep, Parameter::Mu, 0.0, 0).unwrap();
        assert!(all.histograms.iter().all(|h| h.total() == 30));
        let high = high_error_histograms(&rep, Parameter::Mu, 0.05, 0).unwrap();
        assert_eq!(high.histograms[0].mode(), Some(0));
        assert_eq!(high_error_histograms(&rep, Parameter::Mu, 0.0, 30).unwrap().selected, 0);
    }

    #[test]
    fn heatmap_single_and_empty() {
        let h = heatmap(&EvaluationReport { records: vec![rec(0, 1.2, 0.3, 20, 0.1)] }, Parameter::Mu).unwrap();
        assert_eq!(h.cells.len(), 1);
        assert!((h.cells[0][0].unwrap() - 0.1).abs() < 1e-12);
        assert!(heatmap(&EvaluationReport { records: vec![] }, Parameter::Mu).is_err());
    }

    #[test]
    fn heatmap_flags_empty_cells() {
        let rep = EvaluationReport { records: vec![rec(0, 1.0, 0.1, 20, 0.0), rec(1, 2.0, 0.2, 20, 0.0)] };
        let h = heatmap(&rep, Parameter::Mu).unwrap();
        assert_eq!(h.cells, vec![vec![Some(0.0), None], vec![None, Some(0.0)]]);
    }

    #[test]
    fn quartile_rows_ordered_by_truth() {
        let rep = EvaluationReport {
            records: vec![rec(0, 1.0, 0.1, 20, 1.0), rec(1, 1.0, 0.1, 20, 2.0), rec(2, 1.0, 0.1, 20, 3.0), rec(3, 1.0, 0.1, 20, 4.0), rec(4, 0.5, 0.1, 20, 0.2)],
        };
        let q = quartile_curves(&rep, Parameter::Mu).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q[0].truth, 0.5);
        assert_eq!(q[1].q2, 2.5);
    }

    #[test]
    fn join_checks_truth_and_targets() {
        use crate::datagen::Split;
        let corpus = vec![TrajectoryRecord {
            kind: MapKind::Plain,
            split: Split::Test,
            mu: 2.5,
            nu: 0.3,
            x0: 0.4,
            raw_length: 10,
            truncated: false,
            padded: vec![0.0; 50],
        }];
        let row = |target: &str, truth: f64| PredictionRow { record_id: 0, target: target.into(), truth, prediction: 0.2 };
        let rep = EvaluationReport::join(&corpus, &[row("mu", 2.5), row("delayed", 0.0)]).unwrap();
        assert_eq!(rep.records[0].mu_pred, Some(0.2));
        assert_eq!(rep.records[0].score, Some(0.2));
        assert_eq!(rep.parameters(), vec![Parameter::Mu]);
        assert!(EvaluationReport::join(&corpus, &[row("mu", 2.4)]).is_err());
        assert!(EvaluationReport::join(&corpus, &[row("mu", 2.5), row("mu", 2.5)]).is_err());
        assert!(EvaluationReport::join(&corpus, &[row("x", 2.5)]).is_err());
    }
}
