//! Writes every aggregate of a report as CSV plus an SVG rendering, and an
//! `index.json` listing what was produced.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::svg::{heatmap_svg, Chart, PALETTE};
use super::*;
use crate::bifurcation::BifurcationSweep;
use crate::numfmt::g17;

pub const INDEX_FILE: &str = "index.json";
pub const REPORT_FORMAT: &str = "fraclab-report-1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportOptions {
    /// Absolute-error threshold for the high-error histograms.
    pub threshold: f64,
    /// Only records longer than this enter the high-error histograms (0 keeps all).
    pub min_length: usize,
    pub density_bins: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { threshold: 0.05, min_length: 0, density_bins: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub name: String,
    pub path: String,
    pub kind: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactIndex {
    pub format_version: String,
    pub records: usize,
    pub parameters: Vec<Parameter>,
    pub options: ReportOptions,
    pub mae_all: Vec<(Parameter, f64)>,
    pub auc: Option<f64>,
    pub artifacts: Vec<Artifact>,
}

struct Out<'a> {
    dir: &'a Path,
    artifacts: Vec<Artifact>,
}

impl Out<'_> {
    fn csv(&mut self, name: &str, description: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let file = format!("{name}.csv");
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(self.dir.join(&file))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.push(name, file, "csv", description);
        Ok(())
    }

    fn svg(&mut self, name: &str, description: &str, body: String) -> Result<()> {
        let file = format!("{name}.svg");
        std::fs::write(self.dir.join(&file), body)?;
        self.push(name, file, "svg", description);
        Ok(())
    }

    fn push(&mut self, name: &str, path: String, kind: &str, description: &str) {
        self.artifacts.push(Artifact { name: name.into(), path, kind: kind.into(), description: description.into() });
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(g17).unwrap_or_default()
}

/// Emits all tables and figures that the report supports into `dir`.
pub fn write_report(dir: &Path, report: &EvaluationReport, options: &ReportOptions) -> Result<ArtifactIndex> {
    if report.is_empty() {
        return Err(Error::Insufficient("evaluation report is empty".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut out = Out { dir, artifacts: Vec::new() };
    let params = report.parameters();
    let mut mae_all = Vec::new();

    if !params.is_empty() {
        let table = mae_by_length(report)?;
        for p in &params {
            if let Some(v) = table.last().and_then(|r| r.mae(*p)) {
                mae_all.push((*p, v));
            }
        }
        let rows = table.iter().map(|r| vec![r.bin.clone(), r.count.to_string(), opt(r.mae_mu), opt(r.mae_nu)]).collect();
        out.csv("mae_by_length", "mean absolute error per trajectory-length bin", &["bin", "count", "mae_mu", "mae_nu"], rows)?;
    }

    for &p in &params {
        let name = p.as_str();
        emit_density(&mut out, report, p, options.density_bins)?;
        emit_quartiles(&mut out, report, p)?;
        emit_box(&mut out, report, p)?;
        emit_heatmap(&mut out, report, p)?;
        emit_histograms(&mut out, report, p, options, name)?;
    }

    let mut auc = None;
    if report.has_scores() {
        let roc = report.roc()?;
        auc = Some(roc.auc);
        out.artifacts.extend(write_roc(dir, &roc)?);
    }

    let index = ArtifactIndex {
        format_version: REPORT_FORMAT.into(),
        records: report.len(),
        parameters: params,
        options: *options,
        mae_all,
        auc,
        artifacts: out.artifacts,
    };
    let mut f = BufWriter::new(File::create(dir.join(INDEX_FILE))?);
    serde_json::to_writer_pretty(&mut f, &index)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(index)
}

fn emit_density(out: &mut Out, report: &EvaluationReport, p: Parameter, bins: usize) -> Result<()> {
    let d = density_grid(report, p, bins)?;
    let width = (d.hi - d.lo) / d.bins as f64;
    let edge = |i: usize| d.lo + width * i as f64;
    let mut rows = Vec::new();
    for (i, row) in d.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            rows.push(vec![g17(edge(i)), g17(edge(i + 1)), g17(edge(j)), g17(edge(j + 1)), c.to_string()]);
        }
    }
    let name = format!("density_{}", p.as_str());
    out.csv(&name, "truth-vs-prediction counts", &["truth_lo", "truth_hi", "prediction_lo", "prediction_hi", "count"], rows)?;
    // column = truth, row = prediction
    let centers: Vec<f64> = (0..d.bins).map(|i| edge(i) + width / 2.0).collect();
    let cells: Vec<Vec<Option<f64>>> = (0..d.bins)
        .map(|j| (0..d.bins).map(|i| (d.counts[i][j] > 0).then(|| (d.counts[i][j] as f64).ln_1p())).collect())
        .collect();
    let title = format!("{} truth vs prediction (log counts)", p.as_str());
    out.svg(&name, "truth-vs-prediction density", heatmap_svg(&title, "prediction", "truth", &centers, &centers, &cells))
}

fn emit_quartiles(out: &mut Out, report: &EvaluationReport, p: Parameter) -> Result<()> {
    let q = quartile_curves(report, p)?;
    let rows = q.iter().map(|r| vec![g17(r.truth), r.count.to_string(), g17(r.q1), g17(r.q2), g17(r.q3)]).collect();
    let name = format!("quartiles_{}", p.as_str());
    out.csv(&name, "absolute-error quartiles per true value", &["truth", "count", "q1", "q2", "q3"], rows)?;
    let series = |f: fn(&QuartileRow) -> f64| q.iter().map(|r| (r.truth, f(r))).collect::<Vec<_>>();
    let chart = Chart::new(&format!("{} absolute error quartiles", p.as_str()), p.as_str(), "absolute error")
        .line(series(|r| r.q1), PALETTE[0], Some("Q1"))
        .line(series(|r| r.q2), PALETTE[1], Some("Q2"))
        .line(series(|r| r.q3), PALETTE[2], Some("Q3"));
    out.svg(&name, "quartile curves", chart.render())
}

fn emit_box(out: &mut Out, report: &EvaluationReport, p: Parameter) -> Result<()> {
    let b = box_stats(report, p)?;
    let rows = b
        .iter()
        .map(|r| {
            let s = r.summary;
            vec![g17(r.x0), r.count.to_string(), g17(s.q1), g17(s.q2), g17(s.q3), g17(s.whisker_lo), g17(s.whisker_hi)]
        })
        .collect();
    let name = format!("box_x0_{}", p.as_str());
    out.csv(&name, "absolute-error box statistics per x0", &["x0", "count", "q1", "q2", "q3", "whisker_lo", "whisker_hi"], rows)?;
    let mut chart = Chart::new(&format!("{} absolute error by x0", p.as_str()), "x0", "absolute error");
    for r in &b {
        let s = r.summary;
        chart = chart.line(vec![(r.x0, s.whisker_lo), (r.x0, s.whisker_hi)], PALETTE[5], None).line(vec![(r.x0, s.q1), (r.x0, s.q3)], PALETTE[1], None);
    }
    chart = chart.dots(b.iter().map(|r| (r.x0, r.summary.q2)).collect(), PALETTE[0], 1.8);
    out.svg(&name, "box plots per x0", chart.render())
}

fn emit_heatmap(out: &mut Out, report: &EvaluationReport, p: Parameter) -> Result<()> {
    let h = heatmap(report, p)?;
    let mut rows = Vec::new();
    for (i, &x0) in h.x0_values.iter().enumerate() {
        for (j, &v) in h.column_values.iter().enumerate() {
            rows.push(vec![g17(x0), g17(v), h.counts[i][j].to_string(), opt(h.cells[i][j])]);
        }
    }
    let name = format!("heatmap_x0_{}", p.as_str());
    let header = ["x0", p.as_str(), "count", "mean_abs_error"];
    out.csv(&name, "mean absolute error per (x0, parameter) cell; empty cells have count 0 and no value", &header, rows)?;
    let title = format!("{} mean absolute error", p.as_str());
    out.svg(&name, "error heatmap", heatmap_svg(&title, "x0", p.as_str(), &h.x0_values, &h.column_values, &h.cells))
}

fn emit_histograms(out: &mut Out, report: &EvaluationReport, p: Parameter, options: &ReportOptions, name: &str) -> Result<()> {
    let hs = high_error_histograms(report, p, options.threshold, options.min_length)?;
    for h in &hs.histograms {
        let edges = h.edges();
        let rows = h.counts.iter().enumerate().map(|(i, c)| vec![g17(edges[i]), g17(edges[i + 1]), c.to_string()]).collect();
        let file = format!("high_error_{name}_{}", h.covariate.as_str());
        let desc = format!("records with |{name} error| > {} by {}", options.threshold, h.covariate.as_str());
        out.csv(&file, &desc, &["lo", "hi", "count"], rows)?;
        let width = (h.hi - h.lo) / h.counts.len() as f64;
        let heights = h.counts.iter().map(|&c| c as f64).collect();
        let chart = Chart::new(&format!("|{name} error| > {} ({} records)", options.threshold, hs.selected), h.covariate.as_str(), "count").bars(
            h.lo,
            if width > 0.0 { width } else { 1.0 },
            heights,
            PALETTE[1],
        );
        out.svg(&file, &desc, chart.render())?;
    }
    Ok(())
}

/// Writes `roc.csv` and `roc.svg` into `dir`.
pub fn write_roc(dir: &Path, roc: &Roc) -> Result<Vec<Artifact>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Out { dir, artifacts: Vec::new() };
    let rows = roc.points.iter().map(|pt| vec![g17(pt.threshold), g17(pt.fpr), g17(pt.tpr)]).collect();
    out.csv("roc", "ROC curve of the delayed-vs-plain scores", &["threshold", "fpr", "tpr"], rows)?;
    let pts: Vec<(f64, f64)> = roc.points.iter().map(|p| (p.fpr, p.tpr)).collect();
    let chart = Chart::new(&format!("ROC (AUC = {:.5})", roc.auc), "false positive rate", "true positive rate")
        .x_range(0.0, 1.0)
        .y_range(0.0, 1.0)
        .line(vec![(0.0, 0.0), (1.0, 1.0)], PALETTE[5], None)
        .line(pts, PALETTE[1], Some("model"));
    out.svg("roc", "ROC curve", chart.render())?;
    Ok(out.artifacts)
}

/// Feigenbaum diagram as a scatter plot.
pub fn bifurcation_svg(sweep: &BifurcationSweep) -> String {
    let title = format!("{} map, nu = {}, x0 = {}", sweep.kind, sweep.nu, sweep.x0);
    Chart::new(&title, "mu", "x").dots(sweep.points().collect(), "black", 0.4).render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::tests::rec;

    #[test]
    fn writes_index_and_files() {
        let dir = std::env::temp_dir().join(format!("fraclab-emit-{}", std::process::id()));
        let mut records: Vec<JoinedRecord> = (0..60).map(|i| rec(i, 0.1 * (i % 7) as f64, 0.05 * (i % 5) as f64, 10 + i % 41, 0.01 * (i % 9) as f64)).collect();
        for (i, r) in records.iter_mut().enumerate() {
            r.score = Some((i % 10) as f64 / 10.0);
            if i % 2 == 0 {
                r.kind = MapKind::Plain;
            }
        }
        let index = write_report(&dir, &EvaluationReport { records }, &ReportOptions::default()).unwrap();
        assert_eq!(index.parameters, vec![Parameter::Mu, Parameter::Nu]);
        assert!(index.auc.is_some());
        for a in &index.artifacts {
            assert!(dir.join(&a.path).is_file(), "{}", a.path);
        }
        assert!(dir.join(INDEX_FILE).is_file());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
