//! Labeled, split, reproducible corpora of trajectories.
//!
//! For every (μ, ν) pair on a grid, one trajectory is attempted per
//! replicate. Replicate `r` draws its initial condition from x0 bin
//! `r mod 5` of `[0,0.2], (0.2,0.4], (0.4,0.6], (0.6,0.8], (0.8,1.0]`. Each
//! attempt has its own SplitMix64 stream seeded from
//! `(master_seed, μ-index, ν-index, replicate)` and draws, in order:
//! the split index `u ∈ [0,1)`, the x0 grid point, and the target length.
//! Results shorter than 10 values are discarded.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{generate_with_kernel, MapKind, MapSpec, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{grid_len, grid_value};
use crate::kernel::{build_kernel, check_nu, KernelTable};
use crate::numfmt::g17;
use crate::parallel::with_workers;
use crate::rng::{derive_seed, SplitMix64};

pub const FORMAT_VERSION: &str = "fraclab-corpus-1";
pub const CLASSIFY_FORMAT_VERSION: &str = "fraclab-classify-1";
pub const DEFAULT_PAD_LENGTH: usize = 50;
/// Shortest trajectory kept in a corpus.
pub const MIN_RAW_LENGTH: usize = 10;
pub const X0_BINS: usize = 5;
pub const TEST_THRESHOLD: f64 = 0.20;
pub const VALIDATION_THRESHOLD: f64 = 0.35;

pub const CORPUS_FILE: &str = "corpus.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// μ rows generated per parallel batch before handing records to the writer.
const ROWS_PER_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    /// Maps a uniform draw to a split: `u ≤ 0.20` test, `u ≤ 0.35` validation.
    pub fn from_index(u: f64) -> Split {
        if u <= TEST_THRESHOLD {
            Split::Test
        } else if u <= VALIDATION_THRESHOLD {
            Split::Validation
        } else {
            Split::Train
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: MapKind,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub mu_step: f64,
    pub nu_lo: f64,
    pub nu_hi: f64,
    pub nu_step: f64,
    pub replicates_per_pair: usize,
    pub len_lo: usize,
    pub len_hi: usize,
    pub x0_resolution: f64,
}

impl GridSpec {
    fn with_ranges(kind: MapKind, mu: (f64, f64, f64), nu: (f64, f64, f64)) -> Self {
        GridSpec {
            kind,
            mu_lo: mu.0,
            mu_hi: mu.1,
            mu_step: mu.2,
            nu_lo: nu.0,
            nu_hi: nu.1,
            nu_step: nu.2,
            replicates_per_pair: 5,
            len_lo: 10,
            len_hi: 50,
            x0_resolution: 0.01,
        }
    }

    /// Delayed map, μ ∈ [0, 2] step 0.001, ν ∈ [0.01, 1] step 0.01.
    pub fn paper_delayed() -> Self {
        Self::with_ranges(MapKind::Delayed, (0.0, 2.0, 0.001), (0.01, 1.0, 0.01))
    }

    /// Plain map, μ ∈ [2, 3.2] step 0.001, ν ∈ [0.01, 1] step 0.01.
    pub fn paper_plain() -> Self {
        Self::with_ranges(MapKind::Plain, (2.0, 3.2, 0.001), (0.01, 1.0, 0.01))
    }

    /// Delayed map on a coarse grid: μ step 0.02, ν step 0.05 (about 10⁴ records).
    pub fn desk() -> Self {
        Self::with_ranges(MapKind::Delayed, (0.0, 2.0, 0.02), (0.01, 1.0, 0.05))
    }

    /// Plain-map counterpart of [`GridSpec::desk`] over μ ∈ [2, 3.2]. The μ step
    /// is halved because many plain trajectories in that range escape early.
    pub fn desk_plain() -> Self {
        Self::with_ranges(MapKind::Plain, (2.0, 3.2, 0.01), (0.01, 1.0, 0.05))
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-delayed" => Ok(Self::paper_delayed()),
            "paper-plain" => Ok(Self::paper_plain()),
            "desk" | "desk-delayed" => Ok(Self::desk()),
            "desk-plain" => Ok(Self::desk_plain()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected paper-delayed, paper-plain, desk, desk-plain)"
            ))),
        }
    }

    pub fn mu_count(&self) -> Result<usize> {
        grid_len(self.mu_lo, self.mu_hi, self.mu_step)
    }

    pub fn nu_count(&self) -> Result<usize> {
        grid_len(self.nu_lo, self.nu_hi, self.nu_step)
    }

    pub fn mu(&self, i: usize) -> f64 {
        grid_value(self.mu_lo, self.mu_step, i)
    }

    pub fn nu(&self, i: usize) -> f64 {
        grid_value(self.nu_lo, self.nu_step, i)
    }

    /// Number of x0 grid points per unit interval (100 at resolution 0.01).
    fn x0_points(&self) -> usize {
        (1.0 / self.x0_resolution).round() as usize
    }

    pub fn validate(&self, pad_length: usize) -> Result<()> {
        let mu_n = self.mu_count()?;
        let nu_n = self.nu_count()?;
        check_nu(self.nu(0))?;
        check_nu(self.nu(nu_n - 1))?;
        if !self.mu(mu_n - 1).is_finite() {
            return Err(Error::Config("mu grid is not finite".into()));
        }
        if self.replicates_per_pair == 0 {
            return Err(Error::Config("replicates_per_pair must be positive".into()));
        }
        if self.len_lo < MIN_RAW_LENGTH {
            return Err(Error::Config(format!("len_lo must be at least {MIN_RAW_LENGTH}")));
        }
        if self.len_lo > self.len_hi {
            return Err(Error::Config("len_lo exceeds len_hi".into()));
        }
        if self.len_hi > pad_length {
            return Err(Error::Config(format!(
                "len_hi ({}) exceeds pad length ({pad_length})",
                self.len_hi
            )));
        }
        let points = self.x0_points();
        let exact = (points as f64 * self.x0_resolution - 1.0).abs() < 1e-9;
        if self.x0_resolution.is_nan() || self.x0_resolution <= 0.0 || points == 0 || !exact || !points.is_multiple_of(X0_BINS) {
            return Err(Error::Config(format!(
                "x0 resolution {} must divide [0,1] into a multiple of {X0_BINS} steps",
                self.x0_resolution
            )));
        }
        Ok(())
    }

    /// Inclusive range of x0 grid indices in bin `b`: `[0, 0.2]` for the first
    /// bin, `(0.2b, 0.2(b+1)]` afterwards.
    pub fn x0_bin_indices(&self, bin: usize) -> (u64, u64) {
        let width = (self.x0_points() / X0_BINS) as u64;
        let b = bin as u64;
        if b == 0 {
            (0, width)
        } else {
            (b * width + 1, (b + 1) * width)
        }
    }

    fn x0_value(&self, index: u64) -> f64 {
        index as f64 / self.x0_points() as f64
    }
}

/// One labeled trajectory, left-padded with zeros to the pad length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub kind: MapKind,
    pub split: Split,
    pub mu: f64,
    pub nu: f64,
    pub x0: f64,
    pub raw_length: usize,
    pub truncated: bool,
    pub padded: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn pad_length(&self) -> usize {
        self.padded.len()
    }

    /// The unpadded values `x(0)..x(raw_length-1)`.
    pub fn raw_values(&self) -> &[f64] {
        &self.padded[self.padded.len() - self.raw_length..]
    }

    pub fn spec(&self) -> MapSpec {
        MapSpec::new(self.kind, self.mu, self.nu, self.x0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn add(&mut self, split: Split) {
        *self.get_mut(split) += 1;
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut usize {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: String,
    pub grid: GridSpec,
    pub master_seed: u64,
    pub pad_length: usize,
    pub counts: SplitCounts,
}

/// Prepends zeros so that `values` reaches `pad_length`.
pub fn pad_left(values: &[f64], pad_length: usize) -> Result<Vec<f64>> {
    if values.len() > pad_length {
        return Err(Error::Range(format!(
            "sequence of length {} exceeds pad length {pad_length}",
            values.len()
        )));
    }
    let mut out = vec![0.0; pad_length - values.len()];
    out.extend_from_slice(values);
    Ok(out)
}

/// One replicate attempt, fully determined by its grid coordinates.
pub fn attempt(
    grid: &GridSpec,
    kernel: &KernelTable,
    master_seed: u64,
    mu_index: usize,
    nu_index: usize,
    replicate: usize,
    pad_length: usize,
) -> Result<Option<TrajectoryRecord>> {
    let mut rng = SplitMix64::new(derive_seed(
        master_seed,
        &[mu_index as u64, nu_index as u64, replicate as u64],
    ));
    let split = Split::from_index(rng.next_f64());
    let (lo, hi) = grid.x0_bin_indices(replicate % X0_BINS);
    let x0 = grid.x0_value(rng.range_inclusive(lo, hi));
    let target_len = rng.range_inclusive(grid.len_lo as u64, grid.len_hi as u64) as usize;

    let spec = MapSpec::new(grid.kind, grid.mu(mu_index), grid.nu(nu_index), x0);
    let Trajectory { values, truncated, .. } = generate_with_kernel(&spec, kernel, target_len)?;
    if values.len() < MIN_RAW_LENGTH {
        return Ok(None);
    }
    Ok(Some(TrajectoryRecord {
        kind: spec.kind,
        split,
        mu: spec.mu,
        nu: spec.nu,
        x0,
        raw_length: values.len(),
        truncated,
        padded: pad_left(&values, pad_length)?,
    }))
}

/// Generates the corpus and hands records to `sink` in (μ, ν, replicate)
/// order. Content does not depend on `workers`.
pub fn generate_corpus<F>(
    grid: &GridSpec,
    master_seed: u64,
    pad_length: usize,
    workers: Option<usize>,
    mut sink: F,
) -> Result<CorpusManifest>
where
    F: FnMut(TrajectoryRecord) -> Result<()>,
{
    grid.validate(pad_length)?;
    let mu_n = grid.mu_count()?;
    let nu_n = grid.nu_count()?;
    let reps = grid.replicates_per_pair;
    let kernels = (0..nu_n)
        .map(|i| build_kernel(grid.nu(i), grid.len_hi - 1))
        .collect::<Result<Vec<_>>>()?;

    let mut counts = SplitCounts::default();
    let mut row = 0;
    while row < mu_n {
        let rows = row..(row + ROWS_PER_CHUNK).min(mu_n);
        let tasks = rows.len() * nu_n * reps;
        let chunk: Vec<Option<TrajectoryRecord>> = with_workers(workers, || {
            (0..tasks)
                .into_par_iter()
                .map(|t| {
                    let mu_i = rows.start + t / (nu_n * reps);
                    let nu_i = (t / reps) % nu_n;
                    let rep = t % reps;
                    attempt(grid, &kernels[nu_i], master_seed, mu_i, nu_i, rep, pad_length)
                })
                .collect::<Result<Vec<_>>>()
        })??;
        for rec in chunk.into_iter().flatten() {
            counts.add(rec.split);
            sink(rec)?;
        }
        row = rows.end;
    }

    Ok(CorpusManifest {
        format_version: FORMAT_VERSION.into(),
        grid: *grid,
        master_seed,
        pad_length,
        counts,
    })
}

/// In-memory corpus.
pub fn build_corpus(
    grid: &GridSpec,
    master_seed: u64,
    pad_length: usize,
    workers: Option<usize>,
) -> Result<(CorpusManifest, Vec<TrajectoryRecord>)> {
    let mut records = Vec::new();
    let manifest = generate_corpus(grid, master_seed, pad_length, workers, |r| {
        records.push(r);
        Ok(())
    })?;
    Ok((manifest, records))
}

/// Regenerates a record's trajectory from its labels.
pub fn replay(record: &TrajectoryRecord) -> Result<Trajectory> {
    let kernel = build_kernel(record.nu, record.raw_length - 1)?;
    generate_with_kernel(&record.spec(), &kernel, record.raw_length)
}

// ---------------------------------------------------------------------------
// Persistence

fn header(pad_length: usize) -> Vec<String> {
    let mut h: Vec<String> = ["kind", "split", "mu", "nu", "x0", "raw_length", "truncated"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..pad_length).map(|i| format!("v{i}")));
    h
}

/// Streams records into a corpus CSV.
pub struct CorpusWriter<W: Write> {
    inner: csv::Writer<W>,
    pad_length: usize,
}

impl CorpusWriter<BufWriter<File>> {
    pub fn create(path: &Path, pad_length: usize) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), pad_length)
    }
}

impl<W: Write> CorpusWriter<W> {
    pub fn new(out: W, pad_length: usize) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        inner.write_record(header(pad_length))?;
        Ok(CorpusWriter { inner, pad_length })
    }

    pub fn write(&mut self, r: &TrajectoryRecord) -> Result<()> {
        if r.padded.len() != self.pad_length {
            return Err(Error::Shape(format!(
                "record padded to {} but corpus pad length is {}",
                r.padded.len(),
                self.pad_length
            )));
        }
        let mut row = Vec::with_capacity(7 + self.pad_length);
        row.push(r.kind.as_str().to_string());
        row.push(r.split.as_str().to_string());
        row.push(g17(r.mu));
        row.push(g17(r.nu));
        row.push(g17(r.x0));
        row.push(r.raw_length.to_string());
        row.push(r.truncated.to_string());
        row.extend(r.padded.iter().map(|&v| g17(v)));
        self.inner.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        msg: format!("line {line}: bad {name} `{s}`"),
    })
}

/// Reads a corpus CSV written by [`CorpusWriter`].
pub fn read_corpus(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let pad_length = reader.headers()?.len().checked_sub(7).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        msg: "header has fewer than 7 columns".into(),
    })?;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let kind: MapKind = row[0].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            msg: format!("line {line}: bad kind `{}`", &row[0]),
        })?;
        let split: Split = row[1].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            msg: format!("line {line}: bad split `{}`", &row[1]),
        })?;
        let padded = (0..pad_length)
            .map(|k| parse_field(path, line, "value", &row[7 + k]))
            .collect::<Result<Vec<f64>>>()?;
        let raw_length: usize = parse_field(path, line, "raw_length", &row[5])?;
        if raw_length == 0 || raw_length > pad_length {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: format!("line {line}: raw_length {raw_length} out of range"),
            });
        }
        records.push(TrajectoryRecord {
            kind,
            split,
            mu: parse_field(path, line, "mu", &row[2])?,
            nu: parse_field(path, line, "nu", &row[3])?,
            x0: parse_field(path, line, "x0", &row[4])?,
            raw_length,
            truncated: parse_field(path, line, "truncated", &row[6])?,
            padded,
        });
    }
    Ok(records)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let manifest: CorpusManifest = serde_json::from_reader(File::open(path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "corpus format `{}`, expected `{FORMAT_VERSION}`",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

/// Generates a corpus straight to `dir/corpus.csv` and `dir/manifest.json`.
pub fn write_corpus_dir(
    dir: &Path,
    grid: &GridSpec,
    master_seed: u64,
    pad_length: usize,
    workers: Option<usize>,
) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir)?;
    let mut writer = CorpusWriter::create(&dir.join(CORPUS_FILE), pad_length)?;
    let manifest = generate_corpus(grid, master_seed, pad_length, workers, |r| writer.write(&r))?;
    writer.finish()?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Resolves a corpus argument that may be a directory or a CSV file.
pub fn corpus_csv_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CORPUS_FILE)
    } else {
        path.to_path_buf()
    }
}

// ---------------------------------------------------------------------------
// Balanced delay-vs-no-delay corpora

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitQuotas {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitQuotas {
    /// Per-class quotas used for the full-scale classification corpora.
    pub const PAPER: SplitQuotas = SplitQuotas { train: 618_199, validation: 142_800, test: 190_334 };
    pub const DESK: SplitQuotas = SplitQuotas { train: 5_000, validation: 1_000, test: 1_000 };

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationManifest {
    pub format_version: String,
    pub delayed: CorpusManifest,
    pub plain: CorpusManifest,
    pub quotas: SplitQuotas,
    pub master_seed: u64,
    pub pad_length: usize,
    pub counts: SplitCounts,
}

/// Subsamples each class to exactly the per-split quota, uniformly without
/// replacement. Output is grouped by split (train, validation, test), delayed
/// before plain, each class in its source order. Labels come from
/// [`MapKind::label`].
pub fn balance_classes(
    delayed: &[TrajectoryRecord],
    plain: &[TrajectoryRecord],
    quotas: SplitQuotas,
    master_seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::with_capacity(2 * (quotas.train + quotas.validation + quotas.test));
    for (split_i, split) in Split::ALL.into_iter().enumerate() {
        for (class_i, (kind, pool)) in [(MapKind::Delayed, delayed), (MapKind::Plain, plain)].into_iter().enumerate() {
            let mut idx: Vec<usize> = pool
                .iter()
                .enumerate()
                .filter(|(_, r)| r.split == split)
                .map(|(i, _)| i)
                .collect();
            if let Some(bad) = idx.iter().find(|&&i| pool[i].kind != kind) {
                return Err(Error::Config(format!(
                    "{kind} corpus contains a {} record at index {bad}",
                    pool[*bad].kind
                )));
            }
            let quota = quotas.get(split);
            if quota > idx.len() {
                return Err(Error::Insufficient(format!(
                    "{kind} {split} split has {} records, quota is {quota}",
                    idx.len()
                )));
            }
            let mut rng = SplitMix64::new(derive_seed(master_seed, &[class_i as u64, split_i as u64]));
            // partial Fisher–Yates: the first `quota` slots become the sample
            for i in 0..quota {
                let j = i + rng.below((idx.len() - i) as u64) as usize;
                idx.swap(i, j);
            }
            let mut chosen = idx[..quota].to_vec();
            chosen.sort_unstable();
            out.extend(chosen.into_iter().map(|i| pool[i].clone()));
        }
    }
    Ok(out)
}

/// Builds both corpora from their grids and balances them.
pub fn build_classification_corpora(
    delayed_grid: &GridSpec,
    plain_grid: &GridSpec,
    quotas: SplitQuotas,
    master_seed: u64,
    pad_length: usize,
    workers: Option<usize>,
) -> Result<(ClassificationManifest, Vec<TrajectoryRecord>)> {
    if delayed_grid.kind != MapKind::Delayed || plain_grid.kind != MapKind::Plain {
        return Err(Error::Config("classification needs a delayed grid and a plain grid".into()));
    }
    let (dm, delayed) = build_corpus(delayed_grid, master_seed, pad_length, workers)?;
    let (pm, plain) = build_corpus(plain_grid, derive_seed(master_seed, &[1]), pad_length, workers)?;
    let records = balance_classes(&delayed, &plain, quotas, master_seed)?;
    let mut counts = SplitCounts::default();
    records.iter().for_each(|r| counts.add(r.split));
    let manifest = ClassificationManifest {
        format_version: CLASSIFY_FORMAT_VERSION.into(),
        delayed: dm,
        plain: pm,
        quotas,
        master_seed,
        pad_length,
        counts,
    };
    Ok((manifest, records))
}

pub fn write_classification_dir(dir: &Path, manifest: &ClassificationManifest, records: &[TrajectoryRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = CorpusWriter::create(&dir.join(CORPUS_FILE), manifest.pad_length)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    write_json(&dir.join(MANIFEST_FILE), manifest)
}
