use std::collections::HashSet;

use fraclab_core::datagen::*;
use fraclab_core::dynamics::{generate, MapKind};
use proptest::prelude::*;
use tempfile::tempdir;

fn small_grid(kind: MapKind) -> GridSpec {
    GridSpec {
        mu_lo: if kind == MapKind::Plain { 2.0 } else { 0.0 },
        mu_hi: if kind == MapKind::Plain { 3.2 } else { 2.0 },
        mu_step: 0.1,
        nu_step: 0.2,
        ..GridSpec::paper_delayed()
    }
    .with_kind(kind)
}

trait WithKind {
    fn with_kind(self, kind: MapKind) -> Self;
}

impl WithKind for GridSpec {
    fn with_kind(mut self, kind: MapKind) -> Self {
        self.kind = kind;
        self
    }
}

fn check_invariants(grid: &GridSpec, records: &[TrajectoryRecord]) {
    for r in records {
        assert_eq!(r.kind, grid.kind);
        assert!(r.raw_length >= MIN_RAW_LENGTH && r.raw_length <= grid.len_hi);
        assert_eq!(r.padded.len(), DEFAULT_PAD_LENGTH);
        let lead = DEFAULT_PAD_LENGTH - r.raw_length;
        assert!(r.padded[..lead].iter().all(|&v| v == 0.0));
        let idx = (r.x0 * 100.0).round();
        assert_eq!(idx / 100.0, r.x0, "x0 {} off the 0.01 grid", r.x0);
        assert!((0.0..=1.0).contains(&r.x0));
        let t = replay(r).unwrap();
        assert_eq!(t.values, r.raw_values(), "record does not replay");
        if r.truncated {
            let longer = generate(&r.spec(), r.raw_length + 1).unwrap();
            assert!(longer.truncated && longer.len() == r.raw_length);
        }
    }
}

#[test]
fn records_satisfy_invariants() {
    for kind in [MapKind::Delayed, MapKind::Plain] {
        let grid = small_grid(kind);
        let (manifest, records) = build_corpus(&grid, 9, DEFAULT_PAD_LENGTH, None).unwrap();
        assert_eq!(manifest.counts.total(), records.len());
        assert!(!records.is_empty());
        check_invariants(&grid, &records);
    }
}

#[test]
fn x0_lands_in_replicate_bin() {
    let grid = GridSpec { mu_lo: 0.5, mu_hi: 0.5, nu_lo: 0.5, nu_hi: 0.5, ..GridSpec::desk() };
    for seed in 0..200 {
        let (_, records) = build_corpus(&grid, seed, DEFAULT_PAD_LENGTH, Some(1)).unwrap();
        assert_eq!(records.len(), 5);
        for (rep, r) in records.iter().enumerate() {
            let (lo, hi) = grid.x0_bin_indices(rep);
            let i = (r.x0 * 100.0).round() as u64;
            assert!(lo <= i && i <= hi, "replicate {rep}: x0={} outside bin", r.x0);
        }
    }
}

#[test]
fn lengths_cover_the_range() {
    let grid = GridSpec { mu_lo: 0.0, mu_hi: 0.4, ..GridSpec::desk() };
    let (_, records) = build_corpus(&grid, 3, DEFAULT_PAD_LENGTH, None).unwrap();
    let lengths: HashSet<usize> = records.iter().map(|r| r.raw_length).collect();
    assert_eq!(lengths, (10..=50).collect());
}

#[test]
fn files_identical_across_worker_counts() {
    let grid = small_grid(MapKind::Delayed);
    let dir = tempdir().unwrap();
    let mut bytes = Vec::new();
    for workers in [1, 3, 8] {
        let out = dir.path().join(format!("w{workers}"));
        write_corpus_dir(&out, &grid, 77, DEFAULT_PAD_LENGTH, Some(workers)).unwrap();
        bytes.push((
            std::fs::read(out.join(CORPUS_FILE)).unwrap(),
            std::fs::read(out.join(MANIFEST_FILE)).unwrap(),
        ));
    }
    assert!(bytes.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn manifest_and_csv_round_trip() {
    let grid = small_grid(MapKind::Plain);
    let dir = tempdir().unwrap();
    let manifest = write_corpus_dir(dir.path(), &grid, 5, DEFAULT_PAD_LENGTH, None).unwrap();
    let (_, in_memory) = build_corpus(&grid, 5, DEFAULT_PAD_LENGTH, None).unwrap();
    assert_eq!(read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap(), manifest);
    assert_eq!(read_corpus(&corpus_csv_path(dir.path())).unwrap(), in_memory);
    let text = std::fs::read_to_string(dir.path().join(CORPUS_FILE)).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.starts_with("kind,split,mu,nu,x0,raw_length,truncated,v0,"));
}

#[test]
fn classification_is_balanced() {
    let quotas = SplitQuotas { train: 120, validation: 25, test: 30 };
    let (manifest, records) = build_classification_corpora(
        &small_grid(MapKind::Delayed),
        &small_grid(MapKind::Plain),
        quotas,
        11,
        DEFAULT_PAD_LENGTH,
        None,
    )
    .unwrap();
    assert_eq!(records.len(), 2 * (120 + 25 + 30));
    for split in Split::ALL {
        for kind in [MapKind::Delayed, MapKind::Plain] {
            let n = records.iter().filter(|r| r.split == split && r.kind == kind).count();
            assert_eq!(n, quotas.get(split));
        }
        assert_eq!(manifest.counts.get(split), 2 * quotas.get(split));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_fractions_track_thresholds(seed in any::<u64>()) {
        let grid = GridSpec { mu_step: 0.05, ..GridSpec::desk() };
        let (m, _) = build_corpus(&grid, seed, DEFAULT_PAD_LENGTH, None).unwrap();
        let total = m.counts.total() as f64;
        prop_assert!(total > 3000.0);
        // binomial standard deviation is below 0.9 points at this size
        for (split, want) in [(Split::Train, 0.65), (Split::Validation, 0.15), (Split::Test, 0.20)] {
            let got = m.counts.get(split) as f64 / total;
            prop_assert!((got - want).abs() < 0.035, "{split}: {got}");
        }
    }

    #[test]
    fn pad_left_keeps_suffix(values in prop::collection::vec(-1.0f64..3.0, 0..=50)) {
        let p = pad_left(&values, 50).unwrap();
        prop_assert_eq!(p.len(), 50);
        prop_assert_eq!(&p[50 - values.len()..], &values[..]);
    }
}
