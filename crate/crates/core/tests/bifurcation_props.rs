use fraclab_core::bifurcation::{sweep, SweepRequest};
use fraclab_core::dynamics::{generate, MapKind, MapSpec};
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = MapKind> {
    prop_oneof![Just(MapKind::Plain), Just(MapKind::Delayed)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_coverage_and_retained_counts(
        kind in kind_strategy(),
        lo_i in 0u32..200,
        span_i in 0u32..200,
        step_i in 1u32..40,
        nu in 0.01f64..=1.0,
        keep in 1usize..60,
        extra in 0usize..60,
    ) {
        let (lo, step) = (lo_i as f64 * 0.01, step_i as f64 * 0.005);
        let hi = lo + span_i as f64 * 0.01;
        let req = SweepRequest { kind, nu, x0: 0.3, mu_lo: lo, mu_hi: hi, mu_step: step, n_total: keep + extra, n_keep: keep };
        let s = sweep(&req).unwrap();
        // integer arithmetic on the hundredths/half-hundredths lattice
        let expected = (span_i * 2) / step_i + 1;
        prop_assert_eq!(s.columns.len(), expected as usize);
        for c in &s.columns {
            let t = generate(&MapSpec::new(kind, c.mu, nu, 0.3), keep + extra).unwrap();
            prop_assert_eq!(c.kept_count, keep.min(t.len()));
            prop_assert_eq!(&c.values[..], &t.values[t.len() - c.kept_count..]);
            prop_assert_eq!(c.truncated, t.truncated);
        }
        prop_assert!(s.columns.windows(2).all(|w| w[0].mu < w[1].mu));
    }
}

#[test]
fn csv_rows_match_points() {
    let req = SweepRequest {
        kind: MapKind::Delayed,
        nu: 0.2,
        x0: 0.3,
        mu_lo: 0.0,
        mu_hi: 2.0,
        mu_step: 0.01,
        n_total: 200,
        n_keep: 100,
    };
    let s = sweep(&req).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mu,value"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows, s.points().collect::<Vec<_>>());
    assert_eq!(rows.len(), s.point_count());
}
