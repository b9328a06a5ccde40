use fraclab_core::kernel::{build_kernel, kernel_partial_sum};
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

const NUS: [f64; 6] = [0.01, 0.1, 0.37, 0.5, 0.99, 1.0];

/// Γ(ν+j) / (Γ(ν) Γ(j+1)) through log-gamma.
fn gamma_ratio(nu: f64, j: usize) -> f64 {
    let j = j as f64;
    (ln_gamma(nu + j) - ln_gamma(nu) - ln_gamma(j + 1.0)).exp()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn recurrence_matches_log_gamma() {
    let mut worst: f64 = 0.0;
    for nu in NUS {
        let k = build_kernel(nu, 200).unwrap();
        for j in 0..=200 {
            worst = worst.max(rel(k.weight(j), gamma_ratio(nu, j)));
        }
    }
    println!("worst relative error vs log-gamma: {worst:.3e}");
    assert!(worst < 1e-12);
}

#[test]
fn partial_sums_match_next_order() {
    let mut worst: f64 = 0.0;
    for nu in NUS {
        let k = build_kernel(nu, 200).unwrap();
        for n in 0..=200 {
            let s = kernel_partial_sum(&k, n).unwrap();
            worst = worst.max(rel(s, gamma_ratio(nu + 1.0, n)));
        }
    }
    println!("worst partial-sum relative error: {worst:.3e}");
    assert!(worst < 1e-12);
}

#[test]
fn order_one_is_constant() {
    let k = build_kernel(1.0, 200).unwrap();
    assert!(k.weights().iter().all(|&w| w == 1.0));
}

proptest! {
    #[test]
    fn strictly_decreasing_below_one(nu in 0.001f64..0.999, n in 2usize..200) {
        let k = build_kernel(nu, n).unwrap();
        for j in 1..n {
            prop_assert!(k.weight(j + 1) < k.weight(j));
        }
    }

    #[test]
    fn weights_positive_and_bounded(nu in 0.001f64..=1.0, n in 0usize..300) {
        let k = build_kernel(nu, n).unwrap();
        prop_assert_eq!(k.weight(0), 1.0);
        prop_assert!(k.weights().iter().all(|&w| w > 0.0 && w <= 1.0));
    }
}
