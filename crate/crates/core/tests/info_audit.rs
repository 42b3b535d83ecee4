mod common;

use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use synevo::harness::audit;
use synevo::info_audit::{
    conditional_entropy, conditional_entropy_chain, entropy, mutual_information, Binning, HistogramEstimator,
};

use common::*;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Composite Simpson rule for the standard normal density on `[a, b]`.
fn normal_mass(a: f64, b: f64) -> f64 {
    let steps = 2000;
    let h = (b - a) / steps as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(a) + pdf(b);
    for i in 1..steps {
        s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn entropy_of_masses(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    masses
        .iter()
        .map(|m| m / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

#[test]
fn normal_entropy_matches_integrated_reference() {
    let b = 16;
    let x = normals(100_000, 61);

    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = (hi - lo) / b as f64;
    let masses: Vec<f64> = (0..b).map(|i| normal_mass(lo + i as f64 * w, lo + (i + 1) as f64 * w)).collect();
    let est = entropy(&x, &HistogramEstimator::new(b, Binning::EqualWidth).unwrap()).unwrap();
    let reference = entropy_of_masses(&masses);
    assert!((est - reference).abs() < 0.05, "equal-width {est} vs {reference}");

    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let mut edges = vec![-12.0];
    edges.extend((1..b).map(|j| sorted[j * x.len() / b]));
    edges.push(12.0);
    let masses: Vec<f64> = edges.windows(2).map(|e| normal_mass(e[0], e[1])).collect();
    let est = entropy(&x, &HistogramEstimator::new(b, Binning::EqualFrequency).unwrap()).unwrap();
    let reference = entropy_of_masses(&masses);
    assert!((est - reference).abs() < 0.05, "equal-frequency {est} vs {reference}");
}

#[test]
fn independent_streams_have_small_mi() {
    let est = HistogramEstimator::new(8, Binning::EqualFrequency).unwrap();
    let mi = mutual_information(&normals(100_000, 62), &normals(100_000, 63), &est).unwrap();
    // plug-in bias is about (B-1)^2 / 2n = 2.45e-4
    assert!(mi < 0.01, "{mi}");
}

#[test]
fn negation_carries_full_information() {
    let est = HistogramEstimator::default();
    let x = normals(20_000, 64);
    let y: Vec<f64> = x.iter().map(|v| -v).collect();
    let hx = entropy(&x, &est).unwrap();
    assert!((mutual_information(&x, &y, &est).unwrap() - hx).abs() < 1e-2);
}

#[test]
fn independent_chain_tracks_unconditional_entropies() {
    let est = HistogramEstimator::default();
    let summaries: Vec<Vec<f64>> = (0..3).map(|i| normals(100_000, 70 + i)).collect();
    let chain = conditional_entropy_chain(&summaries, &est).unwrap();
    for (c, s) in chain.iter().zip(&summaries) {
        let h = entropy(s, &est).unwrap();
        assert!((c - h).abs() < 0.05, "{c} vs {h}");
    }
}

#[test]
fn related_family_chain_is_nonincreasing() {
    let report = audit(&experiment(4, 0.9, 65)).unwrap();
    assert_eq!(report.chain.len(), 4);
    assert!(report.max_chain_increase() <= 0.05, "{:?}", report.chain);
}

#[test]
fn positive_commonality_gives_positive_mi() {
    for rho in [0.25, 0.5, 0.9] {
        let mut config = experiment(3, rho, 66);
        if let synevo::harness::DatasetSpec::Synthetic(s) = &mut config.dataset {
            s.timesteps = 50_000;
        }
        let report = audit(&config).unwrap();
        let min = report.min_pairwise_mi().unwrap();
        assert!(min > 0.05, "rho {rho}: {min}");
    }
}

fn samples() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (20usize..300).prop_flat_map(|n| (vec(-100.0f64..100.0, n), vec(-100.0f64..100.0, n)))
}

proptest! {
    #[test]
    fn plug_in_identities((x, y) in samples(), bins in 2usize..20, width in any::<bool>()) {
        let est = HistogramEstimator::new(bins, if width { Binning::EqualWidth } else { Binning::EqualFrequency }).unwrap();
        let ixy = mutual_information(&x, &y, &est).unwrap();
        prop_assert!(ixy >= 0.0);
        prop_assert_eq!(ixy, mutual_information(&y, &x, &est).unwrap());
        prop_assert_eq!(mutual_information(&x, &x, &est).unwrap(), entropy(&x, &est).unwrap());
        prop_assert!(conditional_entropy(&x, &y, &est).unwrap() <= entropy(&x, &est).unwrap() + 1e-12);
        prop_assert!(entropy(&x, &est).unwrap() >= 0.0);
    }
}
