mod common;

use proptest::prelude::*;
use synevo::datagen::{
    gen_domains, load_csv, mean_pairwise_correlation, temporal_domain_split, window_and_split, write_csv,
    CsvLayout, CsvSchema, SyntheticConfig,
};

use common::*;

fn family(rho: f64, seed: u64, timesteps: usize) -> (SyntheticConfig, Vec<synevo::datagen::DomainSeries>) {
    let config = SyntheticConfig {
        timesteps,
        ..synthetic(3, rho, seed)
    };
    let graph = config.graph().unwrap();
    let domains = gen_domains(&config, &graph).unwrap();
    (config, domains)
}

#[test]
fn generation_is_bitwise_reproducible() {
    let (_, a) = family(0.7, 51, 500);
    let (_, b) = family(0.7, 51, 500);
    for (x, y) in a.iter().zip(&b) {
        assert!(x.values.iter().zip(&y.values).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    let (_, c) = family(0.7, 52, 500);
    assert_ne!(a[0].values, c[0].values);
}

#[test]
fn commonality_orders_correlation() {
    let mut last = f64::NEG_INFINITY;
    for rho in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (_, d) = family(rho, 53, 5000);
        let r = mean_pairwise_correlation(&d);
        assert!(r >= last, "rho {rho}: {r} < {last}");
        last = r;
    }
    let (_, independent) = family(0.0, 53, 5000);
    assert!(mean_pairwise_correlation(&independent).abs() < 0.1);
}

#[test]
fn csv_round_trip_in_both_layouts() {
    let (_, domains) = family(0.9, 54, 40);
    let dir = tempfile::tempdir().unwrap();
    for layout in [CsvLayout::Long, CsvLayout::Wide] {
        let path = dir.path().join(format!("{layout:?}.csv"));
        write_csv(&domains[1], &path, layout).unwrap();
        let back = load_csv(&path, &CsvSchema { layout, group_id: 1 }).unwrap();
        assert_eq!(back.values, domains[1].values, "{layout:?}");
        assert!(back.mask.iter().all(|m| *m == 1.0));
    }
}

#[test]
fn temporal_split_holds_out_whole_periods() {
    let (config, domains) = family(0.9, 55, 960);
    let (train, hold) = temporal_domain_split(&domains[0], config.steps_per_day, 4, 3).unwrap();
    assert_eq!(train.len(), 720);
    assert_eq!(hold.len(), 240);
    // the held-out steps are the last quarter of every day
    assert_eq!(hold.values.row(0), domains[0].values.row(72));
    assert!(hold.segments.iter().all(|s| s.len() == 24));
}

proptest! {
    #[test]
    fn splits_are_chronological_disjoint_and_complete(t in 3usize..400, t_in in 1usize..13, t_out in 1usize..13) {
        prop_assume!(t >= t_in + t_out);
        let s = window_and_split(t, t_in, t_out, [0.7, 0.1, 0.2]).unwrap();
        prop_assert_eq!(s.len(), t - t_in - t_out + 1);
        prop_assert_eq!(s.all(), (0..s.len()).collect::<Vec<_>>());
        if let (Some(a), Some(b)) = (s.train.last(), s.val.first()) {
            prop_assert!(a < b);
        }
        if let (Some(a), Some(b)) = (s.val.last(), s.test.first()) {
            prop_assert!(a < b);
        }
        if let (Some(a), Some(b)) = (s.train.last(), s.test.first()) {
            prop_assert!(a < b);
        }
    }
}
