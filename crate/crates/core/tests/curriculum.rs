mod common;

use proptest::collection::vec;
use proptest::prelude::*;
use synevo::curriculum::{profile_group, reorder, reorder_profiles, GradientProfile};

use common::*;

fn profiles_strategy() -> impl Strategy<Value = Vec<GradientProfile>> {
    (1usize..6).prop_flat_map(|dim| {
        vec(vec(-5.0f64..5.0, dim), 1..9).prop_map(|cats| {
            cats.into_iter()
                .enumerate()
                .map(|(id, cat)| GradientProfile::from_layers(id * 3 + 1, &[&cat]))
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn ordering_invariants(profiles in profiles_strategy(), scale in 1e-3f64..1e3) {
        let r = reorder_profiles(profiles.clone()).unwrap();
        let mut ids = r.order.ids.clone();
        ids.sort_unstable();
        let mut expected: Vec<usize> = profiles.iter().map(|p| p.group_id).collect();
        expected.sort_unstable();
        prop_assert_eq!(ids, expected);
        prop_assert_eq!(r.order.ids[0], r.bench);
        prop_assert_eq!(r.order.lengths[0], 0.0);
        prop_assert!(r.order.lengths.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(r.d_max, *r.order.lengths.last().unwrap());
        for p in &profiles {
            let norm_sq: f64 = p.cat.iter().map(|v| v * v).sum();
            prop_assert!((p.sum_sq - norm_sq).abs() <= 1e-12 * norm_sq.max(1.0));
        }
        let scaled = reorder_profiles(profiles.iter().map(|p| p.scaled(scale)).collect()).unwrap();
        prop_assert_eq!(scaled.order.ids, r.order.ids);
    }
}

#[test]
fn identical_groups_profile_identically_and_reorder_reproducibly() {
    let config = experiment(2, 0.9, 21);
    let probe = config.evolve_config().probe_config();
    let groups = whole_groups(&synthetic(2, 0.9, 21), config.t_in, config.t_out);
    let a = profile_group(&groups[0], &probe).unwrap();
    let mut twin = groups[0].clone();
    twin.id = 7;
    let b = profile_group(&twin, &probe).unwrap();
    assert_eq!(a.cat, b.cat);
    assert_eq!(a.sum_sq, b.sum_sq);
    assert_eq!(a.cat.len(), config.arch().param_count());

    let first = reorder(&groups, &probe).unwrap();
    let second = reorder(&groups, &probe).unwrap();
    assert_eq!(first, second);
}
