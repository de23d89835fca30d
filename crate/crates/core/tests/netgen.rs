use std::f64::consts::PI;

use massact::netgen::{build_hex_network, in_flat_top_hexagon, NetworkLayout};
use proptest::prelude::*;

const R0: f64 = 0.866_025_403_784_438_6;

fn layout(tiers: usize, per_cell: usize, d_max_r0: f64, seed: u64) -> NetworkLayout {
    build_hex_network(tiers, per_cell, R0, d_max_r0 * R0, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cooperation_sets_are_transposes(tiers in 1usize..4, per_cell in 1usize..20, d in 0.5f64..4.0, seed in any::<u64>()) {
        let net = layout(tiers, per_cell, d, seed);
        for (n, aps) in net.coop_user_to_aps.iter().enumerate() {
            for &u in aps {
                prop_assert!(net.coop_ap_to_users[u].binary_search(&n).is_ok());
            }
        }
        for (u, users) in net.coop_ap_to_users.iter().enumerate() {
            for &n in users {
                prop_assert!(net.coop_user_to_aps[n].binary_search(&u).is_ok());
            }
        }
    }

    #[test]
    fn membership_is_exactly_the_distance_test(tiers in 1usize..4, per_cell in 1usize..20, d in 0.5f64..4.0, seed in any::<u64>()) {
        let net = layout(tiers, per_cell, d, seed);
        for n in 0..net.n_users() {
            for u in 0..net.n_aps() {
                let inside = net.distance_km(n, u) <= net.d_max_km;
                prop_assert_eq!(inside, net.coop_user_to_aps[n].contains(&u));
            }
        }
    }

    #[test]
    fn gain_decreases_with_distance(tiers in 1usize..4, per_cell in 1usize..20, seed in any::<u64>()) {
        let net = layout(tiers, per_cell, 2.5, seed);
        let mut pairs: Vec<(f64, f64)> = (0..net.n_users())
            .flat_map(|n| (0..net.n_aps()).map(move |u| (n, u)))
            .map(|(n, u)| (net.distance_km(n, u), net.g(n, u)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            prop_assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn users_are_dropped_inside_their_cell(tiers in 1usize..4, per_cell in 1usize..20, seed in any::<u64>()) {
        let net = layout(tiers, per_cell, 2.5, seed);
        for (n, p) in net.user_positions.iter().enumerate() {
            let c = net.ap_positions[net.user_cell[n]];
            prop_assert!(in_flat_top_hexagon([p[0] - c[0], p[1] - c[1]], R0 * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn same_seed_same_layout(tiers in 1usize..3, per_cell in 1usize..10, seed in any::<u64>()) {
        prop_assert_eq!(layout(tiers, per_cell, 2.5, seed), layout(tiers, per_cell, 2.5, seed));
    }
}

#[test]
fn full_scale_counts() {
    let net = layout(3, 1000, 2.5, 7);
    assert_eq!(net.n_aps(), 19);
    assert_eq!(net.n_users(), 19_000);
}

// Users far enough from the network edge see the whole detection disk covered
// by cells, so the number of APs within D_max approaches the lattice density
// times the disk area: pi D^2 / (2 sqrt(3) r0^2).
#[test]
fn interior_serving_set_size_matches_area_ratio() {
    let d = 2.5;
    let net = layout(5, 1500, d, 11);
    let interior: Vec<usize> = (0..net.n_users())
        .filter(|&n| {
            let p = net.user_positions[n];
            p[0].hypot(p[1]) <= 3.0 * R0
        })
        .collect();
    assert!(
        interior.len() >= 10_000,
        "{} interior users",
        interior.len()
    );
    let mean = interior
        .iter()
        .map(|&n| net.coop_user_to_aps[n].len() as f64)
        .sum::<f64>()
        / interior.len() as f64;
    let expected = PI * d * d / (2.0 * 3f64.sqrt());
    assert!(
        (mean / expected - 1.0).abs() < 0.10,
        "mean {mean}, area ratio {expected}"
    );
}
