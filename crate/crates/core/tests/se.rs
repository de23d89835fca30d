use massact::inference::CoopGraph;
use massact::netgen::{build_hex_network, NetworkLayout};
use massact::phy::{gen_pilots, synthesize_frames, SystemParams};
use massact::se::{se_init, se_step, Coupling, SeConfig};
use massact::traffic::{sample_trace, ChainParams, MarkovActivityParams};

const R0: f64 = 0.866_025_403_784_438_6;

#[test]
fn initial_variance_matches_synthesized_channels() {
    let net = build_hex_network(3, 200, R0, 2.5 * R0, 12).unwrap();
    let activity = MarkovActivityParams {
        common: ChainParams::memoryless(0.1).unwrap(),
        per_user_override: None,
    };
    let sys = SystemParams::default();
    let graph = CoopGraph::new(&net, 1, sys.tx_power());
    let se = se_init(&graph, &activity, 1, 1).unwrap();
    let (chunks, frames) = (40, 100);
    let pilots = gen_pilots(1, net.n_users(), 12).unwrap();
    let mut empirical = 0.0;
    for chunk in 0..chunks {
        let trace = sample_trace(&activity, net.n_users(), frames, chunk).unwrap();
        let s = synthesize_frames(&net, &trace, &pilots, &sys, chunk).unwrap();
        for u in 0..net.n_aps() {
            let users = &net.coop_ap_to_users[u];
            let energy: f64 = (0..frames)
                .map(|t| {
                    let x = s.x_at(t, u);
                    users.iter().map(|&n| x[n].norm_sqr()).sum::<f64>()
                })
                .sum();
            empirical += energy / (chunks as usize * frames * users.len()) as f64;
        }
    }
    empirical /= net.n_aps() as f64;
    let predicted = se.mse();
    assert!(
        (empirical / predicted - 1.0).abs() < 0.02,
        "{empirical} vs {predicted}"
    );
    assert_eq!(se.nmse_db(), 0.0);
}

// The expectations are sampled, so the recursion is averaged over independent
// seeds and a rise is only tolerated within three standard errors.
#[test]
fn gaussian_channel_recursion_never_increases() {
    let n = 400;
    let sys = SystemParams::default();
    let g: Vec<f64> = (0..n).map(|i| (1.0 + (i % 10) as f64) * 1e-11).collect();
    let layout = NetworkLayout::from_gains(g, n, 1, |_, _| true).unwrap();
    let graph = CoopGraph::new(&layout, 1, sys.tx_power());
    let (seeds, steps) = (4, 12);
    for (p_a, l, snr) in [(0.05, 100, 100.0), (0.1, 120, 10.0), (0.02, 40, 1000.0)] {
        let activity = MarkovActivityParams {
            common: ChainParams::memoryless(p_a).unwrap(),
            per_user_override: None,
        };
        let sigma2 = graph.mean_prior_var() / snr;
        let runs: Vec<Vec<f64>> = (0..seeds)
            .map(|seed| {
                let mut se = se_init(&graph, &activity, l, 1).unwrap();
                let config = SeConfig {
                    draws: 100_000,
                    seed,
                };
                for _ in 0..steps {
                    let coupling = Coupling::uniform(&se, p_a, sigma2);
                    se = se_step(&se, &coupling, None, &config).unwrap();
                }
                se.mse.clone()
            })
            .collect();
        let stats: Vec<(f64, f64)> = (0..=steps)
            .map(|i| {
                let v: Vec<f64> = runs.iter().map(|r| r[i]).collect();
                let m = v.iter().sum::<f64>() / seeds as f64;
                let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (seeds - 1) as f64;
                (m, (var / seeds as f64).sqrt())
            })
            .collect();
        assert_eq!(stats[0].1, 0.0);
        for w in stats.windows(2) {
            let ((m0, e0), (m1, e1)) = (w[0], w[1]);
            assert!(m1 >= 0.0);
            assert!(
                m1 <= m0 + 3.0 * (e0 * e0 + e1 * e1).sqrt(),
                "p_a {p_a}: {stats:?}"
            );
        }
        assert!(stats[steps].0 < 0.5 * stats[0].0, "p_a {p_a}: {stats:?}");
    }
}
