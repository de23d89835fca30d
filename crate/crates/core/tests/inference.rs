use massact::inference::messages::{backward_chain, clamp_prob};
use massact::inference::{
    bg_denoiser, combine_ap_evidence, gamp_linear_step, run_window, run_window_observed, CoopGraph,
    InferenceConfig, Mode, OutputModel, Problem,
};
use massact::netgen::{build_hex_network, NetworkLayout};
use massact::phy::{
    effective_noise_power, gen_orthonormal_pilots, gen_pilots, synthesize_frames, SystemParams,
};
use massact::traffic::{sample_trace, ChainParams, MarkovActivityParams};
use massact::window::WindowSpec;
use massact::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn noiseless() -> SystemParams {
    SystemParams {
        noise_psd_dbm_hz: f64::NEG_INFINITY,
        ..SystemParams::default()
    }
}

fn single_ap(n: usize, g: f64) -> NetworkLayout {
    NetworkLayout::from_gains(vec![g; n], n, 1, |_, _| true).unwrap()
}

#[test]
fn linear_step_matches_direct_evaluation() {
    let (l, n) = (4, 3);
    let pilots = gen_pilots(l, n, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x: Vec<Complex64> = (0..n).map(|_| c(rng.random(), rng.random())).collect();
    let nu_x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let s: Vec<Complex64> = (0..l).map(|_| c(rng.random(), rng.random())).collect();
    let users: Vec<usize> = (0..n).collect();
    let (mut p, mut nu_p) = (vec![c(0.0, 0.0); l], vec![0.0; l]);
    gamp_linear_step(&pilots, &users, &x, &nu_x, &s, &mut p, &mut nu_p);
    for row in 0..l {
        let mut np = 0.0;
        let mut ax = c(0.0, 0.0);
        for k in 0..n {
            let a = pilots.get(row, k);
            np += a.norm_sqr() * nu_x[k];
            ax += a * x[k];
        }
        assert!((nu_p[row] - np).abs() < 1e-14);
        assert!((p[row] - (ax - s[row] * np)).norm() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn equal_transition_probabilities_give_an_uninformative_backward_message(a in 0.001f64..0.999, q in 0.0f64..1.0) {
        let chain = ChainParams { alpha: a, beta: a, p_a: a };
        prop_assert!((backward_chain(q, &chain) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn denoiser_variance_is_bounded(re in -50.0f64..50.0, im in -50.0f64..50.0, nu_r in 1e-3f64..1e3, g in 1e-3f64..1e3, phi in 0.0f64..=1.0) {
        let d = bg_denoiser(c(re, im), nu_r, g, phi);
        prop_assert!(d.nu_x >= 0.0);
        prop_assert!(d.nu_x <= g + d.x_hat.norm_sqr() + 1e-12 * g);
        prop_assert!((0.0..=1.0).contains(&d.active));
    }

    #[test]
    fn evidence_grows_with_the_observation(r in 0.0f64..20.0, dr in 1e-3f64..5.0, nu_r in 0.05f64..20.0, g in 0.05f64..20.0) {
        let lo = bg_denoiser(c(r, 0.0), nu_r, g, 0.5).phi_left;
        let hi = bg_denoiser(c(r + dr, 0.0), nu_r, g, 0.5).phi_left;
        prop_assert!(hi >= lo);
        if hi < 1.0 {
            prop_assert!(hi > lo);
        }
    }

    #[test]
    fn combined_evidence_stays_clamped(ps in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
        let eps = 1e-12;
        let clamped: Vec<f64> = ps.iter().map(|&p| clamp_prob(p, eps)).collect();
        let v = combine_ap_evidence(&clamped, eps);
        prop_assert!((eps..=1.0 - eps).contains(&v));
    }
}

#[test]
fn silent_input_is_declared_inactive() {
    let n = 40;
    let sys = SystemParams::default();
    let layout = single_ap(n, 1e3 * sys.noise_var() / sys.tx_power());
    let graph = CoopGraph::new(&layout, 1, sys.tx_power());
    let activity = MarkovActivityParams::new(0.1, 0.9).unwrap();
    let pilots = gen_pilots(20, n, 1).unwrap();
    let y = vec![vec![c(0.0, 0.0); 20]; 3];
    let truth = vec![vec![c(0.0, 0.0); n]; 3];
    let problem = Problem {
        pilots: &pilots,
        graph: &graph,
        activity: &activity,
        noise_var: sys.noise_var(),
        output: &OutputModel::Gaussian,
    };
    let r = run_window(
        problem,
        &InferenceConfig::default(),
        &y,
        WindowSpec::new(0, 3, 0, 3).unwrap(),
        Some(&truth),
    )
    .unwrap();
    assert!(r.decisions.iter().flatten().all(|d| !d));
    assert!(r.posterior.iter().flatten().all(|&p| p < 0.1));
    assert!(r.nmse_trajectory.is_empty());
}

#[test]
fn noiseless_orthonormal_pilots_recover_the_trace() {
    let (n, l, t_w) = (16, 32, 3);
    let sys = noiseless();
    let layout = single_ap(n, 1e-10);
    let graph = CoopGraph::new(&layout, 1, sys.tx_power());
    let activity = MarkovActivityParams::new(0.3, 0.8).unwrap();
    let config = InferenceConfig {
        damping: 1.0,
        ..Default::default()
    };
    for seed in 0..20 {
        let trace = sample_trace(&activity, n, t_w, seed).unwrap();
        let pilots = gen_orthonormal_pilots(l, n, seed).unwrap();
        let s = synthesize_frames(&layout, &trace, &pilots, &sys, seed).unwrap();
        let problem = Problem {
            pilots: &pilots,
            graph: &graph,
            activity: &activity,
            noise_var: 0.0,
            output: &OutputModel::Gaussian,
        };
        let r = run_window(
            problem,
            &config,
            &s.y,
            WindowSpec::new(0, t_w, 0, t_w).unwrap(),
            None,
        )
        .unwrap();
        for t in 0..t_w {
            let truth: Vec<bool> = (0..n).map(|i| trace.get(i, t)).collect();
            assert_eq!(r.decisions[t], truth, "seed {seed}, frame {t}");
        }
    }
}

#[test]
fn messages_stay_clamped_during_iterations() {
    let n = 60;
    let sys = SystemParams::default();
    let layout = NetworkLayout::from_gains(
        (0..n * 3)
            .map(|i| (1.0 + (i % 7) as f64) * 10.0 * sys.noise_var() / sys.tx_power())
            .collect(),
        n,
        3,
        |_, _| true,
    )
    .unwrap();
    let graph = CoopGraph::new(&layout, 1, sys.tx_power());
    let activity = MarkovActivityParams::new(0.1, 0.9).unwrap();
    let trace = sample_trace(&activity, n, 4, 3).unwrap();
    let pilots = gen_pilots(20, n, 3).unwrap();
    let s = synthesize_frames(&layout, &trace, &pilots, &sys, 3).unwrap();
    let config = InferenceConfig::default();
    let eps = config.eps_p;
    let problem = Problem {
        pilots: &pilots,
        graph: &graph,
        activity: &activity,
        noise_var: sys.noise_var(),
        output: &OutputModel::Gaussian,
    };
    let mut checked = 0;
    run_window_observed(
        problem,
        &config,
        &s.y,
        WindowSpec::new(0, 4, 1, 2).unwrap(),
        None,
        &mut |state, _| {
            for w in 0..4 {
                for g in 0..state.n_vaps() {
                    assert!(state
                        .phi_right(w, g)
                        .iter()
                        .all(|p| (eps..=1.0 - eps).contains(p)));
                }
            }
            assert!((eps..=1.0 - eps).contains(&state.mean_pi_left()));
            checked += 1;
        },
    )
    .unwrap();
    assert!(checked > 0);
}

// One AP serving the first half of the users; the second half interferes
// from outside the serving set and the receiver is otherwise noiseless.
#[test]
fn learned_noise_tracks_out_of_set_interference() {
    let (served, outside, l) = (200, 200, 50);
    let n = served + outside;
    let sys = noiseless();
    let activity = MarkovActivityParams::new(0.1, 0.9).unwrap();
    let config = InferenceConfig {
        em: Some(true),
        ..Default::default()
    };
    let trials = 100;
    for g_out in [1e-11, 1e-13] {
        let g: Vec<f64> = (0..n)
            .map(|i| if i < served { 1e-10 } else { g_out })
            .collect();
        let layout = NetworkLayout::from_gains(g, n, 1, |i, _| i < served).unwrap();
        let graph = CoopGraph::new(&layout, 1, sys.tx_power());
        let reference = effective_noise_power(&layout, &sys, &activity, l, 0);
        let mut ratio = 0.0;
        for seed in 0..trials {
            let trace = sample_trace(&activity, n, 2, seed).unwrap();
            let pilots = gen_pilots(l, n, seed).unwrap();
            let s = synthesize_frames(&layout, &trace, &pilots, &sys, seed).unwrap();
            let problem = Problem {
                pilots: &pilots,
                graph: &graph,
                activity: &activity,
                noise_var: 0.0,
                output: &OutputModel::Gaussian,
            };
            let r = run_window(
                problem,
                &config,
                &s.y,
                WindowSpec::new(0, 2, 0, 2).unwrap(),
                None,
            )
            .unwrap();
            ratio += r.sigma_eff[0] / reference;
        }
        ratio /= trials as f64;
        assert!(
            (ratio - 1.0).abs() < 0.2,
            "g_out {g_out}: learned / reference = {ratio}"
        );
    }
}

// Finite systems do not descend strictly at every iteration: once near the
// fixed point the per-trial NMSE wobbles by a few hundredths of a dB. The
// trial average descends, and no trial strays far above its best value.
#[test]
fn nmse_settles_into_a_monotone_descent() {
    let (n, l, trials, iters) = (1000, 100, 100, 15);
    let r0 = 0.866_025_403_784_438_6;
    let sys = SystemParams::default();
    let activity = MarkovActivityParams {
        common: ChainParams::memoryless(0.05).unwrap(),
        per_user_override: None,
    };
    let config = InferenceConfig {
        eps_conv: 0.0,
        i_max: iters,
        damping: 1.0,
        ..Default::default()
    };
    let mut mean = vec![0.0; iters + 1];
    let mut settled = 0;
    for seed in 0..trials {
        let layout = build_hex_network(1, n, r0, 2.5 * r0, seed).unwrap();
        let graph = CoopGraph::new(&layout, 1, sys.tx_power());
        let trace = sample_trace(&activity, n, 1, seed).unwrap();
        let pilots = gen_pilots(l, n, seed).unwrap();
        let s = synthesize_frames(&layout, &trace, &pilots, &sys, seed).unwrap();
        let problem = Problem {
            pilots: &pilots,
            graph: &graph,
            activity: &activity,
            noise_var: sys.noise_var(),
            output: &OutputModel::Gaussian,
        };
        let r = run_window(
            problem,
            &config,
            &s.y,
            WindowSpec::new(0, 1, 0, 1).unwrap(),
            Some(&s.x_true),
        )
        .unwrap();
        for (m, v) in mean.iter_mut().zip(&r.nmse_trajectory) {
            *m += v / trials as f64;
        }
        let mut best = f64::INFINITY;
        let mut rise = 0.0f64;
        for &v in &r.nmse_trajectory[3..] {
            best = best.min(v);
            rise = rise.max(v - best);
        }
        settled += (rise <= 0.5) as usize;
    }
    for w in mean[3..].windows(2) {
        assert!(w[1] <= w[0] + 0.01, "average trajectory {mean:?}");
    }
    assert!(mean[iters] < mean[3] - 1.0);
    assert!(
        settled as f64 >= 0.95 * trials as f64,
        "{settled}/{trials} trials within 0.5 dB of their best"
    );
}

#[test]
fn memoryless_chain_makes_both_modes_identical() {
    let n = 50;
    let sys = SystemParams::default();
    let layout = NetworkLayout::from_gains(
        (0..n * 2)
            .map(|i| (1.0 + (i % 5) as f64) * 20.0 * sys.noise_var() / sys.tx_power())
            .collect(),
        n,
        2,
        |i, u| i % 3 != u,
    )
    .unwrap();
    let graph = CoopGraph::new(&layout, 1, sys.tx_power());
    let activity = MarkovActivityParams::new(0.1, 0.1).unwrap();
    let trace = sample_trace(&activity, n, 5, 8).unwrap();
    let pilots = gen_pilots(25, n, 8).unwrap();
    let s = synthesize_frames(&layout, &trace, &pilots, &sys, 8).unwrap();
    let problem = Problem {
        pilots: &pilots,
        graph: &graph,
        activity: &activity,
        noise_var: sys.noise_var(),
        output: &OutputModel::Gaussian,
    };
    let window = WindowSpec::new(0, 5, 1, 2).unwrap();
    let dcs = run_window(
        problem,
        &InferenceConfig::default(),
        &s.y,
        window,
        Some(&s.x_true),
    )
    .unwrap();
    let cs_cfg = InferenceConfig {
        mode: Mode::Cs,
        ..Default::default()
    };
    let cs = run_window(problem, &cs_cfg, &s.y, window, Some(&s.x_true)).unwrap();
    assert_eq!(dcs, cs);
}
