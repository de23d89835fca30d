use std::f64::consts::PI;

use massact::fronthaul::{
    df_aggregate, df_local_detect, qf_output_step, UniformQuantizer, LLR_CLIP,
};
use massact::harness::{simulate_trial, ExperimentConfig};
use massact::inference::{
    gaussian_output_step, run_window, CoopGraph, InferenceConfig, OutputModel, Problem,
};
use massact::netgen::{build_hex_network, NetworkLayout};
use massact::oracle::integrate;
use massact::phy::{gen_orthonormal_pilots, gen_pilots, synthesize_frames, SystemParams};
use massact::traffic::{sample_trace, MarkovActivityParams};
use massact::window::{make_schedule, WindowSpec};
use massact::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const R0: f64 = 0.866_025_403_784_438_6;

fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Mean squared quantization error of a standard normal input, by quadrature
/// over every bin.
fn distortion_oracle(q: &UniformQuantizer) -> f64 {
    q.levels()
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let (lo, hi) = q.bin(k);
            integrate(
                |x| (x - level).powi(2) * density(x),
                lo.max(-14.0),
                hi.min(14.0),
                1e-16,
            )
        })
        .sum()
}

fn measured_snr_db(q: &UniformQuantizer, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sig, mut err) = (0.0, 0.0);
    for _ in 0..samples {
        let x: f64 = StandardNormal.sample(&mut rng);
        sig += x * x;
        err += (x - q.quantize(x)).powi(2);
    }
    10.0 * (sig / err).log10()
}

#[test]
fn seven_bit_quantization_snr() {
    // Default clip: granular plus overload noise by quadrature, against the
    // empirical distortion.
    let q = UniformQuantizer::new(7, 1.0, 3.0).unwrap();
    let predicted = -10.0 * distortion_oracle(&q).log10();
    let measured = measured_snr_db(&q, 1_000_000, 1);
    assert!(
        (predicted - measured).abs() < 0.1,
        "{predicted} vs {measured}"
    );
    // With the clip near its optimum, seven bits clear 35 dB.
    let wide = UniformQuantizer::new(7, 1.0, 3.5).unwrap();
    assert!(measured_snr_db(&wide, 1_000_000, 2) >= 35.0);
    assert!(-10.0 * distortion_oracle(&wide).log10() >= 35.0);
}

#[test]
fn fine_bins_reduce_to_the_gaussian_channel() {
    let q = UniformQuantizer::new(12, 1.0, 3.0).unwrap();
    let cases = [
        (
            Complex64::new(0.3, -0.2),
            0.8,
            Complex64::new(1.1, 0.4),
            0.5,
        ),
        (
            Complex64::new(-1.0, 0.0),
            2.0,
            Complex64::new(-0.2, 1.9),
            0.1,
        ),
        (
            Complex64::new(0.0, 0.0),
            0.2,
            Complex64::new(0.05, -0.7),
            1.0,
        ),
        (
            Complex64::new(2.0, 2.0),
            0.05,
            Complex64::new(1.7, 2.2),
            0.3,
        ),
    ];
    for (p, nu_p, y, s2) in cases {
        let bin = q.complex_bin(y);
        let (z, nz) = qf_output_step(p, nu_p, &bin, s2);
        let g = gaussian_output_step(p, nu_p, bin.level, s2);
        assert!(
            (z - g.z_hat).norm() <= 1e-4 * (1.0 + g.z_hat.norm()),
            "{z} vs {}",
            g.z_hat
        );
        assert!(
            (nz - g.nu_z).abs() <= 1e-4 * (1.0 + g.nu_z),
            "{nz} vs {}",
            g.nu_z
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quantizer_is_monotone_and_idempotent(bits in 1u32..12, std in 0.01f64..100.0, clip in 0.5f64..5.0, a in -1e3f64..1e3, b in -1e3f64..1e3) {
        let q = UniformQuantizer::new(bits, std, clip).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(q.quantize(lo) <= q.quantize(hi));
        for &level in q.levels() {
            prop_assert_eq!(q.quantize(level), level);
        }
        let v = q.quantize(a);
        prop_assert_eq!(q.quantize(v), v);
    }

    #[test]
    fn quantized_output_variance_is_bounded(bits in 1u32..10, pr in -5.0f64..5.0, pi in -5.0f64..5.0, nu_p in 1e-4f64..10.0, yr in -6.0f64..6.0, yi in -6.0f64..6.0, s2 in 1e-4f64..5.0) {
        let q = UniformQuantizer::new(bits, 1.0, 3.0).unwrap();
        let bin = q.complex_bin(Complex64::new(yr, yi));
        let (z, nz) = qf_output_step(Complex64::new(pr, pi), nu_p, &bin, s2);
        prop_assert!(z.re.is_finite() && z.im.is_finite());
        prop_assert!(nz >= 0.0);
        prop_assert!(nz <= nu_p * (1.0 + 1e-9));
    }
}

fn single_ap_problem_parts(
    n: usize,
    snr: f64,
) -> (NetworkLayout, SystemParams, MarkovActivityParams) {
    let sys = SystemParams::default();
    let g: Vec<f64> = (0..n)
        .map(|i| snr * (1.0 + (i % 4) as f64) * sys.noise_var() / sys.tx_power())
        .collect();
    let layout = NetworkLayout::from_gains(g, n, 1, |_, _| true).unwrap();
    (layout, sys, MarkovActivityParams::new(0.1, 0.9).unwrap())
}

#[test]
fn one_ap_detect_and_forward_equals_centralized() {
    let (n, l) = (80, 30);
    let (layout, sys, activity) = single_ap_problem_parts(n, 5.0);
    let graph = CoopGraph::new(&layout, 1, sys.tx_power());
    let config = InferenceConfig::default();
    for seed in 0..5 {
        let trace = sample_trace(&activity, n, 6, seed).unwrap();
        let pilots = gen_pilots(l, n, seed).unwrap();
        let s = synthesize_frames(&layout, &trace, &pilots, &sys, seed).unwrap();
        let problem = Problem {
            pilots: &pilots,
            graph: &graph,
            activity: &activity,
            noise_var: sys.noise_var(),
            output: &OutputModel::Gaussian,
        };
        for spec in make_schedule(6, 4, 2, 1).unwrap().windows {
            let central = run_window(problem, &config, &s.y, spec, None).unwrap();
            let local =
                df_local_detect(&s.y, &layout, &pilots, &sys, &activity, &config, spec, 0).unwrap();
            let (sums, decisions) =
                df_aggregate(std::slice::from_ref(&local), n, None, config.threshold);
            assert_eq!(decisions, central.decisions);
            assert_eq!(sums, central.llr);
        }
    }
}

#[test]
fn noiseless_local_detection_saturates() {
    let (n, l) = (12, 24);
    let g = vec![1e-10; n * 2];
    // AP 1 serves only the even users.
    let layout = NetworkLayout::from_gains(g, n, 2, |i, u| u == 0 || i % 2 == 0).unwrap();
    let sys = SystemParams {
        noise_psd_dbm_hz: f64::NEG_INFINITY,
        ..SystemParams::default()
    };
    let activity = MarkovActivityParams::new(0.3, 0.8).unwrap();
    let trace = sample_trace(&activity, n, 2, 5).unwrap();
    let pilots = gen_orthonormal_pilots(l, n, 5).unwrap();
    let s = synthesize_frames(&layout, &trace, &pilots, &sys, 5).unwrap();
    let config = InferenceConfig {
        damping: 1.0,
        eps_conv: 1e-14,
        i_max: 200,
        ..Default::default()
    };
    let spec = WindowSpec::new(0, 2, 0, 2).unwrap();
    let q = UniformQuantizer::with_range(5, LLR_CLIP).unwrap();
    let top = *q.levels().last().unwrap();
    for u in 0..2 {
        let local =
            df_local_detect(&s.y, &layout, &pilots, &sys, &activity, &config, spec, u).unwrap();
        assert_eq!(local.users, layout.coop_ap_to_users[u]);
        assert!(local
            .llr
            .iter()
            .all(|frame| frame.len() == local.users.len()));
    }
    // AP 0 serves everyone, so nothing it observes is unmodelled.
    let local = df_local_detect(&s.y, &layout, &pilots, &sys, &activity, &config, spec, 0).unwrap();
    for (k, frame) in local.llr.iter().enumerate() {
        for (&i, &v) in local.users.iter().zip(frame) {
            // The transmitted LLR sits in the outermost bin on the correct side.
            assert_eq!(v > 0.0, trace.get(i, k), "user {i}: {v}");
            assert_eq!(q.quantize(v).abs(), top, "user {i}: {v}");
        }
    }
}

#[test]
fn five_bit_llrs_keep_decisions() {
    let (trials, l, frames) = (100, 40, 4);
    let sys = SystemParams::default();
    let activity = MarkovActivityParams::new(0.1, 0.9).unwrap();
    let config = InferenceConfig::default();
    let q = UniformQuantizer::with_range(5, LLR_CLIP).unwrap();
    let schedule = make_schedule(frames, 4, 2, 1).unwrap();
    let (mut same, mut total) = (0usize, 0usize);
    for seed in 0..trials {
        let layout = build_hex_network(2, 30, R0, 2.5 * R0, seed).unwrap();
        let n = layout.n_users();
        let trace = sample_trace(&activity, n, frames, seed).unwrap();
        let pilots = gen_pilots(l, n, seed).unwrap();
        let s = synthesize_frames(&layout, &trace, &pilots, &sys, seed).unwrap();
        for spec in &schedule.windows {
            let locals: Vec<_> = (0..layout.n_aps())
                .map(|u| {
                    df_local_detect(&s.y, &layout, &pilots, &sys, &activity, &config, *spec, u)
                        .unwrap()
                })
                .collect();
            let (_, exact) = df_aggregate(&locals, n, None, 0.0);
            let (_, coarse) = df_aggregate(&locals, n, Some(&q), 0.0);
            for (a, b) in exact.iter().flatten().zip(coarse.iter().flatten()) {
                same += (a == b) as usize;
                total += 1;
            }
        }
    }
    let agreement = same as f64 / total as f64;
    assert!(agreement >= 0.99, "{agreement}");
}

// QF never learns the noise, so the unquantized reference runs without EM
// too. The clip is widened so that only the resolution is under test: at 3
// standard deviations a nearby active user overloads the quantizer.
#[test]
fn twelve_bit_quantize_and_forward_tracks_the_ideal_fronthaul() {
    let mut ideal = ExperimentConfig::desk();
    ideal.window.frames = 4;
    ideal.inference.em = Some(false);
    ideal.fronthaul.clip = 6.0;
    let qf = ideal
        .with_override("fronthaul.mode=qf")
        .unwrap()
        .with_override("fronthaul.bq=24")
        .unwrap();
    let (mut same, mut total) = (0usize, 0usize);
    for trial in 0..4 {
        let a = simulate_trial(&ideal, trial).unwrap();
        let b = simulate_trial(&qf, trial).unwrap();
        for (x, y) in a
            .decisions
            .iter()
            .flatten()
            .zip(b.decisions.iter().flatten())
        {
            same += (x == y) as usize;
            total += 1;
        }
    }
    let agreement = same as f64 / total as f64;
    assert!(agreement >= 0.999, "{agreement}");
}
