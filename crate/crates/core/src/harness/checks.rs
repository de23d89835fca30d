//! Self-checks shared by the CLI and the acceptance tests: closed-form
//! denoisers against quadrature, message-passing smoothing against
//! enumeration, and state evolution against Monte-Carlo NMSE.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::fronthaul::{qf_output_step, UniformQuantizer};
use crate::inference::messages::{activity_llr, smooth_chain, ChainMessages};
use crate::inference::{bg_denoiser, CoopGraph, InferenceConfig, Mode, OutputModel, Problem};
use crate::netgen::build_hex_network;
use crate::oracle::{bg_posterior_numeric, exact_chain_smoother, qf_posterior_numeric};
use crate::phy::{effective_noise_power, gen_pilots, synthesize_frames, SystemParams};
use crate::rng;
use crate::se::{se_track, Conditioning, SeConfig};
use crate::special::sigmoid;
use crate::traffic::{sample_trace, ChainParams, MarkovActivityParams};
use crate::window::WindowSpec;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub bg_points: usize,
    pub qf_points: usize,
    /// Largest scaled deviation of the BG denoiser from quadrature.
    pub bg_max_dev: f64,
    pub qf_max_dev: f64,
    pub chain_cases: usize,
    /// Largest absolute deviation of the fused chain posterior from enumeration.
    pub chain_max_dev: f64,
}

fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64))
        .collect()
}

/// `|a - b| / (|b| + scale)`.
fn dev(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / (b.abs() + scale)
}

/// BG denoiser against quadrature on a `10^4` grid over prior variance,
/// noise variance, prior activity and observation magnitude. Means are
/// compared relative to `|oracle| + sqrt(g + nu_r)`, variances relative to
/// `|oracle| + g`, probabilities absolutely.
pub fn bg_stress(k: usize) -> (usize, f64) {
    let gs = log_grid(1e-4, 1e3, k);
    let nus = log_grid(1e-5, 1e2, k);
    let phis = log_grid(1e-6, 0.999_999, k);
    let mags = log_grid(1e-3, 30.0, k);
    let mut worst = 0.0f64;
    let mut points = 0;
    for &g in &gs {
        for &nu_r in &nus {
            for &phi in &phis {
                for (j, &mag) in mags.iter().enumerate() {
                    let r = Complex64::from_polar(mag * (g + nu_r).sqrt(), 0.37 * j as f64);
                    let d = bg_denoiser(r, nu_r, g, phi);
                    let o = bg_posterior_numeric(r, nu_r, g, phi);
                    let s = (g + nu_r).sqrt();
                    worst = worst
                        .max((d.active - o.active).abs())
                        .max(dev(d.x_hat.re, o.x_hat.re, s))
                        .max(dev(d.x_hat.im, o.x_hat.im, s))
                        .max(dev(d.nu_x, o.nu_x, g));
                    points += 1;
                }
            }
        }
    }
    (points, worst)
}

/// QF output step against quadrature on a `10^4` grid over prior variance,
/// noise variance, prior mean and observed bin (interior and outer bins of
/// 1-, 3- and 7-bit quantizers and one narrow 12-bit bin). Means are compared relative to
/// `|oracle| + sqrt(nu_p)`, variances relative to `|oracle| + nu_p`.
pub fn qf_stress(k: usize) -> (usize, f64) {
    let nus = log_grid(1e-4, 10.0, k);
    let sigmas = log_grid(1e-4, 10.0, k);
    let means: Vec<f64> = (0..k)
        .map(|i| -8.0 + 16.0 * i as f64 / (k - 1) as f64)
        .collect();
    let mut bins = Vec::new();
    for (bits, range) in [(1, 3.0), (3, 3.0), (7, 3.0)] {
        let q = UniformQuantizer::with_range(bits, range).unwrap();
        let last = q.levels().len() - 1;
        let picks = [0, last / 2, last];
        for (a, b) in picks.iter().zip(picks.iter().rev()) {
            bins.push(q.complex_bin(Complex64::new(q.levels()[*a], q.levels()[*b])));
        }
    }
    let fine = UniformQuantizer::with_range(12, 3.0).unwrap();
    bins.push(fine.complex_bin(Complex64::new(0.731, -2.2)));
    bins.truncate(k);
    let mut worst = 0.0f64;
    let mut points = 0;
    for &nu_p in &nus {
        for &sigma2 in &sigmas {
            for &m in &means {
                for bin in &bins {
                    let p = Complex64::new(m, 0.3 * m - 1.0);
                    let (z, v) = qf_output_step(p, nu_p, bin, sigma2);
                    let (zo, vo) = qf_posterior_numeric(p, nu_p, bin, sigma2);
                    let s = nu_p.sqrt();
                    worst = worst
                        .max(dev(z.re, zo.re, s))
                        .max(dev(z.im, zo.im, s))
                        .max(dev(v, vo, nu_p));
                    points += 1;
                }
            }
        }
    }
    (points, worst)
}

/// Fused chain posteriors against enumeration for random likelihood ratios.
pub fn chain_check(windows: &[usize], cases_per_window: usize, seed: u64) -> Result<(usize, f64)> {
    let mut r = rng::stream(seed, &[]);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for &t_w in windows {
        for _ in 0..cases_per_window {
            let p_a = r.random_range(0.02..0.5);
            let beta = r.random_range(p_a..0.99);
            let chain = ChainParams::from_steady_state(p_a, beta)?;
            let ratios: Vec<f64> = (0..t_w)
                .map(|_| (r.random_range(-6.0..6.0f64)).exp())
                .collect();
            let exact = exact_chain_smoother(&ratios, &chain)?;
            let pi_left: Vec<f64> = ratios.iter().map(|x| x / (1.0 + x)).collect();
            let mut m = ChainMessages::default();
            smooth_chain(&pi_left, &chain, chain.p_a, 1e-300, &mut m);
            for t in 0..t_w {
                let fused = sigmoid(activity_llr(pi_left[t], m.psi_right[t], m.varphi_right[t]));
                worst = worst.max((fused - exact[t]).abs());
            }
            cases += 1;
        }
    }
    Ok((cases, worst))
}

pub fn oracle_check(seed: u64) -> Result<OracleCheck> {
    let (bg_points, bg_max_dev) = bg_stress(10);
    let (qf_points, qf_max_dev) = qf_stress(10);
    let (chain_cases, chain_max_dev) = chain_check(&[2, 3, 4, 8], 250, seed)?;
    Ok(OracleCheck {
        bg_points,
        qf_points,
        bg_max_dev,
        qf_max_dev,
        chain_cases,
        chain_max_dev,
    })
}

/// Single-cell setting for comparing the state evolution with simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeCheckConfig {
    pub trials: usize,
    pub users: usize,
    pub pilot_length: usize,
    pub p_a: f64,
    pub iterations: usize,
    pub draws: usize,
    /// Condition the recursion on each trial's channels; otherwise average
    /// over the prior.
    pub conditioned: bool,
    pub em: bool,
    pub seed: u64,
}

impl Default for SeCheckConfig {
    fn default() -> Self {
        SeCheckConfig {
            trials: 200,
            users: 1000,
            pilot_length: 100,
            p_a: 0.05,
            iterations: 10,
            draws: 100_000,
            conditioned: true,
            em: true,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeCheckRow {
    pub iteration: usize,
    /// Mean over trials of the predicted NMSE in dB.
    pub predicted_db: f64,
    pub measured_db: f64,
}

/// Runs the estimator with one scalar variance per block, undamped, as the
/// state evolution assumes, and averages predicted and measured NMSE (dB)
/// over trials.
pub fn se_check(c: &SeCheckConfig) -> Result<Vec<SeCheckRow>> {
    let sys = SystemParams::default();
    let activity = MarkovActivityParams::new(c.p_a, c.p_a)?;
    let r0 = 3f64.sqrt() / 2.0;
    let config = InferenceConfig {
        scalar_variances: true,
        mode: Mode::Cs,
        damping: 1.0,
        em: Some(c.em),
        i_max: c.iterations,
        eps_conv: 0.0,
        ..Default::default()
    };
    let window = WindowSpec::new(0, 1, 0, 1)?;
    let mut sums = vec![(0.0, 0.0); c.iterations];
    for trial in 0..c.trials {
        let seed = rng::derive_seed(c.seed, &[rng::domain::TRIAL, trial as u64]);
        let layout = build_hex_network(1, c.users, r0, 2.5 * r0, seed)?;
        let n = layout.n_users();
        let trace = sample_trace(&activity, n, 1, seed)?;
        let pilots = gen_pilots(c.pilot_length, n, seed)?;
        let signals = synthesize_frames(&layout, &trace, &pilots, &sys, seed)?;
        let graph = CoopGraph::new(&layout, 1, sys.tx_power());
        let output = OutputModel::Gaussian;
        let problem = Problem {
            pilots: &pilots,
            graph: &graph,
            activity: &activity,
            noise_var: sys.noise_var(),
            output: &output,
        };
        let noise: Vec<f64> = graph
            .vaps
            .iter()
            .map(|v| effective_noise_power(&layout, &sys, &activity, c.pilot_length, v.physical))
            .collect();
        let conditioning = c.conditioned.then(|| Conditioning {
            x_true: &signals.x_true,
            noise: &noise,
        });
        let rows = se_track(
            problem,
            &config,
            &signals.y,
            window,
            &signals.x_true,
            conditioning,
            &SeConfig {
                draws: c.draws,
                seed,
            },
        )?;
        for r in rows.iter().take(c.iterations) {
            let s = &mut sums[r.iteration - 1];
            s.0 += r.predicted_db;
            s.1 += r.measured_db;
        }
    }
    let k = c.trials.max(1) as f64;
    Ok(sums
        .iter()
        .enumerate()
        .map(|(i, s)| SeCheckRow {
            iteration: i + 1,
            predicted_db: s.0 / k,
            measured_db: s.1 / k,
        })
        .collect())
}
