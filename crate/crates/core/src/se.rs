//! State evolution of the GAMP channel estimator.
//!
//! Every (frame, virtual AP) block is summarised by scalar variances. The
//! denoiser expectation has no closed form under a Bernoulli-Gaussian prior
//! with per-user gains and activity priors, so it is evaluated by sampling
//! `r = x0 + CN(0, nu_r)`. The activity priors and the effective noise come
//! from a coupled run of the algorithm, as the chain messages have no scalar
//! recursion of their own.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::fronthaul::{qf_output_step, UniformQuantizer};
use crate::inference::gamp::NU_R_CEIL;
use crate::inference::{
    bg_denoiser, run_window_observed, CoopGraph, InferenceConfig, OutputModel, Problem, WindowState,
};
use crate::rng::{complex_gaussian, domain, stream};
use crate::traffic::MarkovActivityParams;
use crate::window::WindowSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeConfig {
    /// Monte-Carlo draws per block and iteration, spread evenly over users.
    pub draws: usize,
    pub seed: u64,
}

impl Default for SeConfig {
    fn default() -> Self {
        SeConfig {
            draws: 100_000,
            seed: 0,
        }
    }
}

/// Scalar variances of one (frame, virtual AP) block.
#[derive(Debug, Clone, PartialEq)]
pub struct SeBlock {
    /// Global virtual-AP index.
    pub vap: usize,
    /// `rho0 g` of every served user.
    pub prior_var: Vec<f64>,
    /// Stationary activity probability `p_n` used to draw `x0`.
    pub p_active: Vec<f64>,
    /// True channels of a conditioned state; `x0` is then fixed.
    pub x0: Option<Vec<Complex64>>,
    /// Mean posterior variance the algorithm believes in.
    pub nu_x: f64,
    /// Mean squared error of the estimates; equal to `nu_x` unless the state
    /// is conditioned.
    pub mse: f64,
    pub nu_p: f64,
    pub nu_z: f64,
    /// Noise level the denoiser assumes.
    pub nu_r: f64,
    /// Actual noise level of `r`; equal to `nu_r` unless conditioned.
    pub tau_r: f64,
    /// Per-user squared error of a conditioned state.
    pub user_err: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeState {
    pub pilot_length: usize,
    pub t_w: usize,
    pub n_vaps: usize,
    /// Channels fixed to their true values rather than drawn from the prior.
    pub conditioned: bool,
    /// `[w * n_vaps + g]`.
    pub blocks: Vec<SeBlock>,
    /// Completed steps; 0 right after initialisation.
    pub iteration: usize,
    /// Predicted MSE after every step, entry 0 being the initialisation.
    pub mse: Vec<f64>,
}

impl SeState {
    /// Mean MSE over blocks.
    pub fn mse(&self) -> f64 {
        self.blocks.iter().map(|b| b.mse).sum::<f64>() / self.blocks.len() as f64
    }

    /// User-weighted MSE normalised by the initial energy, in dB. This is the
    /// quantity comparable to the engine's pooled NMSE.
    pub fn nmse_db(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for b in &self.blocks {
            let k = b.prior_var.len() as f64;
            num += k * b.mse;
            den += k * prior_energy(b);
        }
        10.0 * (num / den).log10()
    }
}

/// Energy of the true channels: expected under the prior, realised when
/// conditioned.
fn prior_energy(b: &SeBlock) -> f64 {
    let sum: f64 = match &b.x0 {
        Some(x) => x.iter().map(|x| x.norm_sqr()).sum(),
        None => b
            .prior_var
            .iter()
            .zip(&b.p_active)
            .map(|(g, p)| g * p)
            .sum(),
    };
    sum / b.prior_var.len() as f64
}

/// Initial state `nu_x = mean_n p_n rho0 g_n` for every block of a window of
/// `t_w` frames.
pub fn se_init(
    graph: &CoopGraph,
    activity: &MarkovActivityParams,
    pilot_length: usize,
    t_w: usize,
) -> Result<SeState> {
    build_state(graph, activity, pilot_length, t_w, None)
}

/// Initial state conditioned on the true channels of the window frames
/// (`x_true[t][v * N + n]`, frames `window.frames()`): `x0` is fixed, the
/// MSE starts at the realised energy, and the recursion tracks the squared
/// error and the actual noise level of `r` next to the variances the
/// algorithm believes in, since the two no longer coincide.
pub fn se_init_conditioned(
    graph: &CoopGraph,
    activity: &MarkovActivityParams,
    x_true: &[Vec<Complex64>],
    pilot_length: usize,
    window: WindowSpec,
) -> Result<SeState> {
    let n = graph.n_users;
    if x_true.len() < window.t0 + window.t_w
        || x_true[window.frames()]
            .iter()
            .any(|x| x.len() != graph.n_vaps_total * n)
    {
        return Err(Error::DimensionMismatch(
            "true channels do not cover the window".into(),
        ));
    }
    build_state(
        graph,
        activity,
        pilot_length,
        window.t_w,
        Some((x_true, window.t0)),
    )
}

fn build_state(
    graph: &CoopGraph,
    activity: &MarkovActivityParams,
    pilot_length: usize,
    t_w: usize,
    truth: Option<(&[Vec<Complex64>], usize)>,
) -> Result<SeState> {
    activity.check_users(graph.n_users)?;
    if pilot_length == 0 || t_w == 0 {
        return Err(Error::param("pilot_length/t_w", "must be positive"));
    }
    if let Some(v) = graph.vaps.iter().find(|v| v.users.is_empty()) {
        return Err(Error::param(
            "N_u",
            format!("virtual AP {} serves no users", v.index),
        ));
    }
    let n_users = graph.n_users;
    let mut blocks = Vec::with_capacity(t_w * graph.vaps.len());
    for w in 0..t_w {
        for v in &graph.vaps {
            let x0 = truth.map(|(x, t0)| {
                let row = &x[t0 + w][v.index * n_users..(v.index + 1) * n_users];
                v.users.iter().map(|&n| row[n]).collect()
            });
            let mut b = SeBlock {
                vap: v.index,
                prior_var: v.prior_var.clone(),
                p_active: v.users.iter().map(|&n| activity.user(n).p_a).collect(),
                x0,
                nu_x: 0.0,
                mse: 0.0,
                nu_p: 0.0,
                nu_z: 0.0,
                nu_r: f64::INFINITY,
                tau_r: f64::INFINITY,
                user_err: Vec::new(),
            };
            if let Some(x) = &b.x0 {
                b.user_err = x.iter().map(|x| x.norm_sqr()).collect();
            }
            b.mse = prior_energy(&b);
            b.nu_x = b
                .prior_var
                .iter()
                .zip(&b.p_active)
                .map(|(g, p)| g * p)
                .sum::<f64>()
                / b.prior_var.len() as f64;
            blocks.push(b);
        }
    }
    let mut state = SeState {
        pilot_length,
        t_w,
        n_vaps: graph.vaps.len(),
        conditioned: truth.is_some(),
        blocks,
        iteration: 0,
        mse: Vec::new(),
    };
    state.mse.push(state.mse());
    Ok(state)
}

/// Quantities taken from the coupled algorithm run for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    /// Denoiser priors per block `[w * n_vaps + g]`, one per served user.
    pub phi_right: Vec<Vec<f64>>,
    /// Effective noise per virtual AP of the graph.
    pub sigma2: Vec<f64>,
    /// Actual noise plus interference power per virtual AP; only used by
    /// conditioned states.
    pub noise_true: Vec<f64>,
}

impl Coupling {
    /// Reads the priors and noise the engine used in its latest iteration.
    pub fn from_state(state: &WindowState<'_>, noise_true: Vec<f64>) -> Self {
        let n_vaps = state.n_vaps();
        let t_w = state.window().t_w;
        Coupling {
            noise_true,
            phi_right: (0..t_w)
                .flat_map(|w| (0..n_vaps).map(move |g| (w, g)))
                .map(|(w, g)| state.phi_right(w, g).to_vec())
                .collect(),
            sigma2: (0..n_vaps).map(|g| state.sigma_used(g)).collect(),
        }
    }

    /// Constant prior `phi` for every user and the same noise everywhere.
    pub fn uniform(se: &SeState, phi: f64, sigma2: f64) -> Self {
        Coupling {
            phi_right: se
                .blocks
                .iter()
                .map(|b| vec![phi; b.prior_var.len()])
                .collect(),
            sigma2: vec![sigma2; se.n_vaps],
            noise_true: vec![sigma2; se.n_vaps],
        }
    }
}

/// Gaussian-channel `nu_z = nu_p sigma2 / (nu_p + sigma2)`.
pub fn gaussian_nu_z(nu_p: f64, sigma2: f64) -> f64 {
    if sigma2.is_infinite() {
        nu_p
    } else if nu_p + sigma2 > 0.0 {
        nu_p * sigma2 / (nu_p + sigma2)
    } else {
        0.0
    }
}

/// Monte-Carlo `nu_z` and `nu_r` of a quantized output channel. `z` has prior
/// energy `tau_z`, `p = z - CN(0, nu_p)` is the plug-in estimate.
fn quantized_variances<R: Rng>(
    rng: &mut R,
    q: &UniformQuantizer,
    tau_z: f64,
    nu_p: f64,
    sigma2: f64,
    draws: usize,
) -> (f64, f64) {
    let var_p = (tau_z - nu_p).max(0.0);
    let (mut acc_z, mut acc_s) = (0.0, 0.0);
    for _ in 0..draws {
        let p = complex_gaussian(rng, var_p);
        let z = p + complex_gaussian(rng, nu_p);
        let y = z + complex_gaussian(rng, sigma2);
        let (_, nu_z) = qf_output_step(p, nu_p, &q.complex_bin(y), sigma2);
        acc_z += nu_z;
        acc_s += (nu_p - nu_z) / (nu_p * nu_p);
    }
    let nu_z = acc_z / draws as f64;
    let nu_s = acc_s / draws as f64;
    (
        nu_z,
        if nu_s > 0.0 {
            1.0 / nu_s
        } else {
            f64::INFINITY
        },
    )
}

/// Mean posterior variance of the Bernoulli-Gaussian denoiser over the users
/// of a block and the per-user squared error, for `r = x0 + CN(0, tau)`
/// denoised as if the noise were `nu_r`. In a conditioned state a user's own
/// error is left out of its `tau`, as the matched filter normalised by the
/// column energy cancels it.
fn denoiser_moments<R: Rng>(
    rng: &mut R,
    b: &SeBlock,
    phi: &[f64],
    self_weight: f64,
    draws_per_user: usize,
) -> (f64, Vec<f64>) {
    let k = b.prior_var.len() as f64;
    if !(b.nu_r < NU_R_CEIL && b.tau_r < NU_R_CEIL) {
        let nu_x = phi
            .iter()
            .zip(&b.prior_var)
            .map(|(p, g)| p * g)
            .sum::<f64>()
            / k;
        let err = match &b.x0 {
            Some(x) => x.iter().map(|x| x.norm_sqr()).collect(),
            None => b
                .prior_var
                .iter()
                .zip(&b.p_active)
                .map(|(g, p)| g * p)
                .collect(),
        };
        return (nu_x, err);
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut var_sum = 0.0;
    let mut errs = Vec::with_capacity(b.prior_var.len());
    for (i, ((&g, &p), &phi)) in b.prior_var.iter().zip(&b.p_active).zip(phi).enumerate() {
        let tau = match b.user_err.get(i) {
            Some(e) => (b.tau_r - self_weight * e).max(0.0),
            None => b.tau_r,
        };
        let (mut v, mut e) = (0.0, 0.0);
        for _ in 0..draws_per_user {
            let x0 = match &b.x0 {
                Some(x) => x[i],
                None if rng.random::<f64>() < p => complex_gaussian(rng, g),
                None => zero,
            };
            let r = x0 + complex_gaussian(rng, tau);
            let d = bg_denoiser(r, b.nu_r, g, phi);
            v += d.nu_x;
            e += (d.x_hat - x0).norm_sqr();
        }
        var_sum += v / draws_per_user as f64;
        errs.push(e / draws_per_user as f64);
    }
    (var_sum / k, errs)
}

/// One recursion step: `nu_p = (|N_u|/L) nu_x`, the output-channel `nu_z`,
/// `nu_r = 1 / E[(nu_p - nu_z)/nu_p^2]` and the denoiser expectation for the
/// new `nu_x`. `quantizers`, indexed by global virtual AP, selects the
/// quantized output channel. A conditioned state also propagates the actual
/// error `tau_r = (|N_u|/L) mse + noise` on the Gaussian channel.
pub fn se_step(
    state: &SeState,
    coupling: &Coupling,
    quantizers: Option<&[UniformQuantizer]>,
    config: &SeConfig,
) -> Result<SeState> {
    if coupling.phi_right.len() != state.blocks.len()
        || coupling.sigma2.len() != state.n_vaps
        || coupling.noise_true.len() != state.n_vaps
    {
        return Err(Error::DimensionMismatch(format!(
            "coupling covers {} blocks and {} APs, state has {} and {}",
            coupling.phi_right.len(),
            coupling.sigma2.len(),
            state.blocks.len(),
            state.n_vaps
        )));
    }
    if config.draws == 0 {
        return Err(Error::param("draws", "must be positive"));
    }
    let l = state.pilot_length as f64;
    let next_iter = state.iteration + 1;
    let blocks: Vec<SeBlock> = state
        .blocks
        .par_iter()
        .enumerate()
        .map(|(idx, b)| {
            let g = idx % state.n_vaps;
            let sigma2 = coupling.sigma2[g];
            let k = b.prior_var.len();
            let mut rng = stream(config.seed, &[domain::SE, next_iter as u64, idx as u64]);
            let nu_p = k as f64 / l * b.nu_x;
            let (nu_z, nu_r) = match quantizers {
                None => (gaussian_nu_z(nu_p, sigma2), nu_p + sigma2),
                Some(q) => {
                    let tau_z = k as f64 / l * prior_energy(b);
                    quantized_variances(&mut rng, &q[b.vap], tau_z, nu_p, sigma2, config.draws)
                }
            };
            let tau_r = if state.conditioned && quantizers.is_none() {
                k as f64 / l * b.mse + coupling.noise_true[g]
            } else {
                nu_r
            };
            let mut next = SeBlock {
                nu_p,
                nu_z,
                nu_r,
                tau_r,
                ..b.clone()
            };
            let per_user = config.draws.div_ceil(k);
            let (nu_x, errs) =
                denoiser_moments(&mut rng, &next, &coupling.phi_right[idx], 1.0 / l, per_user);
            next.nu_x = nu_x;
            if state.conditioned {
                next.mse = errs.iter().sum::<f64>() / k as f64;
                next.user_err = errs;
            } else {
                next.mse = nu_x;
            }
            next
        })
        .collect();
    let mut next = SeState {
        blocks,
        iteration: next_iter,
        mse: state.mse.clone(),
        ..state.clone()
    };
    let m = next.mse();
    next.mse.push(m);
    Ok(next)
}

/// One row of a prediction-versus-measurement trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeRow {
    /// 1-based; iteration 1 is the initialisation.
    pub iteration: usize,
    pub predicted_db: f64,
    pub measured_db: f64,
}

pub const SE_CSV_HEADER: &str = "iteration,predicted_nmse_db,measured_nmse_db";

/// What a conditioned state evolution is conditioned on.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning<'a> {
    /// `[t][v * N + n]`.
    pub x_true: &'a [Vec<Complex64>],
    /// Actual noise plus interference power per virtual AP of the graph.
    pub noise: &'a [f64],
}

/// Runs the engine on one window and the state evolution alongside it, fed
/// with the engine's priors and noise at every iteration. Row `i` compares
/// the SE after `i - 1` steps with the measured NMSE after `i - 1` engine
/// iterations.
pub fn se_track(
    problem: Problem<'_>,
    config: &InferenceConfig,
    y: &[Vec<Complex64>],
    window: WindowSpec,
    truth: &[Vec<Complex64>],
    conditioning: Option<Conditioning<'_>>,
    se_config: &SeConfig,
) -> Result<Vec<SeRow>> {
    let quantizers = match problem.output {
        OutputModel::Gaussian => None,
        OutputModel::Quantized(q) => Some(q.as_slice()),
    };
    let l = problem.pilots.pilot_length();
    let mut se = match conditioning {
        Some(c) => se_init_conditioned(problem.graph, problem.activity, c.x_true, l, window)?,
        None => se_init(problem.graph, problem.activity, l, window.t_w)?,
    };
    let noise_true: Vec<f64> = match conditioning {
        Some(c) => c.noise.to_vec(),
        None => vec![problem.noise_var; problem.graph.vaps.len()],
    };
    let mut predicted = vec![se.nmse_db()];
    let mut failure = None;
    let result = run_window_observed(problem, config, y, window, Some(truth), &mut |st, _| {
        if failure.is_some() {
            return;
        }
        let coupling = Coupling::from_state(st, noise_true.clone());
        match se_step(&se, &coupling, quantizers, se_config) {
            Ok(next) => {
                se = next;
                predicted.push(se.nmse_db());
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(predicted
        .iter()
        .zip(&result.nmse_trajectory)
        .enumerate()
        .map(|(i, (&p, &m))| SeRow {
            iteration: i + 1,
            predicted_db: p,
            measured_db: m,
        })
        .collect())
}

pub fn write_se_csv<W: Write>(mut w: W, rows: &[SeRow]) -> Result<()> {
    writeln!(w, "{SE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6}",
            r.iteration, r.predicted_db, r.measured_db
        )?;
    }
    Ok(())
}
