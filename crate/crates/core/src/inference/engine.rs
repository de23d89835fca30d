use num_complex::Complex64;
use rayon::prelude::*;

use super::gamp::{iterate_block, BlockContext, BlockObservation, GampBlock};
use super::messages::{
    activity_llr, combine_ap_evidence, per_ap_prior, smooth_chain, ChainMessages,
};
use super::{DetectionResult, InferenceConfig, Mode, OutputModel, Problem};
use crate::fronthaul::ComplexBin;
use crate::special::sigmoid;
use crate::window::WindowSpec;
use crate::{Error, Result};

/// Signal-to-noise ratio assumed by the initial effective noise when it is
/// learned by EM.
const EM_INIT_SNR: f64 = 10.0;

/// Summary handed to an observer after every iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationInfo {
    /// 1-based.
    pub iteration: usize,
    pub relative_change: f64,
    /// NMSE of the window's estimates in dB, when truth was supplied.
    pub nmse_db: Option<f64>,
}

impl IterationInfo {
    pub const CSV_HEADER: &'static str =
        "iteration,relative_change,nmse_db,mean_sigma_eff,mean_pi_left,mean_pi_right";
}

/// Per-window engine state. All GAMP quantities are stored divided by the
/// mean prior variance of the graph (`scale`), which keeps variance floors
/// meaningful whatever the absolute power level.
pub struct WindowState<'a> {
    problem: Problem<'a>,
    config: &'a InferenceConfig,
    window: WindowSpec,
    scale: f64,
    em: bool,
    n_vaps: usize,
    prior_var: Vec<Vec<f64>>,
    blocks: Vec<GampBlock>,
    y: Vec<Vec<Complex64>>,
    bins: Vec<Vec<ComplexBin>>,
    sigma: Vec<f64>,
    sigma_used: Vec<f64>,
    /// `[n * W + w]`.
    pi_left: Vec<f64>,
    psi_right: Vec<f64>,
    varphi_right: Vec<f64>,
    pi_right: Vec<f64>,
    iteration: usize,
}

impl<'a> WindowState<'a> {
    fn new(
        problem: Problem<'a>,
        config: &'a InferenceConfig,
        y: &[Vec<Complex64>],
        window: WindowSpec,
    ) -> Result<Self> {
        config.validate()?;
        window.validate()?;
        let graph = problem.graph;
        let l = problem.pilots.pilot_length();
        if problem.pilots.n_users() != graph.n_users {
            return Err(Error::DimensionMismatch(format!(
                "pilots cover {} users, graph {}",
                problem.pilots.n_users(),
                graph.n_users
            )));
        }
        if y.len() < window.t0 + window.t_w {
            return Err(Error::DimensionMismatch(format!(
                "window ends at frame {} but only {} frames were received",
                window.t0 + window.t_w,
                y.len()
            )));
        }
        problem.activity.check_users(graph.n_users)?;
        let quantizers = match problem.output {
            OutputModel::Gaussian => None,
            OutputModel::Quantized(q) => {
                if q.len() != graph.n_vaps_total {
                    return Err(Error::DimensionMismatch(format!(
                        "{} quantizers for {} virtual APs",
                        q.len(),
                        graph.n_vaps_total
                    )));
                }
                Some(q)
            }
        };

        let scale = graph.mean_prior_var();
        let amp = scale.sqrt();
        let n_vaps = graph.vaps.len();
        let prior_var: Vec<Vec<f64>> = graph
            .vaps
            .iter()
            .map(|v| v.prior_var.iter().map(|g| g / scale).collect())
            .collect();
        let mut blocks = Vec::with_capacity(window.t_w * n_vaps);
        let mut ys: Vec<Vec<Complex64>> = Vec::new();
        let mut bins: Vec<Vec<ComplexBin>> = Vec::new();
        for t in window.frames() {
            if y[t].len() != graph.n_vaps_total * l {
                return Err(Error::DimensionMismatch(format!(
                    "frame {t} holds {} samples, expected {}",
                    y[t].len(),
                    graph.n_vaps_total * l
                )));
            }
            for (g, vap) in graph.vaps.iter().enumerate() {
                blocks.push(GampBlock::new(
                    &prior_var[g],
                    |k| problem.activity.user(vap.users[k]).p_a,
                    l,
                ));
                let samples = &y[t][vap.index * l..(vap.index + 1) * l];
                match quantizers {
                    None => ys.push(samples.iter().map(|s| s / amp).collect()),
                    Some(q) => bins.push(
                        samples
                            .iter()
                            .map(|s| q[vap.index].complex_bin(*s).scaled(1.0 / amp))
                            .collect(),
                    ),
                }
            }
        }
        let em = config.em.unwrap_or(quantizers.is_none());
        let mut sigma = vec![problem.noise_var / scale; n_vaps];
        if em {
            // A start at (or near) zero noise is a fixed point of the EM
            // update, so begin from a fraction of the received power.
            for (g, s) in sigma.iter_mut().enumerate() {
                let power: f64 = (0..window.t_w)
                    .map(|w| {
                        let idx = w * n_vaps + g;
                        match quantizers {
                            None => ys[idx].iter().map(|v| v.norm_sqr()).sum::<f64>(),
                            Some(_) => bins[idx].iter().map(|b| b.level.norm_sqr()).sum::<f64>(),
                        }
                    })
                    .sum::<f64>()
                    / (l * window.t_w) as f64;
                *s = s.max(power / (1.0 + EM_INIT_SNR));
            }
        }
        let cells = graph.n_users * window.t_w;
        Ok(WindowState {
            problem,
            config,
            window,
            scale,
            em,
            n_vaps,
            prior_var,
            blocks,
            y: ys,
            bins,
            sigma_used: sigma.clone(),
            sigma,
            pi_left: vec![0.5; cells],
            psi_right: vec![0.5; cells],
            varphi_right: vec![0.5; cells],
            pi_right: vec![0.5; cells],
            iteration: 0,
        })
    }

    pub fn window(&self) -> &WindowSpec {
        &self.window
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn n_vaps(&self) -> usize {
        self.n_vaps
    }

    /// Priors used by the denoiser of block `(w, g)` in the latest iteration.
    pub fn phi_right(&self, w: usize, g: usize) -> &[f64] {
        &self.blocks[w * self.n_vaps + g].phi_right
    }

    /// Effective noise variance used in the latest iteration.
    pub fn sigma_used(&self, g: usize) -> f64 {
        self.sigma_used[g] * self.scale
    }

    pub fn sigma_eff(&self, g: usize) -> f64 {
        self.sigma[g] * self.scale
    }

    /// Current channel estimates of block `(w, g)`, in absolute units.
    pub fn x_hat(&self, w: usize, g: usize) -> Vec<Complex64> {
        let amp = self.scale.sqrt();
        self.blocks[w * self.n_vaps + g]
            .x_hat
            .iter()
            .map(|x| x * amp)
            .collect()
    }

    /// Current `nu_r` of block `(w, g)`, in absolute units.
    pub fn nu_r(&self, w: usize, g: usize) -> Vec<f64> {
        self.blocks[w * self.n_vaps + g]
            .nu_r
            .iter()
            .map(|v| v * self.scale)
            .collect()
    }

    pub fn mean_pi_left(&self) -> f64 {
        mean(&self.pi_left)
    }

    pub fn mean_pi_right(&self) -> f64 {
        mean(&self.pi_right)
    }

    pub fn mean_sigma_eff(&self) -> f64 {
        mean(&self.sigma) * self.scale
    }

    /// One CSV row matching [`IterationInfo::CSV_HEADER`].
    pub fn csv_row(&self, info: &IterationInfo) -> String {
        format!(
            "{},{:e},{},{:e},{:e},{:e}",
            info.iteration,
            info.relative_change,
            info.nmse_db
                .map_or(String::from("nan"), |v| format!("{v:.6}")),
            self.mean_sigma_eff(),
            self.mean_pi_left(),
            self.mean_pi_right()
        )
    }

    /// Evidence combination and chain smoothing for every user.
    fn refine_activity(&mut self) {
        let graph = self.problem.graph;
        let w_len = self.window.t_w;
        let eps = self.config.eps_p;
        let mut buf = Vec::new();
        let mut msgs = ChainMessages::default();
        for n in 0..graph.n_users {
            let links = &graph.user_links[n];
            let base = n * w_len;
            for w in 0..w_len {
                buf.clear();
                buf.extend(
                    links
                        .iter()
                        .map(|lk| self.blocks[w * self.n_vaps + lk.vap].phi_left[lk.slot]),
                );
                self.pi_left[base + w] = combine_ap_evidence(&buf, eps);
            }
            let chain = self.problem.activity.user(n);
            match self.config.mode {
                Mode::Dcs => {
                    smooth_chain(
                        &self.pi_left[base..base + w_len],
                        chain,
                        chain.p_a,
                        eps,
                        &mut msgs,
                    );
                    self.psi_right[base..base + w_len].copy_from_slice(&msgs.psi_right);
                    self.varphi_right[base..base + w_len].copy_from_slice(&msgs.varphi_right);
                    self.pi_right[base..base + w_len].copy_from_slice(&msgs.pi_right);
                }
                Mode::Cs => {
                    let p = chain.p_a.clamp(eps, 1.0 - eps);
                    self.psi_right[base..base + w_len].fill(p);
                    self.varphi_right[base..base + w_len].fill(0.5);
                    self.pi_right[base..base + w_len].fill(p);
                }
            }
        }
    }

    /// Hands every AP the temporal prior fused with the other APs' evidence.
    fn update_priors(&mut self) {
        let graph = self.problem.graph;
        let w_len = self.window.t_w;
        let eps = self.config.eps_p;
        let mut buf = Vec::new();
        for n in 0..graph.n_users {
            let links = &graph.user_links[n];
            for w in 0..w_len {
                buf.clear();
                buf.extend(
                    links
                        .iter()
                        .map(|lk| self.blocks[w * self.n_vaps + lk.vap].phi_left[lk.slot]),
                );
                let pi = self.pi_right[n * w_len + w];
                for (k, lk) in links.iter().enumerate() {
                    self.blocks[w * self.n_vaps + lk.vap].phi_right[lk.slot] =
                        per_ap_prior(pi, &buf, k, eps);
                }
            }
        }
    }

    /// GAMP pass over all blocks; returns the relative squared change.
    fn estimate_channels(&mut self) -> f64 {
        let graph = self.problem.graph;
        let pilots = self.problem.pilots;
        let n_vaps = self.n_vaps;
        let first = self.iteration == 0;
        let (config, sigma, prior_var, ys, bins) = (
            self.config,
            &self.sigma,
            &self.prior_var,
            &self.y,
            &self.bins,
        );
        let (diff2, old2) = self
            .blocks
            .par_iter_mut()
            .enumerate()
            .map(|(idx, b)| {
                let g = idx % n_vaps;
                let observation = if ys.is_empty() {
                    BlockObservation::Quantized(&bins[idx])
                } else {
                    BlockObservation::Gaussian(&ys[idx])
                };
                let ctx = BlockContext {
                    pilots,
                    users: &graph.vaps[g].users,
                    prior_var: &prior_var[g],
                    observation,
                    sigma2: sigma[g],
                    damping: config.damping,
                    first,
                    eps_p: config.eps_p,
                    scalar_variances: config.scalar_variances,
                };
                iterate_block(b, &ctx)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        if old2 > 0.0 {
            diff2 / old2
        } else if diff2 == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// EM update of every virtual AP's effective noise over the window:
    /// `mean over (t, l) of |y - z|^2 + nu_z`.
    fn learn_noise(&mut self) {
        self.sigma_used.copy_from_slice(&self.sigma);
        if !self.em {
            return;
        }
        let l = self.problem.pilots.pilot_length();
        let w_len = self.window.t_w;
        let quantized = self.y.is_empty();
        for g in 0..self.n_vaps {
            let mut acc = 0.0;
            for w in 0..w_len {
                let idx = w * self.n_vaps + g;
                let b = &self.blocks[idx];
                for i in 0..l {
                    let y = if quantized {
                        self.bins[idx][i].level
                    } else {
                        self.y[idx][i]
                    };
                    acc += (y - b.z_hat[i]).norm_sqr() + b.nu_z[i];
                }
            }
            self.sigma[g] = acc / (l * w_len) as f64;
        }
    }

    fn nmse_db(&self, truth: &[Vec<Complex64>]) -> Option<f64> {
        let graph = self.problem.graph;
        let amp = self.scale.sqrt();
        let n = graph.n_users;
        let (mut err, mut energy) = (0.0, 0.0);
        for (w, t) in self.window.frames().enumerate() {
            for (g, vap) in graph.vaps.iter().enumerate() {
                let b = &self.blocks[w * self.n_vaps + g];
                let x = &truth[t][vap.index * n..(vap.index + 1) * n];
                for (k, &user) in vap.users.iter().enumerate() {
                    err += (b.x_hat[k] * amp - x[user]).norm_sqr();
                    energy += x[user].norm_sqr();
                }
            }
        }
        (energy > 0.0).then(|| 10.0 * (err / energy).log10())
    }

    fn finish(&mut self, converged: bool, nmse_trajectory: Vec<f64>) -> DetectionResult {
        self.refine_activity();
        let graph = self.problem.graph;
        let n = graph.n_users;
        let w_len = self.window.t_w;
        let amp = self.scale.sqrt();
        let mut result = DetectionResult {
            window: self.window,
            posterior: Vec::new(),
            llr: Vec::new(),
            decisions: Vec::new(),
            x_hat: Vec::new(),
            iterations: self.iteration,
            converged,
            nmse_trajectory,
            sigma_eff: self.sigma.iter().map(|s| s * self.scale).collect(),
        };
        for t in self.window.targets() {
            let w = t - self.window.t0;
            let llr: Vec<f64> = (0..n)
                .map(|i| {
                    let c = i * w_len + w;
                    activity_llr(self.pi_left[c], self.psi_right[c], self.varphi_right[c])
                })
                .collect();
            result
                .posterior
                .push(llr.iter().map(|&l| sigmoid(l)).collect());
            result
                .decisions
                .push(llr.iter().map(|&l| l >= self.config.threshold).collect());
            result.llr.push(llr);
            let mut x = vec![Complex64::new(0.0, 0.0); graph.n_vaps_total * n];
            for (g, vap) in graph.vaps.iter().enumerate() {
                let b = &self.blocks[w * self.n_vaps + g];
                for (k, &user) in vap.users.iter().enumerate() {
                    x[vap.index * n + user] = b.x_hat[k] * amp;
                }
            }
            result.x_hat.push(x);
        }
        result
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Solves one window from its raw signals. `y[t]` holds frame `t` of every
/// virtual AP (`[v * L + l]`); `truth`, when given, is used only for the NMSE
/// trajectory.
pub fn run_window(
    problem: Problem<'_>,
    config: &InferenceConfig,
    y: &[Vec<Complex64>],
    window: WindowSpec,
    truth: Option<&[Vec<Complex64>]>,
) -> Result<DetectionResult> {
    run_window_observed(problem, config, y, window, truth, &mut |_, _| {})
}

/// As [`run_window`], calling `observer` after every iteration.
pub fn run_window_observed(
    problem: Problem<'_>,
    config: &InferenceConfig,
    y: &[Vec<Complex64>],
    window: WindowSpec,
    truth: Option<&[Vec<Complex64>]>,
    observer: &mut dyn FnMut(&WindowState<'_>, &IterationInfo),
) -> Result<DetectionResult> {
    let mut state = WindowState::new(problem, config, y, window)?;
    let mut trajectory = Vec::new();
    if let Some(x) = truth {
        if let Some(v) = state.nmse_db(x) {
            trajectory.push(v);
        }
    }
    let mut converged = false;
    while state.iteration < config.i_max {
        state.refine_activity();
        state.update_priors();
        let change = state.estimate_channels();
        state.learn_noise();
        state.iteration += 1;
        let nmse_db = truth.and_then(|x| state.nmse_db(x));
        if let Some(v) = nmse_db {
            if !trajectory.is_empty() {
                trajectory.push(v);
            }
        }
        let info = IterationInfo {
            iteration: state.iteration,
            relative_change: change,
            nmse_db,
        };
        observer(&state, &info);
        if change < config.eps_conv {
            converged = true;
            break;
        }
    }
    Ok(state.finish(converged, trajectory))
}
