//! Deterministic Monte-Carlo trials.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::metrics::{compute_edr, mean_ci, nmse_sums, ratio_db};
use crate::fronthaul::{
    budget_resolve, build_signal_quantizers, df_aggregate, df_local_detect, FronthaulMode,
    UniformQuantizer, LLR_CLIP,
};
use crate::inference::{run_window, CoopGraph, OutputModel, Problem};
use crate::netgen::{build_hex_network, NetworkLayout};
use crate::phy::{gen_orthonormal_pilots, gen_pilots, synthesize_frames};
use crate::rng::{derive_seed, domain};
use crate::traffic::{sample_trace, ActivityTrace};
use crate::window::make_schedule;
use crate::{Error, Result};

/// Everything one trial produced, frame by frame.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub layout: NetworkLayout,
    pub trace: ActivityTrace,
    /// `[t][v * N + n]`.
    pub x_true: Vec<Vec<Complex64>>,
    /// `[t][n]`, each frame taken from the window whose target covers it.
    pub decisions: Vec<Vec<bool>>,
    pub llr: Vec<Vec<f64>>,
    pub x_hat: Vec<Vec<Complex64>>,
    pub iterations: usize,
    pub windows: usize,
    /// DF only: APs whose budget could not carry a single bit per LLR.
    pub silent_aps: usize,
}

/// QF resolution per real component for the configured budget, or `None`
/// when the budget cannot carry one bit per component.
pub fn qf_bits(config: &ExperimentConfig) -> Option<u32> {
    let f = &config.fronthaul;
    match f.budget_bits {
        None => Some(f.bq / 2).filter(|b| *b >= 1),
        Some(b) => {
            let r = budget_resolve(
                b,
                FronthaulMode::Qf,
                config.pilots.length,
                config.system.antennas_per_ap,
                0,
            );
            r.feasible.then(|| r.bits_per_component.min(24) as u32)
        }
    }
}

/// DF bits per LLR of every AP; zero marks an AP that cannot report.
pub fn df_bits(config: &ExperimentConfig, layout: &NetworkLayout) -> Vec<u32> {
    let f = &config.fronthaul;
    layout
        .coop_ap_to_users
        .iter()
        .map(|users| match f.budget_bits {
            None => f.bd,
            Some(b) => {
                let r = budget_resolve(b, FronthaulMode::Df, config.pilots.length, 1, users.len());
                if r.feasible {
                    r.bits_per_sample.min(24) as u32
                } else {
                    0
                }
            }
        })
        .collect()
}

/// Seed of trial `trial` under `master`.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[domain::TRIAL, trial as u64])
}

/// Generates one trial (layout, traffic, pilots, signals) and detects every
/// frame through the sliding-window schedule.
pub fn simulate_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialRecord> {
    let seed = trial_seed(config.run.seed, trial);
    let net = &config.network;
    let layout = build_hex_network(
        net.tiers,
        net.users_per_cell,
        net.half_spacing_km,
        net.d_max_km(),
        seed,
    )?;
    let activity = config.traffic.params()?;
    let n = layout.n_users();
    let w = &config.window;
    let trace = sample_trace(&activity, n, w.frames, seed)?;
    let l = config.pilots.length;
    let pilots = if config.pilots.orthonormal {
        gen_orthonormal_pilots(l, n, seed)?
    } else {
        gen_pilots(l, n, seed)?
    };
    let sys = config.system;
    let signals = synthesize_frames(&layout, &trace, &pilots, &sys, seed)?;
    let schedule = make_schedule(w.frames, w.t_w, w.delta_w, w.target_offset)?;
    let inf = &config.inference;

    let mut decisions = vec![Vec::new(); w.frames];
    let mut llr = vec![Vec::new(); w.frames];
    let mut x_hat = vec![Vec::new(); w.frames];
    let mut iterations = 0;
    let mut silent_aps = 0;

    match config.fronthaul.mode {
        FronthaulMode::Ideal | FronthaulMode::Qf => {
            let output = if config.fronthaul.mode == FronthaulMode::Qf {
                let bits = qf_bits(config)
                    .ok_or_else(|| Error::param("fronthaul", "QF budget below one bit"))?;
                OutputModel::Quantized(build_signal_quantizers(
                    &layout,
                    &sys,
                    &activity,
                    l,
                    bits,
                    config.fronthaul.clip,
                )?)
            } else {
                OutputModel::Gaussian
            };
            let graph = CoopGraph::new(&layout, sys.antennas_per_ap, sys.tx_power());
            let problem = Problem {
                pilots: &pilots,
                graph: &graph,
                activity: &activity,
                noise_var: sys.noise_var(),
                output: &output,
            };
            for spec in &schedule.windows {
                let r = run_window(problem, inf, &signals.y, *spec, None)?;
                iterations += r.iterations;
                for (k, t) in spec.targets().enumerate() {
                    decisions[t] = r.decisions[k].clone();
                    llr[t] = r.llr[k].clone();
                    x_hat[t] = r.x_hat[k].clone();
                }
            }
        }
        FronthaulMode::Df => {
            let bits = df_bits(config, &layout);
            silent_aps = bits.iter().filter(|b| **b == 0).count();
            let quantizers: Vec<Option<UniformQuantizer>> = bits
                .iter()
                .map(|&b| {
                    (b > 0)
                        .then(|| UniformQuantizer::with_range(b, LLR_CLIP))
                        .transpose()
                })
                .collect::<Result<_>>()?;
            for spec in &schedule.windows {
                let locals = (0..layout.n_aps())
                    .into_par_iter()
                    .filter(|&u| quantizers[u].is_some())
                    .map(|u| {
                        df_local_detect(
                            &signals.y, &layout, &pilots, &sys, &activity, inf, *spec, u,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut sent = locals.clone();
                for local in &mut sent {
                    let q = quantizers[local.ap]
                        .as_ref()
                        .expect("silent APs are filtered");
                    for frame in &mut local.llr {
                        frame.iter_mut().for_each(|v| *v = q.quantize(*v));
                    }
                }
                let (sums, dec) = df_aggregate(&sent, n, None, inf.threshold);
                iterations += locals
                    .iter()
                    .map(|l| l.result.iterations)
                    .max()
                    .unwrap_or(0);
                for (k, t) in spec.targets().enumerate() {
                    let mut x =
                        vec![Complex64::new(0.0, 0.0); layout.n_aps() * sys.antennas_per_ap * n];
                    for local in &locals {
                        for (a, b) in x.iter_mut().zip(&local.result.x_hat[k]) {
                            *a += b;
                        }
                    }
                    decisions[t] = dec[k].clone();
                    llr[t] = sums[k].clone();
                    x_hat[t] = x;
                }
            }
        }
    }

    Ok(TrialRecord {
        trial,
        seed,
        x_true: signals.x_true,
        layout,
        trace,
        decisions,
        llr,
        x_hat,
        iterations,
        windows: schedule.windows.len(),
        silent_aps,
    })
}

/// Per-trial metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub frame_edr: Vec<f64>,
    /// Linear NMSE per frame; `None` when the frame has no channel energy.
    pub frame_nmse: Vec<Option<f64>>,
    pub edr: f64,
    /// Linear NMSE over all frames.
    pub nmse: Option<f64>,
    pub iterations: usize,
    pub windows: usize,
    pub silent_aps: usize,
}

impl TrialMetrics {
    pub fn from_record(rec: &TrialRecord, antennas: usize) -> Result<Self> {
        let frames = rec.decisions.len();
        let mut frame_edr = Vec::with_capacity(frames);
        let mut frame_nmse = Vec::with_capacity(frames);
        let (mut err_total, mut energy_total) = (0.0, 0.0);
        for t in 0..frames {
            let truth: Vec<bool> = (0..rec.trace.n_users())
                .map(|n| rec.trace.get(n, t))
                .collect();
            frame_edr.push(compute_edr(&rec.decisions[t], &truth)?);
            let (err, energy) = nmse_sums(&rec.x_hat[t], &rec.x_true[t], &rec.layout, antennas)?;
            err_total += err;
            energy_total += energy;
            frame_nmse.push((energy > 0.0).then(|| err / energy));
        }
        Ok(TrialMetrics {
            trial: rec.trial,
            edr: frame_edr.iter().sum::<f64>() / frames as f64,
            frame_edr,
            frame_nmse,
            nmse: (energy_total > 0.0).then(|| err_total / energy_total),
            iterations: rec.iterations,
            windows: rec.windows,
            silent_aps: rec.silent_aps,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

/// Aggregate over the successful trials. Averages run over trial index order,
/// so the report does not depend on scheduling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub trials_requested: usize,
    pub trials_ok: usize,
    /// False when the fronthaul budget cannot carry the configured mode. No
    /// trials run for an infeasible QF budget; for DF it means some AP could
    /// not report in some trial.
    pub feasible: bool,
    pub frame_edr: Vec<f64>,
    pub frame_nmse_db: Vec<f64>,
    pub edr: f64,
    pub edr_ci: f64,
    /// `10 log10` of the mean per-trial linear NMSE.
    pub nmse_db: f64,
    /// Half-width of the interval on per-trial NMSE in dB.
    pub nmse_ci_db: f64,
    /// Trials without channel energy on any cooperation pair; excluded from NMSE.
    pub nmse_undefined: usize,
    pub mean_iterations: f64,
    pub failures: Vec<TrialFailure>,
    pub per_trial: Vec<TrialMetrics>,
    #[serde(skip)]
    pub runtime_s: f64,
}

impl MetricsReport {
    pub fn aggregate(
        trials_requested: usize,
        frames: usize,
        outcomes: Vec<std::result::Result<TrialMetrics, TrialFailure>>,
    ) -> Self {
        let mut per_trial = Vec::new();
        let mut failures = Vec::new();
        for o in outcomes {
            match o {
                Ok(m) => per_trial.push(m),
                Err(f) => failures.push(f),
            }
        }
        let k = per_trial.len();
        let frame_edr = (0..frames)
            .map(|t| per_trial.iter().map(|m| m.frame_edr[t]).sum::<f64>() / k as f64)
            .collect();
        let frame_nmse_db = (0..frames)
            .map(|t| {
                let v: Vec<f64> = per_trial.iter().filter_map(|m| m.frame_nmse[t]).collect();
                if v.is_empty() {
                    f64::NAN
                } else {
                    ratio_db(v.iter().sum::<f64>() / v.len() as f64)
                }
            })
            .collect();
        let edrs: Vec<f64> = per_trial.iter().map(|m| m.edr).collect();
        let (edr, edr_ci) = mean_ci(&edrs);
        let nmse: Vec<f64> = per_trial.iter().filter_map(|m| m.nmse).collect();
        let nmse_db = if nmse.is_empty() {
            f64::NAN
        } else {
            ratio_db(nmse.iter().sum::<f64>() / nmse.len() as f64)
        };
        let nmse_ci_db = mean_ci(&nmse.iter().map(|v| ratio_db(*v)).collect::<Vec<_>>()).1;
        let windows: usize = per_trial.iter().map(|m| m.windows).sum();
        let iterations: usize = per_trial.iter().map(|m| m.iterations).sum();
        MetricsReport {
            trials_requested,
            trials_ok: k,
            feasible: per_trial.iter().all(|m| m.silent_aps == 0),
            frame_edr,
            frame_nmse_db,
            edr,
            edr_ci,
            nmse_db,
            nmse_ci_db,
            nmse_undefined: k - nmse.len(),
            mean_iterations: iterations as f64 / windows.max(1) as f64,
            failures,
            per_trial,
            runtime_s: 0.0,
        }
    }

    fn infeasible(trials_requested: usize, frames: usize) -> Self {
        let mut r = Self::aggregate(trials_requested, frames, Vec::new());
        r.feasible = false;
        r
    }
}

/// Runs `config.run.trials` independent trials, trial `i` seeded from
/// `(config.run.seed, i)`.
pub fn run_trials(config: &ExperimentConfig) -> Result<MetricsReport> {
    config.validate()?;
    let start = Instant::now();
    let trials = config.run.trials;
    let frames = config.window.frames;
    if config.fronthaul.mode == FronthaulMode::Qf && qf_bits(config).is_none() {
        return Ok(MetricsReport::infeasible(trials, frames));
    }
    let antennas = config.system.antennas_per_ap;
    let work = || {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                simulate_trial(config, i)
                    .and_then(|rec| TrialMetrics::from_record(&rec, antennas))
                    .map_err(|e| TrialFailure {
                        trial: i,
                        message: e.to_string(),
                    })
            })
            .collect::<Vec<_>>()
    };
    let outcomes = if config.run.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.run.threads)
            .build()
            .map_err(|e| Error::param("run.threads", e.to_string()))?
            .install(work)
    } else {
        work()
    };
    let mut report = MetricsReport::aggregate(trials, frames, outcomes);
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}
