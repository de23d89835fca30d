//! Joint activity detection and channel estimation over a sliding window.
//!
//! Each iteration refines activity beliefs (evidence combined across the
//! cooperating APs, then smoothed along every user's Markov chain), runs one
//! GAMP pass per (frame, virtual AP) block with the refined priors, and
//! re-learns the effective noise variance of every virtual AP. The final
//! decision fuses the per-frame evidence with the forward and backward chain
//! messages into an LLR.

mod engine;
pub mod gamp;
mod graph;
pub mod messages;

pub use engine::{run_window, run_window_observed, IterationInfo, WindowState};
pub use gamp::{bg_denoiser, gamp_linear_step, gaussian_output_step, Denoised, OutputStep};
pub use graph::{CoopGraph, Link, VirtualAp};
pub use messages::{
    activity_llr, backward_sweep, combine_ap_evidence, forward_sweep, per_ap_prior, smooth_chain,
    temporal_prior, ChainMessages,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fronthaul::UniformQuantizer;
use crate::phy::PilotMatrix;
use crate::traffic::MarkovActivityParams;
use crate::window::WindowSpec;
use crate::{Error, Result};

/// Whether the temporal correlation of activity is exploited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Forward/backward messages along the Markov chain.
    Dcs,
    /// Every frame uses the stationary prior `p_n`; no chain messages.
    Cs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Stop once the relative squared change of the estimates drops below this.
    pub eps_conv: f64,
    pub i_max: usize,
    /// Probability clamp for all messages.
    pub eps_p: f64,
    /// Weight of the new residual and estimate, in (0, 1]; 1 disables damping.
    pub damping: f64,
    /// LLR decision threshold.
    pub threshold: f64,
    pub mode: Mode,
    /// EM noise learning; `None` enables it for unquantized observations only.
    pub em: Option<bool>,
    /// Use one `nu_p` and one `nu_s` per block instead of per pilot symbol,
    /// the variant the state evolution describes.
    pub scalar_variances: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            eps_conv: 1e-5,
            i_max: 50,
            eps_p: 1e-12,
            damping: 0.7,
            threshold: 0.0,
            mode: Mode::Dcs,
            em: None,
            scalar_variances: false,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::param(
                "damping",
                format!("{} not in (0, 1]", self.damping),
            ));
        }
        if self.i_max == 0 {
            return Err(Error::param("i_max", "must be at least 1"));
        }
        if !(self.eps_conv >= 0.0) {
            return Err(Error::param("eps_conv", "must be non-negative"));
        }
        if !(self.eps_p > 0.0 && self.eps_p < 0.5) {
            return Err(Error::param("eps_p", "must lie in (0, 1/2)"));
        }
        if self.threshold.is_nan() {
            return Err(Error::param("threshold", "must not be NaN"));
        }
        Ok(())
    }
}

/// How the receiver sees the pilot signals.
#[derive(Debug, Clone)]
pub enum OutputModel {
    Gaussian,
    /// Quantized codewords; one quantizer per global virtual AP.
    Quantized(Vec<UniformQuantizer>),
}

/// Everything the engine needs besides the received signals.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub pilots: &'a PilotMatrix,
    pub graph: &'a CoopGraph,
    pub activity: &'a MarkovActivityParams,
    /// Thermal noise variance `sigma_w^2`; initial effective noise.
    pub noise_var: f64,
    pub output: &'a OutputModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub window: WindowSpec,
    /// `[k][n]` for target frame `window.t1 + k`.
    pub posterior: Vec<Vec<f64>>,
    pub llr: Vec<Vec<f64>>,
    pub decisions: Vec<Vec<bool>>,
    /// `[k][v * N + n]`; zero outside the cooperation pairs.
    pub x_hat: Vec<Vec<Complex64>>,
    pub iterations: usize,
    pub converged: bool,
    /// NMSE in dB over the whole window: entry 0 is the all-zero
    /// initialisation, entry `i` follows iteration `i`. Empty when no truth
    /// was supplied or the true channels carry no energy.
    pub nmse_trajectory: Vec<f64>,
    /// Final effective noise variance of every virtual AP in the graph.
    pub sigma_eff: Vec<f64>,
}
