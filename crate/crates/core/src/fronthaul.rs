//! Finite-capacity fronthaul: uniform scalar quantization, the quantized
//! output channel used by quantize-and-forward (QF), local detection with LLR
//! aggregation for detect-and-forward (DF), and budget accounting.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::inference::{
    run_window, CoopGraph, DetectionResult, InferenceConfig, OutputModel, Problem,
};
use crate::netgen::NetworkLayout;
use crate::phy::{FrameSignals, PilotMatrix, SystemParams};
use crate::special::{normal_cdf, normal_pdf, truncated_normal_moments};
use crate::traffic::MarkovActivityParams;
use crate::window::WindowSpec;
use crate::{Error, Result};

/// Default clip range of the signal quantizer, in input standard deviations.
pub const DEFAULT_CLIP: f64 = 3.0;
/// Saturation of the LLR quantizer.
pub const LLR_CLIP: f64 = 20.0;

/// Mid-rise uniform quantizer with `2^bits` bins over `[-range, range]`.
///
/// Bins are half-open, `(rho_c, rho_{c+1}]`; the outer bins extend to
/// infinity and map to the midpoints of their clipped parts.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformQuantizer {
    bits: u32,
    range: f64,
    width: f64,
    /// `2^bits + 1` thresholds, `-inf` first and `+inf` last.
    thresholds: Vec<f64>,
    levels: Vec<f64>,
}

/// The rectangle of inputs that produced a complex codeword.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexBin {
    pub level: Complex64,
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl ComplexBin {
    pub fn scaled(&self, f: f64) -> Self {
        ComplexBin {
            level: self.level * f,
            re: (self.re.0 * f, self.re.1 * f),
            im: (self.im.0 * f, self.im.1 * f),
        }
    }
}

impl UniformQuantizer {
    /// Quantizer clipping at `clip` standard deviations of the input.
    pub fn new(bits: u32, input_std: f64, clip: f64) -> Result<Self> {
        if !(input_std > 0.0) || !input_std.is_finite() {
            return Err(Error::param(
                "input_std",
                format!("{input_std} must be positive"),
            ));
        }
        if !(clip > 0.0) {
            return Err(Error::param("clip", format!("{clip} must be positive")));
        }
        Self::with_range(bits, clip * input_std)
    }

    pub fn with_range(bits: u32, range: f64) -> Result<Self> {
        if !(1..=24).contains(&bits) {
            return Err(Error::param("bits", format!("{bits} outside 1..=24")));
        }
        if !(range > 0.0) || !range.is_finite() {
            return Err(Error::param("range", format!("{range} must be positive")));
        }
        let b = 1usize << bits;
        let width = 2.0 * range / b as f64;
        let half = (b / 2) as f64;
        let mut thresholds = Vec::with_capacity(b + 1);
        thresholds.push(f64::NEG_INFINITY);
        for j in 1..b {
            thresholds.push((j as f64 - half) * width);
        }
        thresholds.push(f64::INFINITY);
        let levels = (0..b).map(|k| (k as f64 - half + 0.5) * width).collect();
        Ok(UniformQuantizer {
            bits,
            range,
            width,
            thresholds,
            levels,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Bin index `c` with `rho_c < x <= rho_{c+1}`.
    pub fn index(&self, x: f64) -> usize {
        let b = self.levels.len();
        let guess = ((x + self.range) / self.width).ceil() - 1.0;
        let mut k = if guess.is_nan() {
            0
        } else {
            guess.clamp(0.0, (b - 1) as f64) as usize
        };
        while k > 0 && x <= self.thresholds[k] {
            k -= 1;
        }
        while k + 1 < b && x > self.thresholds[k + 1] {
            k += 1;
        }
        k
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.levels[self.index(x)]
    }

    /// Bin `(lo, hi]` of index `k`.
    pub fn bin(&self, k: usize) -> (f64, f64) {
        (self.thresholds[k], self.thresholds[k + 1])
    }

    /// Real and imaginary parts quantized independently.
    pub fn quantize_complex(&self, y: Complex64) -> Complex64 {
        Complex64::new(self.quantize(y.re), self.quantize(y.im))
    }

    /// Bin rectangle of a codeword (or of any input, which is quantized first).
    pub fn complex_bin(&self, y: Complex64) -> ComplexBin {
        let (kr, ki) = (self.index(y.re), self.index(y.im));
        ComplexBin {
            level: Complex64::new(self.levels[kr], self.levels[ki]),
            re: self.bin(kr),
            im: self.bin(ki),
        }
    }

    /// Codebook as CSV: `index,lower,upper,level`.
    pub fn write_codebook_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,lower,upper,level")?;
        for (k, level) in self.levels.iter().enumerate() {
            let (lo, hi) = self.bin(k);
            writeln!(w, "{k},{lo},{hi},{level}")?;
        }
        Ok(())
    }
}

/// Posterior mean and variance of one real component `z ~ N(p, vp)` given that
/// `z + N(0, sw2)` fell in `(lo, hi]`.
///
/// The observation `y` is `N(p, vp + sw2)` a priori, so its standardized value
/// is a truncated normal; `z` follows from the linear-Gaussian posterior of
/// `z` given `y`. Tail bins are handled through Mills ratios. If the bin is
/// numerically degenerate the midpoint is used with the uniform variance.
pub fn qf_component(p: f64, vp: f64, lo: f64, hi: f64, sw2: f64) -> (f64, f64) {
    let s2 = vp + sw2;
    if !(s2 > 0.0) {
        return (p, 0.0);
    }
    let s = s2.sqrt();
    let gain = vp / s2;
    let (m, v) = match truncated_normal_moments((lo - p) / s, (hi - p) / s) {
        Some(t) => (t.mean, t.var),
        None => {
            if lo.is_finite() && hi.is_finite() {
                let w = (hi - lo) / s;
                ((0.5 * (lo + hi) - p) / s, w * w / 12.0)
            } else {
                let edge = if lo.is_finite() { lo } else { hi };
                ((edge - p) / s, 0.0)
            }
        }
    };
    let mean = p + gain * s * m;
    let var = vp * sw2 / s2 + gain * gain * s2 * v;
    (mean, var.clamp(0.0, vp))
}

/// Posterior mean and variance of `z ~ CN(p, nu_p)` given the codeword bin of
/// `z + CN(0, sigma2)`.
pub fn qf_output_step(
    p_hat: Complex64,
    nu_p: f64,
    bin: &ComplexBin,
    sigma2: f64,
) -> (Complex64, f64) {
    let (vp, sw2) = (0.5 * nu_p, 0.5 * sigma2);
    let (mr, vr) = qf_component(p_hat.re, vp, bin.re.0, bin.re.1, sw2);
    let (mi, vi) = qf_component(p_hat.im, vp, bin.im.0, bin.im.1, sw2);
    (Complex64::new(mr, mi), vr + vi)
}

/// The closed-form `Z`/`V` expressions written with the sign of the codeword,
/// for one real component. `nu_p` and `sigma2` are the full complex
/// variances. Only accurate while the bin mass does not underflow.
pub fn qf_component_closed_form(
    p: f64,
    nu_p: f64,
    level: f64,
    lo: f64,
    hi: f64,
    sigma2: f64,
) -> (f64, f64) {
    let sign = if level >= 0.0 { 1.0 } else { -1.0 };
    let s = ((sigma2 + nu_p) / 2.0).sqrt();
    let (near, far) = (lo.abs().min(hi.abs()), lo.abs().max(hi.abs()));
    let k1 = (sign * p - near) / s;
    let k2 = (sign * p - far) / s;
    let mass = normal_cdf(k1) - normal_cdf(k2);
    let eta = |k: f64| normal_pdf(k);
    let keta = |k: f64| {
        if k.is_infinite() {
            0.0
        } else {
            k * normal_pdf(k)
        }
    };
    let ratio = (eta(k1) - eta(k2)) / mass;
    let z = p + sign * nu_p / (2.0 * (sigma2 + nu_p)).sqrt() * ratio;
    let v = nu_p / 2.0
        - nu_p * nu_p / (2.0 * (sigma2 + nu_p)) * ((keta(k1) - keta(k2)) / mass + ratio * ratio);
    (z, v)
}

/// Which fronthaul scheme carries the pilot-phase information to the CU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FronthaulMode {
    /// Unlimited fronthaul: the CU sees the raw signals.
    Ideal,
    Qf,
    Df,
}

/// Per-sample resolution derived from a per-AP, per-frame bit budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetResolution {
    /// `b_Q` (QF, per complex sample) or `b_D` (DF, per LLR).
    pub bits_per_sample: u64,
    /// Bits per real component for QF; equal to `bits_per_sample` for DF.
    pub bits_per_component: u64,
    pub feasible: bool,
}

/// `b_Q = floor(B / (L M))` with `b^r = floor(b_Q / 2)`, or
/// `b_D = floor(B / |N_u|)`. Resolutions below one bit are infeasible.
pub fn budget_resolve(
    budget_bits: u64,
    mode: FronthaulMode,
    pilot_length: usize,
    antennas: usize,
    n_served: usize,
) -> BudgetResolution {
    match mode {
        FronthaulMode::Ideal => BudgetResolution {
            bits_per_sample: u64::MAX,
            bits_per_component: u64::MAX,
            feasible: true,
        },
        FronthaulMode::Qf => {
            let denom = (pilot_length * antennas) as u64;
            let bq = budget_bits.checked_div(denom).unwrap_or(0);
            BudgetResolution {
                bits_per_sample: bq,
                bits_per_component: bq / 2,
                feasible: bq / 2 >= 1,
            }
        }
        FronthaulMode::Df => {
            let bd = if n_served == 0 {
                0
            } else {
                budget_bits / n_served as u64
            };
            BudgetResolution {
                bits_per_sample: bd,
                bits_per_component: bd,
                feasible: bd >= 1,
            }
        }
    }
}

/// Standard deviation per real component of the received signal at AP `u`:
/// `sqrt((sum_n p_n rho0 g_{n,u} / L + sigma_w^2) / 2)`.
pub fn received_std(
    layout: &NetworkLayout,
    sys: &SystemParams,
    activity: &MarkovActivityParams,
    pilot_length: usize,
    u: usize,
) -> f64 {
    let rho0 = sys.tx_power();
    let signal: f64 = (0..layout.n_users())
        .map(|n| activity.user(n).p_a * rho0 * layout.g(n, u))
        .sum();
    ((signal / pilot_length as f64 + sys.noise_var()) / 2.0).sqrt()
}

/// One quantizer per virtual AP, each scaled to its AP's received power.
pub fn build_signal_quantizers(
    layout: &NetworkLayout,
    sys: &SystemParams,
    activity: &MarkovActivityParams,
    pilot_length: usize,
    bits_per_component: u32,
    clip: f64,
) -> Result<Vec<UniformQuantizer>> {
    let mut out = Vec::with_capacity(layout.n_aps() * sys.antennas_per_ap);
    for u in 0..layout.n_aps() {
        let q = UniformQuantizer::new(
            bits_per_component,
            received_std(layout, sys, activity, pilot_length, u),
            clip,
        )?;
        for _ in 0..sys.antennas_per_ap {
            out.push(q.clone());
        }
    }
    Ok(out)
}

/// Replaces every received sample by its codeword.
pub fn quantize_signals(
    signals: &FrameSignals,
    quantizers: &[UniformQuantizer],
) -> Vec<Vec<Complex64>> {
    let l = signals.pilot_length;
    signals
        .y
        .iter()
        .map(|frame| {
            frame
                .iter()
                .enumerate()
                .map(|(i, &y)| quantizers[i / l].quantize_complex(y))
                .collect()
        })
        .collect()
}

/// Local LLRs of one AP for the target frames of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDetection {
    pub ap: usize,
    /// `N_u`.
    pub users: Vec<usize>,
    /// `[k][j]`: LLR of `users[j]` in target frame `window.t1 + k`.
    pub llr: Vec<Vec<f64>>,
    pub result: DetectionResult,
}

/// Runs the engine on AP `u`'s own antennas only and reports the LLRs of the
/// users it serves.
#[allow(clippy::too_many_arguments)]
pub fn df_local_detect(
    y: &[Vec<Complex64>],
    layout: &NetworkLayout,
    pilots: &PilotMatrix,
    sys: &SystemParams,
    activity: &MarkovActivityParams,
    config: &InferenceConfig,
    window: WindowSpec,
    u: usize,
) -> Result<LocalDetection> {
    if u >= layout.n_aps() {
        return Err(Error::param("ap", format!("{u} out of range")));
    }
    let graph = CoopGraph::for_aps(layout, sys.antennas_per_ap, sys.tx_power(), &[u]);
    let output = OutputModel::Gaussian;
    let problem = Problem {
        pilots,
        graph: &graph,
        activity,
        noise_var: sys.noise_var(),
        output: &output,
    };
    let result = run_window(problem, config, y, window, None)?;
    let users = layout.coop_ap_to_users[u].clone();
    let llr = result
        .llr
        .iter()
        .map(|frame| users.iter().map(|&n| frame[n]).collect())
        .collect();
    Ok(LocalDetection {
        ap: u,
        users,
        llr,
        result,
    })
}

/// Sums the (optionally quantized) local LLRs of every user over its serving
/// APs and thresholds the sum. Returns `(sum, decision)` per target frame and
/// user; users no AP reported on get a zero sum and are declared inactive.
pub fn df_aggregate(
    locals: &[LocalDetection],
    n_users: usize,
    quantizer: Option<&UniformQuantizer>,
    threshold: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let frames = locals.first().map_or(0, |l| l.llr.len());
    let mut sums = vec![vec![0.0; n_users]; frames];
    let mut reported = vec![false; n_users];
    for local in locals {
        for (k, frame) in local.llr.iter().enumerate() {
            for (&n, &l) in local.users.iter().zip(frame) {
                sums[k][n] += quantizer.map_or(l, |q| q.quantize(l));
                reported[n] = true;
            }
        }
    }
    let decisions = sums
        .iter()
        .map(|frame| {
            frame
                .iter()
                .zip(&reported)
                .map(|(&s, &r)| r && s >= threshold)
                .collect()
        })
        .collect();
    (sums, decisions)
}
