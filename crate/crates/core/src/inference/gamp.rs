//! GAMP channel estimation for one (frame, virtual AP) block: the linear
//! step, the output channel (Gaussian or quantized), and the
//! Bernoulli-Gaussian input denoiser.

use num_complex::Complex64;

use crate::fronthaul::{qf_output_step, ComplexBin};
use crate::phy::PilotMatrix;
use crate::special::{logit, sigmoid};

/// Lower bound applied to `nu_p` before dividing by it.
pub const NU_FLOOR: f64 = 1e-18;
/// Upper bound on `nu_r` when the residual carries no information.
pub const NU_R_CEIL: f64 = 1e18;

/// Plug-in estimate of the noiseless signal and its variance:
/// `nu_p[l] = sum_k |a_lk|^2 nu_x[k]`,
/// `p[l] = sum_k a_lk x[k] - nu_p[l] s_prev[l]`.
pub fn gamp_linear_step(
    pilots: &PilotMatrix,
    users: &[usize],
    x_hat: &[Complex64],
    nu_x: &[f64],
    s_prev: &[Complex64],
    p_hat: &mut [Complex64],
    nu_p: &mut [f64],
) {
    p_hat.fill(Complex64::new(0.0, 0.0));
    nu_p.fill(0.0);
    for (k, &n) in users.iter().enumerate() {
        let (x, v) = (x_hat[k], nu_x[k]);
        for ((p, np), (a, a2)) in p_hat
            .iter_mut()
            .zip(nu_p.iter_mut())
            .zip(pilots.column(n).iter().zip(pilots.column_abs2(n)))
        {
            *p += a * x;
            *np += a2 * v;
        }
    }
    for ((p, np), s) in p_hat.iter_mut().zip(nu_p.iter()).zip(s_prev) {
        *p -= s * np;
    }
}

/// Posterior of `z` and the scaled residual for one pilot symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputStep {
    pub z_hat: Complex64,
    pub nu_z: f64,
    pub s_hat: Complex64,
    pub nu_s: f64,
}

impl OutputStep {
    /// Residual transform `s = (z - p)/nu_p`, `nu_s = (1 - nu_z/nu_p)/nu_p`.
    pub fn from_posterior(p_hat: Complex64, nu_p: f64, z_hat: Complex64, nu_z: f64) -> Self {
        let nu_p = nu_p.max(NU_FLOOR);
        OutputStep {
            z_hat,
            nu_z,
            s_hat: (z_hat - p_hat) / nu_p,
            nu_s: ((1.0 - nu_z / nu_p) / nu_p).max(0.0),
        }
    }
}

/// Gaussian output channel `y = z + CN(0, sigma2)` with prior `z ~ CN(p, nu_p)`.
pub fn gaussian_output_step(p_hat: Complex64, nu_p: f64, y: Complex64, sigma2: f64) -> OutputStep {
    let nu_p = nu_p.max(NU_FLOOR);
    let denom = nu_p + sigma2;
    let z_hat = (y * nu_p + p_hat * sigma2) / denom;
    let nu_z = nu_p * sigma2 / denom;
    OutputStep::from_posterior(p_hat, nu_p, z_hat, nu_z)
}

/// Output of the Bernoulli-Gaussian denoiser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Denoised {
    pub x_hat: Complex64,
    pub nu_x: f64,
    /// Posterior activity probability under the supplied prior.
    pub active: f64,
    /// Activity evidence of this observation alone (prior 1/2).
    pub phi_left: f64,
}

/// Log-likelihood ratio of `r ~ CN(x, nu_r)` under `x ~ CN(0, g)` against
/// `x = 0`: `Xi - ln(1 + g/nu_r)` with `Xi = g |r|^2 / (nu_r (nu_r + g))`.
#[inline]
pub fn bg_evidence(r_hat: Complex64, nu_r: f64, g: f64) -> f64 {
    let xi = g * r_hat.norm_sqr() / (nu_r * (nu_r + g));
    xi - (g / nu_r).ln_1p()
}

/// MMSE estimate of `x ~ (1-phi) delta_0 + phi CN(0, g)` from
/// `r = x + CN(0, nu_r)`.
pub fn bg_denoiser(r_hat: Complex64, nu_r: f64, g: f64, phi_right: f64) -> Denoised {
    let evidence = bg_evidence(r_hat, nu_r, g);
    let active = if phi_right <= 0.0 {
        0.0
    } else if phi_right >= 1.0 {
        1.0
    } else {
        sigmoid(logit(phi_right) + evidence)
    };
    let shrink = g / (g + nu_r);
    let gamma = r_hat * shrink;
    let nu_gamma = nu_r * shrink;
    let nu_x = if active == 0.0 {
        0.0
    } else {
        active * ((1.0 - active) * gamma.norm_sqr() + nu_gamma)
    };
    Denoised {
        x_hat: gamma * active,
        nu_x,
        active,
        phi_left: sigmoid(evidence),
    }
}

/// How a block observes `z`.
#[derive(Debug, Clone, Copy)]
pub enum BlockObservation<'a> {
    Gaussian(&'a [Complex64]),
    Quantized(&'a [ComplexBin]),
}

/// GAMP state of one (frame, virtual AP) block, in normalised units.
#[derive(Debug, Clone, Default)]
pub struct GampBlock {
    pub x_hat: Vec<Complex64>,
    pub nu_x: Vec<f64>,
    pub phi_left: Vec<f64>,
    pub phi_right: Vec<f64>,
    pub r_hat: Vec<Complex64>,
    pub nu_r: Vec<f64>,
    pub p_hat: Vec<Complex64>,
    pub nu_p: Vec<f64>,
    pub z_hat: Vec<Complex64>,
    pub nu_z: Vec<f64>,
    pub s_hat: Vec<Complex64>,
    pub nu_s: Vec<f64>,
}

impl GampBlock {
    /// `x = 0`, `nu_x = p_n g`, `phi_left = 1/2`, `s = 0`.
    pub fn new(prior_var: &[f64], p_active: impl Fn(usize) -> f64, l: usize) -> Self {
        let k = prior_var.len();
        let zero = Complex64::new(0.0, 0.0);
        GampBlock {
            x_hat: vec![zero; k],
            nu_x: prior_var
                .iter()
                .enumerate()
                .map(|(i, g)| p_active(i) * g)
                .collect(),
            phi_left: vec![0.5; k],
            phi_right: vec![0.5; k],
            r_hat: vec![zero; k],
            nu_r: vec![0.0; k],
            p_hat: vec![zero; l],
            nu_p: vec![0.0; l],
            z_hat: vec![zero; l],
            nu_z: vec![0.0; l],
            s_hat: vec![zero; l],
            nu_s: vec![0.0; l],
        }
    }
}

/// Static inputs of one block iteration.
pub struct BlockContext<'a> {
    pub pilots: &'a PilotMatrix,
    pub users: &'a [usize],
    pub prior_var: &'a [f64],
    pub observation: BlockObservation<'a>,
    pub sigma2: f64,
    pub damping: f64,
    pub first: bool,
    pub eps_p: f64,
    /// Replace `nu_p` and `nu_s` by their means over the pilot symbols.
    pub scalar_variances: bool,
}

/// One pass of the linear step, output channel, residual, input step and
/// denoiser. Damping blends the new residual and the new estimate with their
/// previous values (skipped on the first pass).
///
/// Returns the squared change of the estimate and the squared norm of the
/// previous estimate.
pub fn iterate_block(b: &mut GampBlock, ctx: &BlockContext<'_>) -> (f64, f64) {
    let l = ctx.pilots.pilot_length();
    gamp_linear_step(
        ctx.pilots,
        ctx.users,
        &b.x_hat,
        &b.nu_x,
        &b.s_hat,
        &mut b.p_hat,
        &mut b.nu_p,
    );
    if ctx.scalar_variances {
        let mean = b.nu_p.iter().sum::<f64>() / l as f64;
        for i in 0..l {
            b.p_hat[i] += b.s_hat[i] * (b.nu_p[i] - mean);
            b.nu_p[i] = mean;
        }
    }

    let d = if ctx.first { 1.0 } else { ctx.damping };
    for i in 0..l {
        let (p, nu_p) = (b.p_hat[i], b.nu_p[i]);
        let out = match ctx.observation {
            BlockObservation::Gaussian(y) => gaussian_output_step(p, nu_p, y[i], ctx.sigma2),
            BlockObservation::Quantized(bins) => {
                let (z, nz) = qf_output_step(p, nu_p.max(NU_FLOOR), &bins[i], ctx.sigma2);
                OutputStep::from_posterior(p, nu_p, z, nz)
            }
        };
        b.z_hat[i] = out.z_hat;
        b.nu_z[i] = out.nu_z;
        if d < 1.0 {
            b.s_hat[i] = out.s_hat * d + b.s_hat[i] * (1.0 - d);
            b.nu_s[i] = out.nu_s * d + b.nu_s[i] * (1.0 - d);
        } else {
            b.s_hat[i] = out.s_hat;
            b.nu_s[i] = out.nu_s;
        }
    }
    if ctx.scalar_variances {
        let mean = b.nu_s.iter().sum::<f64>() / l as f64;
        b.nu_s.fill(mean);
    }

    let (mut diff2, mut old2) = (0.0, 0.0);
    for (k, &n) in ctx.users.iter().enumerate() {
        let col = ctx.pilots.column(n);
        let col2 = ctx.pilots.column_abs2(n);
        let mut prec = 0.0;
        let mut corr = Complex64::new(0.0, 0.0);
        for i in 0..l {
            prec += col2[i] * b.nu_s[i];
            corr += col[i].conj() * b.s_hat[i];
        }
        let nu_r = if prec > 1.0 / NU_R_CEIL {
            1.0 / prec
        } else {
            NU_R_CEIL
        };
        let r = b.x_hat[k] + corr * nu_r;
        let den = bg_denoiser(r, nu_r, ctx.prior_var[k], b.phi_right[k]);
        b.r_hat[k] = r;
        b.nu_r[k] = nu_r;
        b.phi_left[k] = den.phi_left.clamp(ctx.eps_p, 1.0 - ctx.eps_p);
        let old = b.x_hat[k];
        if d < 1.0 {
            b.x_hat[k] = den.x_hat * d + old * (1.0 - d);
            b.nu_x[k] = den.nu_x * d + b.nu_x[k] * (1.0 - d);
        } else {
            b.x_hat[k] = den.x_hat;
            b.nu_x[k] = den.nu_x;
        }
        diff2 += (b.x_hat[k] - old).norm_sqr();
        old2 += old.norm_sqr();
    }
    (diff2, old2)
}
