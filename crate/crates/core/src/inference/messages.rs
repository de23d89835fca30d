//! Activity messages: evidence combination across APs, forward/backward
//! sweeps along the Markov chain, and the final fusion into an LLR.
//!
//! Every probability handed out is clamped to `[eps_p, 1 - eps_p]`. Factors
//! that are exactly 1/2 carry no information and are skipped, so combining a
//! message with uniform ones returns it unchanged bit for bit.

use crate::special::{logit, sigmoid};
use crate::traffic::ChainParams;

#[inline]
pub fn clamp_prob(p: f64, eps_p: f64) -> f64 {
    p.clamp(eps_p, 1.0 - eps_p)
}

/// Normalised product of two Bernoulli messages,
/// `ab / ((1-a)(1-b) + ab)`.
#[inline]
pub fn fuse(a: f64, b: f64) -> f64 {
    if a == 0.5 {
        return b;
    }
    if b == 0.5 {
        return a;
    }
    let on = a * b;
    on / ((1.0 - a) * (1.0 - b) + on)
}

/// Normalised product of any number of Bernoulli messages, in the log-odds
/// domain.
pub fn combine<I: IntoIterator<Item = f64>>(factors: I) -> f64 {
    let mut single = None;
    let mut count = 0usize;
    let mut acc = 0.0;
    for p in factors {
        if p == 0.5 {
            continue;
        }
        count += 1;
        single = Some(p);
        acc += logit(p);
    }
    match count {
        0 => 0.5,
        1 => single.unwrap_or(0.5),
        _ => sigmoid(acc),
    }
}

/// Combined likelihood of activity from the evidence of all cooperating APs.
pub fn combine_ap_evidence(phi_left: &[f64], eps_p: f64) -> f64 {
    clamp_prob(combine(phi_left.iter().copied()), eps_p)
}

/// Prior handed to AP `skip`: the temporal prior fused with the evidence of
/// every other cooperating AP.
pub fn per_ap_prior(pi_right: f64, phi_left: &[f64], skip: usize, eps_p: f64) -> f64 {
    let others = phi_left
        .iter()
        .enumerate()
        .filter(|&(v, _)| v != skip)
        .map(|(_, &p)| p);
    clamp_prob(combine(std::iter::once(pi_right).chain(others)), eps_p)
}

/// Forward chain message for the next frame, `alpha (1 - v) + beta v`.
#[inline]
pub fn forward_chain(v: f64, chain: &ChainParams) -> f64 {
    chain.alpha + (chain.beta - chain.alpha) * v
}

/// Backward chain message for the previous frame given the next frame's
/// outgoing message `q`.
///
/// Written as `1/2 - (beta - alpha)(1 - 2q) / (2D)`, which equals
/// `((1-beta)(1-q) + beta q) / D` with `D = (2-alpha-beta)(1-q) + (alpha+beta) q`
/// but is exactly 1/2 whenever `alpha == beta` or `q == 1/2`.
#[inline]
pub fn backward_chain(q: f64, chain: &ChainParams) -> f64 {
    let (a, b) = (chain.alpha, chain.beta);
    let d = (2.0 - a - b) * (1.0 - q) + (a + b) * q;
    0.5 - (b - a) * (1.0 - 2.0 * q) / (2.0 * d)
}

/// Messages along one user's chain over a window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainMessages {
    pub psi_right: Vec<f64>,
    pub varphi_left: Vec<f64>,
    pub psi_left: Vec<f64>,
    pub varphi_right: Vec<f64>,
    pub pi_right: Vec<f64>,
}

/// Forward sweep: `psi_right[0] = initial`, `varphi_left = fuse(pi_left, psi_right)`.
pub fn forward_sweep(
    pi_left: &[f64],
    chain: &ChainParams,
    initial: f64,
    eps_p: f64,
    psi_right: &mut [f64],
    varphi_left: &mut [f64],
) {
    let mut psi = clamp_prob(initial, eps_p);
    for t in 0..pi_left.len() {
        psi_right[t] = psi;
        varphi_left[t] = clamp_prob(fuse(pi_left[t], psi), eps_p);
        psi = clamp_prob(forward_chain(varphi_left[t], chain), eps_p);
    }
}

/// Backward sweep: `varphi_right[last] = 1/2`, `psi_left = fuse(pi_left, varphi_right)`.
pub fn backward_sweep(
    pi_left: &[f64],
    chain: &ChainParams,
    eps_p: f64,
    psi_left: &mut [f64],
    varphi_right: &mut [f64],
) {
    let mut vr = 0.5;
    for t in (0..pi_left.len()).rev() {
        varphi_right[t] = vr;
        psi_left[t] = clamp_prob(fuse(pi_left[t], vr), eps_p);
        vr = clamp_prob(backward_chain(psi_left[t], chain), eps_p);
    }
}

/// Temporal prior of a frame, `fuse(psi_right, varphi_right)`.
#[inline]
pub fn temporal_prior(psi_right: f64, varphi_right: f64, eps_p: f64) -> f64 {
    clamp_prob(fuse(psi_right, varphi_right), eps_p)
}

/// Runs both sweeps and the temporal prior for one user.
pub fn smooth_chain(
    pi_left: &[f64],
    chain: &ChainParams,
    initial: f64,
    eps_p: f64,
    out: &mut ChainMessages,
) {
    let w = pi_left.len();
    for v in [
        &mut out.psi_right,
        &mut out.varphi_left,
        &mut out.psi_left,
        &mut out.varphi_right,
        &mut out.pi_right,
    ] {
        v.resize(w, 0.5);
    }
    forward_sweep(
        pi_left,
        chain,
        initial,
        eps_p,
        &mut out.psi_right,
        &mut out.varphi_left,
    );
    backward_sweep(
        pi_left,
        chain,
        eps_p,
        &mut out.psi_left,
        &mut out.varphi_right,
    );
    for t in 0..w {
        out.pi_right[t] = temporal_prior(out.psi_right[t], out.varphi_right[t], eps_p);
    }
}

/// Log-likelihood ratio of activity from the three incoming messages.
#[inline]
pub fn activity_llr(pi_left: f64, psi_right: f64, varphi_right: f64) -> f64 {
    logit(pi_left) + logit(psi_right) + logit(varphi_right)
}
