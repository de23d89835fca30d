//! Exact references for the message-passing approximations: numerical
//! integration of the scalar denoisers, brute-force activity posteriors on
//! tiny instances, brute-force chain smoothing, and least-squares recovery
//! under orthonormal pilots.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::fronthaul::ComplexBin;
use crate::inference::CoopGraph;
use crate::phy::{FrameSignals, PilotMatrix};
use crate::traffic::{ChainParams, MarkovActivityParams};
use crate::window::WindowSpec;
use crate::{Error, Result};

/// Largest number of binary variables enumerated by [`exact_activity_posterior`].
pub const ENUMERATION_CAP_BITS: u32 = 24;
/// Largest window handled by [`exact_chain_smoother`].
pub const CHAIN_CAP: usize = 12;

/// Integral of `f` over `[a, b]` by double-exponential quadrature.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    quadrature::double_exponential::integrate(f, a, b, abs_tol).integral
}

/// Zeroth to second moments of `exp(-q(y))` about `y0` over `[a, b]`, with
/// `q(y0) = 0` the minimum over the interval.
fn moments(q: impl Fn(f64) -> f64 + Copy, y0: f64, a: f64, b: f64) -> [f64; 3] {
    let tol = 1e-15;
    let mut m = [0.0; 3];
    for (lo, hi) in [(a, y0.max(a)), (y0.min(b), b)] {
        for (k, mk) in m.iter_mut().enumerate() {
            *mk += integrate(|y| (y - y0).powi(k as i32) * (-q(y)).exp(), lo, hi, tol);
        }
    }
    m
}

/// Posterior mean and variance of one real component `z ~ N(p, vp)` given
/// that `y = z + N(0, sw2)` fell in `(lo, hi]`, by integrating the density of
/// `y` over the bin.
pub fn qf_component_numeric(p: f64, vp: f64, lo: f64, hi: f64, sw2: f64) -> (f64, f64) {
    let s2 = vp + sw2;
    if !(s2 > 0.0) {
        return (p, 0.0);
    }
    let y0 = p.clamp(lo, hi);
    let d = (y0 - p).abs();
    // Beyond this distance from y0 the density is below exp(-72) of its peak.
    let reach = -d + (d * d + 144.0 * s2).sqrt();
    let (a, b) = (lo.max(y0 - reach), hi.min(y0 + reach));
    let base = (y0 - p) * (y0 - p);
    let q = move |y: f64| ((y - p) * (y - p) - base) / (2.0 * s2);
    let m = moments(q, y0, a, b);
    if !(m[0] > 0.0) {
        return (p, 0.0);
    }
    let mean_off = m[1] / m[0];
    let var_y = (m[2] / m[0] - mean_off * mean_off).max(0.0);
    let gain = vp / s2;
    (
        p + gain * (y0 + mean_off - p),
        vp * sw2 / s2 + gain * gain * var_y,
    )
}

/// Posterior mean and variance of `z ~ CN(p, nu_p)` given the codeword bin of
/// `z + CN(0, sigma2)`.
pub fn qf_posterior_numeric(
    p: Complex64,
    nu_p: f64,
    bin: &ComplexBin,
    sigma2: f64,
) -> (Complex64, f64) {
    let (mr, vr) = qf_component_numeric(p.re, nu_p / 2.0, bin.re.0, bin.re.1, sigma2 / 2.0);
    let (mi, vi) = qf_component_numeric(p.im, nu_p / 2.0, bin.im.0, bin.im.1, sigma2 / 2.0);
    (Complex64::new(mr, mi), vr + vi)
}

/// Numerically integrated Bernoulli-Gaussian posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgPosterior {
    pub x_hat: Complex64,
    pub nu_x: f64,
    pub active: f64,
}

/// Posterior of `x ~ (1-phi) delta_0 + phi CN(0, g)` given `r = x + CN(0, nu_r)`.
///
/// With `r` rotated onto the positive real axis both densities factor over
/// the real and imaginary parts of `x`, so the slab posterior reduces to two
/// one-dimensional integrals.
pub fn bg_posterior_numeric(r: Complex64, nu_r: f64, g: f64, phi: f64) -> BgPosterior {
    let rho = r.norm();
    let (vg, vn) = (g / 2.0, nu_r / 2.0);
    // log N(a; 0, vg) + log N(rho - a; 0, vn) without the constants.
    let log_re = |a: f64| -a * a / (2.0 * vg) - (rho - a) * (rho - a) / (2.0 * vn);
    let log_im = |b: f64| -b * b / (2.0 * vg) - b * b / (2.0 * vn);
    let sd = (vg * vn / (vg + vn)).sqrt();
    let a0 = rho * vg / (vg + vn);
    let (la, lb) = (log_re(a0), log_im(0.0));
    let ma = moments(move |a| la - log_re(a), a0, a0 - 40.0 * sd, a0 + 40.0 * sd);
    let mb = moments(move |b| lb - log_im(b), 0.0, -40.0 * sd, 40.0 * sd);
    // log of the slab evidence p(r | active), including all constants.
    let tau = std::f64::consts::TAU;
    let norm = -(tau * vg).ln() - (tau * vn).ln();
    let log_slab = norm + la + lb + ma[0].ln() + mb[0].ln();
    let log_spike = -(std::f64::consts::PI * nu_r).ln() - rho * rho / nu_r;
    let active = if phi <= 0.0 {
        0.0
    } else if phi >= 1.0 {
        1.0
    } else {
        let t = (phi / (1.0 - phi)).ln() + log_slab - log_spike;
        1.0 / (1.0 + (-t).exp())
    };
    let mean_a = a0 + ma[1] / ma[0];
    let var_a = ma[2] / ma[0] - (ma[1] / ma[0]).powi(2);
    let var_b = mb[2] / mb[0] - (mb[1] / mb[0]).powi(2);
    let dir = if rho > 0.0 {
        r / rho
    } else {
        Complex64::new(1.0, 0.0)
    };
    BgPosterior {
        x_hat: dir * (active * mean_a),
        nu_x: active * (var_a + var_b) + active * (1.0 - active) * mean_a * mean_a,
        active,
    }
}

/// Exact marginals `Pr(lambda^t = 1 | evidence)` of one user's two-state
/// chain, started from its stationary probability, given per-frame
/// likelihood ratios `Pr(y^t | on) / Pr(y^t | off)`. Sums over all `2^T_w`
/// sequences.
pub fn exact_chain_smoother(ratios: &[f64], chain: &ChainParams) -> Result<Vec<f64>> {
    let w = ratios.len();
    if w == 0 || w > CHAIN_CAP {
        return Err(Error::param("T_w", format!("{w} outside 1..={CHAIN_CAP}")));
    }
    let mut num = vec![0.0; w];
    let mut total = 0.0;
    for seq in 0u32..(1 << w) {
        let on = |t: usize| seq >> t & 1 == 1;
        let mut p = if on(0) { chain.p_a } else { 1.0 - chain.p_a };
        for t in 1..w {
            let q = chain.p_next(on(t - 1));
            p *= if on(t) { q } else { 1.0 - q };
        }
        for (t, lr) in ratios.iter().enumerate() {
            if on(t) {
                p *= lr;
            }
        }
        total += p;
        for (t, acc) in num.iter_mut().enumerate() {
            if on(t) {
                *acc += p;
            }
        }
    }
    Ok(num.into_iter().map(|v| v / total).collect())
}

/// A tiny single-window instance for brute-force inference. Every virtual AP
/// observes the users of its cooperation set only.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub pilots: PilotMatrix,
    pub graph: CoopGraph,
    pub activity: MarkovActivityParams,
    /// Effective noise variance per virtual AP of the graph.
    pub noise_var: Vec<f64>,
    /// `y[w][g]`: the `L` samples of graph virtual AP `g` in window frame `w`.
    pub y: Vec<Vec<Vec<Complex64>>>,
}

impl TinyInstance {
    pub fn from_signals(
        pilots: PilotMatrix,
        graph: CoopGraph,
        activity: MarkovActivityParams,
        noise_var: f64,
        signals: &FrameSignals,
        window: WindowSpec,
    ) -> Self {
        let l = pilots.pilot_length();
        let y = window
            .frames()
            .map(|t| {
                graph
                    .vaps
                    .iter()
                    .map(|v| signals.y[t][v.index * l..(v.index + 1) * l].to_vec())
                    .collect()
            })
            .collect();
        TinyInstance {
            noise_var: vec![noise_var; graph.vaps.len()],
            pilots,
            graph,
            activity,
            y,
        }
    }

    pub fn t_w(&self) -> usize {
        self.y.len()
    }
}

/// `log CN(y; 0, sum_n g_n a_n a_n^H + sigma2 I)` up to the `-L log pi` term.
fn log_marginal(pilots: &PilotMatrix, users: &[(usize, f64)], y: &[Complex64], sigma2: f64) -> f64 {
    let l = pilots.pilot_length();
    let mut cov = DMatrix::<Complex64>::from_diagonal_element(l, l, Complex64::new(sigma2, 0.0));
    for &(n, g) in users {
        let a = DVector::from_column_slice(pilots.column(n));
        cov += (&a * a.adjoint()) * Complex64::new(g, 0.0);
    }
    let chol = match cov.cholesky() {
        Some(c) => c,
        None => return f64::NEG_INFINITY,
    };
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    let yv = DVector::from_column_slice(y);
    let sol = chol.solve(&yv);
    let quad = yv.dotc(&sol).re;
    -logdet - quad
}

/// Exact posterior activity probabilities `[w][n]` of every user in every
/// window frame, by enumerating all `2^(N T_w)` activity patterns. The
/// likelihood of a pattern is Gaussian per frame and virtual AP with
/// covariance `A diag(rho0 g lambda) A^H + sigma^2 I`; the Markov chain
/// supplies the prior. Sums run in the log domain with max subtraction.
pub fn exact_activity_posterior(inst: &TinyInstance) -> Result<Vec<Vec<f64>>> {
    let n = inst.graph.n_users;
    let w_len = inst.t_w();
    let bits = (n * w_len) as u32;
    if bits > ENUMERATION_CAP_BITS || n > 24 {
        return Err(Error::EnumerationCap {
            bits: bits as usize,
            cap: ENUMERATION_CAP_BITS as usize,
        });
    }
    inst.activity.check_users(n)?;
    // Per-frame log likelihood of every activity pattern of that frame.
    let frame_ll: Vec<Vec<f64>> = (0..w_len)
        .map(|w| {
            (0u32..(1 << n))
                .into_par_iter()
                .map(|pattern| {
                    inst.graph
                        .vaps
                        .iter()
                        .enumerate()
                        .map(|(g, v)| {
                            let users: Vec<(usize, f64)> = v
                                .users
                                .iter()
                                .zip(&v.prior_var)
                                .filter(|(&u, _)| pattern >> u & 1 == 1)
                                .map(|(&u, &var)| (u, var))
                                .collect();
                            log_marginal(&inst.pilots, &users, &inst.y[w][g], inst.noise_var[g])
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let chains: Vec<ChainParams> = (0..n).map(|u| *inst.activity.user(u)).collect();
    let mask = (1u64 << n) - 1;
    let log_weight = |combo: u64| -> f64 {
        let mut lw = 0.0;
        let mut prev = 0u64;
        for (w, ll) in frame_ll.iter().enumerate() {
            let cur = combo >> (w * n) & mask;
            lw += ll[cur as usize];
            for (u, c) in chains.iter().enumerate() {
                let on = cur >> u & 1 == 1;
                let p = if w == 0 {
                    c.p_a
                } else {
                    c.p_next(prev >> u & 1 == 1)
                };
                lw += if on { p.ln() } else { (1.0 - p).ln() };
            }
            prev = cur;
        }
        lw
    };
    let total = 1u64 << bits;
    let max = (0..total)
        .into_par_iter()
        .map(log_weight)
        .reduce(|| f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::param(
            "instance",
            "no activity pattern has positive likelihood",
        ));
    }
    let (sum, marg) = (0..total)
        .into_par_iter()
        .fold(
            || (0.0, vec![0.0; bits as usize]),
            |(mut s, mut m), combo| {
                let wgt = (log_weight(combo) - max).exp();
                s += wgt;
                for (k, acc) in m.iter_mut().enumerate() {
                    if combo >> k & 1 == 1 {
                        *acc += wgt;
                    }
                }
                (s, m)
            },
        )
        .reduce(
            || (0.0, vec![0.0; bits as usize]),
            |(s1, mut m1), (s2, m2)| {
                for (a, b) in m1.iter_mut().zip(m2) {
                    *a += b;
                }
                (s1 + s2, m1)
            },
        );
    Ok((0..w_len)
        .map(|w| (0..n).map(|u| marg[w * n + u] / sum).collect())
        .collect())
}

/// `x = A^H y` for pilots with orthonormal columns.
pub fn ls_channel_recovery(pilots: &PilotMatrix, y: &[Complex64]) -> Result<Vec<Complex64>> {
    if y.len() != pilots.pilot_length() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples for pilot length {}",
            y.len(),
            pilots.pilot_length()
        )));
    }
    let defect = pilots.orthonormality_defect();
    if defect > 1e-9 {
        return Err(Error::NotOrthonormal(defect));
    }
    Ok(pilots.apply_adjoint(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::NetworkLayout;
    use crate::phy::{gen_orthonormal_pilots, gen_pilots};
    use crate::rng;

    fn single_ap(gains: Vec<f64>) -> CoopGraph {
        let n = gains.len();
        let layout = NetworkLayout::from_gains(gains, n, 1, |_, _| true).unwrap();
        CoopGraph::new(&layout, 1, 1.0)
    }

    #[test]
    fn neutral_evidence_gives_stationary_marginals() {
        let chain = ChainParams::from_steady_state(0.2, 0.8).unwrap();
        for p in exact_chain_smoother(&[1.0; 6], &chain).unwrap() {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_chain_has_constant_marginals() {
        let chain = ChainParams {
            alpha: 0.0,
            beta: 1.0,
            p_a: 0.3,
        };
        let m = exact_chain_smoother(&[0.5, 3.0, 0.1, 7.0], &chain).unwrap();
        assert!(m.iter().all(|p| (p - m[0]).abs() < 1e-12));
        // One hypothesis for the whole window: prior odds times the product of ratios.
        let odds = 0.3 / 0.7 * 0.5 * 3.0 * 0.1 * 7.0;
        assert!((m[0] - odds / (1.0 + odds)).abs() < 1e-12);
    }

    #[test]
    fn smoother_rejects_oversized_window() {
        let chain = ChainParams::memoryless(0.1).unwrap();
        assert!(exact_chain_smoother(&[1.0; CHAIN_CAP + 1], &chain).is_err());
        assert!(exact_chain_smoother(&[], &chain).is_err());
    }

    #[test]
    fn identity_pilots_return_the_signal() {
        let mut a = vec![Complex64::new(0.0, 0.0); 9];
        for i in 0..3 {
            a[i * 3 + i] = Complex64::new(1.0, 0.0);
        }
        let pilots = PilotMatrix::from_columns(3, 3, a).unwrap();
        let y = vec![
            Complex64::new(1.0, -2.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 3.0),
        ];
        assert_eq!(ls_channel_recovery(&pilots, &y).unwrap(), y);
    }

    #[test]
    fn ls_recovery_is_exact_without_noise() {
        let pilots = gen_orthonormal_pilots(8, 5, 3).unwrap();
        let mut r = rng::stream(4, &[]);
        let x: Vec<Complex64> = (0..5).map(|_| rng::complex_gaussian(&mut r, 1.0)).collect();
        let xh = ls_channel_recovery(&pilots, &pilots.apply(&x)).unwrap();
        for (a, b) in xh.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn ls_recovery_rejects_non_orthonormal_pilots() {
        let pilots = gen_pilots(8, 5, 3).unwrap();
        let y = vec![Complex64::new(0.0, 0.0); 8];
        assert!(matches!(
            ls_channel_recovery(&pilots, &y),
            Err(Error::NotOrthonormal(_))
        ));
    }

    #[test]
    fn single_user_posterior_is_the_likelihood_ratio() {
        let (l, g, s2, p_a) = (5, 2.0, 0.7, 0.3);
        let pilots = gen_pilots(l, 1, 8).unwrap();
        let mut r = rng::stream(9, &[]);
        let y: Vec<Complex64> = (0..l).map(|_| rng::complex_gaussian(&mut r, 1.0)).collect();
        let inst = TinyInstance {
            graph: single_ap(vec![g]),
            activity: MarkovActivityParams::new(p_a, p_a).unwrap(),
            noise_var: vec![s2],
            y: vec![vec![y.clone()]],
            pilots: pilots.clone(),
        };
        let post = exact_activity_posterior(&inst).unwrap()[0][0];
        let a = pilots.column(0);
        let a2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
        let ay: Complex64 = a.iter().zip(&y).map(|(a, y)| a.conj() * y).sum();
        let c = s2 + g * a2;
        let log_lr = -(c / s2).ln() + g * ay.norm_sqr() / (s2 * c);
        let odds = p_a / (1.0 - p_a) * log_lr.exp();
        assert!((post - odds / (1.0 + odds)).abs() < 1e-12, "{post}");
    }

    #[test]
    fn noiseless_orthonormal_posterior_recovers_the_trace() {
        let n = 4;
        let pilots = gen_orthonormal_pilots(6, n, 1).unwrap();
        let truth = [[true, false, false, true], [true, true, false, false]];
        let mut r = rng::stream(2, &[]);
        let y = truth
            .iter()
            .map(|frame| {
                let x: Vec<Complex64> = frame
                    .iter()
                    .map(|&on| {
                        if on {
                            rng::complex_gaussian(&mut r, 1.0)
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect();
                vec![pilots.apply(&x)]
            })
            .collect();
        let inst = TinyInstance {
            graph: single_ap(vec![1.0; n]),
            activity: MarkovActivityParams::new(0.3, 0.8).unwrap(),
            noise_var: vec![1e-12],
            y,
            pilots,
        };
        let post = exact_activity_posterior(&inst).unwrap();
        for (w, frame) in truth.iter().enumerate() {
            for (u, &on) in frame.iter().enumerate() {
                assert!(
                    (post[w][u] - on as u8 as f64).abs() < 1e-6,
                    "{w} {u} {}",
                    post[w][u]
                );
            }
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let inst = TinyInstance {
            pilots: gen_pilots(2, 13, 0).unwrap(),
            graph: single_ap(vec![1.0; 13]),
            activity: MarkovActivityParams::new(0.1, 0.9).unwrap(),
            noise_var: vec![1.0],
            y: vec![vec![vec![Complex64::new(0.0, 0.0); 2]]; 2],
        };
        assert!(matches!(
            exact_activity_posterior(&inst),
            Err(Error::EnumerationCap { .. })
        ));
    }
}
