//! Two-state first-order Markov activity.
//!
//! A user that was inactive becomes active with probability `alpha`; an
//! active user stays active with probability `beta`. The chain is started from
//! its steady state `p_a = alpha / (1 + alpha - beta)`.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::rng::{self, domain};
use crate::{Error, Result};

/// Transition law of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub alpha: f64,
    pub beta: f64,
    pub p_a: f64,
}

impl ChainParams {
    /// Chain with steady-state activity `p_a` and persistence `beta`.
    pub fn from_steady_state(p_a: f64, beta: f64) -> Result<Self> {
        Ok(ChainParams {
            alpha: solve_steady_state(p_a, beta)?,
            beta,
            p_a,
        })
    }

    /// Activity without temporal correlation (`alpha = beta = p_a`).
    pub fn memoryless(p_a: f64) -> Result<Self> {
        check_prob("p_a", p_a)?;
        Ok(ChainParams {
            alpha: p_a,
            beta: p_a,
            p_a,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("alpha", self.alpha)?;
        check_prob("beta", self.beta)?;
        check_prob("p_a", self.p_a)?;
        let gap = (self.p_a * (1.0 + self.alpha - self.beta) - self.alpha).abs();
        if gap > 1e-12 {
            return Err(Error::param(
                "p_a",
                format!(
                    "not the steady state of alpha={}, beta={} (residual {gap:.2e})",
                    self.alpha, self.beta
                ),
            ));
        }
        Ok(())
    }

    /// Probability of being active given the previous state.
    pub fn p_next(&self, active: bool) -> f64 {
        if active {
            self.beta
        } else {
            self.alpha
        }
    }
}

/// Activity parameters for a population: one shared chain unless per-user
/// overrides are given.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovActivityParams {
    pub common: ChainParams,
    pub per_user_override: Option<Vec<ChainParams>>,
}

impl MarkovActivityParams {
    pub fn new(p_a: f64, beta: f64) -> Result<Self> {
        Ok(MarkovActivityParams {
            common: ChainParams::from_steady_state(p_a, beta)?,
            per_user_override: None,
        })
    }

    pub fn with_overrides(common: ChainParams, per_user: Vec<ChainParams>) -> Result<Self> {
        common.validate()?;
        for c in &per_user {
            c.validate()?;
        }
        Ok(MarkovActivityParams {
            common,
            per_user_override: Some(per_user),
        })
    }

    pub fn user(&self, n: usize) -> &ChainParams {
        match &self.per_user_override {
            Some(v) => &v[n],
            None => &self.common,
        }
    }

    pub fn check_users(&self, n_users: usize) -> Result<()> {
        match &self.per_user_override {
            Some(v) if v.len() != n_users => Err(Error::DimensionMismatch(format!(
                "{} per-user chains for {n_users} users",
                v.len()
            ))),
            _ => Ok(()),
        }
    }
}

fn check_prob(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::param(name, format!("{p} is not a probability")))
    }
}

/// `alpha = p_a (1 - beta) / (1 - p_a)`.
pub fn solve_steady_state(p_a: f64, beta: f64) -> Result<f64> {
    if !(p_a > 0.0 && p_a < 1.0) {
        return Err(Error::param("p_a", format!("{p_a} must lie in (0, 1)")));
    }
    check_prob("beta", beta)?;
    if beta == p_a {
        return Ok(p_a);
    }
    let alpha = p_a * (1.0 - beta) / (1.0 - p_a);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(
            "beta",
            format!("p_a={p_a}, beta={beta} implies alpha={alpha} outside [0, 1]"),
        ));
    }
    Ok(alpha)
}

/// Boolean activity matrix, users x frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityTrace {
    n_users: usize,
    n_frames: usize,
    lam: Vec<bool>,
}

impl ActivityTrace {
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        let n_frames = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_frames) {
            return Err(Error::DimensionMismatch("ragged activity rows".into()));
        }
        Ok(ActivityTrace {
            n_users: rows.len(),
            n_frames,
            lam: rows.into_iter().flatten().collect(),
        })
    }

    pub fn zeros(n_users: usize, n_frames: usize) -> Self {
        ActivityTrace {
            n_users,
            n_frames,
            lam: vec![false; n_users * n_frames],
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[inline]
    pub fn get(&self, n: usize, t: usize) -> bool {
        self.lam[n * self.n_frames + t]
    }

    pub fn set(&mut self, n: usize, t: usize, v: bool) {
        self.lam[n * self.n_frames + t] = v;
    }

    pub fn row(&self, n: usize) -> &[bool] {
        &self.lam[n * self.n_frames..(n + 1) * self.n_frames]
    }

    pub fn active_in_frame(&self, t: usize) -> usize {
        (0..self.n_users).filter(|&n| self.get(n, t)).count()
    }

    /// 0/1 CSV, one row per user.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = String::with_capacity(2 * self.n_frames);
        for n in 0..self.n_users {
            line.clear();
            for (t, &a) in self.row(n).iter().enumerate() {
                if t > 0 {
                    line.push(',');
                }
                line.push(if a { '1' } else { '0' });
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(
                line.split(',')
                    .map(|f| match f.trim() {
                        "0" => Ok(false),
                        "1" => Ok(true),
                        other => Err(Error::parse("activity trace", format!("`{other}`"))),
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Self::from_rows(rows)
    }
}

/// Samples every user's chain with its first frame drawn from `p_a` (or the
/// user's own steady state).
pub fn sample_trace(
    params: &MarkovActivityParams,
    n_users: usize,
    n_frames: usize,
    seed: u64,
) -> Result<ActivityTrace> {
    sample_trace_with(params, n_users, n_frames, seed, |n| params.user(n).p_a)
}

/// As [`sample_trace`] but with an explicit per-user probability for the first
/// frame.
pub fn sample_trace_with(
    params: &MarkovActivityParams,
    n_users: usize,
    n_frames: usize,
    seed: u64,
    initial: impl Fn(usize) -> f64,
) -> Result<ActivityTrace> {
    if n_frames == 0 {
        return Err(Error::param("n_frames", "must be at least 1"));
    }
    params.check_users(n_users)?;
    let mut trace = ActivityTrace::zeros(n_users, n_frames);
    for n in 0..n_users {
        let chain = params.user(n);
        let mut rng = rng::stream(seed, &[domain::TRACE, n as u64]);
        let mut state = rng.random::<f64>() < initial(n);
        trace.set(n, 0, state);
        for t in 1..n_frames {
            state = rng.random::<f64>() < chain.p_next(state);
            trace.set(n, t, state);
        }
    }
    Ok(trace)
}
