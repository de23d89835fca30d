//! Pilots, block-fading channels and received pilot signals.
//!
//! Every antenna of every AP is treated as a virtual single-antenna AP with
//! index `v = u * M + m`. All users contribute to every received signal; the
//! cooperation sets only restrict what the receiver tries to estimate.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::netgen::NetworkLayout;
use crate::rng::{self, domain};
use crate::traffic::{ActivityTrace, MarkovActivityParams};
use crate::{Error, Result};

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub rho0_dbm: f64,
    /// Noise spectral density; `-inf` gives a noiseless receiver.
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub antennas_per_ap: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            rho0_dbm: 13.0,
            noise_psd_dbm_hz: -174.0,
            bandwidth_hz: 10e6,
            antennas_per_ap: 1,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.antennas_per_ap == 0 {
            return Err(Error::param("antennas_per_ap", "must be at least 1"));
        }
        if !self.rho0_dbm.is_finite() {
            return Err(Error::param("rho0_dbm", "must be finite"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::param("bandwidth_hz", "must be positive"));
        }
        if self.noise_psd_dbm_hz.is_nan() || self.noise_psd_dbm_hz == f64::INFINITY {
            return Err(Error::param("noise_psd_dbm_hz", "must be finite or -inf"));
        }
        Ok(())
    }

    pub fn tx_power(&self) -> f64 {
        dbm_to_watt(self.rho0_dbm)
    }

    /// Total noise power over the band, `sigma_w^2`.
    pub fn noise_var(&self) -> f64 {
        if self.noise_psd_dbm_hz == f64::NEG_INFINITY {
            0.0
        } else {
            dbm_to_watt(self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10())
        }
    }
}

/// `L x N` pilot matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    l: usize,
    n: usize,
    a: Vec<Complex64>,
    abs2: Vec<f64>,
}

impl PilotMatrix {
    pub fn from_columns(l: usize, n: usize, a: Vec<Complex64>) -> Result<Self> {
        if a.len() != l * n {
            return Err(Error::DimensionMismatch(format!(
                "{} pilot entries for {l}x{n}",
                a.len()
            )));
        }
        let abs2 = a.iter().map(|v| v.norm_sqr()).collect();
        Ok(PilotMatrix { l, n, a, abs2 })
    }

    pub fn pilot_length(&self) -> usize {
        self.l
    }

    pub fn n_users(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn column(&self, n: usize) -> &[Complex64] {
        &self.a[n * self.l..(n + 1) * self.l]
    }

    /// Squared magnitudes of column `n`.
    #[inline]
    pub fn column_abs2(&self, n: usize) -> &[f64] {
        &self.abs2[n * self.l..(n + 1) * self.l]
    }

    #[inline]
    pub fn get(&self, l: usize, n: usize) -> Complex64 {
        self.a[n * self.l + l]
    }

    /// `A x` for a full-length `x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.l];
        for (n, &xn) in x.iter().enumerate() {
            if xn == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (yl, a) in y.iter_mut().zip(self.column(n)) {
                *yl += a * xn;
            }
        }
        y
    }

    /// `A^H y`.
    pub fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|n| {
                self.column(n)
                    .iter()
                    .zip(y)
                    .map(|(a, v)| a.conj() * v)
                    .sum()
            })
            .collect()
    }

    /// Largest entry of `|A^H A - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                let g: Complex64 = self
                    .column(i)
                    .iter()
                    .zip(self.column(j))
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }
}

/// i.i.d. `CN(0, 1/L)` pilots, one random stream per user.
pub fn gen_pilots(l: usize, n: usize, seed: u64) -> Result<PilotMatrix> {
    if l == 0 || n == 0 {
        return Err(Error::param("pilot dimensions", "L and N must be positive"));
    }
    let var = 1.0 / l as f64;
    let a = (0..n)
        .flat_map(|col| {
            let mut rng = rng::stream(seed, &[domain::PILOTS, col as u64]);
            (0..l)
                .map(|_| rng::complex_gaussian(&mut rng, var))
                .collect::<Vec<_>>()
        })
        .collect();
    PilotMatrix::from_columns(l, n, a)
}

/// Pilots with orthonormal columns (`N <= L`), obtained by Gram-Schmidt on
/// Gaussian columns.
pub fn gen_orthonormal_pilots(l: usize, n: usize, seed: u64) -> Result<PilotMatrix> {
    if n > l {
        return Err(Error::param(
            "pilot dimensions",
            format!("{n} orthonormal columns need L >= N, got L={l}"),
        ));
    }
    let raw = gen_pilots(l, n, seed)?;
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = raw.column(j).to_vec();
        // Two passes keep the columns orthogonal to machine precision.
        for _ in 0..2 {
            for q in &cols {
                let proj: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            return Err(Error::param("pilots", "rank-deficient draw"));
        }
        v.iter_mut().for_each(|c| *c /= norm);
        cols.push(v);
    }
    PilotMatrix::from_columns(l, n, cols.into_iter().flatten().collect())
}

/// Pilot signals of all frames at all virtual APs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSignals {
    pub n_frames: usize,
    pub pilot_length: usize,
    pub n_users: usize,
    pub antennas_per_ap: usize,
    pub n_vaps: usize,
    /// `x_true[t][v * N + n]`.
    pub x_true: Vec<Vec<Complex64>>,
    /// `z[t][v * L + l]`, noiseless.
    pub z: Vec<Vec<Complex64>>,
    /// `y[t][v * L + l]`.
    pub y: Vec<Vec<Complex64>>,
    pub noise_var: f64,
    pub tx_power: f64,
}

impl FrameSignals {
    #[inline]
    pub fn y_at(&self, t: usize, v: usize) -> &[Complex64] {
        &self.y[t][v * self.pilot_length..(v + 1) * self.pilot_length]
    }

    #[inline]
    pub fn x_at(&self, t: usize, v: usize) -> &[Complex64] {
        &self.x_true[t][v * self.n_users..(v + 1) * self.n_users]
    }

    pub fn physical_ap(&self, v: usize) -> usize {
        v / self.antennas_per_ap
    }

    /// Writes the received signals as a text header followed by little-endian
    /// interleaved `(re, im)` f64 values in `[t][v][l]` order.
    pub fn write_y_dump<W: Write>(&self, mut w: W, seed: u64) -> Result<()> {
        writeln!(w, "massact-y v1")?;
        writeln!(w, "frames={}", self.n_frames)?;
        writeln!(w, "pilot_length={}", self.pilot_length)?;
        writeln!(w, "virtual_aps={}", self.n_vaps)?;
        writeln!(w, "antennas_per_ap={}", self.antennas_per_ap)?;
        writeln!(w, "seed={seed}")?;
        writeln!(w, "noise_var={}", self.noise_var)?;
        writeln!(w, "tx_power={}", self.tx_power)?;
        writeln!(w, "end_header")?;
        for frame in &self.y {
            for c in frame {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Received signals read back from a dump.
#[derive(Debug, Clone, PartialEq)]
pub struct YDump {
    pub n_frames: usize,
    pub pilot_length: usize,
    pub n_vaps: usize,
    pub antennas_per_ap: usize,
    pub seed: u64,
    pub noise_var: f64,
    pub tx_power: f64,
    pub y: Vec<Vec<Complex64>>,
}

pub fn read_y_dump<R: BufRead>(mut r: R) -> Result<YDump> {
    let ctx = "Y dump";
    let mut fields = std::collections::HashMap::new();
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::parse(ctx, "missing end_header"));
        }
        let l = line.trim();
        if l == "end_header" {
            break;
        }
        if let Some((k, v)) = l.split_once('=') {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<&String> {
        fields
            .get(k)
            .ok_or_else(|| Error::parse(ctx, format!("missing `{k}`")))
    };
    let int = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|e| Error::parse(ctx, format!("{k}: {e}")))
    };
    let float = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|e| Error::parse(ctx, format!("{k}: {e}")))
    };
    let (t, l, v) = (int("frames")?, int("pilot_length")?, int("virtual_aps")?);
    let mut y = Vec::with_capacity(t);
    let mut buf = [0u8; 16];
    for _ in 0..t {
        let mut frame = Vec::with_capacity(l * v);
        for _ in 0..l * v {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(buf[8..].try_into().expect("8 bytes"));
            frame.push(Complex64::new(re, im));
        }
        y.push(frame);
    }
    Ok(YDump {
        n_frames: t,
        pilot_length: l,
        n_vaps: v,
        antennas_per_ap: int("antennas_per_ap")?,
        seed: get("seed")?
            .parse()
            .map_err(|e| Error::parse(ctx, format!("seed: {e}")))?,
        noise_var: float("noise_var")?,
        tx_power: float("tx_power")?,
        y,
    })
}

/// Draws `h ~ CN(0, g)` for every user at every virtual AP and frame, forms
/// `x = sqrt(rho0) * lambda * h` and `y = A x + w`.
pub fn synthesize_frames(
    layout: &NetworkLayout,
    trace: &ActivityTrace,
    pilots: &PilotMatrix,
    sys: &SystemParams,
    seed: u64,
) -> Result<FrameSignals> {
    sys.validate()?;
    let n = layout.n_users();
    if trace.n_users() != n || pilots.n_users() != n {
        return Err(Error::DimensionMismatch(format!(
            "layout has {n} users, trace {}, pilots {}",
            trace.n_users(),
            pilots.n_users()
        )));
    }
    let m = sys.antennas_per_ap;
    let n_vaps = layout.n_aps() * m;
    let l = pilots.pilot_length();
    let t_total = trace.n_frames();
    let rho0 = sys.tx_power();
    let amp = rho0.sqrt();
    let noise = sys.noise_var();

    let blocks: Vec<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> = (0..t_total * n_vaps)
        .into_par_iter()
        .map(|k| {
            let (t, v) = (k / n_vaps, k % n_vaps);
            let (u, ant) = (v / m, v % m);
            let mut rng = rng::stream(seed, &[domain::CHANNEL, t as u64, u as u64, ant as u64]);
            let x: Vec<Complex64> = (0..n)
                .map(|i| {
                    let h = rng::complex_gaussian(&mut rng, layout.g(i, u));
                    if trace.get(i, t) {
                        h * amp
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            let z = pilots.apply(&x);
            let y = z
                .iter()
                .map(|zl| zl + rng::complex_gaussian(&mut rng, noise))
                .collect();
            (x, z, y)
        })
        .collect();

    let mut x_true = vec![Vec::with_capacity(n * n_vaps); t_total];
    let mut z_all = vec![Vec::with_capacity(l * n_vaps); t_total];
    let mut y_all = vec![Vec::with_capacity(l * n_vaps); t_total];
    for (k, (x, z, y)) in blocks.into_iter().enumerate() {
        let t = k / n_vaps;
        x_true[t].extend(x);
        z_all[t].extend(z);
        y_all[t].extend(y);
    }
    Ok(FrameSignals {
        n_frames: t_total,
        pilot_length: l,
        n_users: n,
        antennas_per_ap: m,
        n_vaps,
        x_true,
        z: z_all,
        y: y_all,
        noise_var: noise,
        tx_power: rho0,
    })
}

/// Noise plus the Gaussian-approximated power of the users outside `N_u`,
/// per pilot symbol: `sigma_w^2 + sum_{n not in N_u} p_n rho0 g_{n,u} / L`.
pub fn effective_noise_power(
    layout: &NetworkLayout,
    sys: &SystemParams,
    activity: &MarkovActivityParams,
    pilot_length: usize,
    u: usize,
) -> f64 {
    let rho0 = sys.tx_power();
    let mut served = vec![false; layout.n_users()];
    for &n in &layout.coop_ap_to_users[u] {
        served[n] = true;
    }
    let interference: f64 = (0..layout.n_users())
        .filter(|&n| !served[n])
        .map(|n| activity.user(n).p_a * rho0 * layout.g(n, u))
        .sum();
    sys.noise_var() + interference / pilot_length as f64
}
