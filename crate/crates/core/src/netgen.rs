//! Hexagonal multi-cell geometry, path loss and user-centric cooperation sets.
//!
//! APs sit at the centroids of flat-top hexagonal cells whose inter-centre
//! distance is `2 r0`. Users are dropped uniformly inside each cell and are
//! served by every AP within the detection distance `D_max`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::rng::{self, domain};
use crate::{Error, Result};

/// Distances below this many km are clamped before evaluating path loss.
pub const MIN_DISTANCE_KM: f64 = 0.005;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    pub ap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    /// Cell each user was dropped in.
    pub user_cell: Vec<usize>,
    /// Row-major `N x U` attenuation in dB.
    pub path_loss_db: Vec<f64>,
    /// Row-major `N x U` linear gains.
    pub g_lin: Vec<f64>,
    /// `U_n`: APs serving user `n`, ascending.
    pub coop_user_to_aps: Vec<Vec<usize>>,
    /// `N_u`: users served by AP `u`, ascending.
    pub coop_ap_to_users: Vec<Vec<usize>>,
    pub d_max_km: f64,
    pub half_spacing_km: f64,
}

/// `-128.1 - 37.6 log10(d)` with `d` clamped to [`MIN_DISTANCE_KM`].
pub fn path_loss_db(distance_km: f64) -> f64 {
    -128.1 - 37.6 * distance_km.max(MIN_DISTANCE_KM).log10()
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Number of cells in a hexagonal network with `tiers` rings (centre = tier 1).
pub fn hex_cell_count(tiers: usize) -> usize {
    if tiers == 0 {
        0
    } else {
        3 * tiers * (tiers - 1) + 1
    }
}

/// Axial coordinates of a `tiers`-ring hexagonal patch, centre first, then
/// ring by ring.
fn hex_axial_coords(tiers: usize) -> Vec<(i64, i64)> {
    const DIRS: [(i64, i64); 6] = [(1, -1), (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1)];
    let mut out = vec![(0, 0)];
    for k in 1..tiers as i64 {
        // Start at the cell k steps along direction 4 and walk the six sides.
        let (mut q, mut r) = (DIRS[4].0 * k, DIRS[4].1 * k);
        for d in DIRS {
            for _ in 0..k {
                out.push((q, r));
                q += d.0;
                r += d.1;
            }
        }
    }
    out
}

/// Whether `p` (relative to a cell centre) lies in a flat-top hexagon of
/// apothem `r0`.
pub fn in_flat_top_hexagon(p: Point, r0: f64) -> bool {
    let circ = 2.0 * r0 / 3f64.sqrt();
    let (x, y) = (p[0].abs(), p[1].abs());
    y <= r0 && 3f64.sqrt() * x + y <= 3f64.sqrt() * circ
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Drops `users_per_cell` users uniformly in each of the `3t(t-1)+1` cells.
pub fn build_hex_network(
    tiers: usize,
    users_per_cell: usize,
    half_spacing_km: f64,
    d_max_km: f64,
    seed: u64,
) -> Result<NetworkLayout> {
    if tiers == 0 {
        return Err(Error::param("tiers", "must be at least 1"));
    }
    if users_per_cell == 0 {
        return Err(Error::param("users_per_cell", "must be at least 1"));
    }
    if !(half_spacing_km > 0.0) || !half_spacing_km.is_finite() {
        return Err(Error::param(
            "half_spacing_km",
            "must be positive and finite",
        ));
    }
    if !(d_max_km > 0.0) {
        return Err(Error::param("d_max_km", "must be positive"));
    }

    let r0 = half_spacing_km;
    let circ = 2.0 * r0 / 3f64.sqrt();
    let aps: Vec<Point> = hex_axial_coords(tiers)
        .into_iter()
        .map(|(q, r)| {
            [
                1.5 * circ * q as f64,
                3f64.sqrt() * circ * (r as f64 + 0.5 * q as f64),
            ]
        })
        .collect();

    let mut users = Vec::with_capacity(aps.len() * users_per_cell);
    for (c, centre) in aps.iter().enumerate() {
        let mut rng = rng::stream(seed, &[domain::LAYOUT, c as u64]);
        for _ in 0..users_per_cell {
            loop {
                let p = [rng.random_range(-circ..=circ), rng.random_range(-r0..=r0)];
                if in_flat_top_hexagon(p, r0) {
                    users.push([centre[0] + p[0], centre[1] + p[1]]);
                    break;
                }
            }
        }
    }
    Ok(NetworkLayout::from_positions(aps, users, r0, d_max_km))
}

impl NetworkLayout {
    /// Builds a layout from explicit positions; users are assigned to their
    /// nearest AP (lowest index on ties).
    pub fn from_positions(
        ap_positions: Vec<Point>,
        user_positions: Vec<Point>,
        half_spacing_km: f64,
        d_max_km: f64,
    ) -> Self {
        let n_aps = ap_positions.len();
        let mut path_loss = Vec::with_capacity(user_positions.len() * n_aps);
        let mut user_cell = Vec::with_capacity(user_positions.len());
        let mut dist = Vec::with_capacity(user_positions.len() * n_aps);
        for p in &user_positions {
            let mut best = (f64::INFINITY, 0);
            for (u, a) in ap_positions.iter().enumerate() {
                let d = distance(*p, *a);
                if d < best.0 {
                    best = (d, u);
                }
                dist.push(d);
                path_loss.push(path_loss_db(d));
            }
            user_cell.push(best.1);
        }
        let (u2a, a2u) = derive_coop_sets(&dist, user_positions.len(), n_aps, d_max_km);
        NetworkLayout {
            g_lin: path_loss.iter().map(|&db| db_to_lin(db)).collect(),
            path_loss_db: path_loss,
            ap_positions,
            user_positions,
            user_cell,
            coop_user_to_aps: u2a,
            coop_ap_to_users: a2u,
            d_max_km,
            half_spacing_km,
        }
    }

    /// Builds a synthetic layout directly from a gain matrix and a cooperation
    /// predicate. Positions are left at the origin.
    pub fn from_gains(
        g_lin: Vec<f64>,
        n_users: usize,
        n_aps: usize,
        cooperate: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        if g_lin.len() != n_users * n_aps {
            return Err(Error::DimensionMismatch(format!(
                "gain matrix has {} entries, expected {n_users}x{n_aps}",
                g_lin.len()
            )));
        }
        if let Some(g) = g_lin.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
            return Err(Error::param("g_lin", format!("entry {g} is not positive")));
        }
        let mut u2a = vec![Vec::new(); n_users];
        let mut a2u = vec![Vec::new(); n_aps];
        for (n, set) in u2a.iter_mut().enumerate() {
            for (u, users) in a2u.iter_mut().enumerate() {
                if cooperate(n, u) {
                    set.push(u);
                    users.push(n);
                }
            }
        }
        let user_cell = (0..n_users)
            .map(|n| {
                let row = &g_lin[n * n_aps..(n + 1) * n_aps];
                let mut best = 0;
                for (u, g) in row.iter().enumerate() {
                    if *g > row[best] {
                        best = u;
                    }
                }
                best
            })
            .collect();
        Ok(NetworkLayout {
            path_loss_db: g_lin.iter().map(|g| 10.0 * g.log10()).collect(),
            g_lin,
            ap_positions: vec![[0.0, 0.0]; n_aps],
            user_positions: vec![[0.0, 0.0]; n_users],
            user_cell,
            coop_user_to_aps: u2a,
            coop_ap_to_users: a2u,
            d_max_km: f64::INFINITY,
            half_spacing_km: f64::NAN,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    #[inline]
    pub fn g(&self, n: usize, u: usize) -> f64 {
        self.g_lin[n * self.n_aps() + u]
    }

    pub fn distance_km(&self, n: usize, u: usize) -> f64 {
        distance(self.user_positions[n], self.ap_positions[u])
    }

    /// Writes the layout as a sectioned text file. Floats use the shortest
    /// round-trip representation, so [`NetworkLayout::read_text`] restores it
    /// exactly.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# massact network layout v1")?;
        writeln!(w, "half_spacing_km={}", self.half_spacing_km)?;
        writeln!(w, "d_max_km={}", self.d_max_km)?;
        writeln!(w, "n_aps={}", self.n_aps())?;
        writeln!(w, "n_users={}", self.n_users())?;
        writeln!(w, "[aps]")?;
        writeln!(w, "index,x_km,y_km")?;
        for (u, p) in self.ap_positions.iter().enumerate() {
            writeln!(w, "{u},{},{}", p[0], p[1])?;
        }
        writeln!(w, "[users]")?;
        writeln!(w, "index,x_km,y_km,cell,coop_aps")?;
        for n in 0..self.n_users() {
            let p = self.user_positions[n];
            let coop = self.coop_user_to_aps[n]
                .iter()
                .map(|u| u.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(w, "{n},{},{},{},{coop}", p[0], p[1], self.user_cell[n])?;
        }
        writeln!(w, "[path_loss_db]")?;
        let mut line = String::new();
        for n in 0..self.n_users() {
            line.clear();
            for u in 0..self.n_aps() {
                if u > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{}", self.path_loss_db[n * self.n_aps() + u]);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let ctx = "network layout";
        let mut header = std::collections::HashMap::new();
        let mut section = String::new();
        let mut aps = Vec::new();
        let mut users = Vec::new();
        let mut cells = Vec::new();
        let mut coop: Vec<Vec<usize>> = Vec::new();
        let mut pl = Vec::new();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(ctx, format!("`{s}`: {e}")))
        };
        let idx = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(ctx, format!("`{s}`: {e}")))
        };
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                section = line.trim_matches(|c| c == '[' || c == ']').to_string();
                continue;
            }
            match section.as_str() {
                "" => {
                    let (k, v) = line
                        .split_once('=')
                        .ok_or_else(|| Error::parse(ctx, format!("bad header line `{line}`")))?;
                    header.insert(k.trim().to_string(), v.trim().to_string());
                }
                "aps" if !line.starts_with("index") => {
                    let f: Vec<&str> = line.split(',').collect();
                    if f.len() != 3 {
                        return Err(Error::parse(ctx, format!("bad AP record `{line}`")));
                    }
                    aps.push([num(f[1])?, num(f[2])?]);
                }
                "users" if !line.starts_with("index") => {
                    let f: Vec<&str> = line.split(',').collect();
                    if f.len() != 5 {
                        return Err(Error::parse(ctx, format!("bad user record `{line}`")));
                    }
                    users.push([num(f[1])?, num(f[2])?]);
                    cells.push(idx(f[3])?);
                    coop.push(
                        f[4].split_whitespace()
                            .map(idx)
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
                "path_loss_db" => {
                    for v in line.split(',') {
                        pl.push(num(v)?);
                    }
                }
                "aps" | "users" => {}
                other => return Err(Error::parse(ctx, format!("unknown section `{other}`"))),
            }
        }
        let get = |k: &str| -> Result<f64> {
            header
                .get(k)
                .ok_or_else(|| Error::parse(ctx, format!("missing `{k}`")))
                .and_then(|v| num(v))
        };
        let n_aps = get("n_aps")? as usize;
        let n_users = get("n_users")? as usize;
        if aps.len() != n_aps || users.len() != n_users || pl.len() != n_aps * n_users {
            return Err(Error::DimensionMismatch(format!(
                "layout declares {n_users} users x {n_aps} APs but holds {} users, {} APs, {} path losses",
                users.len(),
                aps.len(),
                pl.len()
            )));
        }
        let mut a2u = vec![Vec::new(); n_aps];
        for (n, set) in coop.iter().enumerate() {
            for &u in set {
                if u >= n_aps {
                    return Err(Error::parse(ctx, format!("user {n} references AP {u}")));
                }
                a2u[u].push(n);
            }
        }
        Ok(NetworkLayout {
            g_lin: pl.iter().map(|&db| db_to_lin(db)).collect(),
            path_loss_db: pl,
            ap_positions: aps,
            user_positions: users,
            user_cell: cells,
            coop_user_to_aps: coop,
            coop_ap_to_users: a2u,
            d_max_km: get("d_max_km")?,
            half_spacing_km: get("half_spacing_km")?,
        })
    }
}

/// Cooperation sets from a row-major `N x U` distance matrix: `u` serves `n`
/// iff their distance is at most `d_max_km`.
pub fn derive_coop_sets(
    dist_km: &[f64],
    n_users: usize,
    n_aps: usize,
    d_max_km: f64,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut u2a = vec![Vec::new(); n_users];
    let mut a2u = vec![Vec::new(); n_aps];
    for n in 0..n_users {
        for u in 0..n_aps {
            if dist_km[n * n_aps + u] <= d_max_km {
                u2a[n].push(u);
                a2u[u].push(n);
            }
        }
    }
    (u2a, a2u)
}
