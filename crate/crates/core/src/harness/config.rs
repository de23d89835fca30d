//! Experiment configuration.
//!
//! Configurations are TOML documents with one table per concern. Every field
//! has a default, so a file only lists what it changes. [`ExperimentConfig::validate`]
//! checks all cross-field constraints before anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fronthaul::FronthaulMode;
use crate::inference::InferenceConfig;
use crate::phy::SystemParams;
use crate::traffic::{ChainParams, MarkovActivityParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Rings of cells counting the centre cell: 2 gives 7 cells, 3 gives 19.
    pub tiers: usize,
    pub users_per_cell: usize,
    /// `r0`, half the distance between adjacent APs.
    pub half_spacing_km: f64,
    /// Cooperation radius `D_max` in units of `r0`.
    pub d_max_r0: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            tiers: 3,
            users_per_cell: 1000,
            half_spacing_km: 3f64.sqrt() / 2.0,
            d_max_r0: 2.5,
        }
    }
}

impl NetworkConfig {
    pub fn d_max_km(&self) -> f64 {
        self.d_max_r0 * self.half_spacing_km
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Steady-state activity probability. Ignored when `alpha` is set.
    pub p_a: f64,
    /// `Pr(active | active)`.
    pub beta: f64,
    /// `Pr(active | inactive)`; when set, `p_a` becomes the stationary
    /// probability `alpha / (1 - beta + alpha)`.
    pub alpha: Option<f64>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            p_a: 0.1,
            beta: 0.9,
            alpha: None,
        }
    }
}

impl TrafficConfig {
    pub fn chain(&self) -> Result<ChainParams> {
        match self.alpha {
            None => ChainParams::from_steady_state(self.p_a, self.beta),
            Some(alpha) => {
                let denom = 1.0 - self.beta + alpha;
                if !(denom > 0.0) {
                    return Err(Error::param(
                        "alpha",
                        "alpha = 0 with beta = 1 has no stationary law",
                    ));
                }
                let chain = ChainParams {
                    alpha,
                    beta: self.beta,
                    p_a: alpha / denom,
                };
                chain.validate()?;
                Ok(chain)
            }
        }
    }

    pub fn params(&self) -> Result<MarkovActivityParams> {
        Ok(MarkovActivityParams {
            common: self.chain()?,
            per_user_override: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    pub length: usize,
    /// Orthonormal columns (requires `L >= N`) instead of i.i.d. Gaussian ones.
    pub orthonormal: bool,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            length: 300,
            orthonormal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Frames simulated per trial.
    pub frames: usize,
    pub t_w: usize,
    /// Target sub-window size, which is also the sliding step.
    pub delta_w: usize,
    /// `t1 - t0` of a full window.
    pub target_offset: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            frames: 10,
            t_w: 4,
            delta_w: 2,
            target_offset: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FronthaulConfig {
    pub mode: FronthaulMode,
    /// Bits per AP per frame. When set it determines the resolution and
    /// overrides `bq` / `bd`.
    pub budget_bits: Option<u64>,
    /// QF bits per complex sample (`b_Q = 2 b^r`).
    pub bq: u32,
    /// DF bits per LLR.
    pub bd: u32,
    /// QF clipping range in input standard deviations.
    pub clip: f64,
}

impl Default for FronthaulConfig {
    fn default() -> Self {
        FronthaulConfig {
            mode: FronthaulMode::Ideal,
            budget_bits: None,
            bq: 14,
            bd: 5,
            clip: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trials: 100,
            seed: 1,
            threads: 0,
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub traffic: TrafficConfig,
    pub system: SystemParams,
    pub pilots: PilotConfig,
    pub window: WindowConfig,
    pub inference: InferenceConfig,
    pub fronthaul: FronthaulConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// The full-scale setting: 19 cells of 1000 users, `L = 300`,
    /// `T_w = 4`, `beta = 0.9`, `p_a = 0.1`.
    pub fn paper_defaults() -> Self {
        Self::default()
    }

    /// 7 cells of 200 users and 100 trials, small enough for a workstation.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.network.tiers = 2;
        c.network.users_per_cell = 200;
        c.pilots.length = 40;
        c.window.frames = 8;
        c.run.trials = 100;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" | "paper_defaults" => Ok(Self::paper_defaults()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::param("preset", format!("unknown preset `{other}`"))),
        }
    }

    pub fn n_cells(&self) -> usize {
        crate::netgen::hex_cell_count(self.network.tiers)
    }

    pub fn n_users(&self) -> usize {
        self.n_cells() * self.network.users_per_cell
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.network;
        if n.tiers == 0 || n.users_per_cell == 0 {
            return Err(Error::param(
                "network",
                "need at least one tier and one user per cell",
            ));
        }
        if !(n.half_spacing_km > 0.0) || !(n.d_max_r0 > 0.0) {
            return Err(Error::param(
                "network",
                "half_spacing_km and d_max_r0 must be positive",
            ));
        }
        self.traffic.chain()?;
        self.system.validate()?;
        if self.pilots.length == 0 {
            return Err(Error::param("pilots.length", "must be at least 1"));
        }
        if self.pilots.orthonormal && self.pilots.length < self.n_users() {
            return Err(Error::param(
                "pilots.orthonormal",
                format!("L = {} < N = {}", self.pilots.length, self.n_users()),
            ));
        }
        crate::window::make_schedule(
            self.window.frames,
            self.window.t_w,
            self.window.delta_w,
            self.window.target_offset,
        )?;
        self.inference.validate()?;
        let f = &self.fronthaul;
        if f.budget_bits.is_none() {
            match f.mode {
                FronthaulMode::Qf if !(2..=48).contains(&f.bq) => {
                    return Err(Error::param(
                        "fronthaul.bq",
                        "need 2..=48 bits per complex sample",
                    ));
                }
                FronthaulMode::Df if !(1..=24).contains(&f.bd) => {
                    return Err(Error::param("fronthaul.bd", "need 1..=24 bits per LLR"));
                }
                _ => {}
            }
        }
        if !(f.clip > 0.0) {
            return Err(Error::param("fronthaul.clip", "must be positive"));
        }
        if self.run.trials == 0 {
            return Err(Error::param("run.trials", "must be at least 1"));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::from_table(toml::from_str(s).map_err(|e| Error::parse("config", e.to_string()))?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Loads a file (or a preset when `path` is `None`) and applies
    /// `section.key=value` overrides before validating.
    pub fn load_with_overrides(
        base: Option<&Path>,
        preset: &str,
        overrides: &[String],
    ) -> Result<Self> {
        let mut table = match base {
            Some(p) => toml::from_str::<toml::Table>(&std::fs::read_to_string(p)?)
                .map_err(|e| Error::parse(p.display().to_string(), e.to_string()))?,
            None => Self::preset(preset)?.to_table()?,
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("config", e.to_string()))
    }

    fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::parse("config", e.to_string()))
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let c: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::parse("config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Returns a copy with one `section.key=value` override applied.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let mut table = self.to_table()?;
        apply_override(&mut table, assignment)?;
        Self::from_table(table)
    }
}

/// Sets `section.key` in a TOML table from `section.key=value`. The value is
/// parsed as a TOML value and falls back to a string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::parse("override", format!("`{assignment}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::parse("override", format!("`{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
