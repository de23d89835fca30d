//! One-dimensional parameter sweeps written as resumable CSV tables.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use super::config::ExperimentConfig;
use super::trials::{run_trials, MetricsReport};
use crate::{Error, Result};

/// Version tag of the sweep CSV layout.
pub const SWEEP_CSV_VERSION: &str = "massact-sweep v1";
pub const SWEEP_COLUMNS: &str =
    "axis,value,mode,fronthaul,trials_ok,failures,feasible,edr,edr_ci,nmse_db,nmse_ci_db,mean_iterations,frame_edr,frame_nmse_db";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Pilot length.
    L,
    Beta,
    Alpha,
    /// Fronthaul bits per AP per frame.
    B,
    /// Antennas per AP.
    M,
    /// Cooperation radius in units of `r0`.
    DMax,
    Tw,
    /// LLR decision threshold.
    Iota,
}

impl Axis {
    pub const ALL: [Axis; 8] = [
        Axis::L,
        Axis::Beta,
        Axis::Alpha,
        Axis::B,
        Axis::M,
        Axis::DMax,
        Axis::Tw,
        Axis::Iota,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::L => "L",
            Axis::Beta => "beta",
            Axis::Alpha => "alpha",
            Axis::B => "B",
            Axis::M => "M",
            Axis::DMax => "d_max",
            Axis::Tw => "T_w",
            Axis::Iota => "iota",
        }
    }

    /// `config` with this axis set to `value`. Integer axes reject fractional
    /// values. Sweeping `T_w` shrinks the step and target offset when they no
    /// longer fit.
    pub fn apply(self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let int = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 && value < 1e15 {
                Ok(value as usize)
            } else {
                Err(Error::param(
                    "sweep value",
                    format!("{value} is not a count for axis {}", self.name()),
                ))
            }
        };
        let mut c = config.clone();
        match self {
            Axis::L => c.pilots.length = int()?,
            Axis::Beta => c.traffic.beta = value,
            Axis::Alpha => c.traffic.alpha = Some(value),
            Axis::B => c.fronthaul.budget_bits = Some(int()? as u64),
            Axis::M => c.system.antennas_per_ap = int()?,
            Axis::DMax => c.network.d_max_r0 = value,
            Axis::Tw => {
                let w = &mut c.window;
                w.t_w = int()?;
                w.delta_w = w.delta_w.min(w.t_w);
                w.target_offset = w.target_offset.min(w.t_w.saturating_sub(w.delta_w));
            }
            Axis::Iota => c.inference.threshold = value,
        }
        c.validate()?;
        Ok(c)
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', '-'], "");
        Axis::ALL
            .into_iter()
            .find(|a| a.name().to_ascii_lowercase().replace('_', "") == key)
            .ok_or_else(|| Error::param("axis", format!("unknown axis `{s}`")))
    }
}

/// FNV-1a digest of the configuration, used to refuse resuming a table that
/// was produced by a different configuration.
pub fn config_fingerprint(config: &ExperimentConfig) -> Result<String> {
    let text = config.to_toml_string()?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

fn header(config: &ExperimentConfig, axis: Axis) -> Result<[String; 2]> {
    Ok([
        format!("# {SWEEP_CSV_VERSION}"),
        format!(
            "# axis={} config={}",
            axis.name(),
            config_fingerprint(config)?
        ),
    ])
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// One CSV line for a finished sweep point.
pub fn format_row(axis: Axis, value: f64, config: &ExperimentConfig, r: &MetricsReport) -> String {
    let mut s = String::new();
    let mode = format!("{:?}", config.inference.mode).to_lowercase();
    let fronthaul = format!("{:?}", config.fronthaul.mode).to_lowercase();
    write!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        axis.name(),
        value,
        mode,
        fronthaul,
        r.trials_ok,
        r.failures.len(),
        r.feasible,
        r.edr,
        r.edr_ci,
        r.nmse_db,
        r.nmse_ci_db,
        r.mean_iterations,
        join(&r.frame_edr),
        join(&r.frame_nmse_db)
    )
    .expect("writing to a String cannot fail");
    s
}

/// Runs one report per value and appends a row per value to `path`. Rows
/// already present in an existing table with a matching header are skipped.
/// Returns the reports of the points that were run.
pub fn sweep(
    config: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
    path: &Path,
) -> Result<Vec<(f64, MetricsReport)>> {
    let head = header(config, axis)?;
    let mut done = Vec::new();
    if path.exists() {
        let lines: Vec<String> = BufReader::new(File::open(path)?)
            .lines()
            .collect::<std::io::Result<_>>()?;
        if lines.len() < 3
            || lines[0] != head[0]
            || lines[1] != head[1]
            || lines[2] != SWEEP_COLUMNS
        {
            return Err(Error::parse(
                path.display().to_string(),
                "existing table has a different version, axis or configuration",
            ));
        }
        for line in &lines[3..] {
            let v = line
                .split(',')
                .nth(1)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::parse(path.display().to_string(), format!("bad row `{line}`"))
                })?;
            done.push(v);
        }
    } else {
        let mut f = File::create(path)?;
        writeln!(f, "{}\n{}\n{SWEEP_COLUMNS}", head[0], head[1])?;
    }
    let mut out = Vec::new();
    for &v in values {
        if done.contains(&v) {
            continue;
        }
        let c = axis.apply(config, v)?;
        let report = run_trials(&c)?;
        let mut f = OpenOptions::new().append(true).open(path)?;
        writeln!(f, "{}", format_row(axis, v, &c, &report))?;
        done.push(v);
        out.push((v, report));
    }
    Ok(out)
}
