use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use massact::fronthaul::{FronthaulMode, UniformQuantizer};
use massact::harness::checks::{oracle_check, se_check, SeCheckConfig};
use massact::harness::trials::trial_seed;
use massact::harness::{run_trials, sweep, Axis, ExperimentConfig, RunManifest};
use massact::netgen::build_hex_network;
use massact::se::SE_CSV_HEADER;
use massact::window::make_schedule;

#[derive(Parser)]
#[command(
    name = "massact",
    version,
    about = "Activity detection and channel estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one network layout.
    GenNet {
        #[command(flatten)]
        common: Common,
        /// Trial index whose layout is written.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run Monte-Carlo trials and write per-frame EDR and NMSE.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one parameter and write one row per value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of L, beta, alpha, B, M, d_max, T_w, iota.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Compare the state evolution with the simulated NMSE on a single cell.
    SeCheck {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 1000)]
        users: usize,
        #[arg(long, default_value_t = 100)]
        pilot_length: usize,
        #[arg(long, default_value_t = 0.05)]
        p_a: f64,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        /// Average the recursion over the prior instead of conditioning on
        /// each trial's channels.
        #[arg(long)]
        prior: bool,
        #[arg(long)]
        no_em: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the denoisers and the chain smoother against exact references.
    OracleCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Run QF and DF over a list of fronthaul budgets.
    QfDfCompare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated budgets in bits per AP per frame.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        budgets: Vec<u64>,
    },
    /// Print the sliding-window schedule.
    Schedule {
        #[command(flatten)]
        common: Common,
    },
    /// Write a quantizer codebook as CSV.
    Codebook {
        #[arg(long)]
        bits: u32,
        #[arg(long, default_value_t = 1.0)]
        input_std: f64,
        #[arg(long, default_value_t = 3.0)]
        clip: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Configuration source plus shortcuts for the most used keys. Any other key
/// is reachable through `--set section.key=value`.
#[derive(Args)]
struct Common {
    /// TOML configuration file; without it the preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `desk` or `paper`.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// `section.key=value`, applied after the file or preset.
    #[arg(long = "set")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Window size T_w.
    #[arg(long)]
    window: Option<usize>,
    /// Sliding step (target sub-window size).
    #[arg(long)]
    step: Option<usize>,
    #[arg(long)]
    target_offset: Option<usize>,
    /// Fronthaul budget B in bits per AP per frame.
    #[arg(long)]
    fronthaul_bits: Option<u64>,
    /// ideal, qf or df.
    #[arg(long)]
    mode: Option<String>,
    /// QF bits per complex sample.
    #[arg(long)]
    bq: Option<u32>,
    /// DF bits per LLR.
    #[arg(long)]
    bd: Option<u32>,
    /// dcs or cs.
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut sets = self.sets.clone();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                sets.push(format!("{k}={v}"));
            }
        };
        push("run.seed", self.seed.map(|v| v.to_string()));
        push("run.trials", self.trials.map(|v| v.to_string()));
        push("window.t_w", self.window.map(|v| v.to_string()));
        push("window.delta_w", self.step.map(|v| v.to_string()));
        push(
            "window.target_offset",
            self.target_offset.map(|v| v.to_string()),
        );
        push(
            "fronthaul.budget_bits",
            self.fronthaul_bits.map(|v| v.to_string()),
        );
        push(
            "fronthaul.mode",
            self.mode
                .as_ref()
                .map(|v| format!("\"{}\"", v.to_lowercase())),
        );
        push("fronthaul.bq", self.bq.map(|v| v.to_string()));
        push("fronthaul.bd", self.bd.map(|v| v.to_string()));
        push(
            "inference.mode",
            self.detector
                .as_ref()
                .map(|v| format!("\"{}\"", v.to_lowercase())),
        );
        push(
            "run.output",
            self.out
                .as_ref()
                .map(|p| format!("{:?}", p.display().to_string())),
        );
        Ok(ExperimentConfig::load_with_overrides(
            self.config.as_deref(),
            &self.preset,
            &sets,
        )?)
    }
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn main() -> Result<()> {
    match run(Cli::parse()) {
        Err(e) if is_broken_pipe(&e) => Ok(()),
        other => other,
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    let pipe = |io: &std::io::Error| io.kind() == std::io::ErrorKind::BrokenPipe;
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(pipe)
            || matches!(c.downcast_ref::<massact::Error>(), Some(massact::Error::Io(io)) if pipe(io))
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenNet { common, trial } => {
            let c = common.load()?;
            let net = &c.network;
            let layout = build_hex_network(
                net.tiers,
                net.users_per_cell,
                net.half_spacing_km,
                net.d_max_km(),
                trial_seed(c.run.seed, trial),
            )?;
            let mut w = writer(c.run.output.as_deref())?;
            layout.write_text(&mut w)?;
            w.flush()?;
        }
        Command::Simulate { common } => {
            let c = common.load()?;
            let start = Instant::now();
            let r = run_trials(&c)?;
            for f in &r.failures {
                eprintln!("trial {} failed: {}", f.trial, f.message);
            }
            let mut w = writer(c.run.output.as_deref())?;
            writeln!(w, "# massact-simulate v1")?;
            writeln!(w, "frame,edr,nmse_db")?;
            for (t, (e, n)) in r.frame_edr.iter().zip(&r.frame_nmse_db).enumerate() {
                writeln!(w, "{t},{},{}", fmt_f(*e), fmt_f(*n))?;
            }
            writeln!(w, "all,{},{}", fmt_f(r.edr), fmt_f(r.nmse_db))?;
            w.flush()?;
            eprintln!(
                "trials {}/{} failures {} feasible {} EDR {:.5} ± {:.5} NMSE {:.2} dB ± {:.2} iterations {:.1}",
                r.trials_ok,
                r.trials_requested,
                r.failures.len(),
                r.feasible,
                r.edr,
                r.edr_ci,
                r.nmse_db,
                r.nmse_ci_db,
                r.mean_iterations
            );
            if let Some(out) = &c.run.output {
                RunManifest::new("simulate", &c, &[out], start.elapsed().as_secs_f64())
                    .write_beside(out)?;
            }
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let c = common.load()?;
            let axis: Axis = axis.parse()?;
            let Some(out) = c.run.output.clone() else {
                bail!("sweep needs --out");
            };
            let start = Instant::now();
            for (v, r) in sweep(&c, axis, &values, &out)? {
                eprintln!(
                    "{}={v}: EDR {:.5} NMSE {:.2} dB failures {}",
                    axis.name(),
                    r.edr,
                    r.nmse_db,
                    r.failures.len()
                );
            }
            RunManifest::new("sweep", &c, &[&out], start.elapsed().as_secs_f64())
                .write_beside(&out)?;
        }
        Command::SeCheck {
            trials,
            users,
            pilot_length,
            p_a,
            iterations,
            draws,
            prior,
            no_em,
            seed,
            out,
        } => {
            let cfg = SeCheckConfig {
                trials,
                users,
                pilot_length,
                p_a,
                iterations,
                draws,
                conditioned: !prior,
                em: !no_em,
                seed,
            };
            let rows = se_check(&cfg)?;
            let mut w = writer(out.as_deref())?;
            writeln!(w, "{SE_CSV_HEADER}")?;
            for r in &rows {
                writeln!(
                    w,
                    "{},{},{}",
                    r.iteration,
                    fmt_f(r.predicted_db),
                    fmt_f(r.measured_db)
                )?;
            }
            w.flush()?;
            let worst = rows
                .iter()
                .map(|r| (r.predicted_db - r.measured_db).abs())
                .fold(0.0, f64::max);
            eprintln!(
                "largest SE gap {worst:.3} dB over {} iterations",
                rows.len()
            );
        }
        Command::OracleCheck { seed, tolerance } => {
            let r = oracle_check(seed)?;
            println!(
                "bg denoiser: {} points, max deviation {:.3e}",
                r.bg_points, r.bg_max_dev
            );
            println!(
                "qf output step: {} points, max deviation {:.3e}",
                r.qf_points, r.qf_max_dev
            );
            println!(
                "chain fusion: {} cases, max deviation {:.3e}",
                r.chain_cases, r.chain_max_dev
            );
            if r.bg_max_dev > tolerance || r.qf_max_dev > tolerance || r.chain_max_dev > 1e-10 {
                bail!("oracle deviation above tolerance");
            }
        }
        Command::QfDfCompare { common, budgets } => {
            let c = common.load()?;
            let start = Instant::now();
            let mut w = writer(c.run.output.as_deref())?;
            writeln!(w, "# massact-qfdf v1")?;
            writeln!(
                w,
                "budget_bits,mode,feasible,trials_ok,failures,edr,edr_ci,nmse_db"
            )?;
            for &b in &budgets {
                for mode in [FronthaulMode::Qf, FronthaulMode::Df] {
                    let mut cb = c.clone();
                    cb.fronthaul.mode = mode;
                    cb.fronthaul.budget_bits = Some(b);
                    let r = run_trials(&cb)?;
                    let name = format!("{mode:?}").to_lowercase();
                    writeln!(
                        w,
                        "{b},{name},{},{},{},{},{},{}",
                        r.feasible,
                        r.trials_ok,
                        r.failures.len(),
                        fmt_f(r.edr),
                        fmt_f(r.edr_ci),
                        fmt_f(r.nmse_db)
                    )?;
                    eprintln!("B={b} {name}: EDR {:.5} feasible {}", r.edr, r.feasible);
                }
            }
            w.flush()?;
            if let Some(out) = &c.run.output {
                RunManifest::new("qf-df-compare", &c, &[out], start.elapsed().as_secs_f64())
                    .write_beside(out)?;
            }
        }
        Command::Schedule { common } => {
            let c = common.load()?;
            let w = &c.window;
            print!(
                "{}",
                make_schedule(w.frames, w.t_w, w.delta_w, w.target_offset)?
            );
        }
        Command::Codebook {
            bits,
            input_std,
            clip,
            out,
        } => {
            let q = UniformQuantizer::new(bits, input_std, clip)?;
            let mut w = writer(out.as_deref())?;
            q.write_codebook_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}
