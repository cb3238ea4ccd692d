//! Command-line driver: decay curves, sweeps, trace ensembles, engine
//! comparison, fitting and sequence inspection.

mod analysis;
mod config;
mod curves;
mod output;
mod sweep;
mod traces;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use config::{check_format, parse_engines, resolve, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "telegraph-spin", version, about = "Qubit coherence under random telegraph noise")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "TELEGRAPH_SPIN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the simulation commands. Each overrides the matching
/// config-file value.
#[derive(Args, Debug, Default, Clone)]
struct Common {
    /// TOML config, or an earlier output whose embedded config is replayed.
    #[arg(long)]
    config: Option<PathBuf>,
    /// analytic, mc, lindblad, a comma-separated list, or all.
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
    /// Fluctuator T1 (us).
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    hyperfine_mhz: Option<f64>,
    /// Pulse spacing (ns).
    #[arg(long)]
    tau_ns: Option<f64>,
    /// Total number of pulses.
    #[arg(long)]
    pulses: Option<usize>,
    #[arg(long)]
    pulse_width_ns: Option<f64>,
    /// qubit, dq, sq+ or sq-.
    #[arg(long, allow_hyphen_values = true)]
    drive: Option<String>,
    /// Pulse sequence, e.g. "KDDXY16" or "tau/2-(pi)_x-tau/2".
    #[arg(long)]
    seq: Option<String>,
    /// Monte Carlo trajectories.
    #[arg(long)]
    traj: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// 0, +1, -1 or eq.
    #[arg(long, allow_hyphen_values = true)]
    init: Option<String>,
    /// Last sample time (us).
    #[arg(long)]
    t_max_us: Option<f64>,
    /// Number of sample times.
    #[arg(long)]
    points: Option<usize>,
    /// Explicit sample times (us), comma separated.
    #[arg(long, value_delimiter = ',')]
    times_us: Option<Vec<f64>>,
    /// Output file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($path:ident).+) => {
                if let Some(v) = &self.$flag {
                    c.$($path).+ = v.clone().into();
                }
            };
        }
        set!(engine => engine.engine);
        set!(levels => model.levels);
        set!(t1 => model.t1);
        set!(hyperfine_mhz => model.hyperfine_mhz);
        set!(init => model.init);
        set!(tau_ns => sequence.tau_ns);
        set!(pulses => sequence.pulses);
        set!(pulse_width_ns => sequence.pulse_width_ns);
        set!(drive => sequence.drive);
        set!(seq => sequence.seq);
        set!(traj => engine.traj);
        set!(seed => engine.seed);
        set!(format => output.format);
        set!(times_us => grid.times_us);
        set!(points => grid.points);
        set!(t_max_us => grid.t_max_us);
        check_format(&c)?;
        Ok(c)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coherence curve(s) from the selected engines.
    Decay {
        #[command(flatten)]
        common: Common,
        /// Attach a fit to each curve: exp (envelope) or osc (real part).
        #[arg(long)]
        fit: Option<String>,
    },
    /// Effective coherence time against pulse spacing.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Pulse spacings (ns), comma separated.
        #[arg(long, value_delimiter = ',')]
        taus_ns: Option<Vec<f64>>,
    },
    /// Generate or replay an engineered trace ensemble.
    Traces {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_traces: Option<usize>,
        #[arg(long)]
        horizon_us: Option<f64>,
        /// Flip pulse length (ns).
        #[arg(long)]
        tp_ns: Option<f64>,
        /// Replay a saved ensemble instead of generating one.
        #[arg(long)]
        load: Option<PathBuf>,
        /// Write the ensemble as line-delimited JSON.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Cross-check two or more engines; exits with status 3 beyond tolerance.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tol_abs: Option<f64>,
        #[arg(long)]
        tol_se: Option<f64>,
    },
    /// Fit a column of a CSV table.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "t_us")]
        time_column: String,
        #[arg(long, default_value = "abs")]
        column: String,
        /// Keep only rows of this engine.
        #[arg(long)]
        select_engine: Option<String>,
        /// exp or osc.
        #[arg(long, default_value = "exp")]
        model: String,
        /// Second dataset: compare joint models with T2 = r·T1.
        #[arg(long)]
        joint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Parse, expand and validate a pulse sequence.
    ParseSeq {
        #[arg(long)]
        seq: String,
        #[arg(long, default_value_t = 200.0)]
        tau_ns: f64,
        #[arg(long, default_value_t = 0.0)]
        pulse_width_ns: f64,
        #[arg(long, default_value = "qubit", allow_hyphen_values = true)]
        drive: String,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Coupling used for the decoupling advisory.
        #[arg(long)]
        hyperfine_mhz: Option<f64>,
        /// Report file (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the expanded schedule as text.
        #[arg(long)]
        schedule_out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Decay { common, fit } => {
            let mut c = common.config()?;
            if fit.is_some() {
                c.output.fit = fit;
            }
            let r = resolve(&mut c)?;
            curves::decay(&c, &r)?.emit(&c.output.format, common.out.as_deref())?;
        }
        Command::Sweep { common, taus_ns } => {
            let mut c = common.config()?;
            if let Some(t) = taus_ns {
                c.sweep.taus_ns = t;
            }
            sweep::sweep(&c)?.emit(&c.output.format, common.out.as_deref())?;
        }
        Command::Traces {
            common,
            n_traces,
            horizon_us,
            tp_ns,
            load,
            save,
        } => {
            let mut c = common.config()?;
            if let Some(n) = n_traces {
                c.traces.n_traces = n;
            }
            if horizon_us.is_some() {
                c.traces.horizon_us = horizon_us;
            }
            if let Some(t) = tp_ns {
                c.traces.t_p_ns = t;
            }
            let doc = traces::traces(&mut c, load.as_deref(), save.as_deref())?;
            doc.emit(&c.output.format, common.out.as_deref())?;
        }
        Command::Compare { common, tol_abs, tol_se } => {
            let mut c = common.config()?;
            if let Some(t) = tol_abs {
                c.compare.tol_abs = t;
            }
            if let Some(t) = tol_se {
                c.compare.tol_se = t;
            }
            if parse_engines(&c.engine.engine)?.len() < 2 {
                Cli::command()
                    .error(ErrorKind::ArgumentConflict, "compare needs at least two engines (e.g. --engine analytic,lindblad)")
                    .exit();
            }
            let r = resolve(&mut c)?;
            let (doc, ok) = curves::compare(&c, &r)?;
            doc.emit(&c.output.format, common.out.as_deref())?;
            if !ok {
                eprintln!("compare: deviation beyond tolerance");
                return Ok(ExitCode::from(3));
            }
        }
        Command::Fit {
            input,
            time_column,
            column,
            select_engine,
            model,
            joint,
            out,
            format,
        } => {
            let opts = analysis::FitOptions {
                input: input.display().to_string(),
                time_column,
                column,
                select_engine,
                model,
                joint: joint.map(|p| p.display().to_string()),
            };
            analysis::fit(&opts)?.emit(&format, out.as_deref())?;
        }
        Command::ParseSeq {
            seq,
            tau_ns,
            pulse_width_ns,
            drive,
            repeats,
            hyperfine_mhz,
            out,
            schedule_out,
            format,
        } => {
            let opts = analysis::SeqOptions {
                seq,
                tau_ns,
                pulse_width_ns,
                drive,
                repeats,
                hyperfine_mhz,
            };
            let (doc, schedule, ok) = analysis::parse_seq(&opts)?;
            doc.emit(&format, out.as_deref())?;
            if let Some(p) = schedule_out {
                output::write_text(&schedule, Some(&p))?;
            }
            if !ok {
                eprintln!("parse-seq: validation found errors");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
