//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{dump_config, load_config, preset, PRESETS};
use crate::error::{NrhcError, Result};
use crate::estimator::{run, tail_metrics, DriveMode, EstimatorConfig};
use crate::model::ModelRegistry;
use crate::trace::write_trace;

/// Default output directory for traces when `--out` is not given.
pub const OUT_DIR_ENV: &str = "NRHC_OUT_DIR";

/// Start of the window summarized by the printed metrics.
const METRICS_FROM: f64 = 5.0;

#[derive(Debug, Parser)]
#[command(name = "nrhc", version, about = "Receding horizon parameter estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an estimation and write its trace
    Run(RunArgs),
    /// Check a config file
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List built-in presets
    Presets,
    /// Print a preset or config file in the config format
    Dump(Source),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Trace output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured end time, in seconds
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    drive_mode: Option<DriveMode>,
}

impl Source {
    fn load(&self) -> Result<(String, EstimatorConfig)> {
        match (&self.preset, &self.config) {
            (Some(name), _) => Ok((name.clone(), preset(name)?)),
            (None, Some(path)) => {
                let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
                Ok((stem, load_config(path)?))
            }
            (None, None) => unreachable!("clap enforces one source"),
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn main<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return e.exit_code() as u8;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                let _ = writeln!(err, "  caused by: {cause}");
                source = cause.source();
            }
            1
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    let stdout_err = |e| NrhcError::io("<stdout>", e);
    match command {
        Command::Presets => {
            for name in PRESETS {
                writeln!(out, "{name}").map_err(stdout_err)?;
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            writeln!(out, "ok: {} (model {})", config.display(), cfg.model_name).map_err(stdout_err)?;
        }
        Command::Dump(source) => {
            let (_, cfg) = source.load()?;
            write!(out, "{}", dump_config(&cfg)).map_err(stdout_err)?;
        }
        Command::Run(args) => run_command(args, out)?,
    }
    Ok(())
}

fn run_command(args: RunArgs, out: &mut dyn Write) -> Result<()> {
    let (label, mut cfg) = args.source.load()?;
    if let Some(t_end) = args.t_end {
        cfg.t_end = t_end;
    }
    if let Some(mode) = args.drive_mode {
        cfg.drive_mode = mode;
    }
    let model = ModelRegistry::default().get(&cfg.model_name)?;
    cfg.validate(&model)?;

    let path = match args.out {
        Some(p) => p,
        None => {
            let dir = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
            dir.join(format!("{label}_trace.csv"))
        }
    };

    let started = Instant::now();
    let trace = run(&cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    write_trace(&trace, model.state_dim(), model.param_dim(), &path)?;

    let mut lines = vec![
        format!("model={}", cfg.model_name),
        format!("drive_mode={}", cfg.drive_mode),
        format!("steps={}", trace.len()),
        format!("trace={}", path.display()),
        format!("runtime_s={elapsed:.3}"),
    ];
    if let Some(last) = trace.last() {
        lines.push(format!("final_e_norm={:e}", last.e.norm()));
        lines.push(format!("final_F_norm={:e}", last.f_norm));
        let from = if last.t > METRICS_FROM { METRICS_FROM } else { 0.0 };
        let m = tail_metrics(&trace, from)?;
        lines.push(format!("window_from={from}"));
        lines.push(format!("e_rms={:e}", m.e_rms));
        lines.push(format!("e_max={:e}", m.e_max));
        for (j, (rms, max)) in m.theta_err_rms.iter().zip(&m.theta_err_max).enumerate() {
            lines.push(format!("theta_err_{}_rms={rms:e}", j + 1));
            lines.push(format!("theta_err_{}_max={max:e}", j + 1));
        }
        lines.push(format!("F_norm_max={:e}", m.f_norm_max));
    }
    for line in lines {
        writeln!(out, "{line}").map_err(|e| NrhcError::io("<stdout>", e))?;
    }
    Ok(())
}
