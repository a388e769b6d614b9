use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rydfiber::error::{Error, Result};
use rydfiber::io::pipeline::{self, Figure, Overrides, SpectrumFit};
use rydfiber::io::Preset;
use rydfiber::sim::Execution;
use rydfiber::stark::ALPHA_29S;

#[derive(Parser)]
#[command(name = "rydfiber", version, about = "Rydberg EIT in a hollow-core fiber: simulate, fit, analyze")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; preset defaults fill missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Use expected transmissions instead of photon counting.
    #[arg(long)]
    no_noise: bool,
    /// Hold the optical depth constant.
    #[arg(long)]
    no_loss: bool,
    /// Fixed regime boundary in ms; searched when omitted.
    #[arg(long = "break", value_name = "MS")]
    break_ms: Option<f64>,
    /// Moving-average window in repetitions.
    #[arg(long, value_name = "N")]
    window: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset,
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            no_noise: self.no_noise,
            no_loss: self.no_loss,
            break_ms: self.break_ms,
            window: self.window,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate transmission traces and write traces.csv with a JSON sidecar.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Run detunings serially instead of on the thread pool.
        #[arg(long)]
        serial: bool,
    },
    /// Fit the absorption lineshape to a block-averaged spectrum.
    FitOd(DataArgs),
    /// Fit the three-level transmission to a block-averaged spectrum.
    FitEit(DataArgs),
    /// Fit the two-regime decay at the cut detuning.
    FitDecay(DataArgs),
    /// Convert between level shift (MHz) and electric field (V/cm).
    Stark {
        #[arg(long, conflicts_with = "field")]
        shift: Option<f64>,
        #[arg(long)]
        field: Option<f64>,
        /// Polarizability in MHz cm^2/V^2.
        #[arg(long, default_value_t = ALPHA_29S)]
        alpha: f64,
    },
    /// Write the conveyor transport profile.
    Transport {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Smoothed EIT minus OD transmission map.
    Diffmap(DataArgs),
    /// Regime boundary, decay times and loss-peak shift.
    Regimes(DataArgs),
    /// Smoothed transmission against repetition at the cut detuning.
    Cut(DataArgs),
    /// Run the full pipeline for one figure and write a summary.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Trace CSV; simulated from the configuration when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn run(cmd: Command) -> Result<serde_json::Value> {
    match cmd {
        Command::Simulate { common, serial } => {
            let cfg = pipeline::resolve_config(common.config.as_deref(), &common.overrides())?;
            let exec = if serial { Execution::Serial } else { Execution::Parallel };
            let (path, ts) = pipeline::cmd_simulate(&cfg, exec)?;
            Ok(json!({
                "traces": path,
                "n_detunings": ts.n_detunings(),
                "n_reps": ts.n_reps(),
                "slots": ts.n_slots(),
            }))
        }
        Command::FitOd(a) => fit_spectrum(a, SpectrumFit::Od),
        Command::FitEit(a) => fit_spectrum(a, SpectrumFit::Eit),
        Command::FitDecay(a) => {
            let cfg = pipeline::resolve_config(a.common.config.as_deref(), &a.common.overrides())?;
            let (path, out) = pipeline::cmd_regimes(a.data.as_deref(), &cfg, "fit_decay.json")?;
            Ok(json!({ "output": path, "breakpoint": out.breakpoint, "eit": out.eit, "od": out.od }))
        }
        Command::Stark { shift, field, alpha } => Ok(serde_json::to_value(pipeline::cmd_stark(shift, field, alpha)?)
            .map_err(|e| Error::Format(e.to_string()))?),
        Command::Transport { common, samples } => {
            let cfg = pipeline::resolve_config(common.config.as_deref(), &common.overrides())?;
            let (path, d) = pipeline::cmd_transport(&cfg.output.dir, samples)?;
            Ok(json!({ "output": path, "displacement_mm": d * 1e3 }))
        }
        Command::Diffmap(a) => {
            let cfg = pipeline::resolve_config(a.common.config.as_deref(), &a.common.overrides())?;
            Ok(json!({ "output": pipeline::cmd_diffmap(a.data.as_deref(), &cfg)? }))
        }
        Command::Regimes(a) => {
            let cfg = pipeline::resolve_config(a.common.config.as_deref(), &a.common.overrides())?;
            let (path, out) = pipeline::cmd_regimes(a.data.as_deref(), &cfg, "regimes.json")?;
            Ok(json!({ "output": path, "breakpoint": out.breakpoint, "warnings": out.warnings }))
        }
        Command::Cut(a) => {
            let cfg = pipeline::resolve_config(a.common.config.as_deref(), &a.common.overrides())?;
            Ok(json!({ "output": pipeline::cmd_cut(a.data.as_deref(), &cfg)? }))
        }
        Command::Reproduce { figure, common } => {
            if common.config.is_some() {
                log::warn!("reproduce uses the built-in presets; --config is ignored");
            }
            let (dir, summary) = pipeline::cmd_reproduce(figure, &common.overrides())?;
            print!("{}", summary.to_table());
            Ok(json!({ "output": dir }))
        }
    }
}

fn fit_spectrum(a: DataArgs, kind: SpectrumFit) -> Result<serde_json::Value> {
    let cfg = pipeline::resolve_config(a.common.config.as_deref(), &a.common.overrides())?;
    let (path, out) = pipeline::cmd_fit_spectrum(a.data.as_deref(), kind, &cfg)?;
    Ok(json!({ "output": path, "fit": out }))
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({
        "error": e.root().to_string(),
        "exit_code": e.exit_code(),
        "stages": e.stages(),
    });
    if let Error::Validation(fields) = e.root() {
        v["fields"] = json!(fields);
    }
    v
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&error_json(&e)).unwrap_or_default());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
