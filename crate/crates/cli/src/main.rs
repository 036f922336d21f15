mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use commands::{CliError, CliResult};
use config::{apply_set, RunConfig, PRESETS};

#[derive(Parser)]
#[command(name = "bimembrane", version, about = "Ordered two-phase Bernoulli free boundary laboratory")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Embedded configuration (see `preset list`).
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Override a config entry, e.g. `--set params.lambda_u=0.6`; repeatable.
    #[arg(long = "set", global = true, value_name = "K=V")]
    sets: Vec<String>,
    /// Output directory; falls back to `output_dir`, then $BIMEMBRANE_OUT, then `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; 0 runs sequentially.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct FieldsArg {
    /// Directory holding u.grid and v.grid; defaults to the output directory.
    #[arg(long, value_name = "DIR")]
    fields: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimise the functional and write the fields.
    Solve,
    /// Extract free boundaries and run every check.
    Diagnose(FieldsArg),
    /// Flatness decay trace at the analysis point.
    Flatness(FieldsArg),
    /// Truncated frequency trace at the analysis point or of a planted profile.
    Frequency(FieldsArg),
    /// Two-membrane or transmission thin limit.
    Linearized,
    /// Embedded configurations.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset's JSON.
    Show { name: String },
}

fn load_config(g: &Global) -> CliResult<(RunConfig, PathBuf)> {
    let mut value: Value = match (&g.config, &g.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("config: {}: invalid JSON: {e}", path.display())))?
        }
        (None, Some(name)) => config::preset(name)?,
        (None, None) => return Err(CliError::Config("config: pass --config PATH or --preset NAME".into())),
    };
    for s in &g.sets {
        apply_set(&mut value, s)?;
    }
    let cfg = RunConfig::from_value(value)?;
    let out = g
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os("BIMEMBRANE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::Preset { action } = &cli.command {
        match action {
            PresetAction::List => {
                for p in PRESETS {
                    println!("{:<24} {}", p.name, p.description);
                }
            }
            PresetAction::Show { name } => {
                let v = config::preset(name)?;
                println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            }
        }
        return Ok(());
    }
    let threads = cli.global.threads.max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    let (cfg, out) = load_config(&cli.global)?;
    let run = commands::prepare(cfg, out)?;
    match &cli.command {
        Command::Solve => commands::cmd_solve(&run),
        Command::Diagnose(f) => commands::cmd_diagnose(&run, f.fields.as_deref()),
        Command::Flatness(f) => commands::cmd_flatness(&run, f.fields.as_deref()),
        Command::Frequency(f) => commands::cmd_frequency(&run, f.fields.as_deref()),
        Command::Linearized => commands::cmd_linearized(&run),
        Command::Preset { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
