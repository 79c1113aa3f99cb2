use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use puad::cli::{cmd_contour, cmd_eval, cmd_generate, cmd_sweep, cmd_train, SweepKind};
use puad::error::{Error, Result};

#[derive(Parser)]
#[command(
    name = "puad",
    about = "Positive-unlabeled anomaly detection experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_set(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKindArg {
    Alpha,
    Contamination,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a contaminated split and write its CSV files.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Override one config key, e.g. --set alpha=0.2 (repeatable).
        #[arg(long = "set", value_parser = parse_set)]
        set: Vec<(String, String)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a detector on a generated data directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_parser = parse_set)]
        set: Vec<(String, String)>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model on a test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train/evaluate across alpha values or contamination counts.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKindArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_parser = parse_set)]
        set: Vec<(String, String)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a score grid for a 2-D model.
    Contour {
        #[arg(long)]
        model: PathBuf,
        /// x0,x1,y0,y1
        #[arg(long, allow_hyphen_values = true)]
        bounds: String,
        /// NX,NY grid resolution
        #[arg(long)]
        resolution: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_bounds(s: &str) -> Result<(f64, f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad bounds value {v:?}")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 4 {
        return Err(Error::Config("bounds must be x0,x1,y0,y1".into()));
    }
    Ok((parts[0], parts[1], parts[2], parts[3]))
}

fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad resolution value {v:?}")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 2 {
        return Err(Error::Config("resolution must be NX,NY".into()));
    }
    Ok((parts[0], parts[1]))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, set, out } => cmd_generate(&config, &set, &out),
        Command::Train {
            config,
            set,
            data,
            out,
        } => cmd_train(&config, &set, &data, &out),
        Command::Eval { model, data, out } => cmd_eval(&model, &data, &out),
        Command::Sweep {
            kind,
            config,
            set,
            out,
        } => {
            let kind = match kind {
                SweepKindArg::Alpha => SweepKind::Alpha,
                SweepKindArg::Contamination => SweepKind::Contamination,
            };
            cmd_sweep(kind, &config, &set, &out)
        }
        Command::Contour {
            model,
            bounds,
            resolution,
            out,
        } => {
            let bounds = parse_bounds(&bounds)?;
            let resolution = parse_resolution(&resolution)?;
            cmd_contour(&model, bounds, resolution, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
