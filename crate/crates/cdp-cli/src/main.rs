//! `cdp` — command-line driver for the copy-detection-pattern toolkit:
//! dataset synthesis, channel simulation, codebook training, probe
//! authentication and the evaluation harness.

mod commands;
mod config;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdp_core::codebook::BorderMode;
use cdp_core::metrics::MetricKind;

/// Errors split by exit code: usage/validation problems exit 2, runtime
/// failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<cdp_core::Error> for CliError {
    fn from(e: cdp_core::Error) -> Self {
        use cdp_core::Error::*;
        match e {
            Parameter(_) | Dimension(_) | Incompatible(_) | Empty(_) | Format(_) => {
                CliError::Usage(e.to_string())
            }
            Io(_) => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "cdp",
    version,
    about = "Copy detection patterns: simulated printing channel, codebook training and one-class authentication"
)]
struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    /// Size of the worker thread pool (defaults to the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory (falls back to $CDP_OUT_DIR).
    #[arg(long, env = "CDP_OUT_DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random binary templates as PGM files with JSON sidecars.
    Gen {
        /// Number of templates.
        #[arg(long)]
        n: usize,
        /// Template side length in symbols.
        #[arg(long = "L", value_name = "L")]
        size: usize,
        /// Black-symbol probability.
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Base seed; template i uses a stream derived from (seed, i).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Print templates through a channel preset.
    Print {
        /// Directory of template PGM files.
        #[arg(long = "in")]
        input: PathBuf,
        /// Printer preset: A or B.
        #[arg(long)]
        preset: String,
        /// Base noise seed; image i uses a stream derived from (seed, i).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Estimate-and-reprint attack against a directory of acquired codes.
    Attack {
        /// Directory of printed-original PGM files.
        #[arg(long = "in")]
        input: PathBuf,
        /// Preset of the counterfeiter's printer: A or B.
        #[arg(long)]
        reprint: String,
        /// Base noise seed for the reprint pass.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Magnification override for images without sidecar metadata.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Learn a neighborhood-probability codebook from (template, print) pairs.
    Train {
        /// Directory of template PGM files.
        #[arg(long)]
        templates: PathBuf,
        /// Directory of printed originals, pairing with the templates by
        /// sorted file name.
        #[arg(long)]
        printed: PathBuf,
        /// Neighborhood side length (odd).
        #[arg(long, default_value_t = 3)]
        h: usize,
        /// Border strategy: interior or white_pad.
        #[arg(long, default_value = "interior")]
        border: String,
        /// Output codebook JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one probe against its template and decide original vs. fake.
    Auth {
        /// Template PGM file.
        #[arg(long)]
        template: PathBuf,
        /// Probe PGM file (acquired image of unknown authenticity).
        #[arg(long)]
        probe: PathBuf,
        /// Trained codebook JSON.
        #[arg(long)]
        codebook: PathBuf,
        /// Metric: LLS, MSE, PCOR, HAMM or their M- masked variants.
        #[arg(long, default_value = "M-LLS")]
        metric: String,
        /// Decision threshold on the higher-is-original axis (as produced
        /// by `eval` in thresholds.json).
        #[arg(long, allow_hyphen_values = true)]
        threshold: f64,
        /// Attention-mask threshold for masked metrics.
        #[arg(long, default_value_t = 0.25)]
        mu: f64,
        /// Border strategy override (defaults to the codebook's).
        #[arg(long)]
        border: Option<String>,
    },
    /// Run the full two-printer, four-fake evaluation grid.
    Eval {
        /// Experiment config file (flat key = value lines).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Codebook stability versus training-set size.
    Stability {
        /// Experiment config file (flat key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset sizes.
        #[arg(long, default_value = "1,2,5,10,20,50,100", value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Reference corpus size (defaults to the largest subset size).
        #[arg(long)]
        n_reference: Option<usize>,
        /// Random subset draws per size.
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[command(flatten)]
        out: OutDir,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let output = commands::Output { json: cli.json };
    match cli.command {
        Command::Gen {
            n,
            size,
            p,
            seed,
            out,
        } => commands::cmd_gen(&out.out, n, size, p, seed, &output),
        Command::Print {
            input,
            preset,
            seed,
            out,
        } => commands::cmd_print(&input, &out.out, &preset, seed, &output),
        Command::Attack {
            input,
            reprint,
            seed,
            k,
            out,
        } => commands::cmd_attack(&input, &out.out, &reprint, seed, k, &output),
        Command::Train {
            templates,
            printed,
            h,
            border,
            out,
        } => {
            let border: BorderMode = border.parse().map_err(CliError::from)?;
            commands::cmd_train(&templates, &printed, h, border, &out, &output)
        }
        Command::Auth {
            template,
            probe,
            codebook,
            metric,
            threshold,
            mu,
            border,
        } => {
            let metric: MetricKind = metric.parse().map_err(CliError::from)?;
            let border = border
                .map(|b| b.parse::<BorderMode>())
                .transpose()
                .map_err(CliError::from)?;
            commands::cmd_auth(
                &template, &probe, &codebook, metric, threshold, mu, border, &output,
            )
        }
        Command::Eval { config, out } => commands::cmd_eval(&config, &out.out, &output),
        Command::Stability {
            config,
            sizes,
            n_reference,
            repeats,
            out,
        } => {
            let n_reference =
                n_reference.unwrap_or_else(|| sizes.iter().copied().max().unwrap_or(1));
            commands::cmd_stability(&config, &out.out, &sizes, n_reference, repeats, &output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (label, code) = match &err {
                CliError::Usage(_) => ("usage", 2),
                CliError::Runtime(_) => ("runtime", 1),
            };
            if json {
                eprintln!(
                    "{}",
                    serde_json::json!({"status": "error", "kind": label, "message": err.to_string()})
                );
            } else {
                eprintln!("cdp: {label} error: {err}");
            }
            ExitCode::from(code)
        }
    }
}
