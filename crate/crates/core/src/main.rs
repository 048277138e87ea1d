use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use excess_noise::cli::{
    load_config, output_csv, run_selftest, run_solve, run_sweep, run_validate, sweep_csv, to_json,
    Status,
};
use excess_noise::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "excess-noise",
    version,
    about = "Quasi-mode excess-noise factor solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Solve a scenario for each value of one numeric config field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path of the field, e.g. `loss.strength`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Solve and check the noise dynamics against the moment equations.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Run the seeded invariant suite on built-in fixtures.
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Io(_) | Error::InvalidInput(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn parse_values(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| {
                    Error::InvalidInput(format!("sweep value `{s}` is not a finite number"))
                })
        })
        .collect()
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Solve {
            config,
            out,
            format,
        } => {
            let output = run_solve(&load_config(&config)?)?;
            let text = match format {
                FormatArg::Json => to_json(&output),
                FormatArg::Csv => output_csv(&output),
            };
            emit(&text, out.as_ref())?;
            Ok(0)
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
            format,
        } => {
            let config = load_config(&config)?;
            let rows = run_sweep(&config, &param, &parse_values(&values)?)?;
            let text = match format {
                FormatArg::Json => to_json(&rows),
                FormatArg::Csv => sweep_csv(&rows),
            };
            emit(&text, out.as_ref())?;
            Ok(0)
        }
        Command::Validate {
            config,
            out,
            format,
        } => {
            let output = run_validate(&load_config(&config)?)?;
            let text = match format {
                FormatArg::Json => to_json(&output),
                FormatArg::Csv => output_csv(&output),
            };
            emit(&text, out.as_ref())?;
            let failed = output
                .dynamics
                .as_ref()
                .is_some_and(|d| d.status == Status::Fail);
            Ok(if failed { EXIT_VALIDATION } else { 0 })
        }
        Command::Selftest { out } => {
            let report = run_selftest()?;
            emit(&to_json(&report), out.as_ref())?;
            Ok(if report.passed { 0 } else { EXIT_VALIDATION })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
