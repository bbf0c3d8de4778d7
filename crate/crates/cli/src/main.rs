use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tkbundle::{load, max_order_from_env, registry, run, CliError, Overrides};

#[derive(Parser)]
#[command(name = "tkbundle", version, about = "Run higher-order tangent bundle checks from scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks of a scenario file.
    Run {
        scenario: PathBuf,
        /// Override the order of every check.
        #[arg(long = "order", value_name = "K")]
        order: Option<usize>,
        #[arg(long, value_name = "N")]
        samples: Option<usize>,
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
        #[arg(long, value_name = "T")]
        tolerance: Option<f64>,
        /// Write line-delimited JSON records here (`-` for stdout).
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
        /// Run only checks with this name.
        #[arg(long, value_name = "CHECK")]
        only: Option<String>,
    },
    /// List the available checks.
    ListChecks,
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListChecks => {
            print!("{}", registry::listing());
            ExitCode::SUCCESS
        }
        Command::Run {
            scenario,
            order,
            samples,
            seed,
            tolerance,
            json,
            only,
        } => {
            let max_order = match max_order_from_env() {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            if let Some(name) = &only {
                if registry::lookup(name).is_none() {
                    return fail(CliError::Validation {
                        path: "--only".into(),
                        message: format!("unknown check `{name}`"),
                    });
                }
            }
            let overrides = Overrides {
                order,
                samples,
                seed,
                tolerance,
                only,
                max_order,
            };
            let s = match load(&scenario, &overrides) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let report = run(&s);
            match json {
                Some(p) if p.as_os_str() == "-" => print!("{}", report.to_json_lines()),
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, report.to_json_lines()) {
                        return fail(CliError::Io {
                            path: p.display().to_string(),
                            message: e.to_string(),
                        });
                    }
                    print!("{}", report.to_text());
                }
                None => print!("{}", report.to_text()),
            }
            ExitCode::from(report.exit_code() as u8)
        }
    }
}
