use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaussrde_cli::{execute_with_workers, fixtures, load_report, render, EXIT_FAIL, EXIT_PASS, EXIT_SCHEMA};

#[derive(Parser)]
#[command(name = "gaussrde", version, about = "Densities of RDEs driven by Gaussian rough paths")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output` field.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads. Results do not depend on this value.
        #[arg(long, env = "GAUSSRDE_WORKERS")]
        workers: Option<usize>,
    },
    /// Verify and print a finished run.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print the example configurations.
    ListFixtures {
        /// Write each fixture to `<dir>/<name>.json` instead of printing.
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Run { config, out, workers } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", config.display());
                    return code(EXIT_SCHEMA);
                }
            };
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let done = execute_with_workers(&text, out.as_deref(), workers);
            if let Some(r) = &done.report {
                print!("{}", render(r));
            }
            if done.code != EXIT_PASS {
                eprintln!("{}", done.message);
            }
            code(done.code)
        }
        Command::Report { dir } => match load_report(&dir) {
            Ok((_, report)) => {
                print!("{}", render(&report));
                code(if report.pass { EXIT_PASS } else { EXIT_FAIL })
            }
            Err((c, msg)) => {
                eprintln!("{msg}");
                code(c)
            }
        },
        Command::ListFixtures { write } => {
            for (name, value) in fixtures() {
                let text = serde_json::to_string_pretty(&value).expect("fixture serializes");
                match &write {
                    Some(dir) => {
                        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(format!("{name}.json")), text + "\n")) {
                            eprintln!("{e}");
                            return code(EXIT_FAIL);
                        }
                    }
                    None => println!("# {name}\n{text}\n"),
                }
            }
            code(EXIT_PASS)
        }
    }
}
