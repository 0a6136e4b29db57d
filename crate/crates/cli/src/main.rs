use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ncdyadic_cli::{report_dir, run_file, validate_file, CliError, FileKind};

#[derive(Parser)]
#[command(name = "ncdyadic", version, about = "Operator-valued dyadic decomposition experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Validate a measure, Haar system, operator field or shift file.
    Validate { kind: FileKind, file: PathBuf },
    /// Summarize a report directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result: Result<bool, CliError> = match args.command {
        Command::Run { config } => match run_file(&config) {
            Ok(report) => {
                let s = &report.summary;
                println!("{}: {} rows, {} checks, all passed", report.suite, s.rows, s.checks);
                Ok(true)
            }
            Err(e) => Err(e),
        },
        Command::Validate { kind, file } => validate_file(kind, &file).map(|(report, ok)| {
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            ok
        }),
        Command::Report { dir } => report_dir(&dir).map(|(text, ok)| {
            print!("{text}");
            ok
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("ncdyadic: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
