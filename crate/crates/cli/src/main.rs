use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurolin::verify::Fault;
use neurolin_cli::{format_check, report, run, verify, CliError, OUTPUT_ROOT_VAR};

#[derive(Parser)]
#[command(name = "neurolin", version, about = "Neural-network solver for huge structured linear systems")]
struct Cli {
    /// Worker threads for batch evaluation. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one experiment described by a TOML file.
    Run {
        config: PathBuf,
        /// Root for relative output directories.
        #[arg(long, env = OUTPUT_ROOT_VAR)]
        output_root: Option<PathBuf>,
        /// Suppress progress lines.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Check the matrix-free operators and gradients against dense references.
    Verify {
        /// Corrupt the Poisson factor diagonal by this amount first.
        #[arg(long, hide = true)]
        inject_fault: Option<f64>,
    },
    /// Summarize a history CSV written by `run`.
    Report { csv: PathBuf },
}

/// Prints to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output_root,
            quiet,
        } => run(&config, cli.threads, output_root.as_deref(), !quiet).map(|r| {
            emit(&serde_json::to_string_pretty(&r).expect("report serializes"));
        }),
        Command::Verify { inject_fault } => {
            let fault = inject_fault.map_or(Fault::None, Fault::PoissonDiagonal);
            let (results, status) = verify(fault);
            for c in &results {
                eprintln!("{}", format_check(c));
            }
            emit(&serde_json::to_string_pretty(&results).expect("results serialize"));
            status
        }
        Command::Report { csv } => File::open(&csv)
            .map_err(|e| CliError::Io(format!("{}: {e}", csv.display())))
            .and_then(|f| report(BufReader::new(f)))
            .map(|text| emit(text.trim_end())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
