use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bhl::cli;

#[derive(Parser)]
#[command(name = "bhl", version, about = "Rate experiments for balanced random walks in random environments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in a config file and write its artifacts.
    Run {
        config: PathBuf,
        /// Run directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without computing anything.
    Validate { config: PathBuf },
    /// Re-render the summary of a finished run.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Run { config, out } => cli::run(&config, out.as_deref()).map(|o| {
            print!("{}", cli::render(&o.summary));
            println!("artifacts: {}", o.dir.display());
            o.exit_code
        }),
        Command::Validate { config } => cli::validate(&config).map(|msg| {
            println!("{msg}");
            cli::EXIT_OK
        }),
        Command::Report { run_dir } => cli::report(&run_dir).map(|text| {
            print!("{text}");
            cli::EXIT_OK
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::EXIT_ERROR as u8)
        }
    }
}
