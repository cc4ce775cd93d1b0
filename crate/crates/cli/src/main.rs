mod args;
mod commands;
mod context;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Explain(a) => commands::explain(a),
        Command::Global(a) => commands::global(a),
        Command::Whatif(a) => commands::whatif(a),
        Command::Stability(a) => commands::stability(a),
        Command::Train(a) => commands::train(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
