mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{AnalyzeCommand, Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train_command(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Analyze { command } => match command {
            AnalyzeCommand::GraphDump(a) => commands::graph_dump_command(a),
            AnalyzeCommand::Distance(a) => commands::distance_command(a),
            AnalyzeCommand::Sweep(a) => commands::sweep_command(a),
        },
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
