//! `mrsde`: experiment command line for mean-reverting SDE restoration.

mod data;
mod plot;
mod runs;
mod setup;
mod train_cmd;

use clap::{Parser, Subcommand};
use setup::Common;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "mrsde", version, about = "Mean-reverting SDE restoration experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the numerical self-checks and print a pass/fail table.
    Validate(train_cmd::ValidateArgs),
    /// Write seeded train/eval pair datasets.
    MakeData(data::MakeDataArgs),
    /// Simulate the forward process from a clean state.
    Simulate(runs::SimulateArgs),
    /// Run the full reverse process from a degraded state.
    Restore(runs::RestoreArgs),
    /// Remove Gaussian noise by reversing from the matching step.
    Denoise(runs::DenoiseArgs),
    /// Train the noise network.
    Train(train_cmd::TrainArgs),
    /// Score restoration methods on a dataset.
    Eval(data::EvalArgs),
    /// Draw CSV columns as an SVG line chart.
    Plot(plot::PlotArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match &cli.command {
        Command::Validate(a) => train_cmd::validate(c, a),
        Command::MakeData(a) => data::make_data(c, a),
        Command::Simulate(a) => runs::simulate(c, a),
        Command::Restore(a) => runs::restore(c, a),
        Command::Denoise(a) => runs::denoise_cmd(c, a),
        Command::Train(a) => train_cmd::train_cmd(c, a),
        Command::Eval(a) => data::eval(c, a),
        Command::Plot(a) => plot::plot(c, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(setup::exit_code(&err))
        }
    }
}
