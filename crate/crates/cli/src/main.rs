mod args;
mod commands;
mod data;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn run(cli: &Cli) -> patchspan::Result<()> {
    match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Featurize(a) => commands::featurize(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Score(a) => commands::score(a),
        Command::Eval(a) => commands::eval(a),
        Command::Roc(a) => commands::roc(a),
        Command::Bench(a) => commands::bench(a),
        Command::Shap(a) => commands::shap(a),
        Command::BaselineThemis(a) => commands::themis(a),
        Command::BaselineObjseeker(a) => commands::objseeker(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // every default is materialized so the echo alone reproduces the run
    let echo = serde_json::to_string(&cli.command).expect("arguments serialize");
    eprintln!("config: {{\"jobs\":{},\"command\":{echo}}}", cli.jobs);

    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        eprintln!("error: cannot start worker threads: {e}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
