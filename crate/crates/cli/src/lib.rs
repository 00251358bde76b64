//! The `duet` command line and the live session server.

pub mod args;
pub mod commands;
pub mod error;
pub mod server;
pub mod settings;

pub use args::{Cli, Command};
pub use error::CliError;
pub use settings::Settings;

/// Run one parsed command line, returning what it prints on success.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let settings = Settings::load(
        cli.common.config.as_deref(),
        std::env::vars(),
        cli.common.seed,
        &cli.common.overrides,
    )?;
    match &cli.command {
        Command::Extract(a) => commands::extract(a, &settings),
        Command::Train(a) => commands::train_model(a, &settings),
        Command::Evaluate(a) => commands::evaluate_model(a, &settings),
        Command::Replay(a) => commands::replay(a, &settings),
        Command::Serve(a) => commands::serve(a, &settings),
        Command::Analyze(a) => commands::analyze_beats(a, &settings),
        Command::SimulateFeedback(a) => commands::simulate_feedback(a, &settings),
    }
}

/// CPU model, logical core count and OS, for timing reports.
pub fn hardware_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown CPU".into());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{cpu}, {cores} logical cores, {} {}",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}
