use clap::Parser;

use duet_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("duet: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
