use clap::Parser;
use linscale::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("linscale: {e}");
        std::process::exit(e.exit_code());
    }
}
