use clap::Parser;
use reader_cli::args::Cli;

fn main() {
    if let Err(e) = reader_cli::commands::run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
