use clap::Parser;
use covdesign::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
