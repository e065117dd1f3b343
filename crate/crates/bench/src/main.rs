use clap::Parser;
use sls_bench::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
