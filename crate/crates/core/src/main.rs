use clap::Parser;

fn main() {
    std::process::exit(merg_core::cli::main_with(merg_core::cli::Cli::parse()));
}
