use clap::Parser;

fn main() {
    std::process::exit(adsprop::cli::main_with(adsprop::cli::Cli::parse()));
}
