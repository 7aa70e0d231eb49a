use clap::Parser;

fn main() {
    let cli = readoutchar::run::Cli::parse();
    std::process::exit(readoutchar::run::run(cli));
}
