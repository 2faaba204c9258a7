use clap::Parser;

fn main() {
    let cli = pairwalk_cli::Cli::parse();
    std::process::exit(pairwalk_cli::run(&cli));
}
