use clap::Parser;

fn main() {
    let cli = ahtorsion::cli::Cli::parse();
    std::process::exit(ahtorsion::cli::run(&cli));
}
