use clap::Parser;

fn main() {
    let cli = miocp::cli::Cli::parse();
    std::process::exit(miocp::cli::run(&cli));
}
