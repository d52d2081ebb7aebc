use clap::Parser;

fn main() {
    if let Err(e) = mra::cli::run(mra::cli::Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
