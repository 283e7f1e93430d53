use clap::Parser;

fn main() {
    let cli = dmu::cli::Cli::parse();
    if let Err(e) = dmu::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
