use clap::Parser;

fn main() {
    let cli = minerf_cli::Cli::parse();
    if let Err(e) = minerf_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(e.exit_code());
    }
}
