use clap::Parser;

fn main() {
    let cli = rankood_cli::Cli::parse();
    if let Err(e) = rankood_cli::run(&cli) {
        eprintln!("rankood: {e}");
        std::process::exit(e.exit_code());
    }
}
