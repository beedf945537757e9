use clap::Parser;
use meshprior_cli::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = run(cli, &mut stdout.lock()) {
        eprintln!("{}", e.line());
        std::process::exit(e.exit_code());
    }
}
