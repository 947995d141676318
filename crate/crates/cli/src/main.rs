use clap::Parser;

fn main() {
    let cli = grab_cli::Cli::parse();
    if let Err(e) = grab_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
