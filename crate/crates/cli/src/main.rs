use clap::Parser;

fn main() {
    let cli = cpspec_cli::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr();
    if let Err(e) = cpspec_cli::run(cli, &mut stdout, &mut stderr) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
