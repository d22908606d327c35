use clap::Parser;

fn main() {
    let cli = ctxad_cli::Cli::parse();
    if let Err(err) = ctxad_cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(ctxad_cli::exit_code(&err));
    }
}
