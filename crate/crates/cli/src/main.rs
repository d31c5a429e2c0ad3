use clap::Parser;

fn main() {
    let cli = equivquad::Cli::parse();
    if let Err(e) = equivquad::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
