use clap::Parser;

fn main() {
    let cli = formation_cli::Cli::parse();
    match formation_cli::execute(&cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(1);
        }
    }
}
