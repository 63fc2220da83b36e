use clap::Parser;
use lam_diffusion::cli::{run, Cli};

fn main() {
    match run(&Cli::parse()) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("ERROR:{}: {e}", e.kind());
            std::process::exit(e.exit_code());
        }
    }
}
