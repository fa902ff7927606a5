use std::process::ExitCode;

use clap::Parser;
use spadgate::cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.run() {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spadgate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
