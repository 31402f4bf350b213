use std::process::ExitCode;

use clap::Parser;
use diqpq::cli::{execute, Cli, EXIT_INVALID};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(run) => {
            if let Some(text) = &run.stdout {
                print!("{text}");
            }
            for f in &run.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::from(run.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
