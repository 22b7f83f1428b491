use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use soac_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let code = match run(&cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            if e.exit_code() == 3 {
                eprintln!("hint: raise --budget, or fall back to the oracle on small inputs");
            }
            e.exit_code()
        }
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
