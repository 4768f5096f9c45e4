use std::process::ExitCode;

use clap::Parser;

use toda_chain::cli::Cli;
use toda_chain::{commands, exit_codes};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(exit_codes::VALIDATION);
        }
    };

    let out = commands::out_path(&cli);
    match commands::run(cli) {
        Ok(result) => {
            println!("{}", result.json);
            if let Some(path) = out {
                if let Err(e) = std::fs::write(&path, format!("{}\n", result.json)) {
                    eprintln!("failed to write {}: {e}", path.display());
                    return ExitCode::from(exit_codes::NUMERICAL);
                }
            }
            ExitCode::from(result.code)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
