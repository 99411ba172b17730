use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use netsor_cli::{run_with_threads, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_with_threads(&cli) {
        Ok(out) => {
            for note in &out.notes {
                eprintln!("{note}");
            }
            let written = match &cli.out {
                Some(path) => std::fs::write(path, &out.csv),
                None => std::io::stdout().write_all(out.csv.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error,Io,{e}");
                return ExitCode::from(2);
            }
            if out.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            print!("{}", e.csv_row());
            ExitCode::from(2)
        }
    }
}
