use std::process::ExitCode;

use clap::Parser;

use tracelab::cli::{output_dir, run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let config = match cli.into_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let report = match run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let dir = output_dir(&config);
    if let Err(e) = report.write_to(&dir) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(2);
    }
    for (name, verdict) in &report.verdicts {
        println!("{name}: {verdict}");
    }
    println!("wrote {}", dir.display());
    if report.any_failed() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
