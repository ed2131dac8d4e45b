use std::path::PathBuf;
use std::process::ExitCode;

use blockrisk::cli::{self, Command, EngineChoice, Overrides};
use clap::Parser;

/// Time-to-hack and net revenue of a blockchain under attack.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u64>,
    /// Independent random numbers for each sweep arm.
    #[arg(long)]
    no_crn: bool,
    #[arg(long, value_enum, default_value_t = EngineChoice::Both)]
    engine: EngineChoice,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };
    let overrides = Overrides { seed: args.seed, reps: args.reps, no_crn: args.no_crn };
    let result = cli::run(args.command, &text, overrides, args.engine, &args.out);
    match &result {
        Ok(o) if o.validation_passed == Some(false) => eprintln!("validation failed: see {}", args.out.display()),
        Ok(_) => {}
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(cli::exit_code(&result) as u8)
}
