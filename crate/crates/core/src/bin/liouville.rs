use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use liouville_sphere::cli::{self, Command, Overrides};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Verb {
    Analyze,
    Solve,
    Radial,
    Onofri,
    Blowup,
    Morse,
}

impl From<Verb> for Command {
    fn from(v: Verb) -> Self {
        match v {
            Verb::Analyze => Command::Analyze,
            Verb::Solve => Command::Solve,
            Verb::Radial => Command::Radial,
            Verb::Onofri => Command::Onofri,
            Verb::Blowup => Command::Blowup,
            Verb::Morse => Command::Morse,
        }
    }
}

/// Singular Liouville equations on the round sphere: degree tables,
/// solves, radial reductions, Onofri probes, blow-up and Morse analysis.
#[derive(Debug, Parser)]
#[command(name = "liouville", version)]
struct Args {
    verb: Verb,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output`, default ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every randomized step (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to LIOUVILLE_THREADS, then the config.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { cli::EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let overrides = Overrides { out: args.out, seed: args.seed, threads: args.threads };
    let threads = std::env::var(cli::THREADS_ENV).ok();
    let setup = cli::RunConfig::load(&args.config)
        .and_then(|c| cli::resolve_threads(overrides.threads, threads.as_deref(), c.threads))
        .and_then(cli::configure_threads);
    if let Err(e) = setup {
        eprintln!("error: {e}");
        return ExitCode::from(cli::exit_code(&e) as u8);
    }
    match cli::run(args.verb.into(), &args.config, &overrides) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", outcome.report.display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
