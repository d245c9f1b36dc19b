use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use otng_cli::config::Command;

/// Fits, geodesics and metric tensors on one-dimensional parametric families.
#[derive(Debug, Parser)]
#[command(name = "otng", version)]
struct Args {
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match otng_cli::execute(args.command, &args.config, args.seed, args.out.as_deref()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("otng: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
