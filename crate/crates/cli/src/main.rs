use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use trustrep_cli::output::{to_json, write_bundle};
use trustrep_cli::{run, Command, Flags, Format, RunConfig, RunError};

#[derive(Debug, Parser)]
#[command(
    name = "trustrep",
    version,
    about = "Reputation bounds and equilibrium construction for repeated trust games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; the canonical instance when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulated paths per type.
    #[arg(long, global = true)]
    paths: Option<u64>,
    #[arg(long, global = true)]
    horizon: Option<u64>,
    /// Output directory; the report goes to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Rational arithmetic.
    #[arg(long, global = true)]
    exact: bool,
    /// Exploration depth for state audits.
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Full traces to write per type.
    #[arg(long, global = true)]
    traces: Option<u64>,
}

fn execute(cli: &Cli) -> Result<i32, RunError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::canonical(),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.seed0 = s;
    }
    if let Some(n) = cli.paths {
        cfg.experiment.n_paths = n;
    }
    if let Some(h) = cli.horizon {
        cfg.experiment.horizon = h;
    }
    if let Some(d) = &cli.out {
        cfg.output.dir = Some(d.clone());
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if cfg.experiment.n_paths == 0 || cfg.experiment.horizon == 0 {
        return Err(RunError::Config(trustrep_cli::ConfigError::Invalid(
            "paths and horizon must be positive".into(),
        )));
    }
    let flags = Flags {
        exact: cli.exact,
        depth: cli.depth,
        traces: cli.traces,
    };
    let bundle = run(cli.command, &cfg, &flags)?;
    match &cfg.output.dir {
        Some(dir) => {
            let files = write_bundle(&bundle, dir, cfg.output.format)?;
            println!(
                "{}: {} ({} files in {})",
                bundle.subcommand,
                if bundle.passed { "pass" } else { "fail" },
                files.len(),
                dir.display()
            );
        }
        None => print!("{}", to_json(&bundle)),
    }
    Ok(bundle.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            print!("{}", to_json(&e.to_json()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
