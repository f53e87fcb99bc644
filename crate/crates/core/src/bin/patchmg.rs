use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use patchmg::bench::{cmd_smoother_bench, cmd_solve, cmd_traffic, to_csv_string, RunSpec};
use patchmg::validate::{cmd_validate, ValidateOptions};

#[derive(Parser)]
#[command(name = "patchmg", version, about = "Vertex-patch multigrid benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full multigrid solve with f = 1; writes a JSON report.
    Solve(RunArgs),
    /// Smoother sweep time relative to one operator application; writes CSV.
    SmootherBench(RunArgs),
    /// Simulated cache traffic of one sweep; writes CSV.
    Traffic(RunArgs),
    /// Oracle and invariant suites on small levels.
    Validate(ValidateArgs),
}

/// List-valued flags take comma-separated values, e.g. `--level 4,5,6`.
#[derive(Args)]
struct RunArgs {
    /// Flat key=value file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    ordering: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    cache_lines: Option<String>,
    #[arg(long)]
    line_elems: Option<String>,
    /// Include patch index tables in the traffic model.
    #[arg(long)]
    metadata: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Binary access trace of the last traffic configuration.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

impl RunArgs {
    fn spec(&self) -> patchmg::Result<RunSpec> {
        let mut spec = match &self.config {
            Some(path) => RunSpec::from_config_str(&std::fs::read_to_string(path)?)?,
            None => RunSpec::default(),
        };
        let flags = [
            ("dim", &self.dim),
            ("degree", &self.degree),
            ("level", &self.level),
            ("variant", &self.variant),
            ("ordering", &self.ordering),
            ("batch-size", &self.batch_size),
            ("threads", &self.threads),
            ("tol", &self.tol),
            ("reps", &self.reps),
            ("max-iter", &self.max_iter),
            ("cache-lines", &self.cache_lines),
            ("line-elems", &self.line_elems),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                spec.set(key, v)?;
            }
        }
        if self.metadata {
            spec.metadata = true;
        }
        if let Some(p) = &self.out {
            spec.out = Some(p.clone());
        }
        if let Some(p) = &self.trace_out {
            spec.trace_out = Some(p.clone());
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct ValidateArgs {
    /// Write the report as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    inject_sign_flip: bool,
}

fn emit(out: Option<&Path>, text: &str) -> patchmg::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> patchmg::Result<bool> {
    match cli.command {
        Command::Solve(args) => {
            let spec = args.spec()?;
            let outcome = cmd_solve(&spec)?;
            let text = serde_json::to_string_pretty(&outcome.report).expect("report serializes") + "\n";
            emit(spec.out.as_deref(), &text)?;
            if !outcome.converged {
                eprintln!("patchmg: solve did not converge");
            }
            Ok(outcome.converged)
        }
        Command::SmootherBench(args) => {
            let spec = args.spec()?;
            emit(spec.out.as_deref(), &to_csv_string(&cmd_smoother_bench(&spec)?)?)?;
            Ok(true)
        }
        Command::Traffic(args) => {
            let spec = args.spec()?;
            emit(spec.out.as_deref(), &to_csv_string(&cmd_traffic(&spec)?)?)?;
            Ok(true)
        }
        Command::Validate(args) => {
            let report = cmd_validate(&ValidateOptions { inject_sign_flip: args.inject_sign_flip })?;
            print!("{}", report.to_text());
            if let Some(path) = &args.out {
                let json = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
                std::fs::write(path, json + "\n")?;
            }
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("patchmg: {e}");
            ExitCode::from(2)
        }
    }
}
