use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memsolve::config::{Overrides, RunConfig};
use memsolve::integrate::Method;

mod commands;
mod output;

/// Solve Boolean problems as equilibria of self-organizing logic dynamics.
#[derive(Debug, Parser)]
#[command(name = "memsolve", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML file with `[dynamics]` and `[integrator]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `euler_adaptive` or `trapezoid`.
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Step budget per attempt.
    #[arg(long, global = true)]
    max_steps: Option<u64>,
    /// Voltage noise amplitude.
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// Evaluate the flow clause-parallel.
    #[arg(long, global = true)]
    parallel: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find odd p, q with p·q = n.
    Factor { n: u64 },
    /// Find a subset of G summing to s.
    SubsetSum {
        /// Instance JSON `{"G": [...], "p": bits, "s": target}`.
        #[arg(required_unless_present = "gen", conflicts_with = "gen")]
        instance: Option<PathBuf>,
        /// Generate a hard instance (p = N) from a seed.
        #[arg(long, num_args = 2, value_names = ["N", "SEED"])]
        gen: Option<Vec<u64>>,
    },
    /// Satisfy a DIMACS CNF formula.
    Sat { dimacs: PathBuf },
    /// Subset-sum scaling benchmark.
    Bench {
        /// Inclusive size range `LO:HI`.
        #[arg(long = "n", value_name = "LO:HI")]
        sizes: String,
        #[arg(long, default_value_t = 5)]
        per_n: usize,
    },
    /// Phase-space diagnostics.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Locate and classify critical points.
    Critical {
        /// Clause system JSON, circuit JSON or DIMACS file.
        #[arg(long)]
        system: PathBuf,
        #[arg(long, default_value_t = 64)]
        seeds: usize,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
    },
    /// Switch events and avalanche sizes of a trajectory CSV.
    Avalanche {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: u64,
        /// Decision threshold; defaults to the integrator's.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

/// Exit codes: 0 solved or completed, 2 budget exhausted, 1 usage or
/// internal error.
fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&cli.global)?;
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let ctx = commands::Context { cfg, argv };
    match cli.command {
        Command::Factor { n } => commands::factor(&ctx, n),
        Command::SubsetSum { instance, gen } => {
            let source = match (instance, gen) {
                (Some(path), _) => commands::SubsetSource::File(path),
                (None, Some(g)) => commands::SubsetSource::Generate {
                    n: usize::try_from(g[0])?,
                    seed: g[1],
                },
                (None, None) => unreachable!("clap requires one source"),
            };
            commands::subset_sum(&ctx, source)
        }
        Command::Sat { dimacs } => commands::sat(&ctx, &dimacs),
        Command::Bench { sizes, per_n } => commands::bench(&ctx, &sizes, per_n),
        Command::Analyze { what } => match what {
            AnalyzeCommand::Critical {
                system,
                seeds,
                max_iter,
            } => commands::critical(&ctx, &system, seeds, max_iter),
            AnalyzeCommand::Avalanche {
                trajectory,
                window,
                threshold,
            } => commands::avalanche(&ctx, &trajectory, window, threshold),
        },
    }
}

fn load_config(g: &GlobalArgs) -> anyhow::Result<RunConfig> {
    let base = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
            RunConfig::from_toml_str(&text)?
        }
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&Overrides {
        seed: g.seed,
        out: g.out.clone(),
        method: g.method,
        max_steps: g.max_steps,
        noise: g.noise,
    })?;
    if g.parallel {
        cfg.integrator.parallel = true;
    }
    Ok(cfg)
}
