use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use bowley::config::{self, Overrides};
use bowley::error::exit;
use bowley::run::{self, GenData};
use clap::{Args, Parser, Subcommand};

/// Monopoly insurance pricing: generate data, solve, check against oracles.
#[derive(Parser)]
#[command(name = "bowley", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides BOWLEY_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solver seed (overrides BOWLEY_SEED and the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenarios.csv.
    GenData {
        /// Optional config whose synthetic data section supplies defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of scenarios.
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        n: Option<u64>,
        /// Scale of the loss noise the weather does not explain.
        #[arg(long)]
        basis_risk: Option<f64>,
        /// Weather index rows per scenario.
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        rows: Option<u64>,
    },
    /// Run the penalized bilevel solver.
    Solve(Common),
    /// Run the grid oracle.
    Oracle(Common),
    /// Solve once per farmer risk-aversion weight.
    Sweep(Common),
    /// Recompute the figures of written reports.
    Verify(Common),
}

fn load(c: &Common) -> anyhow::Result<config::Loaded> {
    let o = Overrides {
        out: c.out.clone(),
        seed: c.seed,
    }
    .with_env()?;
    Ok(config::load(&c.config, &o)?)
}

fn gen_data_args(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    n: Option<u64>,
    basis_risk: Option<f64>,
    rows: Option<u64>,
) -> anyhow::Result<GenData> {
    let mut g = GenData::default();
    let mut o = Overrides { out, seed }.with_env()?;
    if let Some(path) = &config {
        let l = config::load(path, &Overrides { out: o.out.take(), seed: None })?;
        if let config::DataSource::Synthetic { seed, n, basis_risk, rows } = l.config.data {
            g = GenData { seed, n, basis_risk, rows, out: l.out };
        } else {
            g.out = l.out;
        }
    }
    if let Some(out) = o.out {
        g.out = out;
    }
    if let Some(seed) = o.seed {
        g.seed = seed;
    }
    if let Some(n) = n {
        g.n = usize::try_from(n).context("--n out of range")?;
    }
    if let Some(b) = basis_risk {
        g.basis_risk = b;
    }
    if let Some(r) = rows {
        g.rows = usize::try_from(r).context("--rows out of range")?;
    }
    Ok(g)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { config, out, seed, n, basis_risk, rows } => {
            let g = gen_data_args(config, out, seed, n, basis_risk, rows)?;
            let path = run::gen_data(&g)?;
            println!("wrote {} scenarios to {}", g.n, path.display());
        }
        Command::Solve(c) => {
            let l = load(&c)?;
            let r = run::solve(&l)?;
            println!(
                "profit {} farmer_risk {} premium {} final_gap {} -> {}",
                r.insurer_profit,
                r.farmer_risk,
                r.premium,
                r.final_gap,
                l.out.display()
            );
        }
        Command::Oracle(c) => {
            let l = load(&c)?;
            let r = run::oracle(&l)?;
            println!(
                "profit {} farmer_risk {} leader points {} -> {}",
                r.insurer_profit,
                r.farmer_risk,
                r.leader_points,
                l.out.display()
            );
        }
        Command::Sweep(c) => {
            let l = load(&c)?;
            for row in run::sweep(&l)? {
                println!(
                    "lambda {} theta {:?} rho {:?} profit {}",
                    row.lambda, row.theta, row.rho, row.insurer_profit
                );
            }
        }
        Command::Verify(c) => {
            let l = load(&c)?;
            for p in run::verify(&l)? {
                println!("ok {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<bowley::Error>()
                .map_or(exit::FAILURE, bowley::Error::exit_code);
            ExitCode::from(code)
        }
    }
}
