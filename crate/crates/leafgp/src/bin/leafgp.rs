//! Command-line interface: single runs, seed sweeps, the uncertainty
//! study, the benchmark listing, and history aggregation.

use clap::{Args, Parser, Subcommand};
use leafgp::bench;
use leafgp::runner::{self, History, RunConfig};
use leafgp::space::FeatureKind;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "leafgp", version, about = "Tree-kernel Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config with one seed and write its history CSV.
    Run(RunArgs),
    /// Run one config across a seed grid; writes per-seed histories and an
    /// aggregate CSV.
    Sweep(SweepArgs),
    /// Tree-agreement uncertainty study on an unconstrained benchmark.
    Uncertainty(UncertaintyArgs),
    /// List registered benchmarks with dimensions, constraints, domains.
    BenchList,
    /// Aggregate previously written history CSVs into quartiles.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Seeds to run.
    #[arg(long, value_delimiter = ',', default_values_t = (101u64..=120).collect::<Vec<_>>())]
    seeds: Vec<u64>,
    /// Directory for per-seed history CSVs (skipped when omitted).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Aggregate CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct UncertaintyArgs {
    /// Unconstrained benchmark name.
    #[arg(long, default_value = "rastrigin10")]
    benchmark: String,
    /// Training points per seed.
    #[arg(long, default_value_t = 40)]
    n_train: usize,
    /// Seeds for the random training sets.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3, 4, 5])]
    seeds: Vec<u64>,
    /// Agreement-cap grid.
    #[arg(long, value_delimiter = ',',
          default_values_t = vec![0.35, 0.48, 0.61, 0.74, 0.87, 1.0])]
    r_grid: Vec<f64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    /// History CSVs produced by `run` or `sweep`.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("leafgp: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run(a) => {
            let mut cfg = load_config(&a.config)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let history = runner::run_bo(&cfg)?;
            emit(a.out.as_deref(), &history.to_csv())?;
        }
        Command::Sweep(a) => {
            let cfg = load_config(&a.config)?;
            let histories = runner::run_sweep(&cfg, &a.seeds)?;
            if let Some(dir) = &a.out_dir {
                fs::create_dir_all(dir)?;
                for h in &histories {
                    let name =
                        format!("{}_{}_seed{}.csv", cfg.benchmark, cfg.algorithm, h.seed);
                    fs::write(dir.join(name), h.to_csv())?;
                }
            }
            let rows = runner::aggregate(&histories)?;
            emit(a.out.as_deref(), &runner::aggregate_csv(&rows))?;
        }
        Command::Uncertainty(a) => {
            let b = bench::get(&a.benchmark)?;
            let rows = bench::uncertainty_sweep(&b, a.n_train, &a.seeds, &a.r_grid)?;
            let mut csv = String::from("r,seed,rel_error,mean\n");
            for r in &rows {
                let err = r.error.map_or(String::new(), |e| e.to_string());
                csv.push_str(&format!("{},{},{},{}\n", r.r, r.seed, err, r.mean));
            }
            emit(a.out.as_deref(), &csv)?;
        }
        Command::BenchList => {
            let mut table = format!(
                "{:<18} {:>3} {:>5} {:>5}  {}\n",
                "name", "dim", "#ineq", "#eq", "domain"
            );
            for name in bench::all_names() {
                let b = bench::get(name)?;
                table.push_str(&format!(
                    "{:<18} {:>3} {:>5} {:>5}  {}\n",
                    b.name(),
                    b.space().n(),
                    b.constraints().inequalities.len(),
                    b.constraints().equalities.len(),
                    domain_string(b.space())
                ));
            }
            emit(None, &table)?;
        }
        Command::Aggregate(a) => {
            let histories = a
                .files
                .iter()
                .map(|p| Ok(History::from_csv(&fs::read_to_string(p)?)?))
                .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?;
            let rows = runner::aggregate(&histories)?;
            emit(a.out.as_deref(), &runner::aggregate_csv(&rows))?;
        }
    }
    Ok(())
}

fn load_config(path: &std::path::Path) -> Result<RunConfig, Box<dyn std::error::Error>> {
    let cfg = RunConfig::from_toml(&fs::read_to_string(path)?)?;
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&std::path::Path>, content: &str) -> std::io::Result<()> {
    use std::io::Write;
    match out {
        Some(p) => fs::write(p, content),
        // A closed pipe downstream (e.g. `| head`) ends output early; that
        // is normal termination for a filter, not an error.
        None => match std::io::stdout().lock().write_all(content.as_bytes()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r,
        },
    }
}

/// Compact per-dimension domain description with run-length grouping.
fn domain_string(space: &leafgp::space::FeatureSpace) -> String {
    let pieces: Vec<String> = space
        .features()
        .iter()
        .map(|f| match &f.kind {
            FeatureKind::Continuous { lb, ub } => format!("[{lb},{ub}]"),
            FeatureKind::Integer { lb, ub } => format!("int[{lb},{ub}]"),
            FeatureKind::Categorical { categories } => format!("cat({})", categories.len()),
        })
        .collect();
    let mut grouped = Vec::new();
    let mut i = 0;
    while i < pieces.len() {
        let mut j = i;
        while j + 1 < pieces.len() && pieces[j + 1] == pieces[i] {
            j += 1;
        }
        if j > i {
            grouped.push(format!("{}^{}", pieces[i], j - i + 1));
        } else {
            grouped.push(pieces[i].clone());
        }
        i = j + 1;
    }
    grouped.join(" ")
}
