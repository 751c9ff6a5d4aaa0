use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meshmorph::bench::benchmark_preprocessing;
use meshmorph::experiment::{compare_laplace, gen_nodes, run_experiment};
use meshmorph::io::{read_config, RunConfig};
use meshmorph::kernel::KernelConfig;
use meshmorph::Error;

/// Curvilinear mesh generation and smoothing with RBF-interpolated deformations.
#[derive(Parser)]
#[command(name = "meshmorph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write meshes, history and summary.
    Run(ConfigArgs),
    /// Run an experiment and the Laplace baseline with the same iteration count.
    CompareLaplace(ConfigArgs),
    /// Time ε* search, fit and evaluation against problem size.
    Bench {
        /// Data-site counts, ascending.
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate the node set of a config and write nodes.csv.
    GenNodes(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file (`key = value` lines).
    config: PathBuf,
    /// Override a config key, e.g. `--set delta=2e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> meshmorph::Result<RunConfig> {
        read_config(&self.config, &self.overrides)
    }
}

fn configure_threads() -> meshmorph::Result<()> {
    let Ok(v) = std::env::var("MESHMORPH_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| Error::Config {
        key: "MESHMORPH_THREADS".into(),
        message: format!("expected a positive integer, got `{v}`"),
    })?;
    if n == 0 {
        return Err(Error::Config {
            key: "MESHMORPH_THREADS".into(),
            message: "must be at least 1".into(),
        });
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Numerical(e.to_string()))
}

fn execute(cli: Cli) -> meshmorph::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run(args) => {
            let out = run_experiment(&args.load()?)?;
            let s = &out.summary;
            println!(
                "{}: N = {} ({} interior, {} boundary, {} data sites), eps* = {:.6}, kappa = {:.3e}",
                s.case, s.n, s.n_interior, s.n_boundary, s.n_data_sites, s.eps_star, s.kappa_star
            );
            for r in &s.history {
                println!(
                    "  iter {:3}  |q_e| = {:.6}  min q_e = {:.4}  min q_y = {:.4}  inverted = {}",
                    r.iteration, r.norm2_qe, r.min_qe, r.min_qy, r.inverted_count
                );
            }
            println!(
                "stopped at iteration {} ({:?}); best iteration {}; output in {}",
                s.termination_iteration,
                s.termination_reason,
                s.best_iteration,
                out.dir.display()
            );
        }
        Command::CompareLaplace(args) => {
            let cmp = compare_laplace(&args.load()?)?;
            println!("{:<11} {:>5} {:>12} {:>8} {:>8} {:>8}", "method", "iters", "|q_e|", "min q_e", "min q_y", "inverted");
            for r in cmp.rows() {
                println!(
                    "{:<11} {:>5} {:>12.6} {:>8.4} {:>8.4} {:>8}",
                    r.method, r.iterations, r.norm2_qe, r.min_qe, r.min_qy, r.inverted_count
                );
            }
            println!("output in {}", cmp.experiment.dir.display());
        }
        Command::Bench { sizes, reps, json } => {
            let report = benchmark_preprocessing(&sizes, reps, &KernelConfig::default())?;
            println!("{:>6} {:>10} {:>12} {:>12} {:>8} {:>12}", "N_d", "eps*", "search (s)", "fit (s)", "N", "eval (s)");
            for r in &report.rows {
                println!(
                    "{:>6} {:>10.5} {:>12.4e} {:>12.4e} {:>8} {:>12.4e}",
                    r.n_d, r.eps_star, r.search, r.fit, r.n_eval, r.eval
                );
            }
            println!(
                "log-log slopes: search {:.3}, fit {:.3}, evaluation {:.3}",
                report.search_slope, report.fit_slope, report.eval_slope
            );
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Numerical(e.to_string()))?;
                std::fs::write(path, text + "\n")?;
            }
        }
        Command::GenNodes(args) => {
            let (nodes, path) = gen_nodes(&args.load()?)?;
            println!(
                "{} nodes ({} interior, {} boundary, {} data sites) written to {}",
                nodes.len(),
                nodes.num_interior(),
                nodes.num_boundary(),
                nodes.num_data_sites(),
                path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
