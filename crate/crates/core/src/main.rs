use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use multimat::experiments::{
    oracle_check, run_experiment, sweep, ExperimentConfig, ExperimentOutcome, ProblemKind,
    ThresholdMode,
};
use multimat::multibang::MultibangConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "multimat", version, about = "Multi-material coefficient optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Solve(RunArgs),
    /// Run one experiment per alpha and collect metrics.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated alphas (default depends on the problem).
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Compare closed-form prox and envelope against brute-force oracles.
    OracleCheck {
        #[arg(long, value_delimiter = ',', default_value = "1,1.5,2,2.5")]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,1e-3,1e-6")]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Nodes per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    gamma_min: Option<f64>,
    /// Cumulative Newton budget.
    #[arg(long)]
    max_newton: Option<usize>,
    #[arg(long, value_enum)]
    threshold: Option<ThresholdMode>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::for_problem(self.problem.unwrap_or(ProblemKind::Potential)),
        };
        if let Some(p) = self.problem {
            cfg.problem = p;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(n) = self.grid {
            cfg.grid = n;
        }
        if let Some(g) = self.gamma0 {
            cfg.continuation.gamma0 = g;
        }
        if let Some(g) = self.gamma_min {
            cfg.continuation.gamma_min = g;
        }
        if let Some(m) = self.max_newton {
            cfg.continuation.max_total_newton = m;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summarize(o: &ExperimentOutcome) {
    println!(
        "alpha {:e}: e_T {:.3e}, e_M {:.3e}, {} Newton steps, last gamma {}, {}",
        o.config.alpha,
        o.metrics.e_t,
        o.metrics.e_m,
        o.report.total_newton,
        o.report
            .gamma_final
            .map(|g| format!("{g:.2e}"))
            .unwrap_or_else(|| "none".into()),
        o.report.reason
    );
    if let Some(pm) = o.config.paper_metrics() {
        println!("  published: e_T {:.3e}, e_M {:.3e}", pm.e_t, pm.e_m);
    }
    if let Some(m) = o.postprocessed_metrics {
        println!("  post-processed: e_T {:.3e}, e_M {:.3e}", m.e_t, m.e_m);
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.config()?;
            let outcome = run_experiment(&cfg, Some(&args.out))?;
            summarize(&outcome);
            if outcome.aborted() {
                bail!("solver aborted: {}", outcome.report.reason);
            }
        }
        Command::Sweep { run, alphas } => {
            let cfg = run.config()?;
            let alphas = alphas.unwrap_or_else(|| cfg.alphas());
            let outcomes = sweep(&cfg, &alphas, Some(&run.out))?;
            outcomes.iter().for_each(summarize);
            if outcomes.iter().any(ExperimentOutcome::aborted) {
                bail!("at least one run aborted");
            }
        }
        Command::OracleCheck {
            values,
            alpha,
            gammas,
            samples,
            seed,
            tol,
        } => {
            let cfg = MultibangConfig::with_minimal_beta(values, alpha)?;
            let s = oracle_check(&cfg, &gammas, samples, seed);
            let mut ok = s.envelope <= tol;
            println!("envelope: max error {:.3e}", s.envelope);
            for (gamma, err) in &s.prox {
                println!("prox gamma {gamma:e}: max error {err:.3e}");
                ok &= *err <= tol;
            }
            if !ok {
                bail!("oracle deviation above {tol:e}");
            }
        }
    }
    Ok(())
}
