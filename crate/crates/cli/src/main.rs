//! `bench`: run BO benchmarks, suites from manifests, and emit plot scripts.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rbo_core::bench::{
    self, emit_plots, format_table, parse_manifest, read_runs_csv, run_suite, summarize, write_runs_csv,
    write_summary_csv, BoConfig, Job, Policy, SuiteResults,
};
use rbo_core::GradientEstimator;

#[derive(Parser, Debug)]
#[command(name = "bench", version, about = "Benchmarks for rollout Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one function/policy pair over several seeds.
    Run(RunArgs),
    /// Run every job listed in a manifest.
    Suite {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for runs.csv and summary.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write matplotlib scripts for a runs CSV.
    Plots {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Pi,
    Ei,
    Ucb,
    Rollout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Pathwise,
    SamplePath,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// gramacy-lee, rosenbrock, branin, goldstein-price, six-hump-camel or schwefel4d.
    #[arg(long)]
    function: String,
    #[arg(long, value_enum)]
    policy: PolicyArg,
    /// Rollout horizon (used with `--policy rollout`).
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// Monte Carlo trajectories per rollout evaluation.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Function evaluations after the initial design.
    #[arg(long, default_value_t = 15)]
    budget: usize,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Uniform initial design size.
    #[arg(long, default_value_t = 1)]
    n_init: usize,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    qmc: Switch,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    crn: Switch,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    cv: Switch,
    /// Exploration weight β of UCB (`−μ + √β σ`).
    #[arg(long, default_value_t = 4.0)]
    ucb_beta: f64,
    #[arg(long, default_value_t = 50)]
    adam_iters: usize,
    #[arg(long, default_value_t = 8)]
    adam_restarts: usize,
    #[arg(long, default_value_t = 8)]
    inner_restarts: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Pathwise)]
    estimator: EstimatorArg,
    /// Record proposal wall-clock in the CSV (output is then not reproducible).
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    timing: Switch,
    /// Runs CSV; written to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn jobs(&self) -> Result<Vec<Job>> {
        bench::function_by_name(&self.function)?;
        let policy = match self.policy {
            PolicyArg::Pi => Policy::Pi,
            PolicyArg::Ei => Policy::Ei,
            PolicyArg::Ucb => Policy::Ucb,
            PolicyArg::Rollout => Policy::Rollout { horizon: self.horizon },
        };
        let mut config = BoConfig {
            budget: self.budget,
            n_init: self.n_init,
            ucb_beta: self.ucb_beta,
            n_samples: self.samples,
            timing: self.timing.on(),
            estimator: match self.estimator {
                EstimatorArg::Pathwise => GradientEstimator::Pathwise,
                EstimatorArg::SamplePath => GradientEstimator::SamplePath,
            },
            ..Default::default()
        };
        config.variance_reduction.qmc = self.qmc.on();
        config.variance_reduction.crn = self.crn.on();
        config.variance_reduction.control_variate = self.cv.on();
        config.adam.max_iters = self.adam_iters;
        config.adam.restarts = self.adam_restarts;
        config.inner.restarts = self.inner_restarts;
        if self.budget == 0 || self.samples == 0 || self.trials == 0 {
            bail!("--budget, --samples and --trials must be at least 1");
        }
        Ok((self.seed..self.seed + self.trials)
            .map(|seed| Job { function: self.function.clone(), policy, seed, config: config.clone() })
            .collect())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn report_failures(res: &SuiteResults) {
    for f in &res.failures {
        eprintln!("run failed: {} {} seed {}: {}", f.function, f.policy, f.seed, f.message);
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let jobs = args.jobs()?;
    let res = run_suite(&jobs);
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            write_runs_csv(&mut w, &res.runs)?;
            w.flush()?;
        }
        None => write_runs_csv(io::stdout().lock(), &res.runs)?,
    }
    eprint!("{}", format_table(&summarize(&res)));
    report_failures(&res);
    Ok(if res.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn suite(manifest: &Path, out: &Path) -> Result<ExitCode> {
    let text = fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let jobs = parse_manifest(&text)?;
    let res = run_suite(&jobs);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = create(&out.join("runs.csv"))?;
    write_runs_csv(&mut w, &res.runs)?;
    w.flush()?;
    let rows = summarize(&res);
    let mut w = create(&out.join("summary.csv"))?;
    write_summary_csv(&mut w, &rows)?;
    w.flush()?;
    if !res.failures.is_empty() {
        let mut w = create(&out.join("failures.txt"))?;
        for f in &res.failures {
            writeln!(w, "{} {} seed {}: {}", f.function, f.policy, f.seed, f.message)?;
        }
        w.flush()?;
    }
    print!("{}", format_table(&rows));
    report_failures(&res);
    Ok(ExitCode::SUCCESS)
}

fn plots(input: &Path, out: &Path) -> Result<ExitCode> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let rows = read_runs_csv(file)?;
    for p in emit_plots(&rows, input, out)? {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Suite { manifest, out } => suite(&manifest, &out),
        Command::Plots { input, out } => plots(&input, &out),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
