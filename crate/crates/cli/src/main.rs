use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use cellfree_cli::{run_experiment, verify_suite, ExperimentSpec, Level, Method};
use cellfree_outage::config::PilotMode;

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Outage probability and rate of the cell-free massive MIMO uplink")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo simulation only.
    Simulate(RunArgs),
    /// Analytic methods only.
    Analytic(RunArgs),
    /// Simulation plus every analytic method valid for the configuration.
    Compare(RunArgs),
    /// Exactly the methods named in the config (or --methods).
    Sweep(RunArgs),
    /// Cross-method consistency battery.
    Verify {
        #[arg(long, value_enum, default_value_t = VerifyLevel::Fast)]
        level: VerifyLevel,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyLevel {
    Fast,
    Full,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of mc, lognormal, udr, mmimo_closed, exact_small.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    deployments: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn analytic_defaults(spec: &ExperimentSpec) -> BTreeSet<Method> {
    let mut set: BTreeSet<Method> = [Method::Lognormal].into();
    if spec.base.pilot_mode == PilotMode::Orthogonal {
        set.insert(Method::Udr);
        if spec.base.collocated {
            set.insert(Method::MmimoClosed);
        }
    }
    set
}

fn load(args: &RunArgs, command: &Command) -> anyhow::Result<ExperimentSpec> {
    let mut overrides = Vec::new();
    if let Some(s) = args.seed {
        overrides.push(("master_seed", s.to_string()));
    }
    if let Some(o) = &args.out {
        overrides.push(("output_path", o.display().to_string()));
    }
    if let Some(d) = args.deployments {
        overrides.push(("mc_deployments", d.to_string()));
    }
    if let Some(i) = args.iters {
        overrides.push(("mc_iters", i.to_string()));
    }
    if let Some(m) = &args.methods {
        overrides.push(("methods", m.clone()));
    }
    let mut spec = ExperimentSpec::load(args.config.as_deref(), &overrides)?;
    if args.methods.is_none() {
        match command {
            Command::Simulate(_) => spec.methods = [Method::Mc].into(),
            Command::Analytic(_) => spec.methods = analytic_defaults(&spec),
            Command::Compare(_) => {
                spec.methods = analytic_defaults(&spec);
                spec.methods.insert(Method::Mc);
            }
            _ => {}
        }
    }
    if spec.output_path.as_os_str().is_empty() {
        spec.output_path = PathBuf::from("out");
    }
    Ok(spec)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Verify { level, threads } => {
            let level = match level {
                VerifyLevel::Fast => Level::Fast,
                VerifyLevel::Full => Level::Full,
            };
            with_threads(*threads, || verify_suite(level, None)).map(|report| {
                print!("{}", report.table());
                match report.failures().next() {
                    None => true,
                    Some(first) => {
                        eprintln!("verification failed: {} / {}", first.block, first.check);
                        false
                    }
                }
            })
        }
        Command::Simulate(a) | Command::Analytic(a) | Command::Compare(a) | Command::Sweep(a) => load(a, &cli.command)
            .and_then(|spec| {
                let result = with_threads(a.threads, || run_experiment(&spec))?
                    .with_context(|| format!("running experiment into {}", spec.output_path.display()))?;
                print!("{}", cellfree_cli::run::report_text(&result));
                eprintln!("wrote {}", spec.output_path.display());
                Ok(true)
            }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
