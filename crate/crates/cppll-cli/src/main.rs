use clap::{Args, Parser, Subcommand};
use cppll_cli::config::{
    parse_run_config, Engine, HistoryOpt, OutputFormat, OverloadOpt, RunConfig,
};
use cppll_cli::run::parse_sweep_config;
use cppll_cli::{run, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulation and analysis of second-order charge-pump PLLs: the corrected
/// closed-form discrete map, Van Paemel's original algorithm, and an
/// event-driven continuous-time oracle.
#[derive(Debug, Parser)]
#[command(name = "cppll", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one engine and write per-step traces.
    Sim(SimArgs),
    /// Run all engines on the same configuration and report deviations.
    Compare(CompareArgs),
    /// Classify a parameter grid: lock / period-P / overload / no-lock.
    Sweep(SweepArgs),
    /// Measure re-lock time after a reference frequency step.
    Pullin(PullinArgs),
    /// Print classical design numbers and the allowed-area verdict.
    Design(DesignArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat key-value parameter file.
    #[arg(long)]
    params: PathBuf,
    /// Initial pulse width τ₀ (s).
    #[arg(long)]
    tau0: Option<f64>,
    /// Initial hold voltage v₀ (V).
    #[arg(long)]
    v0: Option<f64>,
    /// Number of map cycles to run.
    #[arg(long)]
    steps: Option<usize>,
    /// Oracle horizon in seconds (oracle engine only).
    #[arg(long)]
    t_end: Option<f64>,
    /// Overload handling: stop or switch to the clamped-VCO cases.
    #[arg(long)]
    overload: Option<OverloadOpt>,
    /// v(-1) policy when the Paemel algorithm enters case 6 on step 0.
    #[arg(long)]
    history: Option<HistoryOpt>,
    /// Seed for randomized sub-sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Trace file format.
    #[arg(long)]
    format: Option<OutputFormat>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(&self.params).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", self.params.display()))
        })?;
        let mut config = parse_run_config(&text)?;
        if let Some(v) = self.tau0 {
            config.tau0 = v;
        }
        if let Some(v) = self.v0 {
            config.v0 = v;
        }
        if let Some(v) = self.steps {
            config.steps = Some(v);
            config.t_end = None;
        }
        if let Some(v) = self.t_end {
            config.t_end = Some(v);
            if self.steps.is_none() {
                config.steps = None;
            }
        }
        if let Some(v) = self.overload {
            config.overload = v;
        }
        if let Some(v) = self.history {
            config.history = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.format {
            config.format = v;
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Engine to run.
    #[arg(long)]
    engine: Option<Engine>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Sweep description file.
    #[arg(long)]
    params: PathBuf,
    /// Seed override for sampled initial conditions.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PullinArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Locked reference frequency before the step (Hz).
    #[arg(long)]
    from_freq: f64,
    /// Reference frequency after the step (Hz).
    #[arg(long)]
    to_freq: f64,
    /// Number of switch phases sampled over one cycle.
    #[arg(long, default_value_t = 32)]
    phases: usize,
    /// Map-cycle budget per phase.
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DesignArgs {
    /// Flat key-value parameter file.
    #[arg(long)]
    params: PathBuf,
    /// `csv` prints text, `json` prints a JSON report.
    #[arg(long)]
    format: Option<OutputFormat>,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sim(args) => {
            let mut config = args.config.load()?;
            if let Some(engine) = args.engine {
                config.engine = engine;
            }
            if let Some(stop) = run::cmd_sim(&config, &args.out)? {
                return Err(CliError::Engine(stop));
            }
            Ok(())
        }
        Command::Compare(args) => {
            let config = args.config.load()?;
            run::cmd_compare(&config, &args.out)
        }
        Command::Sweep(args) => {
            let text = std::fs::read_to_string(&args.params).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", args.params.display()))
            })?;
            let file = parse_sweep_config(&text)?;
            run::cmd_sweep(&file, args.seed, &args.out)
        }
        Command::Pullin(args) => {
            let mut config = args.config.load()?;
            // The horizon for pull-in runs is the per-phase budget.
            config.steps = config.steps.or(Some(0));
            run::cmd_pullin(
                &config,
                args.from_freq,
                args.to_freq,
                args.phases,
                args.budget,
                &args.out,
            )
        }
        Command::Design(args) => {
            let text = std::fs::read_to_string(&args.params).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", args.params.display()))
            })?;
            let config = parse_run_config(&text)?;
            run::cmd_design(
                &config.params(),
                args.format.unwrap_or(OutputFormat::Csv),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cppll: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
