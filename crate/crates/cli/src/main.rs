use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rbl_crlb::config::{load_config, ScenarioConfig};
use rbl_crlb::validation::{self, ValidationBudget};
use rbl_crlb::{Error, Exec};

mod output;

use output::{BoundRow, Table};

#[derive(Parser, Debug)]
#[command(name = "rbl-crlb", version, about = "Cramér-Rao bounds and Monte Carlo sweeps for rigid body localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the Monte Carlo seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bounds at every sweep point.
    Bound,
    /// Bounds plus Monte Carlo estimator errors at every sweep point.
    Simulate {
        /// Overrides the trial count from the config.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Gradient, FIM-oracle and intensity self-checks.
    Validate {
        #[arg(long, default_value_t = ValidationBudget::default().gradient_configs)]
        gradient_configs: usize,
        #[arg(long, default_value_t = ValidationBudget::default().oracle_trials)]
        oracle_trials: usize,
        #[arg(long, default_value_t = ValidationBudget::default().intensity_samples)]
        intensity_samples: usize,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn require_config(cli: &Cli) -> Result<ScenarioConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Validation("--config is required for this command".into()))?;
    Ok(load_config(path)?)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    rbl_crlb::exec::configure_threads(cli.threads).map_err(Failure::Runtime)?;
    let exec = Exec::Parallel;
    match &cli.command {
        Command::Bound => {
            let config = require_config(cli)?;
            let mut table = Table::new(cli.format, Vec::new());
            for point in config.points() {
                let scenario = config.scenario_at(point)?;
                let bounds = rbl_crlb::bounds::bound_report(&scenario, exec)?;
                table.push(BoundRow { sweep_value: point, bounds, estimators: Vec::new() });
            }
            write(cli, &table.render().map_err(Failure::Runtime)?)
        }
        Command::Simulate { trials } => {
            let config = require_config(cli)?;
            let n_trials = trials.unwrap_or(config.trials);
            if n_trials == 0 {
                return Err(Failure::Validation("trials must be at least 1".into()));
            }
            let seed = cli.seed.unwrap_or(config.seed);
            let mut table = Table::new(cli.format, config.estimators.clone());
            for point in config.points() {
                let scenario = config.scenario_at(point)?;
                let mc = rbl_crlb::estimators::run_monte_carlo(&scenario, &config.estimators, n_trials, seed, exec)?;
                table.push(BoundRow { sweep_value: point, bounds: mc.bounds, estimators: mc.estimators });
            }
            write(cli, &table.render().map_err(Failure::Runtime)?)
        }
        Command::Validate { gradient_configs, oracle_trials, intensity_samples } => {
            let budget = ValidationBudget {
                gradient_configs: *gradient_configs,
                oracle_trials: *oracle_trials,
                intensity_samples: *intensity_samples,
            };
            let seed = cli.seed.unwrap_or(0);
            let mut reports = validation::run_all(budget, seed, exec)?;
            if let Some(path) = &cli.config {
                let config = load_config(path)?;
                let mut checks = Vec::new();
                for point in config.points() {
                    let scenario = config.scenario_at(point)?;
                    let name = match point {
                        Some(v) => format!("config at {v}"),
                        None => "config".to_string(),
                    };
                    checks.extend(validation::lemma1_check(
                        &name,
                        &scenario,
                        budget.oracle_trials,
                        seed,
                        exec,
                        validation::Threshold::FamilyWise(validation::FAMILY_ALPHA),
                    )?);
                }
                reports.push(validation::SuiteReport { suite: "config fim oracle".into(), checks });
            }
            let text = output::validation_text(&reports, cli.format).map_err(Failure::Runtime)?;
            write(cli, &text)?;
            let failed: usize = reports.iter().map(|r| r.checks.len() - r.pass_count()).sum();
            if failed > 0 {
                return Err(Failure::Validation(format!("{failed} validation checks failed")));
            }
            Ok(())
        }
    }
}

fn write(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
