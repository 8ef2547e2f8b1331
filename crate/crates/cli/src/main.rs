use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chemostat_cli::commands::with_overrides;
use chemostat_cli::output::{json, write_atomic};
use chemostat_cli::{execute, parse_scenario, CliError, Command, RunContext};
use chemostat_core::basin::Execution;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "chemostat",
    version,
    about = "Chemostat competition with density-dependent extraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides options.t_end.
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for scans; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Integrate one trajectory.
    Simulate,
    /// Locate equilibria and classify their stability.
    Equilibria,
    /// Print the winner label.
    Classify,
    /// Label a grid of initial states and bisect the separatrix.
    Basin,
    /// Separatrix surfaces over a list of dilution rates.
    SweepD,
    /// Finite-time extinction threshold of the reduced model.
    LvExtinction,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Simulate => Command::Simulate,
            Sub::Equilibria => Command::Equilibria,
            Sub::Classify => Command::Classify,
            Sub::Basin => Command::Basin,
            Sub::SweepD => Command::SweepD,
            Sub::LvExtinction => Command::LvExtinction,
        }
    }
}

fn run(cli: &Cli, command: Command) -> Result<String, CliError> {
    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Usage("--scenario <path> is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parsed = parse_scenario(&text)?;
    for d in &parsed.defaults {
        eprintln!("default {} = {}", d.key, d.value);
    }
    let scenario = with_overrides(parsed.scenario, cli.t_end)?;
    let execution = match cli.jobs {
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    };
    let ctx = RunContext {
        execution,
        seed: cli.seed,
    };
    let outcome = match cli.jobs {
        Some(j) if j > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::Usage(format!("--jobs {j}: {e}")))?
            .install(|| execute(command, &scenario, &ctx))?,
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        _ => execute(command, &scenario, &ctx)?,
    };
    if !outcome.files.is_empty() {
        ensure_dir(&cli.out)?;
        write_atomic(&cli.out, "scenario.resolved.toml", &scenario.to_toml())?;
        for (name, contents) in &outcome.files {
            write_atomic(&cli.out, name, contents)?;
        }
    }
    Ok(outcome.stdout)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    match run(&cli, command) {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = e.record(command.name());
            eprint!("{}", json(&record));
            if ensure_dir(&cli.out).is_ok() {
                let _ = write_atomic(&cli.out, "error.json", &json(&record));
            }
            ExitCode::from(record.exit_code)
        }
    }
}
