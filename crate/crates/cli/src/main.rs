use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use breachsim_cli::commands::{
    cmd_cross_table, cmd_ingest, cmd_run, cmd_solve, cmd_sweep, SolveArgs,
};
use breachsim_cli::CliError;

#[derive(Parser)]
#[command(
    name = "breachsim",
    version,
    about = "Attacker-defender network encounter simulator and equilibrium solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out episodes and write trajectory logs
    Run {
        /// Scenario JSON file or builtin name (e.g. volt_typhoon)
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// pass|random|doar:<dir>
        #[arg(long, default_value = "random")]
        attacker: String,
        /// pass|random|preset|doar:<dir>
        #[arg(long, default_value = "random")]
        defender: String,
    },
    /// Run the double-oracle equilibrium solver
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 15)]
        rounds: usize,
        /// Admission threshold; omitted derives 2% of the payoff spread
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Training episodes per best-response call
        #[arg(long, default_value_t = 120)]
        episodes: usize,
        /// Rollouts per payoff-matrix cell
        #[arg(long, default_value_t = 8)]
        rollouts: usize,
        /// Rollouts per candidate admission evaluation
        #[arg(long, default_value_t = 12)]
        eval_rollouts: usize,
    },
    /// Evaluate strategy pairings into payoff tables
    #[command(name = "cross-table")]
    CrossTable {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated attacker strategies (pass|random|doar:<dir>)
        #[arg(long)]
        attacker: String,
        /// Comma-separated defender strategies (pass|random|preset|doar:<dir>)
        #[arg(long)]
        defender: String,
        #[arg(long)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter sweep from a spec file
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ingest an offline NVD JSON feed into exploit templates
    Ingest {
        #[arg(long)]
        nvd: PathBuf,
        #[arg(long)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output exploit list (JSON)
        #[arg(long, default_value = "exploits.json")]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            episodes,
            attacker,
            defender,
        } => {
            let summary = cmd_run(&scenario, seed, &out, episodes, &attacker, &defender)?;
            println!(
                "ran {} episode(s): mean attacker return {:.3}, mean defender return {:.3}",
                summary.episodes, summary.mean_attacker_return, summary.mean_defender_return
            );
            println!("wrote {}", out.join("trajectory.csv").display());
            Ok(())
        }
        Command::Solve {
            scenario,
            rounds,
            epsilon,
            seed,
            out,
            episodes,
            rollouts,
            eval_rollouts,
        } => {
            let args = SolveArgs {
                rounds,
                epsilon,
                episodes,
                rollouts_per_cell: rollouts,
                candidate_eval_rollouts: eval_rollouts,
            };
            let summary = cmd_solve(&scenario, seed, &out, &args)?;
            println!(
                "solved in {} round(s): attacker value {:.3}, defender value {:.3} (pools {} x {})",
                summary.rounds,
                summary.attacker_value,
                summary.defender_value,
                summary.attacker_pool,
                summary.defender_pool
            );
            println!("wrote {}", out.join("profile.json").display());
            Ok(())
        }
        Command::CrossTable {
            scenario,
            attacker,
            defender,
            runs,
            seed,
            out,
        } => {
            let att: Vec<String> = attacker.split(',').map(|s| s.trim().to_string()).collect();
            let def: Vec<String> = defender.split(',').map(|s| s.trim().to_string()).collect();
            cmd_cross_table(&scenario, &att, &def, runs, seed, &out)?;
            println!("wrote {}", out.join("attacker_payoffs.csv").display());
            println!("wrote {}", out.join("defender_payoffs.csv").display());
            Ok(())
        }
        Command::Sweep { spec, out } => {
            let summary = cmd_sweep(&spec, &out)?;
            println!(
                "sweep finished: {} rows, {}/{} trend checks passed",
                summary.rows, summary.checks_passed, summary.checks_total
            );
            println!("wrote {}", out.join("sweep.csv").display());
            Ok(())
        }
        Command::Ingest {
            nvd,
            sample,
            seed,
            out,
        } => {
            let summary = cmd_ingest(&nvd, sample, seed, &out)?;
            println!(
                "ingested {} exploit(s) from {} record(s), {} skipped",
                summary.written, summary.records_seen, summary.skipped
            );
            println!("wrote {}", summary.out_file.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
