use std::path::PathBuf;
use std::process::ExitCode;

use chefs_harness::ablation::run_rivalry_ablation;
use chefs_harness::config::ExperimentConfig;
use chefs_harness::metrics::emit_metrics_from_dir;
use chefs_harness::runs::{run_selfplay, run_tournament};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chefs-sim", version, about = "Chef's Hat experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured learners and write checkpoints.
    Selfplay(RunArgs),
    /// Play games and write the event log, scoreboard and rivalry trace.
    Tournament(RunArgs),
    /// Tune the rival's reward weight by hill-climbing.
    Ablation(RunArgs),
    /// Recompute summary tables from a finished run directory.
    Metrics {
        /// Directory holding games.jsonl and players.json.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> chefs_core::Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        Ok(config)
    }
}

fn run(cli: Cli) -> chefs_core::Result<()> {
    match cli.command {
        Command::Selfplay(args) => {
            let report = run_selfplay(&args.load()?)?;
            println!("played {} games", report.games);
            for dir in report.finals {
                println!("checkpoint {}", dir.display());
            }
        }
        Command::Tournament(args) => {
            let config = args.load()?;
            let report = run_tournament(&config)?;
            println!("player,match_win_rate,per_game_average,games_won");
            for e in &report.scoreboard.entries {
                println!("{},{:.4},{:.4},{}", e.player, e.match_win_rate(), e.per_game_average, e.games_won);
            }
            println!("output in {}", config.out_dir.display());
        }
        Command::Ablation(args) => {
            let config = args.load()?;
            let report = run_rivalry_ablation(&config)?;
            let (start, end) = report.trend(config.ablation.window as usize);
            let (rival, baseline) = report.mean_scores();
            println!("games {}", report.games.len());
            println!("w {:.2} (best window at w {:.2})", report.w, report.best_w);
            println!("rivalry start {start:.4} end {end:.4}");
            println!("score rival {rival:.4} baseline {baseline:.4}");
            println!("output in {}", config.out_dir.display());
        }
        Command::Metrics { run, out } => {
            let out = out.unwrap_or_else(|| run.clone());
            for path in emit_metrics_from_dir(&run, &out)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chefs-sim: {e}");
            ExitCode::FAILURE
        }
    }
}
