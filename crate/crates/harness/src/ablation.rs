//! Rivalry-weight search: the rival's reward weight `w` is tuned between
//! games by bounded hill-climbing on its windowed mean rivalry towards the
//! same-type opponent, never letting its score fall below a fraction of that
//! opponent's.

use std::path::PathBuf;

use chefs_core::rivalry::TraceRow;
use chefs_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{AblationSettings, ExperimentConfig, SeatKind};
use crate::lineup::build_lineup;
use crate::runs::{create_dir, game_average, open_log, play_one, write_player_ids, write_trace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationGame {
    pub game: u64,
    /// Weight in force during the game.
    pub w: f64,
    /// Mean per-action rivalry towards the tracked opponent.
    pub rivalry: f64,
    pub rival_score: f64,
    pub baseline_score: f64,
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    /// Weight when the search stopped.
    pub w: f64,
    /// Weight of the best window seen.
    pub best_w: f64,
    pub games: Vec<AblationGame>,
    pub trace: Vec<TraceRow>,
    pub stopped_early: bool,
    pub out_files: Vec<PathBuf>,
}

impl AblationReport {
    /// Mean rivalry over the first and the last `k` games.
    pub fn trend(&self, k: usize) -> (f64, f64) {
        let n = self.games.len();
        let k = k.clamp(1, n.max(1));
        let mean = |g: &[AblationGame]| g.iter().map(|x| x.rivalry).sum::<f64>() / g.len().max(1) as f64;
        (mean(&self.games[..k.min(n)]), mean(&self.games[n.saturating_sub(k)..]))
    }

    pub fn mean_scores(&self) -> (f64, f64) {
        let n = self.games.len().max(1) as f64;
        (
            self.games.iter().map(|g| g.rival_score).sum::<f64>() / n,
            self.games.iter().map(|g| g.baseline_score).sum::<f64>() / n,
        )
    }
}

/// Hill-climbing state over the reward weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightClimber {
    pub w: f64,
    pub best_w: f64,
    pub best: f64,
    direction: f64,
    settings: AblationSettings,
}

impl WeightClimber {
    pub fn new(settings: &AblationSettings) -> WeightClimber {
        let w = settings.initial_w.clamp(0.0, 1.0);
        WeightClimber {
            w,
            best_w: w,
            best: f64::NEG_INFINITY,
            direction: 1.0,
            settings: settings.clone(),
        }
    }

    /// Takes one step from the latest window's mean rivalry and score ratio
    /// inputs. Returns whether the window improved on the best so far.
    pub fn step(&mut self, window_rivalry: f64, rival_score: f64, baseline_score: f64) -> bool {
        let improved = window_rivalry > self.best;
        if improved {
            self.best = window_rivalry;
            self.best_w = self.w;
        }
        if rival_score < self.settings.win_floor * baseline_score {
            self.direction = -1.0;
        } else if !improved {
            self.direction = -self.direction;
        }
        self.w = (self.w + self.direction * self.settings.step).clamp(0.0, 1.0);
        improved
    }
}

fn window_mean(games: &[AblationGame], f: fn(&AblationGame) -> f64) -> f64 {
    games.iter().map(f).sum::<f64>() / games.len() as f64
}

/// Runs the weight search and writes `ablation.csv`, `trace.csv`,
/// `players.json` and, if enabled, `games.jsonl` into the output directory.
pub fn run_rivalry_ablation(config: &ExperimentConfig) -> Result<AblationReport> {
    config.validate()?;
    let rivals: Vec<usize> = (0..config.seats.len()).filter(|&s| config.seats[s].rivalry).collect();
    let [rival_seat] = rivals[..] else {
        return Err(Error::Config(format!("ablation needs exactly one rival seat, found {}", rivals.len())));
    };
    let rival_spec = &config.seats[rival_seat];
    let baseline_seat = config
        .seats
        .iter()
        .position(|s| Some(&s.id) == rival_spec.track.as_ref())
        .or_else(|| config.seats.iter().position(|s| s.kind == SeatKind::Dql && !s.rivalry))
        .ok_or_else(|| Error::Config("ablation needs a non-rival dql seat".into()))?;
    let baseline_id = config.seats[baseline_seat].id.clone();
    if config.seats[baseline_seat].kind != rival_spec.kind || config.seats[baseline_seat].rivalry {
        return Err(Error::Config(format!("tracked seat {baseline_id} is not a non-rival dql")));
    }

    let settings = &config.ablation;
    let window = settings.window.max(1) as usize;
    let mut lineup = build_lineup(config)?;
    create_dir(&config.out_dir)?;
    let (log_path, mut log) = open_log(&config.out_dir, config.log_games)?;
    let mut climber = WeightClimber::new(settings);
    let mut games: Vec<AblationGame> = Vec::new();
    let mut trace = Vec::new();
    let mut last_improvement = 0;
    let mut stopped_early = false;

    for g in 0..config.n_games {
        let w = climber.w;
        let rival = lineup
            .agent_of_seat(rival_seat)
            .as_rival_mut()
            .ok_or_else(|| Error::Config("rival seat is not a rival agent".into()))?;
        rival.set_reward_weight(w);
        let result = play_one(&mut lineup, config.seed, g, log.as_mut())?;
        let rows = lineup.take_traces();
        let towards: Vec<f64> = rows.iter().filter(|r| r.opponent == baseline_id).map(|r| r.r).collect();
        let rivalry = towards.iter().sum::<f64>() / towards.len() as f64;
        if !rivalry.is_finite() {
            return Err(Error::Config(format!("trace divergence: non-finite rivalry in game {g}")));
        }
        trace.extend(rows);
        games.push(AblationGame {
            game: g,
            w,
            rivalry,
            rival_score: game_average(&result, rival_seat),
            baseline_score: game_average(&result, baseline_seat),
        });

        if games.len() % window == 0 {
            let recent = &games[games.len() - window..];
            let improved = climber.step(
                window_mean(recent, |x| x.rivalry),
                window_mean(&games, |x| x.rival_score),
                window_mean(&games, |x| x.baseline_score),
            );
            if improved {
                last_improvement = g + 1;
            }
        }
        if g + 1 - last_improvement >= settings.patience && g + 1 < config.n_games {
            stopped_early = true;
            break;
        }
    }
    if let Some(log) = log.as_mut() {
        log.flush()?;
    }

    let mut out_files = Vec::new();
    let csv_path = config.out_dir.join("ablation.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for g in &games {
        w.serialize(g)?;
    }
    w.flush().map_err(|e| crate::runs::io_err(&csv_path, e))?;
    out_files.push(csv_path);
    out_files.push(write_trace(&config.out_dir, &trace)?);
    write_player_ids(&config.out_dir, &lineup.ids)?;
    if config.log_games {
        out_files.push(log_path);
    }
    Ok(AblationReport {
        w: climber.w,
        best_w: climber.best_w,
        games,
        trace,
        stopped_early,
        out_files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn climber() -> WeightClimber {
        WeightClimber::new(&AblationSettings::default())
    }

    #[test]
    fn climbs_while_improving() {
        let mut c = climber();
        assert!(c.step(0.1, 1.0, 1.0));
        assert!(c.step(0.2, 1.0, 1.0));
        assert!((c.w - 0.1).abs() < 1e-12);
        assert!((c.best_w - 0.05).abs() < 1e-12);
    }

    #[test]
    fn reverses_when_worse_and_stays_bounded() {
        let mut c = climber();
        c.step(0.3, 1.0, 1.0);
        assert!(!c.step(0.1, 1.0, 1.0));
        assert!(c.w.abs() < 1e-12);
        c.step(0.0, 1.0, 1.0);
        assert!((0.0..=1.0).contains(&c.w));
    }

    #[test]
    fn score_floor_pushes_weight_down() {
        let mut c = WeightClimber::new(&AblationSettings {
            initial_w: 0.5,
            ..AblationSettings::default()
        });
        c.step(0.9, 0.5, 1.0);
        assert!((c.w - 0.45).abs() < 1e-12);
    }
}
