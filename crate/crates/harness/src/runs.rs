use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chefs_core::engine::NUM_PLAYERS;
use chefs_core::eventlog::{EventLog, TurnRecord};
use chefs_core::rivalry::{write_trace_csv, TraceRow};
use chefs_core::table::{play_game, GameResult, Table};
use chefs_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::lineup::{build_lineup, derived_seed, Lineup};

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Seat order of a run, needed to read the logged match points back.
pub fn write_player_ids(out: &Path, ids: &[String; NUM_PLAYERS]) -> Result<()> {
    let path = out.join("players.json");
    std::fs::write(&path, serde_json::to_string(ids)?).map_err(|e| io_err(&path, e))
}

/// Mean match points of one game.
pub fn game_average(result: &GameResult, seat: usize) -> f64 {
    let n = result.match_points.len().max(1) as f64;
    result.match_points.iter().map(|p| p[seat] as f64).sum::<f64>() / n
}

pub(crate) fn open_log(out: &Path, enabled: bool) -> Result<(PathBuf, Option<EventLog>)> {
    let path = out.join("games.jsonl");
    if !enabled {
        return Ok((path, None));
    }
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    Ok((path, Some(EventLog::to_writer(Box::new(BufWriter::new(file))))))
}

pub(crate) fn write_trace(out: &Path, trace: &[TraceRow]) -> Result<PathBuf> {
    let path = out.join("trace.csv");
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    write_trace_csv(trace, BufWriter::new(file))?;
    Ok(path)
}

/// Table seed of game `g` of a run.
pub fn game_seed(seed: u64, g: u64) -> u64 {
    derived_seed(seed ^ 0x7ab1e, g)
}

pub fn game_id(g: u64) -> String {
    format!("game-{g}")
}

/// Plays game `g` of a run with `lineup`.
pub fn play_one(lineup: &mut Lineup, seed: u64, g: u64, log: Option<&mut EventLog>) -> Result<GameResult> {
    let mut table = Table::new(game_id(g), g, lineup.ids.clone(), game_seed(seed, g));
    let owners = lineup.owners;
    let mut players = lineup.players();
    play_game(&mut table, &mut players, &owners, log)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfplayReport {
    pub games: u64,
    /// Periodic checkpoints in the order written.
    pub checkpoints: Vec<PathBuf>,
    /// Final checkpoint directory of each learning agent.
    pub finals: Vec<PathBuf>,
}

/// Trains the configured learners; checkpoints land in
/// `out/checkpoints/<agent>/game-<n>` and `out/checkpoints/<agent>/final`.
pub fn run_selfplay(config: &ExperimentConfig) -> Result<SelfplayReport> {
    let mut lineup = build_lineup(config)?;
    if !lineup.agents.iter().any(|a| a.is_learner()) {
        return Err(Error::Config("self-play needs at least one learning seat".into()));
    }
    let root = config.out_dir.join("checkpoints");
    create_dir(&root)?;
    let mut checkpoints = Vec::new();
    for g in 0..config.n_games {
        play_one(&mut lineup, config.seed, g, None)?;
        if config.checkpoint_every > 0 && (g + 1) % config.checkpoint_every == 0 {
            checkpoints.extend(lineup.save_all(&root, &format!("game-{}", g + 1))?);
        }
    }
    let finals = lineup.save_all(&root, "final")?;
    Ok(SelfplayReport {
        games: config.n_games,
        checkpoints,
        finals,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub player: String,
    pub matches_played: u32,
    pub matches_won: u32,
    pub points: u32,
    pub games_played: u32,
    pub games_won: u32,
    /// Mean over games of the mean match points within the game.
    pub per_game_average: f64,
}

impl ScoreEntry {
    pub fn match_win_rate(&self) -> f64 {
        if self.matches_played == 0 {
            0.0
        } else {
            self.matches_won as f64 / self.matches_played as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scoreboard {
    pub entries: Vec<ScoreEntry>,
}

impl Scoreboard {
    pub fn from_results(ids: &[String; NUM_PLAYERS], results: &[GameResult]) -> Scoreboard {
        let mut entries: Vec<ScoreEntry> = ids
            .iter()
            .map(|id| ScoreEntry {
                player: id.clone(),
                ..ScoreEntry::default()
            })
            .collect();
        for r in results {
            for (seat, e) in entries.iter_mut().enumerate() {
                e.games_played += 1;
                e.games_won += u32::from(r.winner == seat);
                let mut game_points = 0;
                for mp in &r.match_points {
                    e.matches_played += 1;
                    e.matches_won += u32::from(mp[seat] == 3);
                    game_points += mp[seat];
                }
                e.points += game_points;
                e.per_game_average += game_average(r, seat);
            }
        }
        for e in &mut entries {
            if e.games_played > 0 {
                e.per_game_average /= e.games_played as f64;
            }
        }
        Scoreboard { entries }
    }

    pub fn get(&self, player: &str) -> Option<&ScoreEntry> {
        self.entries.iter().find(|e| e.player == player)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

/// Per-player performance from turn records: the mean match points of each
/// game, averaged over games. `player_ids` gives the seat order of the
/// logged `match_points`.
pub fn compute_player_performance(
    records: &[TurnRecord],
    player_ids: &[String; NUM_PLAYERS],
) -> Result<BTreeMap<String, f64>> {
    let mut games: Vec<(String, Vec<[u32; NUM_PLAYERS]>)> = Vec::new();
    for r in records {
        let Some(points) = r.match_points else { continue };
        match games.last_mut() {
            Some((id, pts)) if *id == r.game_id => pts.push(points),
            _ => games.push((r.game_id.clone(), vec![points])),
        }
    }
    if games.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut out = BTreeMap::new();
    for (seat, id) in player_ids.iter().enumerate() {
        let total: f64 = games
            .iter()
            .map(|(_, pts)| pts.iter().map(|p| p[seat] as f64).sum::<f64>() / pts.len() as f64)
            .sum();
        out.insert(id.clone(), total / games.len() as f64);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TournamentReport {
    pub scoreboard: Scoreboard,
    pub results: Vec<GameResult>,
    pub log_path: Option<PathBuf>,
    pub trace: Vec<TraceRow>,
}

/// Plays `n_games` and writes `games.jsonl`, `scoreboard.csv` and, when a
/// rival agent is seated, `trace.csv` into the output directory.
pub fn run_tournament(config: &ExperimentConfig) -> Result<TournamentReport> {
    let mut lineup = build_lineup(config)?;
    run_tournament_with(config, &mut lineup)
}

pub fn run_tournament_with(config: &ExperimentConfig, lineup: &mut Lineup) -> Result<TournamentReport> {
    create_dir(&config.out_dir)?;
    let (log_path, mut log) = open_log(&config.out_dir, config.log_games)?;
    let mut results = Vec::with_capacity(config.n_games as usize);
    let mut trace = Vec::new();
    for g in 0..config.n_games {
        results.push(play_one(lineup, config.seed, g, log.as_mut())?);
        trace.extend(lineup.take_traces());
    }
    if let Some(log) = log.as_mut() {
        log.flush()?;
    }
    write_player_ids(&config.out_dir, &lineup.ids)?;
    let scoreboard = Scoreboard::from_results(&lineup.ids, &results);
    scoreboard.write_csv(&config.out_dir.join("scoreboard.csv"))?;
    if !trace.is_empty() {
        write_trace(&config.out_dir, &trace)?;
    }
    Ok(TournamentReport {
        scoreboard,
        results,
        log_path: config.log_games.then_some(log_path),
        trace,
    })
}
