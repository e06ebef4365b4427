use std::path::Path;

use chefs_core::agents::DqlConfig;
use chefs_core::engine::NUM_PLAYERS;
use chefs_core::eventlog::{read_log, TurnRecord};
use chefs_core::Error;
use chefs_harness::ablation::run_rivalry_ablation;
use chefs_harness::config::{ExperimentConfig, SeatKind, SeatSpec};
use chefs_harness::lineup::selfplay_seats;
use chefs_harness::metrics::{emit_metrics_from_dir, max_recompute_error};
use chefs_harness::runs::{compute_player_performance, run_selfplay, run_tournament};

fn random_seats() -> Vec<SeatSpec> {
    (0..NUM_PLAYERS).map(|i| SeatSpec::new(&format!("r{i}"), SeatKind::Random)).collect()
}

fn small_dql() -> DqlConfig {
    DqlConfig {
        hidden: vec![16],
        warmup: 32,
        batch_size: 16,
        ..DqlConfig::default()
    }
}

#[test]
fn random_players_share_the_wins() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        log_games: false,
        ..ExperimentConfig::new(random_seats(), 300, 3, dir.path())
    };
    let report = run_tournament(&config).unwrap();
    let matches: usize = report.results.iter().map(|r| r.match_points.len()).sum();
    assert!(matches >= 1000, "only {matches} matches");
    for r in &report.results {
        for points in &r.match_points {
            assert_eq!(points.iter().sum::<u32>(), 6);
        }
    }
    for e in &report.scoreboard.entries {
        let rate = e.match_win_rate();
        assert!((0.20..=0.30).contains(&rate), "{} won {:.3} of matches", e.player, rate);
        assert!((0.0..=3.0).contains(&e.per_game_average));
    }
}

fn log_bytes(dir: &Path, seed: u64) -> Vec<u8> {
    let config = ExperimentConfig::new(random_seats(), 5, seed, dir);
    run_tournament(&config).unwrap();
    std::fs::read(dir.join("games.jsonl")).unwrap()
}

#[test]
fn same_seed_same_log() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = log_bytes(a.path(), 8);
    assert!(!first.is_empty());
    assert_eq!(first, log_bytes(b.path(), 8));
    assert_ne!(first, log_bytes(c.path(), 9));
}

#[test]
fn same_seed_same_checkpoints() {
    let run = |dir: &Path| {
        let config = ExperimentConfig {
            dql: small_dql(),
            log_games: false,
            ..ExperimentConfig::new(selfplay_seats(SeatKind::Dql), 3, 4, dir)
        };
        let report = run_selfplay(&config).unwrap();
        let final_dir = &report.finals[0];
        let mut files: Vec<_> = std::fs::read_dir(final_dir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run(a.path());
    assert!(!first.is_empty());
    assert_eq!(first, run(b.path()));
}

fn record(game: &str, points: Option<[u32; NUM_PLAYERS]>) -> TurnRecord {
    TurnRecord {
        game_id: game.into(),
        match_no: 0,
        turn_no: 0,
        player_id: "a".into(),
        observation: vec![0.0; 28],
        action_index: 199,
        reward: 0.0,
        match_points: points,
    }
}

#[test]
fn performance_is_the_mean_of_game_averages() {
    let ids = ["a", "b", "c", "d"].map(String::from);
    let sweep = vec![
        record("g0", None),
        record("g0", Some([3, 2, 1, 0])),
        record("g0", Some([3, 0, 2, 1])),
        record("g0", Some([3, 1, 0, 2])),
    ];
    let perf = compute_player_performance(&sweep, &ids).unwrap();
    assert_eq!(perf["a"], 3.0);
    assert_eq!(perf["b"], 1.0);

    let mut two_games = sweep.clone();
    two_games.push(record("g1", Some([0, 3, 2, 1])));
    let perf = compute_player_performance(&two_games, &ids).unwrap();
    assert_eq!(perf["a"], 1.5);
    assert_eq!(perf["b"], 2.0);
    assert!(perf.values().all(|v| (0.0..=3.0).contains(v)));

    let zeros = vec![record("g0", Some([0, 0, 0, 0]))];
    assert_eq!(compute_player_performance(&zeros, &ids).unwrap()["c"], 0.0);
    assert!(matches!(
        compute_player_performance(&[record("g0", None)], &ids),
        Err(Error::EmptyLog)
    ));
}

fn ablation_config(dir: &Path) -> ExperimentConfig {
    let seats = vec![
        SeatSpec {
            rivalry: true,
            track: Some("dql".into()),
            ..SeatSpec::new("rival", SeatKind::Dql)
        },
        SeatSpec::new("dql", SeatKind::Dql),
        SeatSpec::new("ppo", SeatKind::Ppo),
        SeatSpec::new("random", SeatKind::Random),
    ];
    let mut config = ExperimentConfig::new(seats, 6, 2, dir);
    config.dql = small_dql();
    config.ablation.window = 2;
    config.rivalry.predictor_matches = 20;
    config
}

#[test]
fn ablation_smoke_run_emits_consistent_traces() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_rivalry_ablation(&ablation_config(dir.path())).unwrap();
    assert_eq!(report.games.len(), 6);
    assert!((0.0..=1.0).contains(&report.w));
    assert!(report.games.iter().all(|g| g.rivalry.is_finite()));
    for f in ["ablation.csv", "trace.csv", "players.json", "games.jsonl"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    assert!(max_recompute_error(&report.trace) <= 1e-9);

    // One trace row per action of each opponent.
    let records = read_log(dir.path().join("games.jsonl")).unwrap();
    for opponent in ["dql", "ppo", "random"] {
        let actions = records.iter().filter(|r| r.player_id == opponent).count();
        let rows = report.trace.iter().filter(|r| r.opponent == opponent).count();
        assert_eq!(rows, actions, "{opponent}");
    }
    assert!(report.trace.iter().all(|r| r.opponent != "rival"));

    let out = dir.path().join("metrics");
    let written = emit_metrics_from_dir(dir.path(), &out).unwrap();
    assert_eq!(written.len(), 3);
    let summary = std::fs::read_to_string(out.join("rivalry_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn ablation_needs_one_rival() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ablation_config(dir.path());
    config.seats[0].rivalry = false;
    assert!(matches!(run_rivalry_ablation(&config), Err(Error::Config(_))));
}
