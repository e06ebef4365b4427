use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chefs_core::engine::NUM_PLAYERS;
use chefs_core::eventlog::{read_log, TurnRecord};
use chefs_core::rivalry::{read_trace_csv, rivalry_score, write_trace_csv, TraceRow};
use chefs_core::Result;
use serde::{Deserialize, Serialize};

use crate::runs::{compute_player_performance, create_dir, io_err};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpponentSummary {
    pub opponent: String,
    pub actions: usize,
    pub mean_s: f64,
    pub mean_c: f64,
    pub mean_p: f64,
    pub mean_r: f64,
    /// Population variance of the per-action rivalry.
    pub var_r: f64,
}

/// Rivalry statistics per opponent, in order of first appearance.
pub fn summarize_trace(rows: &[TraceRow]) -> Vec<OpponentSummary> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&TraceRow>> = BTreeMap::new();
    for r in rows {
        if !groups.contains_key(&r.opponent) {
            order.push(r.opponent.clone());
        }
        groups.entry(r.opponent.clone()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|opponent| {
            let g = &groups[&opponent];
            let n = g.len() as f64;
            let mean = |f: fn(&TraceRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_r = mean(|r| r.r);
            OpponentSummary {
                actions: g.len(),
                mean_s: mean(|r| r.s),
                mean_c: mean(|r| r.c),
                mean_p: mean(|r| r.p),
                var_r: g.iter().map(|r| (r.r - mean_r).powi(2)).sum::<f64>() / n,
                mean_r,
                opponent,
            }
        })
        .collect()
}

/// Largest gap between a row's rivalry and the mean of its three factors.
pub fn max_recompute_error(rows: &[TraceRow]) -> f64 {
    rows.iter()
        .map(|r| (r.r - rivalry_score(r.s, r.c, r.p)).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PerformanceRow {
    player: String,
    per_game_average: f64,
}

/// Writes `trace.csv`, `rivalry_summary.csv` and `performance.csv` into
/// `out`. Returns the paths written.
pub fn emit_metrics(
    records: &[TurnRecord],
    player_ids: &[String; NUM_PLAYERS],
    trace: &[TraceRow],
    out: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let mut written = Vec::new();

    let trace_path = out.join("trace.csv");
    let file = File::create(&trace_path).map_err(|e| io_err(&trace_path, e))?;
    write_trace_csv(trace, BufWriter::new(file))?;
    written.push(trace_path);

    let summary_path = out.join("rivalry_summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    for s in summarize_trace(trace) {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| io_err(&summary_path, e))?;
    written.push(summary_path);

    let perf_path = out.join("performance.csv");
    let mut w = csv::Writer::from_path(&perf_path)?;
    for (player, per_game_average) in compute_player_performance(records, player_ids)? {
        w.serialize(PerformanceRow {
            player,
            per_game_average,
        })?;
    }
    w.flush().map_err(|e| io_err(&perf_path, e))?;
    written.push(perf_path);
    Ok(written)
}

/// Recomputes the summaries of a finished run directory holding
/// `games.jsonl`, `players.json` and optionally `trace.csv`.
pub fn emit_metrics_from_dir(run: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let records = read_log(run.join("games.jsonl"))?;
    let ids_path = run.join("players.json");
    let text = std::fs::read_to_string(&ids_path).map_err(|e| io_err(&ids_path, e))?;
    let ids: [String; NUM_PLAYERS] = serde_json::from_str(&text)?;
    let trace_path = run.join("trace.csv");
    let trace = if trace_path.exists() {
        let file = File::open(&trace_path).map_err(|e| io_err(&trace_path, e))?;
        read_trace_csv(file)?
    } else {
        Vec::new()
    };
    emit_metrics(&records, &ids, &trace, out)
}
