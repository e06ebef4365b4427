//! Line-delimited turn records and replay of a recorded game through the engine.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{
    score_match, Card, Hand, MatchState, Observation, HAND_SIZE, NUM_PLAYERS,
};
use crate::error::{Error, Result};

/// One turn of one match. `match_points` is present on the turn that ends a match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub game_id: String,
    pub match_no: u32,
    pub turn_no: u32,
    pub player_id: String,
    pub observation: Vec<f64>,
    pub action_index: usize,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_points: Option<[u32; NUM_PLAYERS]>,
}

pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn rounded_observation(obs: &Observation) -> Vec<f64> {
    obs.as_slice().iter().map(|&x| round6(x)).collect()
}

/// Append-only writer of turn records.
pub struct EventLog {
    path: Option<PathBuf>,
    out: Box<dyn Write + Send>,
}

impl EventLog {
    pub fn append(path: impl AsRef<Path>) -> Result<EventLog> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(EventLog {
            out: Box::new(BufWriter::new(file)),
            path: Some(path),
        })
    }

    pub fn sink() -> EventLog {
        EventLog {
            path: None,
            out: Box::new(std::io::sink()),
        }
    }

    pub fn to_writer(out: Box<dyn Write + Send>) -> EventLog {
        EventLog { path: None, out }
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.out, "{line}").map_err(|e| self.io_err(e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| self.io_err(e))
    }

    fn io_err(&self, e: std::io::Error) -> Error {
        Error::io(self.path.clone().unwrap_or_default(), e)
    }
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<TurnRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_log(BufReader::new(file))
}

pub fn parse_log(reader: impl BufRead) -> Result<Vec<TurnRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<log>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutcome {
    pub scores: [u32; NUM_PLAYERS],
    pub matches: u32,
    pub match_points: Vec<[u32; NUM_PLAYERS]>,
}

/// Replays the records of one game through a fresh engine.
///
/// Each player's dealt hand is recovered from the first observation they
/// logged in a match (nobody else can touch a hand before its owner acts),
/// and the opening player is the author of the match's first record. Every
/// logged observation and every logged `match_points` must agree with what
/// the engine reproduces.
pub fn replay_game(records: &[TurnRecord], player_ids: &[String; NUM_PLAYERS]) -> Result<ReplayOutcome> {
    if records.is_empty() {
        return Err(Error::EmptyLog);
    }
    let seat_of = |id: &str| {
        player_ids
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| Error::InvalidRecord(format!("unknown player id {id}")))
    };

    let mut outcome = ReplayOutcome {
        scores: [0; NUM_PLAYERS],
        matches: 0,
        match_points: Vec::new(),
    };
    let mut start = 0;
    while start < records.len() {
        let match_no = records[start].match_no;
        let end = records[start..]
            .iter()
            .position(|r| r.match_no != match_no)
            .map_or(records.len(), |k| start + k);
        let turns = &records[start..end];
        start = end;

        let mut hands: [Option<Hand>; NUM_PLAYERS] = Default::default();
        for r in turns {
            let seat = seat_of(&r.player_id)?;
            if hands[seat].is_none() {
                let faces = Observation(r.observation.clone()).hand_faces();
                let cards = faces
                    .into_iter()
                    .map(|f| Card::new(f).ok_or_else(|| Error::InvalidRecord(format!("bad face {f}"))))
                    .collect::<Result<Vec<_>>>()?;
                hands[seat] = Some(Hand::from_cards(cards));
            }
        }
        let hands = hands.map(|h| h.unwrap_or_default());
        if hands.iter().any(|h| h.len() != HAND_SIZE) {
            return Err(Error::InvalidRecord(format!(
                "match {match_no}: could not recover 17-card hands"
            )));
        }
        let opener = seat_of(&turns[0].player_id)?;
        let mut state = MatchState::from_hands(hands, opener, 0);

        for r in turns {
            let seat = seat_of(&r.player_id)?;
            if rounded_observation(&state.encode_observation(seat)) != r.observation {
                return Err(Error::InvalidRecord(format!(
                    "match {match_no} turn {}: observation diverges from replay",
                    r.turn_no
                )));
            }
            state.apply_action(seat, r.action_index)?;
        }
        if !state.is_over() {
            return Err(Error::InvalidRecord(format!("match {match_no} did not finish")));
        }
        let points = score_match(state.finished_order())?;
        if let Some(logged) = turns.last().and_then(|r| r.match_points) {
            if logged != points {
                return Err(Error::InvalidRecord(format!(
                    "match {match_no}: logged points {logged:?} != replayed {points:?}"
                )));
            }
        }
        for (s, p) in outcome.scores.iter_mut().zip(points) {
            *s += p;
        }
        outcome.matches += 1;
        outcome.match_points.push(points);
    }
    Ok(outcome)
}
