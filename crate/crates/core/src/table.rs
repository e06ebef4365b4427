//! Drives a game turn by turn and turns applied actions into per-seat
//! transitions, turn records and broadcasts.
//!
//! A seat's transition runs from one of its turns to its next turn, or to
//! the end of its match. The only non-zero reward is +1 on the action that
//! makes a player finish first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{GameContext, MatchSummary, Player, Transition, TurnView};
use crate::engine::{ActionMask, GameState, MatchState, Observation, NUM_PLAYERS};
use crate::error::{Error, Result};
use crate::eventlog::{rounded_observation, EventLog, TurnRecord};

pub const WIN_REWARD: f64 = 1.0;

/// Everything produced by one applied action.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub record: TurnRecord,
    pub view: TurnView,
    pub transitions: Vec<Transition>,
    pub match_end: Option<MatchSummary>,
    /// Final scores and winner once the game is decided.
    pub game_over: Option<([u32; NUM_PLAYERS], usize)>,
}

pub struct Table {
    game: GameState,
    game_id: String,
    game_no: u64,
    rng: ChaCha8Rng,
    match_no: u32,
    pending: [Option<(Observation, usize)>; NUM_PLAYERS],
    match_points: Vec<[u32; NUM_PLAYERS]>,
    winner: Option<usize>,
}

impl Table {
    /// Seats the players and deals the first match.
    pub fn new(game_id: impl Into<String>, game_no: u64, player_ids: [String; NUM_PLAYERS], seed: u64) -> Table {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut game = GameState::new(player_ids);
        game.deal(rng.gen());
        Table {
            game,
            game_id: game_id.into(),
            game_no,
            rng,
            match_no: 0,
            pending: Default::default(),
            match_points: Vec::new(),
            winner: None,
        }
    }

    pub fn game(&self) -> &GameState {
        &self.game
    }

    pub fn game_id(&self) -> &str {
        &self.game_id
    }

    pub fn game_no(&self) -> u64 {
        self.game_no
    }

    pub fn player_ids(&self) -> &[String; NUM_PLAYERS] {
        &self.game.player_ids
    }

    pub fn state(&self) -> &MatchState {
        self.game.current_match().expect("a match is always dealt")
    }

    pub fn match_no(&self) -> u32 {
        self.match_no
    }

    pub fn scores(&self) -> [u32; NUM_PLAYERS] {
        self.game.scores()
    }

    pub fn match_points(&self) -> &[[u32; NUM_PLAYERS]] {
        &self.match_points
    }

    pub fn winner(&self) -> Option<usize> {
        self.winner
    }

    pub fn is_game_over(&self) -> bool {
        self.winner.is_some()
    }

    pub fn is_match_over(&self) -> bool {
        self.state().is_over()
    }

    /// Seat to act, if the current match is still running.
    pub fn to_act(&self) -> Option<usize> {
        let s = self.state();
        (!s.is_over()).then(|| s.turn())
    }

    pub fn observation(&self, seat: usize) -> Observation {
        self.state().encode_observation(seat)
    }

    pub fn mask(&self, seat: usize) -> ActionMask {
        self.state().legal_action_mask(seat)
    }

    /// Deals the next match after one has ended and the game goes on.
    pub fn start_next_match(&mut self) -> Result<()> {
        if self.winner.is_some() || !self.is_match_over() {
            return Err(Error::MatchOver);
        }
        self.match_no += 1;
        let seed = self.rng.gen();
        self.game.deal(seed);
        Ok(())
    }

    fn transition(&self, seat: usize, obs: Observation, action: usize, reward: f64, next: Observation, next_mask: Option<ActionMask>, terminal: bool) -> Transition {
        Transition {
            seat,
            actor_id: self.game.player_ids[seat].clone(),
            observation: obs,
            action,
            reward,
            next_observation: next,
            next_mask,
            terminal,
        }
    }

    /// Applies `seat`'s action. Illegal or out-of-turn actions fail and
    /// leave the table unchanged.
    pub fn apply(&mut self, seat: usize, action: usize) -> Result<StepOutcome> {
        if self.winner.is_some() {
            return Err(Error::MatchOver);
        }
        let state = self.game.current_match_mut().expect("a match is always dealt");
        let obs = state.encode_observation(seat);
        let mask = state.legal_action_mask(seat);
        let board_before = state.board_slots();
        let turn_no = state.turn_no();
        let event = state.apply_action(seat, action)?;
        let after_obs = state.encode_observation(seat);

        let mut transitions = Vec::new();
        if let Some((prev_obs, prev_action)) = self.pending[seat].take() {
            transitions.push(self.transition(seat, prev_obs, prev_action, 0.0, obs.clone(), Some(mask), false));
        }
        let reward = if event.finished_position == Some(0) { WIN_REWARD } else { 0.0 };
        if event.finished_position.is_some() {
            transitions.push(self.transition(seat, obs.clone(), action, reward, after_obs, None, true));
        } else {
            self.pending[seat] = Some((obs.clone(), action));
        }

        let mut match_end = None;
        let mut game_over = None;
        let mut points_logged = None;
        if event.match_over {
            for other in 0..NUM_PLAYERS {
                if let Some((o, a)) = self.pending[other].take() {
                    let next = self.state().encode_observation(other);
                    transitions.push(self.transition(other, o, a, 0.0, next, None, true));
                }
            }
            let finished_order = self.state().finished_order().to_vec();
            let points = self.game.finish_match()?;
            self.match_points.push(points);
            points_logged = Some(points);
            match_end = Some(MatchSummary {
                game_no: self.game_no,
                match_no: self.match_no,
                finished_order,
                points,
                scores: self.game.scores(),
            });
            if let (true, Some(w)) = self.game.is_game_over() {
                self.winner = Some(w);
                game_over = Some((self.game.scores(), w));
            }
        }

        let record = TurnRecord {
            game_id: self.game_id.clone(),
            match_no: self.match_no,
            turn_no,
            player_id: self.game.player_ids[seat].clone(),
            observation: rounded_observation(&obs),
            action_index: action,
            reward,
            match_points: points_logged,
        };
        let view = TurnView {
            game_no: self.game_no,
            match_no: self.match_no,
            actor: seat,
            board_before,
            action,
            scores: self.game.scores(),
        };
        Ok(StepOutcome {
            record,
            view,
            transitions,
            match_end,
            game_over,
        })
    }
}

/// Result of a finished game.
#[derive(Clone, Debug, PartialEq)]
pub struct GameResult {
    pub scores: [u32; NUM_PLAYERS],
    pub winner: usize,
    pub match_points: Vec<[u32; NUM_PLAYERS]>,
}

/// Which of `players` sits in each seat. One player may hold several seats.
pub type SeatOwners = [usize; NUM_PLAYERS];

/// Hands the outcome of a step to every player.
pub fn broadcast(players: &mut [&mut dyn Player], owners: &SeatOwners, outcome: &StepOutcome) {
    for t in &outcome.transitions {
        for (i, p) in players.iter_mut().enumerate() {
            p.observe_transition(t, owners[t.seat] == i);
        }
    }
    for p in players.iter_mut() {
        p.observe_turn(&outcome.view);
    }
    if let Some(summary) = &outcome.match_end {
        for p in players.iter_mut() {
            p.end_match(summary);
        }
    }
    if let Some((scores, _)) = &outcome.game_over {
        for p in players.iter_mut() {
            p.end_game(scores);
        }
    }
}

pub fn game_context(table: &Table, owners: &SeatOwners, player: usize) -> GameContext {
    GameContext {
        game_no: table.game_no(),
        player_ids: table.player_ids().clone(),
        own_seats: (0..NUM_PLAYERS).filter(|&s| owners[s] == player).collect(),
    }
}

/// Plays a whole game, optionally logging every turn.
pub fn play_game(
    table: &mut Table,
    players: &mut [&mut dyn Player],
    owners: &SeatOwners,
    mut log: Option<&mut EventLog>,
) -> Result<GameResult> {
    if owners.iter().any(|&o| o >= players.len()) {
        return Err(Error::Config("seat owner out of range".into()));
    }
    for i in 0..players.len() {
        let ctx = game_context(table, owners, i);
        players[i].begin_game(&ctx);
    }
    loop {
        let Some(seat) = table.to_act() else {
            table.start_next_match()?;
            continue;
        };
        let obs = table.observation(seat);
        let mask = table.mask(seat);
        let action = players[owners[seat]].select_action(seat, &obs, &mask)?;
        let outcome = table.apply(seat, action)?;
        if let Some(log) = log.as_deref_mut() {
            log.write(&outcome.record)?;
        }
        broadcast(players, owners, &outcome);
        if outcome.match_end.is_some() {
            if let Some(log) = log.as_deref_mut() {
                log.flush()?;
            }
        }
        if let Some((scores, winner)) = outcome.game_over {
            return Ok(GameResult {
                scores,
                winner,
                match_points: table.match_points().to_vec(),
            });
        }
    }
}
