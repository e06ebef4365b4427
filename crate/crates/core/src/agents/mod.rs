//! Players that can occupy a seat: random, deep Q-learning, PPO, scripted,
//! and the rivalry-modulated DQL variant.
//!
//! A game driver owns the engine and talks to players through [`Player`]. It
//! assembles per-seat [`Transition`]s (from one of a seat's turns to its
//! next turn, or to the end of its match) and hands them to every player;
//! each player decides whether it learns from its own transitions only or
//! also from everybody else's.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{ActionMask, Observation, BOARD_SLOTS, NUM_PLAYERS};
use crate::error::{Error, Result};

mod confidence;
mod dql;
mod ppo;
mod random;
mod rival;
mod scripted;

pub use confidence::{confidence_from_probability, confidence_from_q, log2_confidence};
pub use dql::{DqlAgent, DqlConfig};
pub use ppo::{advantage, discounted_returns, kl_adapt, PpoAgent, PpoConfig, PpoStats, MIN_KL_BETA};
pub use random::RandomAgent;
pub use rival::RivalDqlAgent;
pub use scripted::{ScriptedAgent, ScriptedStyle};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Random,
    Dql,
    Ppo,
    Scripted,
}

/// A completed step of one seat.
#[derive(Clone, Debug)]
pub struct Transition {
    pub seat: usize,
    /// Id of the player who acted; used as the opponent tag in replay.
    pub actor_id: String,
    pub observation: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Observation,
    pub next_mask: Option<ActionMask>,
    pub terminal: bool,
}

/// Broadcast to every player after each applied turn.
#[derive(Clone, Debug)]
pub struct TurnView {
    pub game_no: u64,
    pub match_no: u32,
    pub actor: usize,
    /// Board slots (faces) before the action was applied.
    pub board_before: [u8; BOARD_SLOTS],
    pub action: usize,
    /// Cumulative game scores after the turn.
    pub scores: [u32; NUM_PLAYERS],
}

/// Who sits where, handed to a player at the start of a game.
#[derive(Clone, Debug)]
pub struct GameContext {
    pub game_no: u64,
    pub player_ids: [String; NUM_PLAYERS],
    /// Seats this player controls (a self-play learner may hold all four).
    pub own_seats: Vec<usize>,
}

/// End-of-match summary.
#[derive(Clone, Debug)]
pub struct MatchSummary {
    pub game_no: u64,
    pub match_no: u32,
    pub finished_order: Vec<usize>,
    pub points: [u32; NUM_PLAYERS],
    pub scores: [u32; NUM_PLAYERS],
}

pub trait Player: Send {
    fn kind(&self) -> AgentKind;

    /// Picks a legal action for `seat`. Fails only on an all-false mask.
    fn select_action(&mut self, seat: usize, obs: &Observation, mask: &ActionMask) -> Result<usize>;

    /// Called for every completed transition of every seat. `own` is true
    /// when this player controls the transition's seat.
    fn observe_transition(&mut self, _transition: &Transition, _own: bool) {}

    /// Called after every applied turn.
    fn observe_turn(&mut self, _view: &TurnView) {}

    fn begin_game(&mut self, _ctx: &GameContext) {}

    fn end_match(&mut self, _summary: &MatchSummary) {}

    fn end_game(&mut self, _scores: &[u32; NUM_PLAYERS]) {}

    /// Switches learning on or off. Non-learning players ignore this.
    fn set_learning(&mut self, _on: bool) {}

    /// Switches exploration on or off. Non-learning players ignore this.
    fn set_explore(&mut self, _on: bool) {}

    /// Introspective confidence in `action`, for players that can judge it.
    fn confidence(&self, _obs: &Observation, _action: usize, _mask: &ActionMask) -> Option<f64> {
        None
    }
}

pub(crate) fn check_mask(mask: &ActionMask) -> Result<Vec<usize>> {
    let legal = mask.legal_indices();
    if legal.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(legal)
}

/// Uniform choice among legal actions.
pub fn uniform_legal(mask: &ActionMask, rng: &mut impl Rng) -> Result<usize> {
    let legal = check_mask(mask)?;
    Ok(legal[rng.gen_range(0..legal.len())])
}

/// Legal action with the highest value; ties go to the lowest index.
pub fn masked_argmax(values: &[f64], mask: &ActionMask) -> Result<usize> {
    let legal = check_mask(mask)?;
    Ok(legal
        .into_iter()
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if values[b] >= values[i] => Some(b),
            _ => Some(i),
        })
        .expect("non-empty"))
}

/// Softmax restricted to legal actions; illegal entries are exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &ActionMask) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask.as_slice())
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    probs
}

pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
