//! Hand-written policies with recognisable play styles. They label the
//! synthetic corpus used to train and check the trait predictor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_mask, AgentKind, Player};
use crate::engine::{ActionMask, ActionSpec, Observation, HAND_SIZE, PASS_INDEX};
use crate::error::Result;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedStyle {
    /// Dumps the biggest set it can, jokers included; never passes by choice.
    Aggressive,
    /// Holds back whenever the board is not cleared; otherwise plays the
    /// smallest joker-free set of its weakest face.
    Conservative,
    /// Uniform over legal actions.
    Random,
}

impl ScriptedStyle {
    pub const ALL: [ScriptedStyle; 3] = [
        ScriptedStyle::Aggressive,
        ScriptedStyle::Conservative,
        ScriptedStyle::Random,
    ];
}

#[derive(Clone, Debug)]
pub struct ScriptedAgent {
    style: ScriptedStyle,
    rng: ChaCha8Rng,
}

impl ScriptedAgent {
    pub fn new(style: ScriptedStyle, seed: u64) -> ScriptedAgent {
        ScriptedAgent {
            style,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn style(&self) -> ScriptedStyle {
        self.style
    }
}

const CONSERVATIVE_HOLD: f64 = 1.0;

fn discards(legal: &[usize]) -> Vec<(usize, u8, u8, u8)> {
    legal
        .iter()
        .filter_map(|&i| match ActionSpec::from_index(i).ok()? {
            ActionSpec::Discard { value, qty, jokers } => Some((i, value, qty, jokers)),
            _ => None,
        })
        .collect()
}

impl Player for ScriptedAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Scripted
    }

    fn select_action(&mut self, _seat: usize, obs: &Observation, mask: &ActionMask) -> Result<usize> {
        let legal = check_mask(mask)?;
        if legal.len() == 1 {
            return Ok(legal[0]);
        }
        let board_cleared = obs.as_slice()[HAND_SIZE + 1] == 0.0 && obs.as_slice()[HAND_SIZE] > 0.9;
        let options = discards(&legal);
        match self.style {
            ScriptedStyle::Random => Ok(legal[self.rng.gen_range(0..legal.len())]),
            ScriptedStyle::Aggressive => {
                let best = options
                    .iter()
                    .max_by_key(|&&(_, value, qty, jokers)| (qty + jokers, value))
                    .map(|&(i, ..)| i);
                Ok(best.unwrap_or_else(|| {
                    if mask.is_legal(crate::engine::JOKER_ONLY_INDEX) {
                        crate::engine::JOKER_ONLY_INDEX
                    } else {
                        PASS_INDEX
                    }
                }))
            }
            ScriptedStyle::Conservative => {
                if !board_cleared && mask.is_legal(PASS_INDEX) && self.rng.gen_bool(CONSERVATIVE_HOLD) {
                    return Ok(PASS_INDEX);
                }
                let pick = options
                    .iter()
                    .filter(|&&(.., jokers)| jokers == 0)
                    .min_by_key(|&&(_, value, qty, _)| (qty, std::cmp::Reverse(value)))
                    .map(|&(i, ..)| i);
                Ok(pick.unwrap_or(if mask.is_legal(PASS_INDEX) { PASS_INDEX } else { legal[0] }))
            }
        }
    }
}
