use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{uniform_legal, AgentKind, Player};
use crate::engine::{ActionMask, Observation};
use crate::error::Result;

/// Picks uniformly among legal actions.
#[derive(Clone, Debug)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> RandomAgent {
        RandomAgent {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Player for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn select_action(&mut self, _seat: usize, _obs: &Observation, mask: &ActionMask) -> Result<usize> {
        uniform_legal(mask, &mut self.rng)
    }
}
