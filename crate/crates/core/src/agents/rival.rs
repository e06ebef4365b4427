//! DQL agent whose terminal reward carries a rivalry bonus.

use super::{AgentKind, DqlAgent, GameContext, MatchSummary, Player, Transition, TurnView};
use crate::engine::{ActionMask, Observation, NUM_PLAYERS};
use crate::error::Result;
use crate::rivalry::{modulate_reward, RivalryTracker, TraceRow, DEFAULT_REWARD_WEIGHT};

/// Wraps a [`DqlAgent`]. On every opponent turn the tracker refreshes the
/// agent's rivalry towards that opponent; at the end of each match the
/// agent's terminal reward becomes `R_o + w * R_h`, where `R_h` is the
/// rivalry towards the tracked opponent (or the mean over all three when no
/// opponent is tracked).
pub struct RivalDqlAgent {
    dql: DqlAgent,
    tracker: RivalryTracker,
    reward_weight: f64,
    tracked: Option<String>,
    tracked_seat: Option<usize>,
    own_seat: Option<usize>,
    bonuses: Vec<f64>,
}

impl RivalDqlAgent {
    pub fn new(dql: DqlAgent, tracker: RivalryTracker) -> RivalDqlAgent {
        RivalDqlAgent {
            dql,
            tracker,
            reward_weight: DEFAULT_REWARD_WEIGHT,
            tracked: None,
            tracked_seat: None,
            own_seat: None,
            bonuses: Vec::new(),
        }
    }

    pub fn with_reward_weight(mut self, w: f64) -> RivalDqlAgent {
        self.reward_weight = w.max(0.0);
        self
    }

    pub fn tracking(mut self, opponent_id: impl Into<String>) -> RivalDqlAgent {
        self.tracked = Some(opponent_id.into());
        self
    }

    pub fn reward_weight(&self) -> f64 {
        self.reward_weight
    }

    pub fn set_reward_weight(&mut self, w: f64) {
        self.reward_weight = w.max(0.0);
    }

    pub fn dql(&self) -> &DqlAgent {
        &self.dql
    }

    pub fn dql_mut(&mut self) -> &mut DqlAgent {
        &mut self.dql
    }

    pub fn into_dql(self) -> DqlAgent {
        self.dql
    }

    pub fn tracker(&self) -> &RivalryTracker {
        &self.tracker
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        self.tracker.take_trace()
    }

    /// Rivalry bonuses `R_h` applied so far, one per finished match.
    pub fn bonuses(&self) -> &[f64] {
        &self.bonuses
    }

    pub fn take_bonuses(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.bonuses)
    }

    /// Rivalry towards the tracked opponent, or the mean towards all of them.
    pub fn current_rivalry(&self) -> f64 {
        match (self.tracked_seat, self.own_seat) {
            (Some(seat), _) => self.tracker.rivalry_towards(seat),
            (None, Some(own)) => {
                let others: Vec<usize> = (0..NUM_PLAYERS).filter(|&s| s != own).collect();
                others.iter().map(|&s| self.tracker.rivalry_towards(s)).sum::<f64>() / others.len() as f64
            }
            (None, None) => 0.0,
        }
    }
}

impl Player for RivalDqlAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Dql
    }

    fn select_action(&mut self, seat: usize, obs: &Observation, mask: &ActionMask) -> Result<usize> {
        let action = self.dql.select_action(seat, obs, mask)?;
        if let Some(ic) = self.dql.confidence(obs, action, mask) {
            self.tracker.record_confidence(ic);
        }
        Ok(action)
    }

    fn observe_transition(&mut self, t: &Transition, own: bool) {
        if own && t.terminal {
            let r_h = self.current_rivalry();
            self.bonuses.push(r_h);
            let mut shaped = t.clone();
            shaped.reward = modulate_reward(t.reward, r_h, self.reward_weight);
            self.dql.observe_transition(&shaped, own);
        } else {
            self.dql.observe_transition(t, own);
        }
    }

    fn observe_turn(&mut self, view: &TurnView) {
        self.tracker
            .observe_turn(view.match_no, view.actor, view.board_before, view.action);
    }

    fn begin_game(&mut self, ctx: &GameContext) {
        let own = ctx.own_seats.first().copied().unwrap_or(0);
        self.own_seat = Some(own);
        self.tracked_seat = self
            .tracked
            .as_deref()
            .and_then(|id| ctx.player_ids.iter().position(|p| p == id))
            .filter(|&s| s != own);
        self.tracker.begin_game(ctx.game_no, ctx.player_ids.clone(), own);
        self.dql.begin_game(ctx);
    }

    fn end_match(&mut self, summary: &MatchSummary) {
        self.tracker.end_match(&summary.points);
        self.dql.end_match(summary);
    }

    fn end_game(&mut self, scores: &[u32; NUM_PLAYERS]) {
        self.dql.end_game(scores);
    }

    fn set_learning(&mut self, on: bool) {
        self.dql.set_learning(on);
    }

    fn set_explore(&mut self, on: bool) {
        self.dql.set_explore(on);
    }

    fn confidence(&self, obs: &Observation, action: usize, mask: &ActionMask) -> Option<f64> {
        self.dql.confidence(obs, action, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::DqlConfig;
    use crate::engine::{BOARD_SLOTS, PASS_INDEX};
    use crate::rivalry::TraitProfile;

    fn ctx() -> GameContext {
        GameContext {
            game_no: 0,
            player_ids: ["me", "twin", "ppo", "rnd"].map(String::from),
            own_seats: vec![0],
        }
    }

    #[test]
    fn terminal_reward_gets_bonus() {
        let dql = DqlAgent::new(DqlConfig {
            hidden: vec![8],
            ..DqlConfig::default()
        });
        let mut agent = RivalDqlAgent::new(dql, RivalryTracker::new(TraitProfile::NEUTRAL, None)).tracking("twin");
        agent.begin_game(&ctx());
        agent.observe_turn(&TurnView {
            game_no: 0,
            match_no: 0,
            actor: 1,
            board_before: [0; BOARD_SLOTS],
            action: PASS_INDEX,
            scores: [0; 4],
        });
        let r_h = agent.current_rivalry();
        // Neutral competitiveness, no distance, no performance gap yet.
        assert!((r_h - 0.5 / 3.0).abs() < 1e-12);
        let t = Transition {
            seat: 0,
            actor_id: "me".into(),
            observation: Observation(vec![0.0; 28]),
            action: PASS_INDEX,
            reward: 1.0,
            next_observation: Observation(vec![0.0; 28]),
            next_mask: None,
            terminal: true,
        };
        agent.observe_transition(&t, true);
        assert_eq!(agent.bonuses(), &[r_h]);
        assert_eq!(agent.tracker().trace().len(), 1);
    }
}
