//! One human against three agents. A session owns its table, its agents and
//! its log files; it changes only inside
//! [`Session::handle_client_message`], one client message at a time.
//!
//! Agents play as soon as it is their turn. Their transitions are held back
//! until the match ends and then fed to them in one pass, so learning never
//! happens while the human is waiting for a move.

use std::path::{Path, PathBuf};

use chefs_core::agents::{
    DqlAgent, GameContext, PpoAgent, Player, RandomAgent, RivalDqlAgent, Transition,
};
use chefs_core::engine::{ActionMask, NUM_ACTIONS, NUM_PLAYERS};
use chefs_core::eventlog::{EventLog, TurnRecord};
use chefs_core::predictor::SimilarityPredictor;
use chefs_core::replay::SampleMode;
use chefs_core::rivalry::{RivalryTracker, TraceRow};
use chefs_core::table::{StepOutcome, Table};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AgentRole, AgentSpec, ServiceConfig};
use crate::error::{Result, ServiceError};
use crate::wire::{
    ActionRejected, ActionRequest, GameEnd, JoinedPayload, MatchEnd, StateUpdate, WireMessage,
};

pub const OUT_OF_TURN: &str = "OUT_OF_TURN";
pub const ILLEGAL_ACTION: &str = "ILLEGAL_ACTION";
pub const GAME_OVER: &str = "GAME_OVER";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Waiting,
    InMatch,
    BetweenMatches,
    Finished,
}

pub enum ServiceAgent {
    Rival(RivalDqlAgent),
    Dql(DqlAgent),
    Ppo(PpoAgent),
    Random(RandomAgent),
}

impl ServiceAgent {
    pub fn player(&mut self) -> &mut dyn Player {
        match self {
            ServiceAgent::Rival(a) => a,
            ServiceAgent::Dql(a) => a,
            ServiceAgent::Ppo(a) => a,
            ServiceAgent::Random(a) => a,
        }
    }

    pub fn dql(&self) -> Option<&DqlAgent> {
        match self {
            ServiceAgent::Rival(a) => Some(a.dql()),
            ServiceAgent::Dql(a) => Some(a),
            _ => None,
        }
    }

    fn params_finite(&self) -> bool {
        match self {
            ServiceAgent::Rival(a) => a.dql().online().params().iter().all(|x| x.is_finite()),
            ServiceAgent::Dql(a) => a.online().params().iter().all(|x| x.is_finite()),
            ServiceAgent::Ppo(a) => a.actor().params().iter().chain(&a.critic().params()).all(|x| x.is_finite()),
            ServiceAgent::Random(_) => true,
        }
    }
}

pub struct SeatAgent {
    pub name: String,
    pub role: AgentRole,
    pub agent: ServiceAgent,
    pub learning: bool,
}

fn load_dql(spec: &AgentSpec) -> Result<DqlAgent> {
    let path = spec
        .checkpoint
        .as_ref()
        .ok_or_else(|| ServiceError::Config(format!("agent {} needs a checkpoint", spec.name)))?;
    DqlAgent::load(path).map_err(|e| ServiceError::MissingCheckpoint(path.clone(), e))
}

fn build_agent(
    spec: &AgentSpec,
    config: &ServiceConfig,
    predictor: &Option<SimilarityPredictor>,
    seed: u64,
) -> Result<SeatAgent> {
    let human = config.human_name.as_str();
    let (agent, learning) = match spec.role {
        AgentRole::Rival => {
            let tracker = RivalryTracker::new(config.own_traits, predictor.clone());
            let rival = RivalDqlAgent::new(load_dql(spec)?, tracker)
                .with_reward_weight(config.reward_weight)
                .tracking(human);
            (ServiceAgent::Rival(rival), true)
        }
        AgentRole::Copper => {
            let mut dql = load_dql(spec)?;
            dql.config.sample_mode = SampleMode::Copper;
            dql.config.learn_from_others = true;
            dql.replay_mut().set_opponent_weight(human, config.human_opponent_weight)?;
            (ServiceAgent::Dql(dql), true)
        }
        AgentRole::Offline => (ServiceAgent::Dql(load_dql(spec)?), false),
        AgentRole::Dql => (ServiceAgent::Dql(load_dql(spec)?), true),
        AgentRole::Ppo => {
            let path = spec
                .checkpoint
                .as_ref()
                .ok_or_else(|| ServiceError::Config(format!("agent {} needs a checkpoint", spec.name)))?;
            let ppo = PpoAgent::load(path).map_err(|e| ServiceError::MissingCheckpoint(path.clone(), e))?;
            (ServiceAgent::Ppo(ppo), true)
        }
        AgentRole::Random => (ServiceAgent::Random(RandomAgent::new(seed)), false),
    };
    let mut seat = SeatAgent {
        name: spec.name.clone(),
        role: spec.role,
        agent,
        learning,
    };
    seat.agent.player().set_learning(learning);
    seat.agent.player().set_explore(false);
    Ok(seat)
}

/// What one online learning pass did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningReport {
    pub match_no: u32,
    pub transitions: usize,
    pub human_actions: usize,
    /// Rival trace rows towards the human logged for the match.
    pub human_rivalry_rows: usize,
    /// Agents frozen because their update produced non-finite parameters.
    pub frozen: Vec<String>,
}

pub struct Session {
    id: String,
    config: ServiceConfig,
    table: Table,
    human_seat: usize,
    agents: [Option<SeatAgent>; NUM_PLAYERS],
    phase: Phase,
    phases: Vec<Phase>,
    dir: PathBuf,
    log: EventLog,
    rivalry_log: EventLog,
    advertised: Option<ActionMask>,
    pending: Vec<Transition>,
    human_actions: usize,
    rivalry: Vec<TraceRow>,
    reports: Vec<LearningReport>,
}

/// Creates a session with a fresh id. Agents are loaded before anything is
/// written, so a bad checkpoint leaves no trace on disk.
pub fn start_session(config: &ServiceConfig) -> Result<Session> {
    let id = uuid::Uuid::new_v4().simple().to_string();
    Session::new(config, id)
}

impl Session {
    pub fn new(config: &ServiceConfig, id: String) -> Result<Session> {
        config.validate()?;
        let seed = config.seed.unwrap_or_else(|| rand::thread_rng().gen());
        let predictor = config.predictor.as_ref().map(SimilarityPredictor::load).transpose()?;

        let mut agents: [Option<SeatAgent>; NUM_PLAYERS] = Default::default();
        let mut specs = config.agents.iter();
        for (seat, slot) in agents.iter_mut().enumerate() {
            if seat != config.human_seat {
                let spec = specs.next().expect("three agents validated");
                *slot = Some(build_agent(spec, config, &predictor, seed.wrapping_add(seat as u64 + 1))?);
            }
        }
        let ids: [String; NUM_PLAYERS] = std::array::from_fn(|s| match &agents[s] {
            Some(a) => a.name.clone(),
            None => config.human_name.clone(),
        });

        let dir = config.log_dir.join(&id);
        std::fs::create_dir_all(&dir).map_err(|e| ServiceError::Io(dir.clone(), e))?;
        let players_path = dir.join("players.json");
        let ids_json = serde_json::to_string(&ids).map_err(chefs_core::Error::from)?;
        std::fs::write(&players_path, ids_json).map_err(|e| ServiceError::Io(players_path, e))?;
        let log = EventLog::append(dir.join("games.jsonl"))?;
        let rivalry_log = EventLog::append(dir.join("rivalry.jsonl"))?;

        let table = Table::new(id.clone(), 0, ids.clone(), seed);
        for (seat, a) in agents.iter_mut().enumerate() {
            if let Some(a) = a {
                a.agent.player().begin_game(&GameContext {
                    game_no: 0,
                    player_ids: ids.clone(),
                    own_seats: vec![seat],
                });
            }
        }
        Ok(Session {
            id,
            config: config.clone(),
            table,
            human_seat: config.human_seat,
            agents,
            phase: Phase::Waiting,
            phases: vec![Phase::Waiting],
            dir,
            log,
            rivalry_log,
            advertised: None,
            pending: Vec::new(),
            human_actions: 0,
            rivalry: Vec::new(),
            reports: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Every phase entered, in order.
    pub fn phase_history(&self) -> &[Phase] {
        &self.phases
    }

    pub fn human_seat(&self) -> usize {
        self.human_seat
    }

    pub fn player_ids(&self) -> &[String; NUM_PLAYERS] {
        self.table.player_ids()
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn agent(&self, seat: usize) -> Option<&SeatAgent> {
        self.agents[seat].as_ref()
    }

    pub fn log_dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join("games.jsonl")
    }

    pub fn rivalry_rows(&self) -> &[TraceRow] {
        &self.rivalry
    }

    pub fn learning_reports(&self) -> &[LearningReport] {
        &self.reports
    }

    /// The mask most recently sent to the client, while it is their turn.
    pub fn advertised_mask(&self) -> Option<&ActionMask> {
        self.advertised.as_ref()
    }

    fn enter(&mut self, phase: Phase) {
        if self.phase != phase {
            self.phase = phase;
            self.phases.push(phase);
        }
    }

    /// Parses one client frame and handles it. Malformed frames get an
    /// `error` reply and change nothing.
    pub fn handle_text(&mut self, text: &str) -> Vec<WireMessage> {
        match WireMessage::parse(text) {
            Ok(msg) => self.handle_client_message(msg),
            Err(e) => vec![WireMessage::error(format!("malformed message: {e}"))],
        }
    }

    pub fn handle_client_message(&mut self, msg: WireMessage) -> Vec<WireMessage> {
        match msg {
            WireMessage::Join(_) => {
                if self.phase != Phase::Waiting {
                    return vec![WireMessage::error("already joined")];
                }
                self.enter(Phase::InMatch);
                let mut out = vec![
                    WireMessage::Joined(JoinedPayload {
                        session_id: self.id.clone(),
                        seat: self.human_seat,
                        players: self.table.player_ids().clone(),
                    }),
                    self.state_update(),
                ];
                self.request_if_human(&mut out);
                out
            }
            WireMessage::Action(a) => {
                if self.phase == Phase::Waiting {
                    return vec![WireMessage::error("join first")];
                }
                if let Some(reason) = self.rejection(a.index) {
                    return vec![WireMessage::ActionRejected(ActionRejected {
                        index: a.index,
                        reason: reason.into(),
                    })];
                }
                self.advertised = None;
                self.human_actions += 1;
                let mut out = Vec::new();
                if self.step(self.human_seat, a.index, &mut out) {
                    self.request_if_human(&mut out);
                }
                out
            }
            other => vec![WireMessage::error(format!(
                "unexpected client message {}",
                serde_json::to_value(&other).map(|v| v["type"].to_string()).unwrap_or_default()
            ))],
        }
    }

    fn rejection(&self, index: usize) -> Option<&'static str> {
        if self.phase == Phase::Finished {
            return Some(GAME_OVER);
        }
        if self.table.to_act() != Some(self.human_seat) {
            return Some(OUT_OF_TURN);
        }
        match &self.advertised {
            Some(mask) if index < NUM_ACTIONS && mask.is_legal(index) => None,
            _ => Some(ILLEGAL_ACTION),
        }
    }

    fn state_update(&self) -> WireMessage {
        let state = self.table.state();
        WireMessage::StateUpdate(StateUpdate {
            hand: state.hand(self.human_seat).faces(),
            board: state.board_cards().iter().map(|c| c.face()).collect(),
            scores: self.table.scores(),
            turn: state.turn(),
            match_no: self.table.match_no(),
        })
    }

    /// Sends the human an action request if it is their turn.
    fn request_if_human(&mut self, out: &mut Vec<WireMessage>) {
        if self.phase != Phase::InMatch || self.advertised.is_some() {
            return;
        }
        if self.table.to_act() == Some(self.human_seat) {
            let mask = self.table.mask(self.human_seat);
            out.push(WireMessage::ActionRequest(ActionRequest {
                mask: mask.as_slice().to_vec(),
                deadline_ms: self.config.deadline_ms,
            }));
            self.advertised = Some(mask);
        }
    }

    /// True while an agent is to move.
    pub fn agent_to_move(&self) -> bool {
        self.phase == Phase::InMatch && matches!(self.table.to_act(), Some(s) if s != self.human_seat)
    }

    /// Plays one agent move, if an agent is to move. The transport calls
    /// this on its own clock so agent moves can be paced for the human.
    pub fn agent_step(&mut self) -> Option<Vec<WireMessage>> {
        if !self.agent_to_move() {
            return None;
        }
        let seat = self.table.to_act()?;
        let obs = self.table.observation(seat);
        let mask = self.table.mask(seat);
        let agent = self.agents[seat].as_mut().expect("agent seat");
        let chosen = agent.agent.player().select_action(seat, &obs, &mask);
        let name = agent.name.clone();
        let mut out = Vec::new();
        match chosen {
            Ok(action) => {
                if self.step(seat, action, &mut out) {
                    self.request_if_human(&mut out);
                }
            }
            Err(e) => self.abort(format!("agent {name} failed: {e}"), &mut out),
        }
        Some(out)
    }

    /// Plays agent moves until the human is to move or the game ends.
    pub fn run_agents(&mut self) -> Vec<WireMessage> {
        let mut out = Vec::new();
        while let Some(msgs) = self.agent_step() {
            out.extend(msgs);
        }
        out
    }

    /// Handles a message and then lets the agents play: what a client sees
    /// when agent moves are not paced.
    pub fn handle_and_run(&mut self, msg: WireMessage) -> Vec<WireMessage> {
        let mut out = self.handle_client_message(msg);
        out.extend(self.run_agents());
        out
    }

    /// Applies one action and emits its messages. Returns false once the
    /// session has ended.
    fn step(&mut self, seat: usize, action: usize, out: &mut Vec<WireMessage>) -> bool {
        let outcome = match self.table.apply(seat, action) {
            Ok(o) => o,
            Err(e) => {
                self.abort(format!("rejected action from seat {seat}: {e}"), out);
                return false;
            }
        };
        if let Err(e) = self.persist_event(&outcome.record) {
            self.abort(format!("event log failed: {e}"), out);
            return false;
        }
        self.dispatch(&outcome);
        out.push(self.state_update());
        self.finish_turn(outcome, out)
    }

    fn dispatch(&mut self, outcome: &StepOutcome) {
        self.pending.extend(outcome.transitions.iter().cloned());
        self.for_each_agent(|p| p.observe_turn(&outcome.view));
    }

    fn for_each_agent(&mut self, mut f: impl FnMut(&mut dyn Player)) {
        for a in self.agents.iter_mut().flatten() {
            f(a.agent.player());
        }
    }

    fn finish_turn(&mut self, outcome: StepOutcome, out: &mut Vec<WireMessage>) -> bool {
        let Some(summary) = outcome.match_end else { return true };
        self.enter(Phase::BetweenMatches);
        out.push(WireMessage::MatchEnd(MatchEnd {
            match_no: summary.match_no,
            points: summary.points,
            scores: summary.scores,
        }));
        let report = self.online_learning_step();
        self.reports.push(report);
        self.for_each_agent(|p| p.end_match(&summary));
        if let Err(e) = self.flush_logs() {
            self.abort(format!("event log failed: {e}"), out);
            return false;
        }
        if let Some((scores, winner)) = outcome.game_over {
            self.for_each_agent(|p| p.end_game(&scores));
            self.enter(Phase::Finished);
            out.push(WireMessage::GameEnd(GameEnd {
                scores,
                winner: Some(winner),
                error: None,
            }));
            return false;
        }
        if let Err(e) = self.table.start_next_match() {
            self.abort(format!("could not deal: {e}"), out);
            return false;
        }
        self.enter(Phase::InMatch);
        out.push(self.state_update());
        true
    }

    /// Feeds the match's transitions, tagged with their actors' ids, to every
    /// agent and collects the rival's trace. Agents whose parameters stop
    /// being finite are frozen for the rest of the session.
    pub fn online_learning_step(&mut self) -> LearningReport {
        let transitions = std::mem::take(&mut self.pending);
        let mut frozen = Vec::new();
        for (seat, slot) in self.agents.iter_mut().enumerate() {
            let Some(a) = slot else { continue };
            for t in &transitions {
                a.agent.player().observe_transition(t, t.seat == seat);
            }
            if a.learning && !a.agent.params_finite() {
                a.learning = false;
                a.agent.player().set_learning(false);
                frozen.push(a.name.clone());
            }
        }
        let human = self.config.human_name.clone();
        let mut rows = Vec::new();
        for a in self.agents.iter_mut().flatten() {
            if let ServiceAgent::Rival(r) = &mut a.agent {
                rows.extend(r.take_trace());
            }
        }
        let human_rows = rows.iter().filter(|r| r.opponent == human).count();
        for r in &rows {
            // Losing a trace row must not end the game.
            let _ = self.rivalry_log.write(r);
        }
        self.rivalry.extend(rows);
        LearningReport {
            match_no: self.table.match_no(),
            transitions: transitions.len(),
            human_actions: std::mem::take(&mut self.human_actions),
            human_rivalry_rows: human_rows,
            frozen,
        }
    }

    /// Appends one turn record to the session log.
    pub fn persist_event(&mut self, record: &TurnRecord) -> chefs_core::Result<()> {
        self.log.write(record)
    }

    fn flush_logs(&mut self) -> chefs_core::Result<()> {
        self.log.flush()?;
        self.rivalry_log.flush()
    }

    fn abort(&mut self, reason: String, out: &mut Vec<WireMessage>) {
        let _ = self.flush_logs();
        self.enter(Phase::Finished);
        self.advertised = None;
        out.push(WireMessage::GameEnd(GameEnd {
            scores: self.table.scores(),
            winner: self.table.winner(),
            error: Some(reason),
        }));
    }

    #[cfg(test)]
    pub(crate) fn break_log(&mut self) {
        struct Broken;
        impl std::io::Write for Broken {
            fn write(&mut self, _: &[u8]) -> std::io::Result<usize> {
                Err(std::io::Error::other("disk full"))
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Err(std::io::Error::other("disk full"))
            }
        }
        self.log = EventLog::to_writer(Box::new(Broken));
    }
}
