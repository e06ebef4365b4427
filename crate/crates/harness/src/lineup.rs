use std::path::Path;

use chefs_core::agents::{
    DqlAgent, DqlConfig, PpoAgent, PpoConfig, Player, RandomAgent, RivalDqlAgent, ScriptedAgent, ScriptedStyle,
};
use chefs_core::engine::NUM_PLAYERS;
use chefs_core::predictor::{
    synthetic_histories, train_predictor, windows_from_histories, PredictorConfig, SimilarityPredictor,
};
use chefs_core::rivalry::{RivalryTracker, TraceRow};
use chefs_core::table::SeatOwners;
use chefs_core::{Error, Result};

use crate::config::{ExperimentConfig, SeatKind, SeatSpec};

pub enum Agent {
    Random(RandomAgent),
    Scripted(ScriptedAgent),
    Dql(DqlAgent),
    Ppo(PpoAgent),
    Rival(RivalDqlAgent),
}

impl Agent {
    pub fn player(&mut self) -> &mut dyn Player {
        match self {
            Agent::Random(a) => a,
            Agent::Scripted(a) => a,
            Agent::Dql(a) => a,
            Agent::Ppo(a) => a,
            Agent::Rival(a) => a,
        }
    }

    pub fn is_learner(&self) -> bool {
        matches!(self, Agent::Dql(_) | Agent::Ppo(_) | Agent::Rival(_))
    }

    /// Writes a checkpoint; agents without parameters write nothing.
    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            Agent::Dql(a) => a.save(dir),
            Agent::Rival(a) => a.dql().save(dir),
            Agent::Ppo(a) => a.save(dir),
            Agent::Random(_) | Agent::Scripted(_) => Ok(()),
        }
    }

    pub fn as_rival_mut(&mut self) -> Option<&mut RivalDqlAgent> {
        match self {
            Agent::Rival(a) => Some(a),
            _ => None,
        }
    }
}

/// Agents of one experiment and the seats they hold.
pub struct Lineup {
    pub agents: Vec<Agent>,
    pub keys: Vec<String>,
    pub owners: SeatOwners,
    pub ids: [String; NUM_PLAYERS],
}

impl Lineup {
    pub fn players(&mut self) -> Vec<&mut dyn Player> {
        self.agents.iter_mut().map(Agent::player).collect()
    }

    pub fn agent_of_seat(&mut self, seat: usize) -> &mut Agent {
        &mut self.agents[self.owners[seat]]
    }

    /// Trace rows collected by every rival agent since the last call.
    pub fn take_traces(&mut self) -> Vec<TraceRow> {
        self.agents
            .iter_mut()
            .filter_map(Agent::as_rival_mut)
            .flat_map(|a| a.take_trace())
            .collect()
    }

    pub fn save_all(&self, root: &Path, tag: &str) -> Result<Vec<std::path::PathBuf>> {
        let mut out = Vec::new();
        for (agent, key) in self.agents.iter().zip(&self.keys) {
            if agent.is_learner() {
                let dir = root.join(key).join(tag);
                agent.save(&dir)?;
                out.push(dir);
            }
        }
        Ok(out)
    }
}

fn mix(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k.wrapping_mul(0xbf58_476d_1ce4_e5b9)) ^ k
}

/// Seeds of agents, tables and corpora derive from the experiment seed.
pub fn derived_seed(seed: u64, k: u64) -> u64 {
    mix(seed, k)
}

/// Trains a predictor on the synthetic corpus with the default architecture.
pub fn synthetic_predictor(matches: usize, seed: u64) -> Result<SimilarityPredictor> {
    let config = PredictorConfig::default();
    let histories = synthetic_histories(matches, seed)?;
    let data = windows_from_histories(&histories, config.window);
    let (p, _) = train_predictor(&data, &config, seed)?;
    Ok(p)
}

fn load_or_new_dql(spec: &SeatSpec, base: &DqlConfig, seed: u64) -> Result<DqlAgent> {
    match &spec.checkpoint {
        Some(dir) => DqlAgent::load(dir),
        None => Ok(DqlAgent::new(DqlConfig { seed, ..base.clone() })),
    }
}

fn load_or_new_ppo(spec: &SeatSpec, base: &PpoConfig, seed: u64) -> Result<PpoAgent> {
    match &spec.checkpoint {
        Some(dir) => PpoAgent::load(dir),
        None => Ok(PpoAgent::new(PpoConfig { seed, ..base.clone() })),
    }
}

pub fn build_lineup(config: &ExperimentConfig) -> Result<Lineup> {
    config.validate()?;
    let mut predictor: Option<SimilarityPredictor> = None;
    let mut agents = Vec::new();
    let mut keys: Vec<String> = Vec::new();
    let mut owners = [0; NUM_PLAYERS];
    for (seat, spec) in config.seats.iter().enumerate() {
        if let Some(i) = keys.iter().position(|k| k == spec.agent_key()) {
            owners[seat] = i;
            continue;
        }
        let seed = derived_seed(config.seed, seat as u64 + 1);
        let mut agent = match spec.kind {
            SeatKind::Random => Agent::Random(RandomAgent::new(seed)),
            SeatKind::Scripted => {
                let style = spec
                    .style
                    .ok_or_else(|| Error::Config(format!("seat {}: scripted seat needs a style", spec.id)))?;
                Agent::Scripted(ScriptedAgent::new(style, seed))
            }
            SeatKind::Ppo => Agent::Ppo(load_or_new_ppo(spec, &config.ppo, seed)?),
            SeatKind::Dql if spec.rivalry => {
                if predictor.is_none() {
                    predictor = Some(match &config.rivalry.predictor {
                        Some(dir) => SimilarityPredictor::load(dir)?,
                        None => synthetic_predictor(config.rivalry.predictor_matches, derived_seed(config.seed, 99))?,
                    });
                }
                let tracker = RivalryTracker::new(config.rivalry.own_traits, predictor.clone());
                let mut rival = RivalDqlAgent::new(load_or_new_dql(spec, &config.dql, seed)?, tracker)
                    .with_reward_weight(spec.reward_weight);
                if let Some(t) = &spec.track {
                    rival = rival.tracking(t.clone());
                }
                Agent::Rival(rival)
            }
            SeatKind::Dql => Agent::Dql(load_or_new_dql(spec, &config.dql, seed)?),
        };
        agent.player().set_learning(spec.learning);
        agent.player().set_explore(spec.explores());
        owners[seat] = agents.len();
        agents.push(agent);
        keys.push(spec.agent_key().to_string());
    }
    Ok(Lineup {
        agents,
        keys,
        owners,
        ids: config.player_ids(),
    })
}

/// Four seats for self-play of one shared learner.
pub fn selfplay_seats(kind: SeatKind) -> Vec<SeatSpec> {
    (0..NUM_PLAYERS)
        .map(|i| SeatSpec {
            agent: Some("learner".into()),
            ..SeatSpec::new(&format!("learner-{i}"), kind)
        })
        .collect()
}

/// A frozen agent from `checkpoint` against three random players.
pub fn versus_random_seats(kind: SeatKind, checkpoint: &Path) -> Vec<SeatSpec> {
    let mut seats = vec![SeatSpec {
        checkpoint: Some(checkpoint.to_path_buf()),
        learning: false,
        ..SeatSpec::new("agent", kind)
    }];
    seats.extend((1..NUM_PLAYERS).map(|i| SeatSpec::new(&format!("random-{i}"), SeatKind::Random)));
    seats
}

/// Rival DQL, its non-rival twin, a PPO agent and a random agent. The rival
/// tracks the twin.
pub fn rivalry_seats(dql: &Path, ppo: &Path, rival: bool, w: f64) -> Vec<SeatSpec> {
    vec![
        SeatSpec {
            checkpoint: Some(dql.to_path_buf()),
            rivalry: rival,
            reward_weight: w,
            track: Some("dql".into()),
            ..SeatSpec::new("rival", SeatKind::Dql)
        },
        SeatSpec {
            checkpoint: Some(dql.to_path_buf()),
            ..SeatSpec::new("dql", SeatKind::Dql)
        },
        SeatSpec {
            checkpoint: Some(ppo.to_path_buf()),
            ..SeatSpec::new("ppo", SeatKind::Ppo)
        },
        SeatSpec::new("random", SeatKind::Random),
    ]
}

pub fn scripted_seat(id: &str, style: ScriptedStyle) -> SeatSpec {
    SeatSpec {
        style: Some(style),
        ..SeatSpec::new(id, SeatKind::Scripted)
    }
}
