use std::path::{Path, PathBuf};

use chefs_core::rivalry::{TraitProfile, DEFAULT_REWARD_WEIGHT};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

/// How an agent seat behaves against the human.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    /// DQL whose terminal reward carries its rivalry towards the human.
    Rival,
    /// DQL learning from every seat, with the human's experiences weighted up.
    Copper,
    /// Frozen DQL.
    Offline,
    Dql,
    Ppo,
    Random,
}

impl AgentRole {
    pub fn needs_checkpoint(self) -> bool {
        self != AgentRole::Random
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    /// Name shown to the human and used as the player id.
    pub name: String,
    pub role: AgentRole,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl AgentSpec {
    pub fn new(name: &str, role: AgentRole, checkpoint: Option<&Path>) -> AgentSpec {
        AgentSpec {
            name: name.to_string(),
            role,
            checkpoint: checkpoint.map(Path::to_path_buf),
        }
    }
}

pub const SEAT_NAMES: [&str; 3] = ["Evan", "Dylan", "Frankie"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    /// Each session writes under `log_dir/<session id>/`.
    pub log_dir: PathBuf,
    pub human_name: String,
    pub human_seat: usize,
    pub agents: Vec<AgentSpec>,
    /// Pause before each agent move is sent, for human pacing.
    pub agent_delay_ms: u64,
    pub deadline_ms: u64,
    /// COPPER weight of experiences tagged with the human's id.
    pub human_opponent_weight: f64,
    pub reward_weight: f64,
    pub own_traits: TraitProfile,
    /// Similarity predictor directory for the rival; without one the human
    /// is assumed to share the rival's traits.
    pub predictor: Option<PathBuf>,
    /// Fixed table seed; drawn at random per session when absent.
    pub seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig::rival_copper_offline(Path::new("checkpoints/dql"))
    }
}

impl ServiceConfig {
    fn with_agents(agents: Vec<AgentSpec>) -> ServiceConfig {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            log_dir: PathBuf::from("sessions"),
            human_name: "human".into(),
            human_seat: 0,
            agents,
            agent_delay_ms: 600,
            deadline_ms: 60_000,
            human_opponent_weight: 2.0,
            reward_weight: DEFAULT_REWARD_WEIGHT,
            own_traits: TraitProfile::NEUTRAL,
            predictor: None,
            seed: None,
        }
    }

    /// A rival DQL, a COPPER DQL and a frozen DQL, all from one checkpoint.
    pub fn rival_copper_offline(dql: &Path) -> ServiceConfig {
        let roles = [AgentRole::Rival, AgentRole::Copper, AgentRole::Offline];
        ServiceConfig::with_agents(
            SEAT_NAMES
                .iter()
                .zip(roles)
                .map(|(name, role)| AgentSpec::new(name, role, Some(dql)))
                .collect(),
        )
    }

    /// DQL, PPO and random agents.
    pub fn dql_ppo_random(dql: &Path, ppo: &Path) -> ServiceConfig {
        ServiceConfig::with_agents(vec![
            AgentSpec::new(SEAT_NAMES[0], AgentRole::Dql, Some(dql)),
            AgentSpec::new(SEAT_NAMES[1], AgentRole::Ppo, Some(ppo)),
            AgentSpec::new(SEAT_NAMES[2], AgentRole::Random, None),
        ])
    }

    pub fn from_toml(text: &str) -> Result<ServiceConfig> {
        let config: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ServiceConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Io(path.to_path_buf(), e))?;
        ServiceConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.len() != 3 {
            return Err(ServiceError::Config(format!("{} agents given, exactly 3 needed", self.agents.len())));
        }
        if self.human_seat >= 4 {
            return Err(ServiceError::Config(format!("human seat {} out of range", self.human_seat)));
        }
        let mut names: Vec<&str> = self.agents.iter().map(|a| a.name.as_str()).collect();
        names.push(&self.human_name);
        names.sort_unstable();
        names.dedup();
        if names.len() != 4 {
            return Err(ServiceError::Config("player names must be distinct".into()));
        }
        if !(self.human_opponent_weight > 0.0 && self.human_opponent_weight.is_finite()) {
            return Err(ServiceError::Config("human opponent weight must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lineup_is_three_dql_variants() {
        let c = ServiceConfig::default();
        let roles: Vec<AgentRole> = c.agents.iter().map(|a| a.role).collect();
        assert_eq!(roles, [AgentRole::Rival, AgentRole::Copper, AgentRole::Offline]);
        let names: Vec<&str> = c.agents.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, SEAT_NAMES);
        assert_eq!(c.human_opponent_weight, 2.0);
        c.validate().unwrap();
    }

    #[test]
    fn toml_overrides_defaults() {
        let c = ServiceConfig::from_toml(
            r#"
listen = "0.0.0.0:9000"
agent_delay_ms = 0

[[agents]]
name = "a"
role = "dql"
checkpoint = "x"
[[agents]]
name = "b"
role = "ppo"
checkpoint = "y"
[[agents]]
name = "c"
role = "random"
"#,
        )
        .unwrap();
        assert_eq!(c.listen, "0.0.0.0:9000");
        assert_eq!(c.agents[2].role, AgentRole::Random);
        assert_eq!(c.deadline_ms, 60_000);
    }

    #[test]
    fn rejects_clashing_names() {
        let mut c = ServiceConfig::default();
        c.human_name = "Evan".into();
        assert!(c.validate().is_err());
    }
}
