use std::path::{Path, PathBuf};

use chefs_core::agents::{DqlConfig, PpoConfig, ScriptedStyle};
use chefs_core::engine::NUM_PLAYERS;
use chefs_core::rivalry::{TraitProfile, DEFAULT_REWARD_WEIGHT};
use chefs_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeatKind {
    Random,
    Scripted,
    Dql,
    Ppo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeatSpec {
    /// Player id written to logs and traces; unique per table.
    pub id: String,
    pub kind: SeatKind,
    /// Seats naming the same agent share one instance (self-play).
    #[serde(default)]
    pub agent: Option<String>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "yes")]
    pub learning: bool,
    /// Defaults to `learning`.
    #[serde(default)]
    pub explore: Option<bool>,
    /// DQL only: add the rivalry bonus to terminal rewards.
    #[serde(default)]
    pub rivalry: bool,
    #[serde(default = "default_weight")]
    pub reward_weight: f64,
    /// Id of the opponent whose rivalry modulates the reward.
    #[serde(default)]
    pub track: Option<String>,
    #[serde(default)]
    pub style: Option<ScriptedStyle>,
}

fn yes() -> bool {
    true
}

fn default_weight() -> f64 {
    DEFAULT_REWARD_WEIGHT
}

impl SeatSpec {
    pub fn new(id: &str, kind: SeatKind) -> SeatSpec {
        SeatSpec {
            id: id.to_string(),
            kind,
            agent: None,
            checkpoint: None,
            learning: !matches!(kind, SeatKind::Random | SeatKind::Scripted),
            explore: None,
            rivalry: false,
            reward_weight: DEFAULT_REWARD_WEIGHT,
            track: None,
            style: None,
        }
    }

    pub fn agent_key(&self) -> &str {
        self.agent.as_deref().unwrap_or(&self.id)
    }

    pub fn explores(&self) -> bool {
        self.explore.unwrap_or(self.learning)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RivalrySettings {
    /// The rival agent's own trait profile.
    pub own_traits: TraitProfile,
    /// Trained predictor directory; trained on the synthetic corpus if absent.
    pub predictor: Option<PathBuf>,
    pub predictor_matches: usize,
}

impl Default for RivalrySettings {
    fn default() -> Self {
        RivalrySettings {
            own_traits: TraitProfile::NEUTRAL,
            predictor: None,
            predictor_matches: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSettings {
    pub initial_w: f64,
    pub step: f64,
    /// Games per hill-climbing move.
    pub window: u64,
    /// Stop once the windowed rivalry has not improved for this many games.
    pub patience: u64,
    /// Minimum ratio of rival to baseline per-game average score.
    pub win_floor: f64,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings {
            initial_w: 0.0,
            step: 0.05,
            window: 10,
            patience: 100,
            win_floor: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seats: Vec<SeatSpec>,
    pub n_games: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    /// Write every turn of every game to `games.jsonl`.
    #[serde(default = "yes")]
    pub log_games: bool,
    #[serde(default)]
    pub dql: DqlConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub rivalry: RivalrySettings,
    #[serde(default)]
    pub ablation: AblationSettings,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_checkpoint_every() -> u64 {
    100
}

impl ExperimentConfig {
    pub fn new(seats: Vec<SeatSpec>, n_games: u64, seed: u64, out_dir: impl Into<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            seats,
            n_games,
            seed,
            out_dir: out_dir.into(),
            checkpoint_every: default_checkpoint_every(),
            log_games: true,
            dql: DqlConfig::default(),
            ppo: PpoConfig::default(),
            rivalry: RivalrySettings::default(),
            ablation: AblationSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seats.len() != NUM_PLAYERS {
            return Err(Error::Config(format!("{} seats given, exactly 4 needed", self.seats.len())));
        }
        if self.n_games == 0 {
            return Err(Error::Config("n_games must be at least 1".into()));
        }
        for (i, a) in self.seats.iter().enumerate() {
            if self.seats[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::Config(format!("duplicate seat id {}", a.id)));
            }
            if let Some(b) = self.seats[..i].iter().find(|b| b.agent_key() == a.agent_key()) {
                if b.kind != a.kind || b.rivalry != a.rivalry || b.checkpoint != a.checkpoint {
                    return Err(Error::Config(format!("seats sharing agent {} disagree", a.agent_key())));
                }
            }
            if a.rivalry && a.kind != SeatKind::Dql {
                return Err(Error::Config(format!("seat {}: rivalry needs a dql seat", a.id)));
            }
            if a.reward_weight < 0.0 {
                return Err(Error::Config(format!("seat {}: reward weight below zero", a.id)));
            }
        }
        Ok(())
    }

    pub fn player_ids(&self) -> [String; NUM_PLAYERS] {
        std::array::from_fn(|i| self.seats[i].id.clone())
    }
}
