//! Deep Q-learning with a target network and prioritised replay.
//!
//! The TD error of a sample is `y - Q(s, a)` with
//! `y = r + gamma * max_a' Q_target(s', a')` (just `r` when terminal), the
//! maximum taken over the legal actions of `s'` when they are known. The
//! gradient applied is that of `0.5 * mean(TD^2)`, so for a network that is
//! a plain table and plain SGD, one step moves `Q(s, a)` by exactly
//! `alpha * TD`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_mask, confidence_from_q, masked_argmax, AgentKind, Player, Transition};
use crate::engine::{ActionMask, Observation, NUM_ACTIONS, OBS_LEN};
use crate::error::{Error, Result};
use crate::nn::{Activation, Gradients, Mlp, Optimizer, OptimizerKind};
use crate::replay::{Batch, Experience, PriorityBuffer, SampleMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqlConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    /// Learning rate (alpha).
    pub alpha: f64,
    pub optimizer: OptimizerKind,
    pub max_grad_norm: Option<f64>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Action selections over which epsilon anneals linearly.
    pub epsilon_decay_steps: u64,
    pub batch_size: usize,
    /// Train once every this many stored transitions.
    pub train_every: usize,
    pub warmup: usize,
    /// Training steps between target-network syncs.
    pub sync_interval: u64,
    pub buffer_capacity: usize,
    pub priority_exponent: f64,
    pub epsilon_priority: f64,
    pub sample_mode: SampleMode,
    /// Also learn from transitions of other seats, tagged by actor.
    pub learn_from_others: bool,
    pub seed: u64,
}

impl Default for DqlConfig {
    fn default() -> Self {
        DqlConfig {
            hidden: vec![128, 128],
            gamma: 0.95,
            alpha: 5e-4,
            optimizer: OptimizerKind::adam(),
            max_grad_norm: Some(10.0),
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 100_000,
            batch_size: 32,
            train_every: 4,
            warmup: 500,
            sync_interval: 250,
            buffer_capacity: 20_000,
            priority_exponent: crate::replay::DEFAULT_PRIORITY_EXPONENT,
            epsilon_priority: crate::replay::DEFAULT_EPSILON_PRIORITY,
            sample_mode: SampleMode::Per,
            learn_from_others: false,
            seed: 0,
        }
    }
}

pub struct DqlAgent {
    pub config: DqlConfig,
    online: Mlp,
    target: Mlp,
    optimizer: Optimizer,
    replay: PriorityBuffer,
    rng: ChaCha8Rng,
    learning: bool,
    explore: bool,
    selections: u64,
    stored: usize,
    train_steps: u64,
    syncs: u64,
    last_mean_td: Option<f64>,
}

impl DqlAgent {
    pub fn new(config: DqlConfig) -> DqlAgent {
        let mut dims = vec![OBS_LEN];
        dims.extend(&config.hidden);
        dims.push(NUM_ACTIONS);
        let online = Mlp::new(&dims, Activation::Relu, Activation::Linear, config.seed);
        DqlAgent::with_network(config, online)
    }

    /// Wraps an explicit Q-network (any input size, 200 outputs).
    pub fn with_network(config: DqlConfig, online: Mlp) -> DqlAgent {
        let mut optimizer = Optimizer::new(config.optimizer, config.alpha, &online);
        optimizer.max_grad_norm = config.max_grad_norm;
        let replay = PriorityBuffer::with_params(
            config.buffer_capacity,
            config.priority_exponent,
            config.epsilon_priority,
        );
        DqlAgent {
            target: online.clone(),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15),
            online,
            optimizer,
            replay,
            config,
            learning: true,
            explore: true,
            selections: 0,
            stored: 0,
            train_steps: 0,
            syncs: 0,
            last_mean_td: None,
        }
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn replay(&self) -> &PriorityBuffer {
        &self.replay
    }

    pub fn replay_mut(&mut self) -> &mut PriorityBuffer {
        &mut self.replay
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    pub fn last_mean_td(&self) -> Option<f64> {
        self.last_mean_td
    }

    pub fn is_learning(&self) -> bool {
        self.learning
    }

    pub fn epsilon(&self) -> f64 {
        let c = &self.config;
        if c.epsilon_decay_steps == 0 {
            return c.epsilon_end;
        }
        let frac = (self.selections as f64 / c.epsilon_decay_steps as f64).min(1.0);
        c.epsilon_start + (c.epsilon_end - c.epsilon_start) * frac
    }

    /// Sets the annealing position, e.g. to resume after loading a checkpoint.
    pub fn set_selections(&mut self, n: u64) {
        self.selections = n;
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(obs)
    }

    /// Epsilon-greedy over legal actions with an explicit epsilon.
    pub fn select_with_epsilon(&mut self, obs: &[f64], mask: &ActionMask, epsilon: f64) -> Result<usize> {
        let legal = check_mask(mask)?;
        if legal.len() == 1 {
            return Ok(legal[0]);
        }
        if epsilon > 0.0 && self.rng.gen::<f64>() < epsilon {
            return Ok(legal[self.rng.gen_range(0..legal.len())]);
        }
        masked_argmax(&self.online.forward(obs)?, mask)
    }

    pub fn store(&mut self, experience: Experience) {
        let initial = (self.replay.max_priority() - self.replay.epsilon_priority()).max(0.0);
        self.replay.push(experience, initial);
        self.stored += 1;
    }

    /// One gradient step on `batch`; returns the mean |TD| before the step
    /// and writes the new priorities back into the replay buffer.
    pub fn dql_update(&mut self, batch: &Batch) -> Result<f64> {
        if batch.experiences.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = batch.experiences.len() as f64;
        let mut grads = Gradients::zeros_like(&self.online);
        let mut tds = Vec::with_capacity(batch.experiences.len());
        for e in &batch.experiences {
            let cache = self.online.forward_with_cache(&e.observation)?;
            let q = cache.output()[e.action_index];
            let target = if e.terminal {
                e.reward
            } else {
                let next = self.target.forward(&e.next_observation)?;
                let best = match &e.next_mask {
                    Some(m) if m.count() > 0 => next[masked_argmax(&next, m)?],
                    _ => next.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                };
                e.reward + self.config.gamma * best
            };
            let td = target - q;
            if !td.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            let mut upstream = vec![0.0; self.online.output_dim()];
            upstream[e.action_index] = -td / n;
            self.online.backward_into(&cache, &upstream, &mut grads)?;
            tds.push(td);
        }
        self.optimizer.step(&mut self.online, &grads)?;
        self.replay.update_priorities(&batch.ids, &tds);
        self.train_steps += 1;
        if self.config.sync_interval > 0 && self.train_steps % self.config.sync_interval == 0 {
            self.sync_target();
        }
        let mean = tds.iter().map(|t| t.abs()).sum::<f64>() / n;
        self.last_mean_td = Some(mean);
        Ok(mean)
    }

    /// Samples a batch from replay and trains on it.
    pub fn train_step(&mut self) -> Result<f64> {
        let batch = self
            .replay
            .sample(self.config.batch_size, self.config.sample_mode, &mut self.rng)?;
        self.dql_update(&batch)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_params_from(&self.online);
        self.syncs += 1;
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.online.save_weights(dir.join("online.bin"))?;
        self.target.save_weights(dir.join("target.bin"))?;
        let sidecar = DqlSidecar {
            kind: AgentKind::Dql,
            config: self.config.clone(),
            selections: self.selections,
        };
        let path = dir.join("agent.json");
        std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<DqlAgent> {
        let dir = dir.as_ref();
        let path = dir.join("agent.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: DqlSidecar = serde_json::from_str(&text)?;
        if sidecar.kind != AgentKind::Dql {
            return Err(Error::Config(format!("{} is not a DQL checkpoint", dir.display())));
        }
        let mut agent = DqlAgent::new(sidecar.config);
        agent.online.load_into(dir.join("online.bin"))?;
        agent.target.load_into(dir.join("target.bin"))?;
        agent.selections = sidecar.selections;
        Ok(agent)
    }
}

#[derive(Serialize, Deserialize)]
struct DqlSidecar {
    kind: AgentKind,
    config: DqlConfig,
    selections: u64,
}

pub(crate) fn experience_from(t: &Transition) -> Experience {
    Experience {
        observation: t.observation.0.clone(),
        action_index: t.action,
        reward: t.reward,
        next_observation: t.next_observation.0.clone(),
        next_mask: t.next_mask.clone(),
        terminal: t.terminal,
        opponent_id: t.actor_id.clone(),
    }
}

impl DqlAgent {
    /// Stores a transition (if learning) and trains on schedule.
    pub fn learn_from(&mut self, experience: Experience) -> Result<()> {
        if !self.learning {
            return Ok(());
        }
        self.store(experience);
        if self.replay.len() >= self.config.warmup.max(1)
            && self.stored % self.config.train_every.max(1) == 0
        {
            self.train_step()?;
        }
        Ok(())
    }
}

impl Player for DqlAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Dql
    }

    fn select_action(&mut self, _seat: usize, obs: &Observation, mask: &ActionMask) -> Result<usize> {
        let epsilon = if self.explore { self.epsilon() } else { 0.0 };
        if self.explore {
            self.selections += 1;
        }
        self.select_with_epsilon(obs.as_slice(), mask, epsilon)
    }

    fn observe_transition(&mut self, t: &Transition, own: bool) {
        if own || self.config.learn_from_others {
            // A failed step leaves the network untouched; play goes on.
            let _ = self.learn_from(experience_from(t));
        }
    }

    fn set_learning(&mut self, on: bool) {
        self.learning = on;
    }

    fn set_explore(&mut self, on: bool) {
        self.explore = on;
    }

    fn confidence(&self, obs: &Observation, action: usize, mask: &ActionMask) -> Option<f64> {
        let q = self.online.forward(obs.as_slice()).ok()?;
        confidence_from_q(&q, action, mask).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    fn tabular_agent(q0: f64, alpha: f64) -> DqlAgent {
        // Zero input: Q(s, a) is the bias of output a.
        let layer = Layer {
            inputs: 1,
            outputs: NUM_ACTIONS,
            weights: vec![0.0; NUM_ACTIONS],
            biases: vec![q0; NUM_ACTIONS],
            activation: Activation::Linear,
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let config = DqlConfig {
            optimizer: OptimizerKind::Sgd,
            alpha,
            max_grad_norm: None,
            sync_interval: 0,
            ..DqlConfig::default()
        };
        DqlAgent::with_network(config, net)
    }

    fn batch_of(e: Experience) -> Batch {
        Batch {
            experiences: vec![e],
            ids: vec![0],
            probabilities: vec![1.0],
        }
    }

    fn exp(reward: f64, terminal: bool) -> Experience {
        Experience {
            observation: vec![0.0],
            action_index: 7,
            reward,
            next_observation: vec![0.0],
            next_mask: None,
            terminal,
            opponent_id: "x".into(),
        }
    }

    #[test]
    fn tabular_update_matches_q_learning_rule() {
        let mut agent = tabular_agent(0.5, 0.1);
        let td = agent.dql_update(&batch_of(exp(1.0, true))).unwrap();
        assert!((td - 0.5).abs() < 1e-12);
        let q = agent.q_values(&[0.0]).unwrap()[7];
        assert!((q - 0.55).abs() < 1e-12, "{q}");
    }

    #[test]
    fn zero_gamma_targets_reward() {
        let mut agent = tabular_agent(0.5, 0.1);
        agent.config.gamma = 0.0;
        let td = agent.dql_update(&batch_of(exp(1.0, false))).unwrap();
        assert!((td - 0.5).abs() < 1e-12);
    }

    #[test]
    fn converged_q_leaves_parameters() {
        // gamma = 0.5, every Q = 1, reward 0.5: y = 0.5 + 0.5 * 1 = Q.
        let mut agent = tabular_agent(1.0, 0.1);
        agent.config.gamma = 0.5;
        let before = agent.online().params();
        let td = agent.dql_update(&batch_of(exp(0.5, false))).unwrap();
        assert_eq!(td, 0.0);
        assert_eq!(agent.online().params(), before);
    }

    #[test]
    fn sync_interval_counts() {
        let mut agent = tabular_agent(0.0, 0.01);
        agent.config.sync_interval = 100;
        for _ in 0..350 {
            agent.dql_update(&batch_of(exp(1.0, true))).unwrap();
        }
        assert_eq!(agent.syncs(), 3);
    }

    #[test]
    fn target_is_frozen_between_syncs_and_equal_after() {
        let mut agent = DqlAgent::new(DqlConfig {
            hidden: vec![16],
            sync_interval: 0,
            ..DqlConfig::default()
        });
        let probe = vec![0.3; OBS_LEN];
        let before = agent.target().forward(&probe).unwrap();
        let mut e = exp(1.0, true);
        e.observation = vec![0.5; OBS_LEN];
        e.next_observation = vec![0.5; OBS_LEN];
        for _ in 0..20 {
            agent.dql_update(&batch_of(e.clone())).unwrap();
        }
        assert_eq!(agent.target().forward(&probe).unwrap(), before);
        assert_ne!(agent.online().forward(&probe).unwrap(), before);
        agent.sync_target();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let s: Vec<f64> = (0..OBS_LEN).map(|_| rng.gen()).collect();
            assert_eq!(agent.target().forward(&s).unwrap(), agent.online().forward(&s).unwrap());
        }
    }

    #[test]
    fn greedy_picks_masked_argmax() {
        let mut agent = DqlAgent::new(DqlConfig { hidden: vec![8], ..DqlConfig::default() });
        let obs = vec![0.2; OBS_LEN];
        let q = agent.q_values(&obs).unwrap();
        let mut mask = ActionMask::none();
        for i in [3, 40, 100, 199] {
            mask.0[i] = true;
        }
        let expected = masked_argmax(&q, &mask).unwrap();
        assert_eq!(agent.select_with_epsilon(&obs, &mask, 0.0).unwrap(), expected);
    }

    #[test]
    fn single_legal_action_any_epsilon() {
        let mut agent = DqlAgent::new(DqlConfig { hidden: vec![8], ..DqlConfig::default() });
        let mut mask = ActionMask::none();
        mask.0[42] = true;
        for eps in [0.0, 0.5, 1.0] {
            assert_eq!(agent.select_with_epsilon(&[0.0; OBS_LEN], &mask, eps).unwrap(), 42);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let agent = DqlAgent::new(DqlConfig { hidden: vec![8], seed: 5, ..DqlConfig::default() });
        agent.save(dir.path()).unwrap();
        let back = DqlAgent::load(dir.path()).unwrap();
        assert_eq!(back.online(), agent.online());
        assert_eq!(back.config, agent.config);
    }
}
