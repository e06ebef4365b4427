//! Actor-critic PPO with an adaptive KL penalty.
//!
//! Each seat's match is one trajectory. Finished trajectories accumulate in
//! a rollout; once it holds enough steps, the critic regresses onto
//! discounted returns and the actor minimises
//! `-E[ratio * A] + beta * KL(old || new)` with the one-step advantage
//! `A = r + gamma * V(s') - V(s)` (`V(s') = 0` at terminal steps), over a
//! few epochs of shuffled minibatches. The penalty coefficient `beta` then
//! adapts to the measured KL.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_mask, confidence_from_probability, masked_argmax, masked_softmax, sample_categorical,
    AgentKind, Player, Transition,
};
use crate::engine::{ActionMask, Observation, NUM_ACTIONS, NUM_PLAYERS, OBS_LEN};
use crate::error::{Error, Result};
use crate::nn::{Activation, Gradients, Mlp, Optimizer};

pub const MIN_KL_BETA: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub kl_beta: f64,
    pub kl_target: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Steps collected before an update; updates happen at trajectory ends.
    pub rollout_steps: usize,
    /// Scale advantages to zero mean and unit variance within an update.
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            hidden: vec![128, 128],
            gamma: 0.95,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            kl_beta: 1.0,
            kl_target: 0.01,
            epochs: 4,
            minibatch_size: 64,
            rollout_steps: 1024,
            normalize_advantages: true,
            max_grad_norm: Some(5.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PpoStep {
    pub observation: Vec<f64>,
    pub mask: ActionMask,
    pub action: usize,
    /// Masked policy at selection time.
    pub old_probs: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub terminal: bool,
    /// Discounted return from this step to the end of its trajectory.
    pub ret: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
}

/// One-step advantage.
pub fn advantage(reward: f64, gamma: f64, value_next: f64, value: f64, terminal: bool) -> f64 {
    let next = if terminal { 0.0 } else { value_next };
    reward + gamma * next - value
}

/// Discounted return of every step of a trajectory.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Doubles `beta` when the KL overshoots 1.5x its target, halves it when it
/// undershoots target/1.5, and never lets it drop below [`MIN_KL_BETA`].
pub fn kl_adapt(beta: f64, measured_kl: f64, target: f64) -> f64 {
    let next = if measured_kl > 1.5 * target {
        beta * 2.0
    } else if measured_kl < target / 1.5 {
        beta / 2.0
    } else {
        beta
    };
    next.max(MIN_KL_BETA)
}

fn kl_divergence(old: &[f64], new: &[f64], mask: &ActionMask) -> f64 {
    mask.legal_indices()
        .into_iter()
        .filter(|&i| old[i] > 0.0)
        .map(|i| old[i] * (old[i].ln() - new[i].max(1e-300).ln()))
        .sum()
}

struct Pending {
    observation: Vec<f64>,
    mask: ActionMask,
    action: usize,
    probs: Vec<f64>,
}

pub struct PpoAgent {
    pub config: PpoConfig,
    actor: Mlp,
    critic: Mlp,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    kl_beta: f64,
    rng: ChaCha8Rng,
    learning: bool,
    explore: bool,
    /// Selections per seat awaiting their transition, oldest first.
    pending: [VecDeque<Pending>; NUM_PLAYERS],
    trajectories: [Vec<PpoStep>; NUM_PLAYERS],
    rollout: Vec<PpoStep>,
    updates: u64,
    last_stats: Option<PpoStats>,
}

impl PpoAgent {
    pub fn new(config: PpoConfig) -> PpoAgent {
        let mut actor_dims = vec![OBS_LEN];
        actor_dims.extend(&config.hidden);
        let mut critic_dims = actor_dims.clone();
        actor_dims.push(NUM_ACTIONS);
        critic_dims.push(1);
        // The actor emits logits; the softmax is applied after masking.
        let actor = Mlp::new(&actor_dims, Activation::Relu, Activation::Linear, config.seed);
        let critic = Mlp::new(&critic_dims, Activation::Relu, Activation::Linear, config.seed ^ 0xc71c);
        PpoAgent::with_networks(config, actor, critic)
    }

    pub fn with_networks(config: PpoConfig, actor: Mlp, critic: Mlp) -> PpoAgent {
        let mut actor_opt = Optimizer::adam(config.actor_lr, &actor);
        actor_opt.max_grad_norm = config.max_grad_norm;
        let mut critic_opt = Optimizer::adam(config.critic_lr, &critic);
        critic_opt.max_grad_norm = config.max_grad_norm;
        PpoAgent {
            kl_beta: config.kl_beta,
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed),
            actor,
            critic,
            actor_opt,
            critic_opt,
            config,
            learning: true,
            explore: true,
            pending: Default::default(),
            trajectories: Default::default(),
            rollout: Vec::new(),
            updates: 0,
            last_stats: None,
        }
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn kl_beta(&self) -> f64 {
        self.kl_beta
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn last_stats(&self) -> Option<PpoStats> {
        self.last_stats
    }

    pub fn policy(&self, obs: &[f64], mask: &ActionMask) -> Result<Vec<f64>> {
        check_mask(mask)?;
        Ok(masked_softmax(&self.actor.forward(obs)?, mask))
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?[0])
    }

    pub fn select(&mut self, obs: &[f64], mask: &ActionMask, explore: bool) -> Result<(usize, Vec<f64>)> {
        let probs = self.policy(obs, mask)?;
        let action = if explore {
            sample_categorical(&probs, &mut self.rng)
        } else {
            masked_argmax(&probs, mask)?
        };
        Ok((action, probs))
    }

    /// Steps waiting for the next update.
    pub fn rollout_len(&self) -> usize {
        self.rollout.len()
    }

    /// Fills in discounted returns of a finished trajectory and queues it.
    pub fn push_trajectory(&mut self, mut trajectory: Vec<PpoStep>) -> Result<Option<PpoStats>> {
        let rewards: Vec<f64> = trajectory.iter().map(|s| s.reward).collect();
        for (step, ret) in trajectory.iter_mut().zip(discounted_returns(&rewards, self.config.gamma)) {
            step.ret = ret;
        }
        self.rollout.extend(trajectory);
        if self.rollout.len() >= self.config.rollout_steps.max(1) {
            let rollout = std::mem::take(&mut self.rollout);
            return self.ppo_update(&rollout).map(Some);
        }
        Ok(None)
    }

    /// One update over `steps`: advantages from the current critic, then
    /// epochs of minibatch steps on critic and actor, then beta adapts.
    pub fn ppo_update(&mut self, steps: &[PpoStep]) -> Result<PpoStats> {
        if steps.is_empty() {
            return Err(Error::EmptyHistory);
        }
        let gamma = self.config.gamma;
        let mut advantages = steps
            .iter()
            .map(|s| {
                let v = self.value(&s.observation)?;
                let v_next = if s.terminal { 0.0 } else { self.value(&s.next_observation)? };
                Ok(advantage(s.reward, gamma, v_next, v, s.terminal))
            })
            .collect::<Result<Vec<f64>>>()?;
        if self.config.normalize_advantages && advantages.len() > 1 {
            let n = advantages.len() as f64;
            let mean = advantages.iter().sum::<f64>() / n;
            let std = (advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            if std > 1e-8 {
                advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);
            }
        }

        let mut order: Vec<usize> = (0..steps.len()).collect();
        let mut policy_loss = 0.0;
        let mut value_loss = 0.0;
        for _ in 0..self.config.epochs.max(1) {
            order.shuffle(&mut self.rng);
            policy_loss = 0.0;
            value_loss = 0.0;
            for chunk in order.chunks(self.config.minibatch_size.max(1)) {
                value_loss += self.critic_step(steps, chunk)? * chunk.len() as f64;
                policy_loss += self.actor_step(steps, &advantages, chunk)? * chunk.len() as f64;
            }
            policy_loss /= steps.len() as f64;
            value_loss /= steps.len() as f64;
        }

        let mut kl = 0.0;
        for s in steps {
            let probs = self.policy(&s.observation, &s.mask)?;
            kl += kl_divergence(&s.old_probs, &probs, &s.mask);
        }
        kl /= steps.len() as f64;
        self.kl_beta = kl_adapt(self.kl_beta, kl, self.config.kl_target);
        self.updates += 1;
        let stats = PpoStats {
            policy_loss,
            value_loss,
            kl,
        };
        self.last_stats = Some(stats);
        Ok(stats)
    }

    /// Half mean squared error against returns; returns the mean squared error.
    fn critic_step(&mut self, steps: &[PpoStep], batch: &[usize]) -> Result<f64> {
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut loss = 0.0;
        for &i in batch {
            let cache = self.critic.forward_with_cache(&steps[i].observation)?;
            let err = cache.output()[0] - steps[i].ret;
            loss += err * err / n;
            self.critic.backward_into(&cache, &[err / n], &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        self.critic_opt.step(&mut self.critic, &grads)?;
        Ok(loss)
    }

    fn actor_step(&mut self, steps: &[PpoStep], advantages: &[f64], batch: &[usize]) -> Result<f64> {
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut loss = 0.0;
        for &i in batch {
            let s = &steps[i];
            let adv = advantages[i];
            let cache = self.actor.forward_with_cache(&s.observation)?;
            let probs = masked_softmax(cache.output(), &s.mask);
            let ratio = probs[s.action] / s.old_probs[s.action].max(1e-300);
            let kl = kl_divergence(&s.old_probs, &probs, &s.mask);
            loss += (-ratio * adv + self.kl_beta * kl) / n;
            let mut upstream = vec![0.0; NUM_ACTIONS];
            for k in s.mask.legal_indices() {
                let onehot = if k == s.action { 1.0 } else { 0.0 };
                let surrogate = -adv * ratio * (onehot - probs[k]);
                let penalty = self.kl_beta * (probs[k] - s.old_probs[k]);
                upstream[k] = (surrogate + penalty) / n;
            }
            self.actor.backward_into(&cache, &upstream, &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        self.actor_opt.step(&mut self.actor, &grads)?;
        Ok(loss)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.actor.save_weights(dir.join("actor.bin"))?;
        self.critic.save_weights(dir.join("critic.bin"))?;
        let sidecar = PpoSidecar {
            kind: AgentKind::Ppo,
            config: self.config.clone(),
            kl_beta: self.kl_beta,
        };
        let path = dir.join("agent.json");
        std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<PpoAgent> {
        let dir = dir.as_ref();
        let path = dir.join("agent.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: PpoSidecar = serde_json::from_str(&text)?;
        if sidecar.kind != AgentKind::Ppo {
            return Err(Error::Config(format!("{} is not a PPO checkpoint", dir.display())));
        }
        let mut agent = PpoAgent::new(sidecar.config);
        agent.actor.load_into(dir.join("actor.bin"))?;
        agent.critic.load_into(dir.join("critic.bin"))?;
        agent.kl_beta = sidecar.kl_beta;
        Ok(agent)
    }
}

#[derive(Serialize, Deserialize)]
struct PpoSidecar {
    kind: AgentKind,
    config: PpoConfig,
    kl_beta: f64,
}

impl Player for PpoAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Ppo
    }

    fn select_action(&mut self, seat: usize, obs: &Observation, mask: &ActionMask) -> Result<usize> {
        let (action, probs) = self.select(obs.as_slice(), mask, self.explore)?;
        if self.learning {
            self.pending[seat].push_back(Pending {
                observation: obs.0.clone(),
                mask: mask.clone(),
                action,
                probs,
            });
        }
        Ok(action)
    }

    fn observe_transition(&mut self, t: &Transition, own: bool) {
        if !own || !self.learning {
            return;
        }
        let Some(p) = self.pending[t.seat].pop_front() else {
            return;
        };
        debug_assert_eq!(p.observation, t.observation.0);
        self.trajectories[t.seat].push(PpoStep {
            observation: p.observation,
            mask: p.mask,
            action: p.action,
            old_probs: p.probs,
            reward: t.reward,
            next_observation: t.next_observation.0.clone(),
            terminal: t.terminal,
            ret: 0.0,
        });
        if t.terminal {
            let trajectory = std::mem::take(&mut self.trajectories[t.seat]);
            // A rejected update leaves both networks as they were.
            let _ = self.push_trajectory(trajectory);
        }
    }

    fn set_learning(&mut self, on: bool) {
        self.learning = on;
        if !on {
            self.pending = Default::default();
            self.trajectories = Default::default();
            self.rollout.clear();
        }
    }

    fn set_explore(&mut self, on: bool) {
        self.explore = on;
    }

    fn confidence(&self, obs: &Observation, action: usize, mask: &ActionMask) -> Option<f64> {
        let probs = self.policy(obs.as_slice(), mask).ok()?;
        confidence_from_probability(&probs, action, mask).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_examples() {
        assert_eq!(advantage(0.0, 1.0, 0.4, 0.4, false), 0.0);
        assert!((advantage(1.0, 0.9, 0.5, 0.2, false) - 1.25).abs() < 1e-12);
        assert_eq!(advantage(1.0, 0.9, 0.5, 0.2, true), 0.8);
    }

    #[test]
    fn returns_discount_backwards() {
        let r = discounted_returns(&[0.0, 0.0, 1.0], 0.5);
        assert_eq!(r, vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn kl_adapt_rule() {
        assert_eq!(kl_adapt(1.0, 0.01, 0.01), 1.0);
        assert_eq!(kl_adapt(1.0, 0.02, 0.01), 2.0);
        assert_eq!(kl_adapt(1.0, 0.001, 0.01), 0.5);
        let mut beta = 1.0;
        for _ in 0..100 {
            beta = kl_adapt(beta, 0.0, 0.01);
        }
        assert_eq!(beta, MIN_KL_BETA);
    }

    #[test]
    fn policy_is_distribution_over_legal() {
        let agent = PpoAgent::new(PpoConfig { hidden: vec![16], ..PpoConfig::default() });
        let mut mask = ActionMask::none();
        for i in [0, 17, 199] {
            mask.0[i] = true;
        }
        let p = agent.policy(&[0.3; OBS_LEN], &mask).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(p.iter().enumerate().all(|(i, &x)| mask.is_legal(i) || x == 0.0));
    }

    #[test]
    fn empty_trajectory_rejected() {
        let mut agent = PpoAgent::new(PpoConfig { hidden: vec![4], ..PpoConfig::default() });
        assert!(agent.ppo_update(&[]).is_err());
    }

    #[test]
    fn positive_advantage_raises_action_probability() {
        let mut agent = PpoAgent::new(PpoConfig { hidden: vec![16], ..PpoConfig::default() });
        let mut mask = ActionMask::none();
        for i in [5, 6, 7] {
            mask.0[i] = true;
        }
        let obs = vec![0.5; OBS_LEN];
        let before = agent.policy(&obs, &mask).unwrap();
        let step = PpoStep {
            observation: obs.clone(),
            mask: mask.clone(),
            action: 6,
            old_probs: before.clone(),
            reward: 1.0,
            next_observation: obs.clone(),
            terminal: true,
            ret: 1.0,
        };
        agent.ppo_update(&[step]).unwrap();
        let after = agent.policy(&obs, &mask).unwrap();
        assert!(after[6] > before[6]);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let agent = PpoAgent::new(PpoConfig { hidden: vec![8], seed: 2, ..PpoConfig::default() });
        agent.save(dir.path()).unwrap();
        let back = PpoAgent::load(dir.path()).unwrap();
        assert_eq!(back.actor(), agent.actor());
        assert_eq!(back.critic(), agent.critic());
    }
}
