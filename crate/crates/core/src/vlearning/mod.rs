//! Deep V-learning: ORCA demonstrations, imitation warm start, then
//! ε-greedy value iteration with experience replay and a target network.

mod demo;
mod il;
mod replay;
mod rl;

pub use demo::{
    collect_demonstrations, discounted_targets, DemoEpisode, DemoManifest, DemoSet,
    DEMO_FORMAT, DEMO_VERSION,
};
pub use il::{imitation_learning, mse_loss, IlReport};
pub use replay::{ReplayMemory, Transition};
pub use rl::{
    td_targets, td_update, train_rl, write_training_log, EpisodeRecord, NoHooks, RlTrainer, TrainHooks,
    TRAINING_LOG_FORMAT,
};

use std::f64::consts::{E, TAU};

use glam::DVec2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::CrowdEnv;
use crate::value_net::SarlParams;

pub const SPEED_COUNT: usize = 5;
pub const HEADING_COUNT: usize = 16;

/// Discrete holonomic actions: five exponentially spaced speeds in
/// `(0, v_pref]` times sixteen evenly spaced headings, speed-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    pub v_pref: f64,
    pub speeds: Vec<f64>,
    pub headings: Vec<f64>,
    pub actions: Vec<DVec2>,
}

impl ActionSpace {
    pub fn new(v_pref: f64) -> Result<Self> {
        if !(v_pref > 0.0 && v_pref.is_finite()) {
            return Err(Error::Config(format!("v_pref must be positive, got {v_pref}")));
        }
        let speeds: Vec<f64> = (1..=SPEED_COUNT)
            .map(|k| {
                if k == SPEED_COUNT {
                    v_pref
                } else {
                    v_pref * ((k as f64 / SPEED_COUNT as f64).exp() - 1.0) / (E - 1.0)
                }
            })
            .collect();
        let headings: Vec<f64> = (0..HEADING_COUNT)
            .map(|j| TAU * j as f64 / HEADING_COUNT as f64)
            .collect();
        let actions = speeds
            .iter()
            .flat_map(|&s| headings.iter().map(move |&h| s * DVec2::new(h.cos(), h.sin())))
            .collect();
        Ok(ActionSpace {
            v_pref,
            speeds,
            headings,
            actions,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `(speed index, heading index)` of action `k`.
    pub fn indices(&self, k: usize) -> (usize, usize) {
        (k / HEADING_COUNT, k % HEADING_COUNT)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub il_episodes: usize,
    pub il_epochs: usize,
    pub il_lr: f64,
    pub rl_lr: f64,
    pub rl_episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which ε falls linearly from start to end.
    pub epsilon_decay_episodes: usize,
    pub batch_size: usize,
    pub target_update_interval: usize,
    pub replay_capacity: usize,
    /// Episodes before gradient steps begin.
    pub warmup_episodes: usize,
    /// Extra radius the demonstrating ORCA robot keeps from humans.
    pub demo_margin: f64,
    /// Training checkpoint cadence in episodes; 0 disables periodic saves.
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            il_episodes: 3000,
            il_epochs: 50,
            il_lr: 0.01,
            rl_lr: 0.001,
            rl_episodes: 10000,
            epsilon_start: 0.5,
            epsilon_end: 0.1,
            epsilon_decay_episodes: 5000,
            batch_size: 100,
            target_update_interval: 50,
            replay_capacity: 100_000,
            warmup_episodes: 1,
            demo_margin: 0.1,
            checkpoint_interval: 500,
        }
    }
}

impl TrainConfig {
    /// Scaled-down protocol: 1000 demonstration episodes, 2000 RL episodes,
    /// ε decaying over the first 1000.
    pub fn desk_scale() -> Self {
        TrainConfig {
            il_episodes: 1000,
            rl_episodes: 2000,
            epsilon_decay_episodes: 1000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return fail(format!("{name} must lie in [0, 1], got {e}"));
            }
        }
        for (name, lr) in [("il_lr", self.il_lr), ("rl_lr", self.rl_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return fail(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.target_update_interval == 0 {
            return fail("batch_size, replay_capacity and target_update_interval must be positive".into());
        }
        if self.demo_margin < 0.0 {
            return fail(format!("demo_margin must be non-negative, got {}", self.demo_margin));
        }
        Ok(())
    }

    /// Exploration rate for a zero-based episode index.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if episode >= self.epsilon_decay_episodes {
            self.epsilon_end
        } else {
            let frac = episode as f64 / self.epsilon_decay_episodes as f64;
            self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
        }
    }
}

/// ε-greedy choice over the action space. With probability ε a uniformly
/// random action; otherwise the one-step-lookahead argmax, ties going to the
/// lowest index. Returns the action index.
pub fn select_action<R: Rng + ?Sized>(
    params: &SarlParams,
    env: &CrowdEnv,
    space: &ActionSpace,
    epsilon: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Usage(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..space.len()));
    }
    greedy_action(params, env, space, gamma)
}

pub fn greedy_action(params: &SarlParams, env: &CrowdEnv, space: &ActionSpace, gamma: f64) -> Result<usize> {
    let values = params.action_values(env, &space.actions, gamma)?;
    Ok(argmax(&values))
}

/// First index of the maximum.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Decorrelated per-episode seeds: splitmix64 of `(base, stream, index)`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) const DEMO_STREAM: u64 = 1;
pub(crate) const RL_STREAM: u64 = 2;

#[cfg(test)]
mod tests;
