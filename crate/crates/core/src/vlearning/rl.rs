//! ε-greedy value iteration with replay and a periodically synchronized
//! target network, resumable from checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::il::regression_step;
use super::{derive_seed, select_action, ActionSpace, DemoSet, ReplayMemory, TrainConfig, Transition, RL_STREAM};
use crate::error::{Error, Result};
use crate::numeric::AdamState;
use crate::sim::{CrowdEnv, Event, ScenarioConfig};
use crate::state_repr::to_robot_centric;
use crate::value_net::{discount_factor, Checkpoint, SarlInput, SarlParams};

pub const TRAINING_LOG_FORMAT: &str = "crowdnav-training-log";

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub outcome: Event,
    pub steps: usize,
    pub discounted_return: f64,
    pub epsilon: f64,
    pub updates: usize,
    pub loss_mean: Option<f64>,
    pub loss_max: Option<f64>,
}

/// Observation points inside the trainer.
pub trait TrainHooks {
    /// Called with the network that produced each minibatch's TD targets.
    fn on_targets(&mut self, _episode: usize, _target: &SarlParams, _targets: &[f64]) {}
    fn on_sync(&mut self, _episode: usize, _online: &SarlParams) {}
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// `y = r` for terminal transitions, else `r + γ^{dt·v_pref} V̂(s')`.
pub fn td_targets(target: &SarlParams, batch: &[&Transition], gamma: f64, dt: f64) -> Result<Vec<f64>> {
    let open: Vec<usize> = (0..batch.len()).filter(|&k| !batch[k].terminal).collect();
    let inputs: Vec<SarlInput> = open
        .iter()
        .map(|&k| target.encode(&to_robot_centric(&batch[k].next)))
        .collect();
    let next_values = if inputs.is_empty() {
        Vec::new()
    } else {
        target.predict(&target.batch(&inputs)?)?
    };
    let mut y: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    for (&k, v) in open.iter().zip(next_values) {
        y[k] += discount_factor(gamma, dt, batch[k].state.robot.v_pref) * v;
    }
    Ok(y)
}

/// One Adam step on the squared TD error of a minibatch. Returns the loss
/// and the targets used.
#[allow(clippy::too_many_arguments)]
pub fn td_update(
    params: &mut SarlParams,
    target: &SarlParams,
    batch: &[&Transition],
    gamma: f64,
    dt: f64,
    lr: f64,
    adam: &mut AdamState,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Usage("empty minibatch".into()));
    }
    let y = td_targets(target, batch, gamma, dt)?;
    let inputs: Vec<SarlInput> = batch
        .iter()
        .map(|t| params.encode(&to_robot_centric(&t.state)))
        .collect();
    let refs: Vec<&SarlInput> = inputs.iter().collect();
    let loss = regression_step(params, adam, &refs, &y, lr)?;
    Ok((loss, y))
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Option<ChaCha8Rng> {
        let seed: [u8; 32] = hex::decode(&self.seed).ok()?.try_into().ok()?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().ok()?);
        Some(rng)
    }
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    seed: u64,
    episode: usize,
    train: TrainConfig,
    scenario: ScenarioConfig,
    adam_step: u64,
    adam_betas: (f64, f64),
    adam_epsilon: f64,
    adam_tensors: usize,
    rng: RngState,
    replay_sha256: String,
    log: Vec<EpisodeRecord>,
}

pub struct RlTrainer {
    config: TrainConfig,
    scenario: ScenarioConfig,
    seed: u64,
    online: SarlParams,
    target: SarlParams,
    adam: AdamState,
    memory: ReplayMemory<Transition>,
    rng: ChaCha8Rng,
    episode: usize,
    log: Vec<EpisodeRecord>,
}

impl RlTrainer {
    /// Fresh trainer; the replay memory starts with the demonstration
    /// transitions when given.
    pub fn new(
        params: SarlParams,
        config: TrainConfig,
        scenario: ScenarioConfig,
        seed: u64,
        demos: Option<&DemoSet>,
    ) -> Result<Self> {
        config.validate()?;
        scenario.validate()?;
        let mut memory = ReplayMemory::new(config.replay_capacity)?;
        if let Some(d) = demos {
            d.transitions().for_each(|t| memory.push(t));
        }
        Ok(RlTrainer {
            adam: AdamState::new(&params),
            target: params.clone(),
            online: params,
            config,
            scenario,
            seed,
            memory,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, RL_STREAM, u64::MAX)),
            episode: 0,
            log: Vec::new(),
        })
    }

    pub fn params(&self) -> &SarlParams {
        &self.online
    }

    pub fn into_params(self) -> SarlParams {
        self.online
    }

    pub fn target(&self) -> &SarlParams {
        &self.target
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn log(&self) -> &[EpisodeRecord] {
        &self.log
    }

    pub fn memory(&self) -> &ReplayMemory<Transition> {
        &self.memory
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn run_episode(&mut self, hooks: &mut dyn TrainHooks) -> Result<EpisodeRecord> {
        let e = self.episode;
        let epsilon = self.config.epsilon(e);
        let seed = derive_seed(self.seed, RL_STREAM, e as u64);
        let mut env = CrowdEnv::new(self.scenario.clone(), seed)?;
        let space = ActionSpace::new(env.state().robot.v_pref)?;
        let dt = self.scenario.dt;
        let discount = discount_factor(self.config.gamma, dt, env.state().robot.v_pref);
        let train = e >= self.config.warmup_episodes;

        let mut ret = 0.0;
        let mut weight = 1.0;
        let mut losses = Vec::new();
        while !env.is_done() {
            let k = select_action(&self.online, &env, &space, epsilon, self.config.gamma, &mut self.rng)?;
            let state = env.state().clone();
            let out = env.step(space.actions[k])?;
            ret += weight * out.reward;
            weight *= discount;
            self.memory.push(Transition {
                state,
                reward: out.reward,
                next: out.next,
                terminal: matches!(out.event, Event::Collision | Event::ReachedGoal),
            });
            if train {
                let batch = self.memory.sample(self.config.batch_size, &mut self.rng);
                let (loss, y) = td_update(
                    &mut self.online,
                    &self.target,
                    &batch,
                    self.config.gamma,
                    dt,
                    self.config.rl_lr,
                    &mut self.adam,
                )
                .map_err(|err| Error::Training(format!("episode {e}: {err}")))?;
                hooks.on_targets(e, &self.target, &y);
                losses.push(loss);
            }
        }

        if (e + 1) % self.config.target_update_interval == 0 {
            self.target = self.online.clone();
            hooks.on_sync(e, &self.online);
        }
        let record = EpisodeRecord {
            episode: e,
            seed,
            outcome: env.last_event(),
            steps: env.log().records.len(),
            discounted_return: ret,
            epsilon,
            updates: losses.len(),
            loss_mean: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            loss_max: losses.iter().copied().reduce(f64::max),
        };
        self.log.push(record.clone());
        self.episode += 1;
        Ok(record)
    }

    /// Runs until `until` episodes are done, saving a training checkpoint to
    /// `checkpoint` every `checkpoint_interval` episodes and at the end.
    pub fn train(&mut self, until: usize, checkpoint: Option<&Path>, hooks: &mut dyn TrainHooks) -> Result<()> {
        while self.episode < until {
            let r = self.run_episode(hooks)?;
            if r.episode % 100 == 99 {
                let recent = &self.log[self.log.len().saturating_sub(100)..];
                let rate = |ev: Event| recent.iter().filter(|r| r.outcome == ev).count() as f64 / recent.len() as f64;
                log::info!(
                    "episode {}: ε {:.3}, success {:.2}, collision {:.2}, return {:.3}",
                    r.episode + 1,
                    r.epsilon,
                    rate(Event::ReachedGoal),
                    rate(Event::Collision),
                    recent.iter().map(|r| r.discounted_return).sum::<f64>() / recent.len() as f64
                );
            }
            let interval = self.config.checkpoint_interval;
            if let Some(path) = checkpoint {
                if interval > 0 && self.episode % interval == 0 && self.episode < until {
                    self.save(path)?;
                }
            }
        }
        if let Some(path) = checkpoint {
            self.save(path)?;
        }
        Ok(())
    }

    fn replay_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".replay");
        path.with_file_name(name)
    }

    /// Writes the full trainer state: networks, optimizer, generator
    /// position and log to `path`, the replay memory to `<path>.replay`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let replay = bincode::serialize(&self.memory)
            .map_err(|e| Error::Training(format!("cannot serialize replay memory: {e}")))?;
        let replay_path = Self::replay_path(path);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&replay_path, &replay).map_err(|e| Error::io(&replay_path, e))?;

        let mut c = Checkpoint::new("training", self.online.config().clone());
        c.push_params("", &self.online);
        c.push_params("target.", &self.target);
        c.push_tensors("adam.m.", &self.adam.first_moment);
        c.push_tensors("adam.v.", &self.adam.second_moment);
        let state = TrainerState {
            seed: self.seed,
            episode: self.episode,
            train: self.config.clone(),
            scenario: self.scenario.clone(),
            adam_step: self.adam.step,
            adam_betas: (self.adam.beta1, self.adam.beta2),
            adam_epsilon: self.adam.epsilon,
            adam_tensors: self.adam.first_moment.len(),
            rng: RngState::capture(&self.rng),
            replay_sha256: hex::encode(Sha256::digest(&replay)),
            log: self.log.clone(),
        };
        c.header.extra = serde_json::to_value(state).expect("trainer state serializes");
        c.save(path)
    }

    pub fn resume(path: &Path) -> Result<Self> {
        let c = Checkpoint::load(path)?;
        if c.header.kind != "training" {
            return Err(Error::format(path, format!("expected a training checkpoint, found '{}'", c.header.kind)));
        }
        let state: TrainerState = serde_json::from_value(c.header.extra.clone())
            .map_err(|e| Error::format(path, format!("bad trainer state: {e}")))?;
        let online = c.params(path)?;
        let target = c.params_with_prefix("target.", path)?;
        let adam = AdamState {
            first_moment: c.tensors("adam.m.", state.adam_tensors, path)?,
            second_moment: c.tensors("adam.v.", state.adam_tensors, path)?,
            step: state.adam_step,
            beta1: state.adam_betas.0,
            beta2: state.adam_betas.1,
            epsilon: state.adam_epsilon,
        };
        let replay_path = Self::replay_path(path);
        let replay = std::fs::read(&replay_path).map_err(|e| Error::io(&replay_path, e))?;
        if hex::encode(Sha256::digest(&replay)) != state.replay_sha256 {
            return Err(Error::format(&replay_path, "replay memory does not match its checkpoint"));
        }
        let memory: ReplayMemory<Transition> = bincode::deserialize(&replay)
            .map_err(|e| Error::format(&replay_path, format!("bad replay memory: {e}")))?;
        let rng = state
            .rng
            .restore()
            .ok_or_else(|| Error::format(path, "bad generator state"))?;
        Ok(RlTrainer {
            config: state.train,
            scenario: state.scenario,
            seed: state.seed,
            online,
            target,
            adam,
            memory,
            rng,
            episode: state.episode,
            log: state.log,
        })
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        write_training_log(&self.log, path)
    }
}

/// Header line, then one JSON record per episode.
pub fn write_training_log(records: &[EpisodeRecord], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{{\"format\":\"{TRAINING_LOG_FORMAT}\",\"version\":1}}").map_err(io)?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Convenience wrapper: a full RL phase without checkpoints.
pub fn train_rl(
    params: SarlParams,
    config: &TrainConfig,
    scenario: &ScenarioConfig,
    seed: u64,
    demos: Option<&DemoSet>,
) -> Result<(SarlParams, Vec<EpisodeRecord>)> {
    let mut trainer = RlTrainer::new(params, config.clone(), scenario.clone(), seed, demos)?;
    trainer.train(config.rl_episodes, None, &mut NoHooks)?;
    let log = trainer.log.clone();
    Ok((trainer.into_params(), log))
}
