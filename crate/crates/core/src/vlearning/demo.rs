//! ORCA demonstrations with realized discounted returns as value targets.
//!
//! File layout: the first line is a JSON manifest, then one JSON object per
//! episode. `content_hash` is the SHA-256 (hex) of all episode lines,
//! newline-terminated, so identical runs give identical hashes.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{derive_seed, Transition, DEMO_STREAM};
use crate::error::{Error, Result};
use crate::eval::{OrcaPolicy, Policy};
use crate::sim::{CrowdEnv, Event, JointState, ScenarioConfig};
use crate::value_net::discount_factor;

pub const DEMO_FORMAT: &str = "crowdnav-demonstrations";
pub const DEMO_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoEpisode {
    pub seed: u64,
    pub outcome: Event,
    /// State before each step.
    pub states: Vec<JointState>,
    pub rewards: Vec<f64>,
    /// Discounted return from each state.
    pub targets: Vec<f64>,
    pub final_state: JointState,
}

impl DemoEpisode {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Consecutive-state transitions; the last one is terminal unless the
    /// episode timed out.
    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        let n = self.states.len();
        (0..n).map(move |k| Transition {
            state: self.states[k].clone(),
            reward: self.rewards[k],
            next: if k + 1 < n {
                self.states[k + 1].clone()
            } else {
                self.final_state.clone()
            },
            terminal: k + 1 == n && matches!(self.outcome, Event::Collision | Event::ReachedGoal),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoManifest {
    pub format: String,
    pub version: u32,
    pub episodes: usize,
    pub seed: u64,
    pub gamma: f64,
    pub margin: f64,
    pub scenario: ScenarioConfig,
    pub content_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoSet {
    pub manifest: DemoManifest,
    pub episodes: Vec<DemoEpisode>,
}

/// `G_k = Σ_{j≥k} d^{j−k} r_j`.
pub fn discounted_targets(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for k in (0..rewards.len()).rev() {
        acc = rewards[k] + discount * acc;
        out[k] = acc;
    }
    out
}

/// Rolls out the ORCA robot (radius inflated by `margin`) in the visible
/// setting. Episode `i` uses a seed derived from `(seed, i)`; with
/// `threads > 1` episodes run in parallel but the result is identical.
pub fn collect_demonstrations(
    n_episodes: usize,
    seed: u64,
    scenario: &ScenarioConfig,
    gamma: f64,
    margin: f64,
    threads: usize,
) -> Result<DemoSet> {
    if n_episodes == 0 {
        return Err(Error::Config("need at least one demonstration episode".into()));
    }
    let scenario = ScenarioConfig {
        robot_visible: true,
        ..scenario.clone()
    };
    scenario.validate()?;
    let policy = OrcaPolicy::new(margin)?;
    let episode = |i: usize| demo_episode(&policy, &scenario, gamma, derive_seed(seed, DEMO_STREAM, i as u64));
    let episodes: Vec<DemoEpisode> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..n_episodes).into_par_iter().map(episode).collect::<Result<_>>())?
    } else {
        (0..n_episodes).map(episode).collect::<Result<_>>()?
    };
    let mut set = DemoSet {
        manifest: DemoManifest {
            format: DEMO_FORMAT.into(),
            version: DEMO_VERSION,
            episodes: n_episodes,
            seed,
            gamma,
            margin,
            scenario,
            content_hash: String::new(),
        },
        episodes,
    };
    set.manifest.content_hash = set.content_hash();
    Ok(set)
}

fn demo_episode(policy: &OrcaPolicy, scenario: &ScenarioConfig, gamma: f64, seed: u64) -> Result<DemoEpisode> {
    let mut env = CrowdEnv::new(scenario.clone(), seed)?;
    let mut states = Vec::new();
    let mut rewards = Vec::new();
    while !env.is_done() {
        states.push(env.state().clone());
        let action = policy.act(&env)?;
        rewards.push(env.step(action)?.reward);
    }
    let robot = &states[0].robot;
    let discount = discount_factor(gamma, scenario.dt, robot.v_pref);
    Ok(DemoEpisode {
        seed,
        outcome: env.last_event(),
        targets: discounted_targets(&rewards, discount),
        states,
        rewards,
        final_state: env.state().clone(),
    })
}

impl DemoSet {
    pub fn len(&self) -> usize {
        self.episodes.iter().map(DemoEpisode::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(state, target)` pairs for value regression.
    pub fn samples(&self) -> impl Iterator<Item = (&JointState, f64)> {
        self.episodes
            .iter()
            .flat_map(|e| e.states.iter().zip(e.targets.iter().copied()))
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        self.episodes.iter().flat_map(DemoEpisode::transitions)
    }

    fn body(&self) -> Vec<u8> {
        let mut body = Vec::new();
        for e in &self.episodes {
            serde_json::to_writer(&mut body, e).expect("episode serializes");
            body.push(b'\n');
        }
        body
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        serde_json::to_writer(&mut w, &self.manifest).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(io)?;
        w.write_all(&self.body()).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty demonstration file"))?
            .map_err(|e| Error::io(path, e))?;
        let manifest: DemoManifest = serde_json::from_str(&first)
            .map_err(|e| Error::format(path, format!("bad manifest: {e}")))?;
        if manifest.format != DEMO_FORMAT || manifest.version != DEMO_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported demonstrations {} v{}", manifest.format, manifest.version),
            ));
        }
        let mut episodes = Vec::with_capacity(manifest.episodes);
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let e: DemoEpisode = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("episode {k}: {e}")))?;
            if e.rewards.len() != e.states.len() || e.targets.len() != e.states.len() {
                return Err(Error::format(path, format!("episode {k}: ragged arrays")));
            }
            episodes.push(e);
        }
        let set = DemoSet { manifest, episodes };
        if set.episodes.len() != set.manifest.episodes {
            return Err(Error::format(
                path,
                format!("manifest lists {} episodes, file has {}", set.manifest.episodes, set.episodes.len()),
            ));
        }
        if set.content_hash() != set.manifest.content_hash {
            return Err(Error::format(path, "content hash mismatch"));
        }
        Ok(set)
    }
}
