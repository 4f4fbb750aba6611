//! Seeded benchmark suites, baseline policies and qualitative exports.

mod artifacts;

pub use artifacts::{
    export_attention, render_episode, render_polar_map, value_polar_map, write_attention,
    PolarEntry, TrajectoryPlot, PLOT_FORMAT,
};

use std::fmt::Write as _;

use glam::DVec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orca::{new_velocity, OrcaAgent};
use crate::sim::{discomfort_stats, CrowdEnv, Event, ScenarioConfig, Setting};
use crate::value_net::{discount_factor, SarlParams};
use crate::vlearning::{greedy_action, ActionSpace};

/// Anything that can drive the robot.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;
    fn act(&self, env: &CrowdEnv) -> Result<DVec2>;

    /// The underlying value network, for attentive policies.
    fn value_network(&self) -> Option<&SarlParams> {
        None
    }
}

/// Velocity that heads for the goal at `v_pref` without overshooting it.
fn goal_velocity(env: &CrowdEnv) -> DVec2 {
    let robot = &env.state().robot;
    ((robot.goal - robot.position) / env.config().dt).clamp_length_max(robot.v_pref)
}

/// The robot runs ORCA against the humans it observes, assuming they
/// reciprocate, with its own radius inflated by `margin`.
#[derive(Clone, Debug)]
pub struct OrcaPolicy {
    pub margin: f64,
}

impl OrcaPolicy {
    pub fn new(margin: f64) -> Result<Self> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(Error::Config(format!("ORCA margin must be non-negative, got {margin}")));
        }
        Ok(OrcaPolicy { margin })
    }
}

impl Policy for OrcaPolicy {
    fn name(&self) -> &str {
        "orca"
    }

    fn act(&self, env: &CrowdEnv) -> Result<DVec2> {
        let config = env.config();
        let robot = &env.state().robot;
        let agent = OrcaAgent {
            position: robot.position,
            velocity: robot.velocity,
            radius: robot.radius + self.margin,
            preferred_velocity: goal_velocity(env),
            max_speed: robot.v_pref,
            neighbor_distance: config.neighbor_distance,
            time_horizon: config.time_horizon,
        };
        let neighbors: Vec<OrcaAgent> = env
            .state()
            .humans
            .iter()
            .filter(|h| (h.position - robot.position).length() < config.neighbor_distance)
            .map(|h| OrcaAgent {
                position: h.position,
                velocity: h.velocity,
                radius: h.radius,
                preferred_velocity: h.velocity,
                max_speed: robot.v_pref,
                neighbor_distance: config.neighbor_distance,
                time_horizon: config.time_horizon,
            })
            .collect();
        let v = new_velocity(&agent, &neighbors, config.dt).velocity;
        Ok(v.clamp_length_max(robot.v_pref))
    }
}

/// Heads straight for the goal, ignoring everyone.
#[derive(Clone, Copy, Debug, Default)]
pub struct StraightLinePolicy;

impl Policy for StraightLinePolicy {
    fn name(&self) -> &str {
        "straight"
    }

    fn act(&self, env: &CrowdEnv) -> Result<DVec2> {
        Ok(goal_velocity(env))
    }
}

/// Greedy one-step lookahead over the discrete action space.
#[derive(Clone, Debug)]
pub struct ValuePolicy {
    name: String,
    params: SarlParams,
    gamma: f64,
}

impl ValuePolicy {
    pub fn new(name: impl Into<String>, params: SarlParams, gamma: f64) -> Self {
        ValuePolicy {
            name: name.into(),
            params,
            gamma,
        }
    }

    pub fn params(&self) -> &SarlParams {
        &self.params
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Policy for ValuePolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&self, env: &CrowdEnv) -> Result<DVec2> {
        let space = ActionSpace::new(env.state().robot.v_pref)?;
        let k = greedy_action(&self.params, env, &space, self.gamma)?;
        Ok(space.actions[k])
    }

    fn value_network(&self) -> Option<&SarlParams> {
        Some(&self.params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_cases: usize,
    /// Case `i` uses scenario seed `base_seed + i`.
    pub base_seed: u64,
    pub gamma: f64,
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_cases: 100,
            base_seed: 1_000_000,
            gamma: 0.9,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case: usize,
    pub seed: u64,
    pub outcome: Event,
    pub steps: usize,
    /// Episode length in seconds.
    pub duration: f64,
    pub discounted_return: f64,
    pub discomfort_time: f64,
    /// Closest robot-human clearance over the episode; `None` without humans.
    pub min_separation: Option<f64>,
    /// Set when the policy failed and the case was scored as a timeout.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub setting: Setting,
    pub n_cases: usize,
    pub base_seed: u64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Mean over successful episodes; `None` when nothing succeeded.
    pub mean_nav_time: Option<f64>,
    /// Time closer than the discomfort distance over total episode time.
    pub discomfort_frequency: f64,
    pub mean_discounted_return: f64,
    pub cases: Vec<CaseRecord>,
}

pub fn run_case(policy: &dyn Policy, scenario: &ScenarioConfig, gamma: f64, case: usize, seed: u64) -> Result<CaseRecord> {
    let mut env = CrowdEnv::new(scenario.clone(), seed)?;
    let mut failure = None;
    while !env.is_done() {
        let step = policy.act(&env).and_then(|a| env.step(a));
        if let Err(e) = step {
            failure = Some(e.to_string());
            break;
        }
    }
    let log = env.log();
    let outcome = if failure.is_some() {
        Event::Timeout
    } else {
        log.outcome()
    };
    let robot = &log.records.first().map(|r| r.robot).unwrap_or(env.state().robot);
    let discount = discount_factor(gamma, scenario.dt, robot.v_pref);
    let discounted_return = log
        .rewards()
        .enumerate()
        .map(|(k, r)| discount.powi(k as i32) * r)
        .sum();
    let min_separation = log
        .records
        .iter()
        .filter_map(|r| r.d_min)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
    Ok(CaseRecord {
        case,
        seed,
        outcome,
        steps: log.records.len(),
        duration: log.duration(),
        discounted_return,
        discomfort_time: discomfort_stats(log).0,
        min_separation,
        failure,
    })
}

/// Runs `config.n_cases` seeded episodes. Results do not depend on the
/// thread count.
pub fn run_eval(policy: &dyn Policy, scenario: &ScenarioConfig, config: &EvalConfig) -> Result<EvalReport> {
    if config.n_cases == 0 {
        return Err(Error::Config("n_cases must be at least 1".into()));
    }
    scenario.validate()?;
    let case = |i: usize| run_case(policy, scenario, config.gamma, i, config.base_seed + i as u64);
    let cases: Vec<CaseRecord> = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..config.n_cases).into_par_iter().map(case).collect::<Result<_>>())?
    } else {
        (0..config.n_cases).map(case).collect::<Result<_>>()?
    };
    Ok(EvalReport::from_cases(policy.name(), scenario.setting(), config.base_seed, cases))
}

impl EvalReport {
    pub fn from_cases(policy: &str, setting: Setting, base_seed: u64, cases: Vec<CaseRecord>) -> Self {
        let n = cases.len() as f64;
        let count = |e: Event| cases.iter().filter(|c| c.outcome == e).count();
        let successes = count(Event::ReachedGoal);
        let collisions = count(Event::Collision);
        let timeouts = cases.len() - successes - collisions;
        let mean_nav_time = (successes > 0).then(|| {
            cases
                .iter()
                .filter(|c| c.outcome == Event::ReachedGoal)
                .map(|c| c.duration)
                .sum::<f64>()
                / successes as f64
        });
        let total_time: f64 = cases.iter().map(|c| c.duration).sum();
        let disc_time: f64 = cases.iter().map(|c| c.discomfort_time).sum();
        EvalReport {
            policy: policy.to_string(),
            setting,
            n_cases: cases.len(),
            base_seed,
            success_rate: successes as f64 / n,
            collision_rate: collisions as f64 / n,
            timeout_rate: timeouts as f64 / n,
            mean_nav_time,
            discomfort_frequency: if total_time > 0.0 { disc_time / total_time } else { 0.0 },
            mean_discounted_return: cases.iter().map(|c| c.discounted_return).sum::<f64>() / n,
            cases,
        }
    }

    pub fn failures(&self) -> usize {
        self.cases.iter().filter(|c| c.failure.is_some()).count()
    }

    /// Column header for [`table_row`](Self::table_row).
    pub fn table_header(setting: Setting) -> String {
        match setting {
            Setting::Invisible => format!("{:<12} {:>8} {:>9} {:>7} {:>7}", "Method", "Success", "Collision", "Time", "Reward"),
            Setting::Visible => format!(
                "{:<12} {:>8} {:>9} {:>7} {:>6} {:>7}",
                "Method", "Success", "Collision", "Time", "Disc.", "Reward"
            ),
        }
    }

    pub fn table_row(&self) -> String {
        let time = self.mean_nav_time.map_or("-".to_string(), |t| format!("{t:.2}"));
        match self.setting {
            Setting::Invisible => format!(
                "{:<12} {:>8.2} {:>9.2} {:>7} {:>7.3}",
                self.policy, self.success_rate, self.collision_rate, time, self.mean_discounted_return
            ),
            Setting::Visible => format!(
                "{:<12} {:>8.2} {:>9.2} {:>7} {:>6.2} {:>7.3}",
                self.policy,
                self.success_rate,
                self.collision_rate,
                time,
                self.discomfort_frequency,
                self.mean_discounted_return
            ),
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", Self::table_header(self.setting));
        let _ = writeln!(out, "{}", self.table_row());
        out
    }
}

#[cfg(test)]
mod tests;
