use glam::DVec2;

use super::log::{EpisodeLog, StepRecord};
use super::reward::{min_separation, reward, Segment};
use super::scenario::{generate_scenario, Scenario};
use super::{Event, HumanIntent, JointState, ScenarioConfig};
use crate::error::{Error, Result};
use crate::orca::{new_velocity, OrcaAgent};

/// Result of advancing (or hypothetically advancing) the world by one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: JointState,
    pub reward: f64,
    pub event: Event,
    /// Smallest robot-human clearance during the step (`+inf` without humans).
    pub d_min: f64,
}

/// A live episode. Humans follow ORCA toward hidden goals; the robot's
/// velocity equals the commanded action.
#[derive(Clone, Debug)]
pub struct CrowdEnv {
    config: ScenarioConfig,
    state: JointState,
    intents: Vec<HumanIntent>,
    last_event: Event,
    log: EpisodeLog,
}

impl CrowdEnv {
    pub fn new(config: ScenarioConfig, seed: u64) -> Result<Self> {
        let scenario = generate_scenario(seed, &config)?;
        Ok(Self::from_scenario(config, scenario, Some(seed)))
    }

    /// Starts an episode from an explicit scenario (for hand-built scenes).
    pub fn from_scenario(config: ScenarioConfig, scenario: Scenario, seed: Option<u64>) -> Self {
        let log = EpisodeLog::new(seed, &config);
        CrowdEnv {
            config,
            state: scenario.state,
            intents: scenario.intents,
            last_event: Event::None,
            log,
        }
    }

    pub fn reset(&mut self, seed: u64) -> Result<&JointState> {
        let scenario = generate_scenario(seed, &self.config)?;
        self.state = scenario.state;
        self.intents = scenario.intents;
        self.last_event = Event::None;
        self.log = EpisodeLog::new(Some(seed), &self.config);
        Ok(&self.state)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn intents(&self) -> &[HumanIntent] {
        &self.intents
    }

    pub fn is_done(&self) -> bool {
        self.last_event.is_terminal()
    }

    pub fn last_event(&self) -> Event {
        self.last_event
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    /// Applies `action` as the robot velocity for one step.
    pub fn step(&mut self, action: DVec2) -> Result<StepOutcome> {
        let outcome = self.transition(action)?;
        self.log.records.push(StepRecord {
            step: self.log.records.len(),
            time: self.state.time,
            robot: self.state.robot,
            humans: self.state.humans.clone(),
            action,
            reward: outcome.reward,
            event: outcome.event,
            d_min: outcome.d_min.is_finite().then_some(outcome.d_min),
        });
        self.state = outcome.next.clone();
        self.last_event = outcome.event;
        Ok(outcome)
    }

    /// Rebuilds the environment of a seeded log as it was before step
    /// `frame`, replaying the logged actions and checking every state.
    pub fn replay(log: &EpisodeLog, frame: usize) -> Result<Self> {
        let seed = log
            .header
            .seed
            .ok_or_else(|| Error::Unsupported("log has no scenario seed to replay from".into()))?;
        if frame > log.records.len() {
            return Err(Error::Usage(format!(
                "frame {frame} is past the end of a {}-step log",
                log.records.len()
            )));
        }
        let mut env = CrowdEnv::new(log.header.config.clone(), seed)?;
        for record in &log.records[..frame] {
            if env.state.robot != record.robot || env.state.humans != record.humans {
                return Err(Error::format(
                    "episode log",
                    format!("log diverges from its scenario at step {}", record.step),
                ));
            }
            env.step(record.action)?;
        }
        Ok(env)
    }

    /// The outcome `step(action)` would produce, leaving the episode untouched.
    pub fn lookahead(&self, action: DVec2) -> Result<StepOutcome> {
        self.transition(action)
    }

    /// Lookahead for several candidate actions. Human motion depends only on
    /// the current snapshot, so it is computed once.
    pub fn lookahead_many(&self, actions: &[DVec2]) -> Result<Vec<StepOutcome>> {
        let human_velocities = self.human_velocities();
        actions
            .iter()
            .map(|&a| self.transition_with(a, &human_velocities))
            .collect()
    }

    /// Human velocities for the next step given the current snapshot.
    pub fn human_velocities(&self) -> Vec<DVec2> {
        let dt = self.config.dt;
        let robot = &self.state.robot;
        let agents: Vec<OrcaAgent> = self
            .state
            .humans
            .iter()
            .zip(&self.intents)
            .map(|(h, intent)| OrcaAgent {
                position: h.position,
                velocity: h.velocity,
                radius: h.radius,
                preferred_velocity: ((intent.goal - h.position) / dt).clamp_length_max(intent.v_pref),
                max_speed: intent.v_pref,
                neighbor_distance: self.config.neighbor_distance,
                time_horizon: self.config.time_horizon,
            })
            .collect();
        let robot_agent = OrcaAgent {
            position: robot.position,
            velocity: robot.velocity,
            radius: robot.radius,
            preferred_velocity: robot.velocity,
            max_speed: robot.v_pref,
            neighbor_distance: self.config.neighbor_distance,
            time_horizon: self.config.time_horizon,
        };

        let mut neighbors = Vec::with_capacity(agents.len() + 1);
        agents
            .iter()
            .enumerate()
            .map(|(i, agent)| {
                neighbors.clear();
                let in_range = |other: &OrcaAgent| {
                    (other.position - agent.position).length() < agent.neighbor_distance
                };
                neighbors.extend(
                    agents
                        .iter()
                        .enumerate()
                        .filter(|&(j, other)| j != i && in_range(other))
                        .map(|(_, other)| *other),
                );
                if self.config.robot_visible && in_range(&robot_agent) {
                    neighbors.push(robot_agent);
                }
                new_velocity(agent, &neighbors, dt).velocity
            })
            .collect()
    }

    fn transition(&self, action: DVec2) -> Result<StepOutcome> {
        self.transition_with(action, &self.human_velocities())
    }

    fn transition_with(&self, action: DVec2, human_velocities: &[DVec2]) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::Usage(format!(
                "episode already ended with {:?}",
                self.last_event
            )));
        }
        let robot = &self.state.robot;
        if !action.is_finite() || action.length() > robot.v_pref + 1e-9 {
            return Err(Error::Usage(format!(
                "action {action:?} exceeds the robot's preferred speed {}",
                robot.v_pref
            )));
        }
        let dt = self.config.dt;
        let robot_segment = Segment::new(robot.position, robot.position + action * dt);
        let human_segments: Vec<(Segment, f64)> = self
            .state
            .humans
            .iter()
            .zip(human_velocities)
            .map(|(h, v)| (Segment::new(h.position, h.position + *v * dt), h.radius))
            .collect();
        let d_min = min_separation(robot_segment, robot.radius, &human_segments);

        let mut next = self.state.clone();
        next.time = self.state.time + dt;
        next.robot.position = robot_segment.end;
        next.robot.velocity = action;
        for ((h, v), (segment, _)) in next
            .humans
            .iter_mut()
            .zip(human_velocities)
            .zip(&human_segments)
        {
            h.position = segment.end;
            h.velocity = *v;
        }

        let reached = next.robot.distance_to_goal() < next.robot.radius;
        let event = if d_min < 0.0 {
            Event::Collision
        } else if reached {
            Event::ReachedGoal
        } else if next.time >= self.config.t_max - 1e-9 {
            Event::Timeout
        } else {
            Event::None
        };
        Ok(StepOutcome {
            next,
            reward: reward(d_min, reached, self.config.robot_visible),
            event,
            d_min,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{FullState, ObservableState};
    use super::*;

    fn empty_config() -> ScenarioConfig {
        ScenarioConfig {
            n_humans: 0,
            ..Default::default()
        }
    }

    #[test]
    fn robot_kinematics_in_empty_scene() {
        let mut env = CrowdEnv::new(empty_config(), 0).unwrap();
        let before = env.state().robot.distance_to_goal();
        let out = env.step(DVec2::new(0.0, 1.0)).unwrap();
        assert!((before - out.next.robot.distance_to_goal() - 0.25).abs() < 1e-12);
        assert_eq!(out.event, Event::None);
        assert_eq!(out.reward, 0.0);
        assert_eq!(env.state().time, 0.25);
    }

    #[test]
    fn replay_reconstructs_logged_frames() {
        let mut env = CrowdEnv::new(ScenarioConfig::default(), 17).unwrap();
        for k in 0..6 {
            env.step(DVec2::new(0.1 * k as f64, 0.5)).unwrap();
        }
        let log = env.log().clone();
        let mid = CrowdEnv::replay(&log, 4).unwrap();
        assert_eq!(mid.state().robot, log.records[4].robot);
        assert_eq!(mid.state().humans, log.records[4].humans);
        let end = CrowdEnv::replay(&log, 6).unwrap();
        assert_eq!(end.state(), env.state());
        assert!(CrowdEnv::replay(&log, 7).is_err());

        let mut bad = log.clone();
        bad.records[2].robot.position.x += 1.0;
        assert!(matches!(CrowdEnv::replay(&bad, 5), Err(Error::Format { .. })));
        bad.header.seed = None;
        assert!(matches!(CrowdEnv::replay(&bad, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn overspeed_action_is_rejected() {
        let env = CrowdEnv::new(empty_config(), 0).unwrap();
        assert!(matches!(
            env.lookahead(DVec2::new(0.0, 1.01)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn reaching_the_goal_ends_the_episode() {
        let mut env = CrowdEnv::new(empty_config(), 0).unwrap();
        let mut steps = 0;
        loop {
            let out = env.step(DVec2::new(0.0, 1.0)).unwrap();
            steps += 1;
            if out.event.is_terminal() {
                assert_eq!(out.event, Event::ReachedGoal);
                assert_eq!(out.reward, 1.0);
                break;
            }
        }
        // 7.7 m to cover before entering the 0.3 m goal disc.
        assert_eq!(steps, 31);
        assert!(env.step(DVec2::ZERO).is_err());
    }

    #[test]
    fn standing_still_times_out() {
        let mut env = CrowdEnv::new(empty_config(), 0).unwrap();
        let mut steps = 0;
        while !env.is_done() {
            env.step(DVec2::ZERO).unwrap();
            steps += 1;
        }
        assert_eq!(env.last_event(), Event::Timeout);
        assert_eq!(steps, 100);
    }

    #[test]
    fn lookahead_matches_step_and_has_no_side_effects() {
        let mut env = CrowdEnv::new(ScenarioConfig::default().with_setting(super::super::Setting::Visible), 9).unwrap();
        for _ in 0..6 {
            let action = DVec2::new(0.3, 0.7);
            let time = env.state().time;
            let a = env.lookahead(action).unwrap();
            let b = env.lookahead(action).unwrap();
            assert_eq!(a, b);
            let many = env.lookahead_many(&[DVec2::ZERO, action]).unwrap();
            assert_eq!(many[1], a);
            assert_eq!(many[0], env.lookahead(DVec2::ZERO).unwrap());
            assert_eq!(env.state().time, time);
            let c = env.step(action).unwrap();
            assert_eq!(a, c);
        }
    }

    fn crossing_scene(visible: bool) -> CrowdEnv {
        let config = ScenarioConfig {
            n_humans: 1,
            robot_visible: visible,
            ..Default::default()
        };
        let scenario = Scenario {
            state: JointState {
                robot: FullState {
                    position: DVec2::new(0.0, 0.0),
                    velocity: DVec2::ZERO,
                    radius: 0.3,
                    goal: DVec2::new(0.0, 4.0),
                    v_pref: 1.0,
                },
                humans: vec![ObservableState {
                    position: DVec2::new(-3.0, 0.05),
                    velocity: DVec2::new(1.0, 0.0),
                    radius: 0.3,
                }],
                time: 0.0,
            },
            intents: vec![HumanIntent {
                goal: DVec2::new(3.0, 0.05),
                v_pref: 1.0,
            }],
        };
        CrowdEnv::from_scenario(config, scenario, None)
    }

    #[test]
    fn invisible_robot_does_not_affect_humans() {
        let mut with_robot = crossing_scene(false);
        let mut reference = crossing_scene(false);
        // Move the reference robot far away; humans must not care either way.
        reference.state.robot.position = DVec2::new(100.0, 100.0);
        reference.state.robot.goal = DVec2::new(100.0, 110.0);
        for _ in 0..8 {
            let a = with_robot.step(DVec2::ZERO).unwrap();
            let b = reference.step(DVec2::ZERO).unwrap();
            assert_eq!(a.next.humans, b.next.humans);
            if a.event.is_terminal() {
                break;
            }
        }
    }

    #[test]
    fn visible_robot_changes_human_response() {
        let visible = crossing_scene(true);
        let invisible = crossing_scene(false);
        assert_ne!(visible.human_velocities(), invisible.human_velocities());
    }

    #[test]
    fn actions_change_humans_only_when_visible() {
        for visible in [false, true] {
            let mut env = crossing_scene(visible);
            env.step(DVec2::new(0.0, 0.1)).unwrap();
            let a = env.lookahead(DVec2::new(0.0, 1.0)).unwrap();
            let b = env.lookahead(DVec2::new(-1.0, 0.0)).unwrap();
            let mut env2 = env.clone();
            let a2 = env2.step(DVec2::new(0.0, 1.0)).unwrap();
            // Humans see the new robot velocity one step later.
            let c = env2.lookahead(DVec2::ZERO).unwrap();
            let mut env3 = env.clone();
            env3.step(DVec2::new(-1.0, 0.0)).unwrap();
            let d = env3.lookahead(DVec2::ZERO).unwrap();
            assert_eq!(a.next.humans, b.next.humans);
            assert_eq!(a, a2);
            assert_eq!(c.next.humans == d.next.humans, !visible);
        }
    }

    #[test]
    fn human_relabeling_commutes_with_step() {
        let config = ScenarioConfig::default().with_setting(super::super::Setting::Visible);
        let scenario = generate_scenario(5, &config).unwrap();
        let mut perm = scenario.clone();
        perm.state.humans.reverse();
        perm.intents.reverse();
        let mut a = CrowdEnv::from_scenario(config.clone(), scenario, None);
        let mut b = CrowdEnv::from_scenario(config, perm, None);
        for _ in 0..20 {
            let oa = a.step(DVec2::new(0.0, 0.9)).unwrap();
            let ob = b.step(DVec2::new(0.0, 0.9)).unwrap();
            let mut rev = ob.next.humans.clone();
            rev.reverse();
            for (x, y) in oa.next.humans.iter().zip(&rev) {
                assert!((x.position - y.position).length() < 1e-9);
            }
            assert!((oa.d_min - ob.d_min).abs() < 1e-9);
            if oa.event.is_terminal() {
                break;
            }
        }
    }
}
