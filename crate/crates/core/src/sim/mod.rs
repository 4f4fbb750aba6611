//! Circle-crossing crowd simulator with ORCA-driven humans.

mod env;
mod log;
mod reward;
mod scenario;

pub use self::env::{CrowdEnv, StepOutcome};
pub use self::log::{discomfort_stats, EpisodeLog, LogHeader, StepRecord, EPISODE_LOG_FORMAT, EPISODE_LOG_VERSION};
pub use self::reward::{min_separation, reward, Segment, DISCOMFORT_DISTANCE};
pub use self::scenario::{generate_scenario, Scenario};

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What other agents can see of an agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableState {
    pub position: DVec2,
    pub velocity: DVec2,
    pub radius: f64,
}

/// The robot's own state: observable part plus goal and preferred speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub position: DVec2,
    pub velocity: DVec2,
    pub radius: f64,
    pub goal: DVec2,
    pub v_pref: f64,
}

impl FullState {
    pub fn observable(&self) -> ObservableState {
        ObservableState {
            position: self.position,
            velocity: self.velocity,
            radius: self.radius,
        }
    }

    pub fn distance_to_goal(&self) -> f64 {
        (self.goal - self.position).length()
    }
}

/// Robot state plus every human's observable state at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub robot: FullState,
    pub humans: Vec<ObservableState>,
    pub time: f64,
}

/// Hidden per-human navigation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanIntent {
    pub goal: DVec2,
    pub v_pref: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Event {
    None,
    Collision,
    ReachedGoal,
    Timeout,
}

impl Event {
    pub fn is_terminal(self) -> bool {
        self != Event::None
    }
}

/// Whether humans react to the robot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Invisible,
    Visible,
}

impl Setting {
    pub fn robot_visible(self) -> bool {
        self == Setting::Visible
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "invisible" => Ok(Setting::Invisible),
            "visible" => Ok(Setting::Visible),
            other => Err(Error::Usage(format!(
                "unknown setting '{other}' (expected 'invisible' or 'visible')"
            ))),
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::Invisible => "invisible",
            Setting::Visible => "visible",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_humans: usize,
    pub circle_radius: f64,
    pub dt: f64,
    pub t_max: f64,
    pub robot_visible: bool,
    pub human_v_pref: Gaussian,
    pub human_radius: Gaussian,
    pub perturbation_scale: f64,
    pub robot_radius: f64,
    pub robot_v_pref: f64,
    /// Extra clearance required between initial (and goal) discs.
    pub spawn_margin: f64,
    pub neighbor_distance: f64,
    pub time_horizon: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_humans: 5,
            circle_radius: 4.0,
            dt: 0.25,
            t_max: 25.0,
            robot_visible: false,
            human_v_pref: Gaussian {
                mean: 1.0,
                std: 0.2,
            },
            human_radius: Gaussian {
                mean: 0.3,
                std: 0.05,
            },
            perturbation_scale: 0.5,
            robot_radius: 0.3,
            robot_v_pref: 1.0,
            spawn_margin: 0.1,
            neighbor_distance: 10.0,
            time_horizon: 5.0,
        }
    }
}

impl ScenarioConfig {
    pub fn with_setting(mut self, setting: Setting) -> Self {
        self.robot_visible = setting.robot_visible();
        self
    }

    pub fn setting(&self) -> Setting {
        if self.robot_visible {
            Setting::Visible
        } else {
            Setting::Invisible
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("circle_radius", self.circle_radius),
            ("dt", self.dt),
            ("robot_radius", self.robot_radius),
            ("robot_v_pref", self.robot_v_pref),
            ("neighbor_distance", self.neighbor_distance),
            ("time_horizon", self.time_horizon),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.t_max > self.dt) {
            return Err(Error::Config(format!(
                "t_max ({}) must exceed dt ({})",
                self.t_max, self.dt
            )));
        }
        if self.perturbation_scale < 0.0 || self.spawn_margin < 0.0 {
            return Err(Error::Config(
                "perturbation_scale and spawn_margin must be non-negative".into(),
            ));
        }
        if self.human_v_pref.std < 0.0 || self.human_radius.std < 0.0 {
            return Err(Error::Config("standard deviations must be non-negative".into()));
        }
        Ok(())
    }
}
