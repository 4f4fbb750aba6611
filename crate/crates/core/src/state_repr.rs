//! Robot-centric state parameterization and per-human local maps.
//!
//! The robot sits at the origin with +x pointing at its goal. Everything,
//! including human velocities, is expressed in that frame, so the network
//! input is invariant to rigid motions of the whole scene.

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::sim::{JointState, ObservableState};

pub const ROBOT_FEATURES: usize = 5;
pub const HUMAN_FEATURES: usize = 7;

/// `robot = [d_g, v_pref, v_x, v_y, r]`,
/// `humans[i] = [p_x, p_y, v_x, v_y, r_i, d_i, r_i + r]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotCentricState {
    pub robot: [f64; ROBOT_FEATURES],
    pub humans: Vec<[f64; HUMAN_FEATURES]>,
    /// Heading of the frame's +x axis in world coordinates.
    pub frame_angle: f64,
    /// Robot was on its goal; `frame_angle` is the fallback orientation.
    pub degenerate: bool,
}

impl RobotCentricState {
    /// Humans as observable states in the robot frame.
    pub fn human_observables(&self) -> Vec<ObservableState> {
        self.humans
            .iter()
            .map(|w| ObservableState {
                position: DVec2::new(w[0], w[1]),
                velocity: DVec2::new(w[2], w[3]),
                radius: w[4],
            })
            .collect()
    }
}

pub fn to_robot_centric(joint: &JointState) -> RobotCentricState {
    to_robot_centric_with_fallback(joint, 0.0)
}

/// Like [`to_robot_centric`], but uses `fallback_angle` as the frame heading
/// when the robot sits exactly on its goal.
pub fn to_robot_centric_with_fallback(joint: &JointState, fallback_angle: f64) -> RobotCentricState {
    let robot = &joint.robot;
    let to_goal = robot.goal - robot.position;
    let degenerate = to_goal.length_squared() == 0.0;
    let frame_angle = if degenerate {
        fallback_angle
    } else {
        to_goal.y.atan2(to_goal.x)
    };
    // Rotation by -frame_angle maps the goal direction onto +x.
    let world_to_frame = DVec2::from_angle(-frame_angle);
    let v = world_to_frame.rotate(robot.velocity);
    let humans = joint
        .humans
        .iter()
        .map(|h| {
            let p = world_to_frame.rotate(h.position - robot.position);
            let hv = world_to_frame.rotate(h.velocity);
            [p.x, p.y, hv.x, hv.y, h.radius, p.length(), h.radius + robot.radius]
        })
        .collect();
    RobotCentricState {
        robot: [to_goal.length(), robot.v_pref, v.x, v.y, robot.radius],
        humans,
        frame_angle,
        degenerate,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalMapConfig {
    /// Cells per side (L).
    pub size: usize,
    pub cell_side: f64,
}

impl Default for LocalMapConfig {
    fn default() -> Self {
        LocalMapConfig {
            size: 4,
            cell_side: 1.0,
        }
    }
}

impl LocalMapConfig {
    pub fn flat_len(&self) -> usize {
        self.size * self.size * 3
    }
}

/// `L × L × 3` grid of summed neighbor `(v_x, v_y, count)` around one human.
/// Flattened index of `(a, b, channel)` is `(a * L + b) * 3 + channel`, where
/// `a` indexes x and `b` indexes y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalMapTensor {
    pub config: LocalMapConfig,
    pub data: Vec<f64>,
}

impl LocalMapTensor {
    pub fn zeros(config: LocalMapConfig) -> Self {
        LocalMapTensor {
            config,
            data: vec![0.0; config.flat_len()],
        }
    }

    #[inline]
    pub fn cell(&self, a: usize, b: usize) -> [f64; 3] {
        let k = (a * self.config.size + b) * 3;
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    pub fn occupancy_total(&self) -> f64 {
        self.data.iter().skip(2).step_by(3).sum()
    }
}

/// Local map centered on human `index`. Neighbor `j` at offset `(dx, dy)`
/// lands in cell `(floor(dx / side + L/2), floor(dy / side + L/2))` when that
/// lies inside the grid; neighbors outside are ignored.
pub fn build_local_map(humans: &[ObservableState], index: usize, config: LocalMapConfig) -> LocalMapTensor {
    let mut map = LocalMapTensor::zeros(config);
    let center = humans[index].position;
    let half = config.size as f64 / 2.0;
    for (j, other) in humans.iter().enumerate() {
        if j == index {
            continue;
        }
        let offset = other.position - center;
        let a = (offset.x / config.cell_side + half).floor();
        let b = (offset.y / config.cell_side + half).floor();
        if a < 0.0 || b < 0.0 || a >= config.size as f64 || b >= config.size as f64 {
            continue;
        }
        let k = (a as usize * config.size + b as usize) * 3;
        map.data[k] += other.velocity.x;
        map.data[k + 1] += other.velocity.y;
        map.data[k + 2] += 1.0;
    }
    map
}

/// One local map per human, built in the robot frame.
pub fn build_local_maps(state: &RobotCentricState, config: LocalMapConfig) -> Vec<LocalMapTensor> {
    let humans = state.human_observables();
    (0..humans.len())
        .map(|i| build_local_map(&humans, i, config))
        .collect()
}
