//! Optimal Reciprocal Collision Avoidance for holonomic disc agents.
//!
//! Each neighbor contributes one half-plane of permitted velocities. Both
//! agents of a pair take half of the smallest velocity change that leaves the
//! truncated velocity obstacle, so that if every agent stays inside its own
//! half-planes no pair collides within the time horizon. The resulting linear
//! program is solved incrementally in 2D; when it is infeasible a 3D program
//! minimizes the largest violation instead.

use glam::DVec2;
use serde::{Deserialize, Serialize};

const LP_EPSILON: f64 = 1e-9;
const TIE_BREAK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrcaAgent {
    pub position: DVec2,
    pub velocity: DVec2,
    pub radius: f64,
    pub preferred_velocity: DVec2,
    pub max_speed: f64,
    pub neighbor_distance: f64,
    pub time_horizon: f64,
}

impl OrcaAgent {
    /// Agent with the default neighborhood (10 m) and time horizon (5 s).
    pub fn new(position: DVec2, velocity: DVec2, radius: f64, max_speed: f64) -> Self {
        OrcaAgent {
            position,
            velocity,
            radius,
            preferred_velocity: DVec2::ZERO,
            max_speed,
            neighbor_distance: 10.0,
            time_horizon: 5.0,
        }
    }

    pub fn with_preferred_velocity(mut self, preferred: DVec2) -> Self {
        self.preferred_velocity = preferred;
        self
    }
}

/// Permitted region `{v : (v - point) · normal >= 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub point: DVec2,
    pub normal: DVec2,
}

impl HalfPlane {
    fn from_direction(point: DVec2, direction: DVec2) -> Self {
        HalfPlane {
            point,
            normal: direction.perp(),
        }
    }

    /// Boundary direction; the permitted side lies to its left.
    #[inline]
    pub fn direction(&self) -> DVec2 {
        DVec2::new(self.normal.y, -self.normal.x)
    }

    /// Signed violation: positive when `v` lies outside the half-plane.
    #[inline]
    pub fn violation(&self, v: DVec2) -> f64 {
        self.direction().perp_dot(self.point - v)
    }

    pub fn contains(&self, v: DVec2, tolerance: f64) -> bool {
        self.violation(v) <= tolerance
    }
}

/// Result of the velocity program, with a flag telling whether every
/// half-plane could be satisfied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocitySolution {
    pub velocity: DVec2,
    pub feasible: bool,
}

/// One half-plane per neighbor. The caller is responsible for neighborhood
/// filtering.
pub fn orca_lines(agent: &OrcaAgent, neighbors: &[OrcaAgent], dt: f64) -> Vec<HalfPlane> {
    assert!(dt > 0.0, "time step must be positive, got {dt}");
    let inv_horizon = 1.0 / agent.time_horizon;
    neighbors
        .iter()
        .map(|other| {
            let relative_position = other.position - agent.position;
            let relative_velocity = agent.velocity - other.velocity;
            let dist_sq = relative_position.length_squared();
            let combined_radius = agent.radius + other.radius;
            let combined_radius_sq = combined_radius * combined_radius;

            let (direction, u) = if dist_sq > combined_radius_sq {
                let w = relative_velocity - inv_horizon * relative_position;
                let w_length_sq = w.length_squared();
                let dot1 = w.dot(relative_position);
                if dot1 < 0.0 && dot1 * dot1 > combined_radius_sq * w_length_sq {
                    // Closest boundary point lies on the cut-off circle.
                    let w_length = w_length_sq.sqrt();
                    let unit_w = w / w_length;
                    (
                        DVec2::new(unit_w.y, -unit_w.x),
                        (combined_radius * inv_horizon - w_length) * unit_w,
                    )
                } else {
                    let leg = (dist_sq - combined_radius_sq).sqrt();
                    let direction = if relative_position.perp_dot(w) > 0.0 {
                        DVec2::new(
                            relative_position.x * leg - relative_position.y * combined_radius,
                            relative_position.x * combined_radius + relative_position.y * leg,
                        ) / dist_sq
                    } else {
                        -DVec2::new(
                            relative_position.x * leg + relative_position.y * combined_radius,
                            -relative_position.x * combined_radius + relative_position.y * leg,
                        ) / dist_sq
                    };
                    let dot2 = relative_velocity.dot(direction);
                    (direction, dot2 * direction - relative_velocity)
                }
            } else {
                // Already overlapping: resolve within one time step.
                let inv_dt = 1.0 / dt;
                let w = relative_velocity - inv_dt * relative_position;
                let w_length = w.length();
                let unit_w = if w_length > 0.0 {
                    w / w_length
                } else {
                    log::warn!(
                        "coincident agents at {:?} with equal velocities; separating along +x",
                        agent.position
                    );
                    DVec2::X
                };
                (
                    DVec2::new(unit_w.y, -unit_w.x),
                    (combined_radius * inv_dt - w_length) * unit_w,
                )
            };
            HalfPlane::from_direction(agent.velocity + 0.5 * u, direction)
        })
        .collect()
}

/// Velocity closest to `preferred` inside all half-planes and the speed disc.
pub fn solve_velocity(lines: &[HalfPlane], preferred: DVec2, max_speed: f64) -> DVec2 {
    solve_velocity_detailed(lines, preferred, max_speed).velocity
}

pub fn solve_velocity_detailed(
    lines: &[HalfPlane],
    preferred: DVec2,
    max_speed: f64,
) -> VelocitySolution {
    assert!(max_speed > 0.0, "max speed must be positive, got {max_speed}");
    let mut result = DVec2::ZERO;
    let fail = linear_program2(lines, max_speed, preferred, false, &mut result);
    let feasible = fail >= lines.len();
    if !feasible {
        linear_program3(lines, fail, max_speed, &mut result);
    }
    if result.length() > max_speed {
        result *= max_speed / result.length();
    }
    VelocitySolution {
        velocity: result,
        feasible,
    }
}

/// New velocity for `agent` against `neighbors`. A tiny left-normal nudge of
/// the preferred velocity breaks exact head-on symmetry.
pub fn new_velocity(agent: &OrcaAgent, neighbors: &[OrcaAgent], dt: f64) -> VelocitySolution {
    let lines = orca_lines(agent, neighbors, dt);
    let mut preferred = agent.preferred_velocity;
    if !lines.is_empty() && preferred.length_squared() > 0.0 {
        preferred += TIE_BREAK * preferred.normalize().perp();
    }
    solve_velocity_detailed(&lines, preferred, agent.max_speed)
}

/// Simultaneous update: every velocity is computed from the same snapshot.
pub fn orca_step(agents: &[OrcaAgent], dt: f64) -> Vec<DVec2> {
    orca_step_detailed(agents, dt)
        .into_iter()
        .map(|s| s.velocity)
        .collect()
}

pub fn orca_step_detailed(agents: &[OrcaAgent], dt: f64) -> Vec<VelocitySolution> {
    let mut neighbors = Vec::with_capacity(agents.len());
    agents
        .iter()
        .enumerate()
        .map(|(i, agent)| {
            neighbors.clear();
            neighbors.extend(agents.iter().enumerate().filter_map(|(j, other)| {
                (j != i
                    && (other.position - agent.position).length() < agent.neighbor_distance)
                    .then_some(*other)
            }));
            new_velocity(agent, &neighbors, dt)
        })
        .collect()
}

fn linear_program1(
    lines: &[HalfPlane],
    line_no: usize,
    radius: f64,
    opt_velocity: DVec2,
    direction_opt: bool,
    result: &mut DVec2,
) -> bool {
    let line = &lines[line_no];
    let dir = line.direction();
    let dot = line.point.dot(dir);
    let discriminant = dot * dot + radius * radius - line.point.length_squared();
    if discriminant < 0.0 {
        // The speed disc misses this line entirely.
        return false;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for other in &lines[..line_no] {
        let other_dir = other.direction();
        let denominator = dir.perp_dot(other_dir);
        let numerator = other_dir.perp_dot(line.point - other.point);
        if denominator.abs() <= LP_EPSILON {
            if numerator < 0.0 {
                return false;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }

    *result = if direction_opt {
        if opt_velocity.dot(dir) > 0.0 {
            line.point + t_right * dir
        } else {
            line.point + t_left * dir
        }
    } else {
        let t = dir.dot(opt_velocity - line.point);
        line.point + t.clamp(t_left, t_right) * dir
    };
    true
}

// Returns the index of the first line that could not be satisfied, or
// `lines.len()` on success.
fn linear_program2(
    lines: &[HalfPlane],
    radius: f64,
    opt_velocity: DVec2,
    direction_opt: bool,
    result: &mut DVec2,
) -> usize {
    *result = if direction_opt {
        opt_velocity * radius
    } else if opt_velocity.length_squared() > radius * radius {
        opt_velocity.normalize() * radius
    } else {
        opt_velocity
    };
    for i in 0..lines.len() {
        if lines[i].violation(*result) > 0.0 {
            let previous = *result;
            if !linear_program1(lines, i, radius, opt_velocity, direction_opt, result) {
                *result = previous;
                return i;
            }
        }
    }
    lines.len()
}

fn linear_program3(lines: &[HalfPlane], begin_line: usize, radius: f64, result: &mut DVec2) {
    let mut distance = 0.0;
    for i in begin_line..lines.len() {
        if lines[i].violation(*result) > distance {
            let dir_i = lines[i].direction();
            let mut projected = Vec::with_capacity(i);
            for line_j in &lines[..i] {
                let dir_j = line_j.direction();
                let determinant = dir_i.perp_dot(dir_j);
                let point = if determinant.abs() <= LP_EPSILON {
                    if dir_i.dot(dir_j) > 0.0 {
                        // Parallel and same orientation.
                        continue;
                    }
                    0.5 * (lines[i].point + line_j.point)
                } else {
                    lines[i].point
                        + (dir_j.perp_dot(lines[i].point - line_j.point) / determinant) * dir_i
                };
                projected.push(HalfPlane::from_direction(point, (dir_j - dir_i).normalize()));
            }
            let previous = *result;
            if linear_program2(&projected, radius, DVec2::new(-dir_i.y, dir_i.x), true, result)
                < projected.len()
            {
                // Can only fail through rounding; keep the previous answer.
                *result = previous;
            }
            distance = lines[i].violation(*result);
        }
    }
}
