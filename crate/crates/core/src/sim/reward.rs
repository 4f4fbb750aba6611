use glam::DVec2;

/// Separations below this are uncomfortable for humans.
pub const DISCOMFORT_DISTANCE: f64 = 0.2;

/// Constant-velocity motion over one step, from `start` to `end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: DVec2,
    pub end: DVec2,
}

impl Segment {
    pub fn new(start: DVec2, end: DVec2) -> Self {
        Segment { start, end }
    }

    pub fn stationary(p: DVec2) -> Self {
        Segment { start: p, end: p }
    }
}

/// Smallest disc-to-disc clearance between the robot and any human over the
/// step interval. Both move linearly, so the closest approach of each pair is
/// the minimum of a quadratic in time. Negative means overlap; `+inf` when
/// there are no humans.
pub fn min_separation(robot: Segment, robot_radius: f64, humans: &[(Segment, f64)]) -> f64 {
    humans
        .iter()
        .map(|(human, radius)| {
            let d0 = human.start - robot.start;
            let drift = (human.end - human.start) - (robot.end - robot.start);
            let drift_sq = drift.length_squared();
            let s = if drift_sq > 0.0 {
                (-d0.dot(drift) / drift_sq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (d0 + s * drift).length() - robot_radius - radius
        })
        .fold(f64::INFINITY, f64::min)
}

/// Step reward. Collisions dominate, then arrival, then the discomfort band
/// (when enabled), else zero.
pub fn reward(d_min: f64, reached_goal: bool, discomfort_penalty: bool) -> f64 {
    if d_min < 0.0 {
        -0.25
    } else if reached_goal {
        1.0
    } else if discomfort_penalty && d_min < DISCOMFORT_DISTANCE {
        -0.1 + d_min / 2.0
    } else {
        0.0
    }
}
