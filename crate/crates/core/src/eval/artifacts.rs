//! Attention scores, value-over-action maps and trajectory plots.
//!
//! Plot data is JSON with `format = "crowdnav-plot"`, `version = 1` and a
//! `kind` of `trajectory`, `polar` or `attention`. Trajectories come with an
//! SVG rendering: one polyline per agent, circles with time labels every
//! `label_every` steps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use glam::DVec2;
use serde::{Deserialize, Serialize};

use super::Policy;
use crate::error::{Error, Result};
use crate::sim::{CrowdEnv, EpisodeLog, Event, JointState};
use crate::state_repr::to_robot_centric;
use crate::vlearning::ActionSpace;

pub const PLOT_FORMAT: &str = "crowdnav-plot";
const PLOT_VERSION: u32 = 1;

fn attentive(policy: &dyn Policy) -> Result<&crate::value_net::SarlParams> {
    policy.value_network().ok_or_else(|| {
        Error::Unsupported(format!("policy '{}' has no attention scores or value network", policy.name()))
    })
}

/// Softmax attention over the humans of `state`, in their original order.
pub fn export_attention(policy: &dyn Policy, state: &JointState) -> Result<Vec<f64>> {
    let params = attentive(policy)?;
    Ok(params.forward(&params.encode(&to_robot_centric(state)))?.attention)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarEntry {
    pub speed_index: usize,
    pub heading_index: usize,
    pub speed: f64,
    /// World-frame heading in radians.
    pub heading: f64,
    pub value: f64,
}

/// Lookahead value of every discrete action, speed-major.
pub fn value_polar_map(policy: &dyn Policy, env: &CrowdEnv, gamma: f64) -> Result<Vec<PolarEntry>> {
    let params = attentive(policy)?;
    let space = ActionSpace::new(env.state().robot.v_pref)?;
    let values = params.action_values(env, &space.actions, gamma)?;
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(k, value)| {
            let (s, h) = space.indices(k);
            PolarEntry {
                speed_index: s,
                heading_index: h,
                speed: space.speeds[s],
                heading: space.headings[h],
                value,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub radius: f64,
    pub samples: Vec<Sample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlot {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub dt: f64,
    pub outcome: Event,
    pub goal: Option<[f64; 2]>,
    pub robot: AgentTrack,
    pub humans: Vec<AgentTrack>,
}

impl TrajectoryPlot {
    /// One sample per logged step (the state when the action was issued).
    pub fn from_log(log: &EpisodeLog) -> Self {
        let sample = |t: f64, p: DVec2| Sample { t, x: p.x, y: p.y };
        let first = log.records.first();
        let robot = AgentTrack {
            radius: first.map_or(log.header.config.robot_radius, |r| r.robot.radius),
            samples: log.records.iter().map(|r| sample(r.time, r.robot.position)).collect(),
        };
        let humans = first
            .map(|f| {
                (0..f.humans.len())
                    .map(|i| AgentTrack {
                        radius: f.humans[i].radius,
                        samples: log
                            .records
                            .iter()
                            .map(|r| sample(r.time, r.humans[i].position))
                            .collect(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        TrajectoryPlot {
            format: PLOT_FORMAT.into(),
            version: PLOT_VERSION,
            kind: "trajectory".into(),
            dt: log.header.dt,
            outcome: log.outcome(),
            goal: first.map(|r| [r.robot.goal.x, r.robot.goal.y]),
            robot,
            humans,
        }
    }

    pub fn to_svg(&self, label_every: usize) -> String {
        let label_every = label_every.max(1);
        let all = std::iter::once(&self.robot).chain(&self.humans);
        let (mut lo, mut hi) = (DVec2::splat(-5.0), DVec2::splat(5.0));
        for track in all {
            for s in &track.samples {
                lo = lo.min(DVec2::new(s.x, s.y) - track.radius);
                hi = hi.max(DVec2::new(s.x, s.y) + track.radius);
            }
        }
        let size = hi - lo;
        let mut svg = String::new();
        // y grows downward in SVG, so flip it.
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.3} {:.3} {:.3} {:.3}" width="600" height="{:.0}">"#,
            lo.x,
            -hi.y,
            size.x,
            size.y,
            600.0 * size.y / size.x
        );
        let _ = writeln!(svg, r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="white"/>"#, lo.x, -hi.y, size.x, size.y);
        if let Some([gx, gy]) = self.goal {
            let _ = writeln!(
                svg,
                r#"<path d="M {:.3} {:.3} l 0.15 0.3 l -0.3 0 z" fill="red"/>"#,
                gx,
                -gy - 0.15
            );
        }
        let palette = ["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];
        let tracks = std::iter::once(("#d4a017", &self.robot))
            .chain(self.humans.iter().enumerate().map(|(i, h)| (palette[i % palette.len()], h)));
        for (color, track) in tracks {
            if track.samples.is_empty() {
                continue;
            }
            let points: Vec<String> = track
                .samples
                .iter()
                .map(|s| format!("{:.3},{:.3}", s.x, -s.y))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="0.03"/>"#,
                points.join(" ")
            );
            for (k, s) in track.samples.iter().enumerate() {
                if k % label_every != 0 && k + 1 != track.samples.len() {
                    continue;
                }
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.3}" cy="{:.3}" r="{:.3}" fill="none" stroke="{color}" stroke-width="0.02"/>"#,
                    s.x, -s.y, track.radius
                );
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.3}" y="{:.3}" font-size="0.2" text-anchor="middle" dominant-baseline="middle">{:.1}</text>"#,
                    s.x, -s.y, s.t
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("plot data serializes");
    out.push(b'\n');
    out
}

/// Writes `<stem>.json` and `<stem>.svg`; returns both paths.
pub fn render_episode(log: &EpisodeLog, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let plot = TrajectoryPlot::from_log(log);
    let json = stem.with_extension("json");
    let svg = stem.with_extension("svg");
    write_file(&json, &json_pretty(&plot))?;
    let label_every = (1.0 / log.header.dt).round().max(1.0) as usize * 4;
    write_file(&svg, plot.to_svg(label_every).as_bytes())?;
    Ok((json, svg))
}

#[derive(Serialize, Deserialize)]
struct PolarFile {
    format: String,
    version: u32,
    kind: String,
    entries: Vec<PolarEntry>,
}

/// Writes `<stem>.json` and an SVG wedge plot `<stem>.svg` colored by value.
pub fn render_polar_map(entries: &[PolarEntry], stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let json = stem.with_extension("json");
    let svg_path = stem.with_extension("svg");
    let file = PolarFile {
        format: PLOT_FORMAT.into(),
        version: PLOT_VERSION,
        kind: "polar".into(),
        entries: entries.to_vec(),
    };
    write_file(&json, &json_pretty(&file))?;

    let (min, max) = entries
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e.value), b.max(e.value)));
    let span = if max > min { max - min } else { 1.0 };
    let top = entries.iter().map(|e| e.speed).fold(0.0, f64::max).max(1e-9);
    let mut svg = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"-1.1 -1.1 2.2 2.2\" width=\"400\" height=\"400\">\n",
    );
    let half = std::f64::consts::PI / 16.0;
    for e in entries {
        let inner = entries
            .iter()
            .filter(|o| o.speed < e.speed)
            .map(|o| o.speed)
            .fold(0.0, f64::max)
            / top;
        let outer = e.speed / top;
        let (a0, a1) = (e.heading - half, e.heading + half);
        let p = |r: f64, a: f64| (r * a.cos(), -r * a.sin());
        let (x0, y0) = p(inner, a0);
        let (x1, y1) = p(outer, a0);
        let (x2, y2) = p(outer, a1);
        let (x3, y3) = p(inner, a1);
        let shade = ((e.value - min) / span * 255.0).round() as u8;
        let _ = writeln!(
            svg,
            r#"<path d="M {x0:.4} {y0:.4} L {x1:.4} {y1:.4} A {outer:.4} {outer:.4} 0 0 0 {x2:.4} {y2:.4} L {x3:.4} {y3:.4} A {inner:.4} {inner:.4} 0 0 1 {x0:.4} {y0:.4} Z" fill="rgb({shade},{},{})"/>"#,
            64, 255 - shade
        );
    }
    svg.push_str("</svg>\n");
    write_file(&svg_path, svg.as_bytes())?;
    Ok((json, svg_path))
}

#[derive(Serialize, Deserialize)]
struct AttentionFile {
    format: String,
    version: u32,
    kind: String,
    /// `(human index, score)` pairs.
    scores: Vec<(usize, f64)>,
}

pub fn write_attention(scores: &[f64], path: &Path) -> Result<()> {
    let file = AttentionFile {
        format: PLOT_FORMAT.into(),
        version: PLOT_VERSION,
        kind: "attention".into(),
        scores: scores.iter().copied().enumerate().collect(),
    };
    write_file(path, &json_pretty(&file))
}
