//! Line-delimited episode logs.
//!
//! The first line is a header object; every following line is one step record
//! with fields in this order: `step, time, robot, humans, action, reward,
//! event, d_min`. `time` and the states are taken when the action is issued;
//! `reward`, `event` and `d_min` describe the step that follows.

use std::io::{BufRead, Write};
use std::path::Path;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use super::reward::DISCOMFORT_DISTANCE;
use super::{Event, FullState, ObservableState, ScenarioConfig};
use crate::error::{Error, Result};

pub const EPISODE_LOG_FORMAT: &str = "crowdnav-episode-log";
pub const EPISODE_LOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub seed: Option<u64>,
    pub dt: f64,
    pub config: ScenarioConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub robot: FullState,
    pub humans: Vec<ObservableState>,
    pub action: DVec2,
    pub reward: f64,
    pub event: Event,
    /// `None` when there were no humans.
    pub d_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn new(seed: Option<u64>, config: &ScenarioConfig) -> Self {
        EpisodeLog {
            header: LogHeader {
                format: EPISODE_LOG_FORMAT.to_string(),
                version: EPISODE_LOG_VERSION,
                seed,
                dt: config.dt,
                config: config.clone(),
            },
            records: Vec::new(),
        }
    }

    pub fn outcome(&self) -> Event {
        self.records.last().map_or(Event::None, |r| r.event)
    }

    /// Episode duration in seconds.
    pub fn duration(&self) -> f64 {
        self.records.len() as f64 * self.header.dt
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.reward)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for record in &self.records {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty episode log"))?
            .map_err(|e| Error::io(path, e))?;
        let header: LogHeader = serde_json::from_str(&first)
            .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
        if header.format != EPISODE_LOG_FORMAT || header.version != EPISODE_LOG_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported log {} v{}", header.format, header.version),
            ));
        }
        let mut records = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::format(path, format!("record {k}: {e}")))?,
            );
        }
        Ok(EpisodeLog { header, records })
    }
}

/// Time spent closer than the discomfort distance, and its share of the
/// episode duration.
pub fn discomfort_stats(log: &EpisodeLog) -> (f64, f64) {
    let dt = log.header.dt;
    let close_steps = log
        .records
        .iter()
        .filter(|r| r.d_min.is_some_and(|d| d < DISCOMFORT_DISTANCE))
        .count();
    let t_disc = close_steps as f64 * dt;
    let total = log.duration();
    let frequency = if total > 0.0 { t_disc / total } else { 0.0 };
    (t_disc, frequency)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(step: usize, d_min: Option<f64>) -> StepRecord {
        StepRecord {
            step,
            time: step as f64 * 0.25,
            robot: FullState {
                position: DVec2::ZERO,
                velocity: DVec2::ZERO,
                radius: 0.3,
                goal: DVec2::Y,
                v_pref: 1.0,
            },
            humans: vec![],
            action: DVec2::ZERO,
            reward: 0.0,
            event: Event::None,
            d_min,
        }
    }

    #[test]
    fn comfortable_episode_has_zero_discomfort() {
        let mut log = EpisodeLog::new(Some(1), &ScenarioConfig::default());
        log.records = (0..40).map(|k| record(k, Some(0.5))).collect();
        assert_eq!(discomfort_stats(&log), (0.0, 0.0));
    }

    #[test]
    fn one_close_step_in_ten_seconds() {
        let mut log = EpisodeLog::new(Some(1), &ScenarioConfig::default());
        log.records = (0..40)
            .map(|k| record(k, Some(if k == 7 { 0.1 } else { 1.0 })))
            .collect();
        let (t, f) = discomfort_stats(&log);
        assert_eq!(t, 0.25);
        assert!((f - 0.025).abs() < 1e-15);
    }

    #[test]
    fn frequency_is_bounded() {
        let mut log = EpisodeLog::new(None, &ScenarioConfig::default());
        assert_eq!(discomfort_stats(&log).1, 0.0);
        log.records = (0..10).map(|k| record(k, Some(-0.1))).collect();
        assert_eq!(discomfort_stats(&log).1, 1.0);
    }

    #[test]
    fn log_round_trips_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episode.jsonl");
        let mut log = EpisodeLog::new(Some(3), &ScenarioConfig::default());
        log.records = vec![record(0, Some(0.123456789)), record(1, None)];
        log.save(&path).unwrap();
        assert_eq!(EpisodeLog::load(&path).unwrap(), log);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("{\"format\":\"crowdnav-episode-log\",\"version\":1"));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episode.jsonl");
        let mut log = EpisodeLog::new(Some(3), &ScenarioConfig::default());
        log.header.version = 99;
        log.save(&path).unwrap();
        assert!(matches!(EpisodeLog::load(&path), Err(Error::Format { .. })));
    }
}
