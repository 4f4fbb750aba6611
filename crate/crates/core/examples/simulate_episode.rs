//! One invisible-setting episode with an ORCA-driven robot, step by step.
//!
//! `cargo run --example simulate_episode -- [seed]`

use crowdnav::eval::{OrcaPolicy, Policy};
use crowdnav::sim::{CrowdEnv, ScenarioConfig, Setting};

fn main() -> crowdnav::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let config = ScenarioConfig::default().with_setting(Setting::Invisible);
    let mut env = CrowdEnv::new(config, seed)?;
    let policy = OrcaPolicy::new(0.0)?;

    while !env.is_done() {
        let action = policy.act(&env)?;
        let out = env.step(action)?;
        let robot = out.next.robot;
        if out.reward != 0.0 || out.event.is_terminal() || (out.next.time / 0.25) as usize % 8 == 0 {
            println!(
                "t={:5.2}  robot ({:+.2}, {:+.2})  clearance {:.3}  reward {:+.4}  {:?}",
                out.next.time, robot.position.x, robot.position.y, out.d_min, out.reward, out.event
            );
        }
    }
    let log = env.into_log();
    println!("{:?} after {:.2} s, {} records", log.outcome(), log.duration(), log.records.len());

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("episode.jsonl");
    log.save(&path)?;
    println!("log round-trips: {}", crowdnav::sim::EpisodeLog::load(&path)? == log);
    Ok(())
}
