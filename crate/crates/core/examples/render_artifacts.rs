//! Trajectory plot of an episode plus the value map and attention at one
//! frame, written as JSON and SVG into a directory.
//!
//! `cargo run --release --example render_artifacts -- [out_dir]`

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crowdnav::eval::{export_attention, render_episode, render_polar_map, value_polar_map, write_attention, Policy, ValuePolicy};
use crowdnav::sim::{CrowdEnv, ScenarioConfig};
use crowdnav::value_net::{SarlConfig, SarlParams};

fn main() -> crowdnav::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("crowdnav-artifacts"));
    std::fs::create_dir_all(&out).map_err(|e| crowdnav::Error::io(&out, e))?;

    // Untrained weights: the pictures are meaningful only for a trained checkpoint.
    let params = SarlParams::new(SarlConfig::lm_sarl(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let policy = ValuePolicy::new("lm-sarl", params, 0.9);
    let mut env = CrowdEnv::new(ScenarioConfig::default(), 5)?;
    while !env.is_done() {
        env.step(policy.act(&env)?)?;
    }
    let (json, svg) = render_episode(env.log(), &out.join("trajectory"))?;
    println!("{:?} after {} steps; wrote {} and {}", env.last_event(), env.log().records.len(), json.display(), svg.display());

    // Rebuild the world as it was at an earlier frame.
    let frame = env.log().records.len() / 2;
    let then = CrowdEnv::replay(env.log(), frame)?;
    let entries = value_polar_map(&policy, &then, 0.9)?;
    let best = entries.iter().max_by(|a, b| a.value.total_cmp(&b.value)).expect("80 actions");
    println!("frame {frame}: best action speed {:.2} heading {:.2} rad", best.speed, best.heading);
    let (json, svg) = render_polar_map(&entries, &out.join("polar"))?;
    println!("wrote {} and {}", json.display(), svg.display());
    let scores = export_attention(&policy, then.state())?;
    write_attention(&scores, &out.join("attention.json"))?;
    println!("attention {scores:.3?}");
    Ok(())
}
