//! ORCA demonstrations, their manifest, and a short imitation-learning fit.
//!
//! `cargo run --release --example imitation_learning`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crowdnav::sim::{Event, ScenarioConfig, Setting};
use crowdnav::value_net::{SarlConfig, SarlParams};
use crowdnav::vlearning::{collect_demonstrations, imitation_learning, DemoSet};

fn main() -> crowdnav::Result<()> {
    let scenario = ScenarioConfig::default().with_setting(Setting::Visible);
    let demos = collect_demonstrations(60, 42, &scenario, 0.9, 0.1, 1)?;
    let ok = demos.episodes.iter().filter(|e| e.outcome == Event::ReachedGoal).count();
    println!(
        "{} demonstrations ({ok} reached the goal), {} samples, hash {}",
        demos.episodes.len(),
        demos.samples().count(),
        &demos.manifest.content_hash[..16]
    );

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("demos.jsonl");
    demos.save(&path)?;
    let demos = DemoSet::load(&path)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let config = SarlConfig {
        embedding: vec![64, 32],
        feature: vec![32, 16],
        attention: vec![32, 16],
        value: vec![64, 32, 16],
        ..SarlConfig::sarl()
    };
    let mut params = SarlParams::new(config, &mut rng)?;
    let report = imitation_learning(&mut params, demos.samples(), 10, 100, 0.01, &mut rng)?;
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {epoch}: loss {loss:.5}");
    }
    let ckpt = dir.path().join("il.ckpt");
    params.save(&ckpt)?;
    println!("checkpoint {} bytes, reloads equal: {}", std::fs::metadata(&ckpt).map(|m| m.len()).unwrap_or(0), SarlParams::load(&ckpt)? == params);
    Ok(())
}
