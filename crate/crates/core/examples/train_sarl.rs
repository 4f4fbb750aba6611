//! Deep V-learning at toy scale: imitation warm start, RL episodes,
//! a training checkpoint and a bitwise-identical resume.
//!
//! `cargo run --release --example train_sarl`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crowdnav::sim::ScenarioConfig;
use crowdnav::value_net::{SarlConfig, SarlParams};
use crowdnav::vlearning::{collect_demonstrations, imitation_learning, NoHooks, RlTrainer, TrainConfig};

fn main() -> crowdnav::Result<()> {
    let scenario = ScenarioConfig {
        n_humans: 3,
        ..ScenarioConfig::default()
    };
    let train = TrainConfig {
        rl_episodes: 40,
        epsilon_decay_episodes: 30,
        target_update_interval: 10,
        checkpoint_interval: 20,
        ..TrainConfig::default()
    };
    let model = SarlConfig {
        embedding: vec![32, 16],
        feature: vec![16, 8],
        attention: vec![16, 8],
        value: vec![32, 16],
        ..SarlConfig::sarl()
    };

    let demos = collect_demonstrations(30, 1, &scenario.clone().with_setting(crowdnav::sim::Setting::Visible), train.gamma, train.demo_margin, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = SarlParams::new(model, &mut rng)?;
    imitation_learning(&mut params, demos.samples(), 5, train.batch_size, train.il_lr, &mut rng)?;

    let dir = tempfile::tempdir().expect("temp dir");
    let ckpt = dir.path().join("training.ckpt");
    let mut trainer = RlTrainer::new(params, train.clone(), scenario, 1, Some(&demos))?;
    trainer.train(20, Some(&ckpt), &mut NoHooks)?;
    let mut resumed = RlTrainer::resume(&ckpt)?;
    trainer.train(40, None, &mut NoHooks)?;
    resumed.train(40, None, &mut NoHooks)?;

    for r in trainer.log().iter().step_by(5) {
        println!(
            "episode {:2}: {:?} in {} steps, return {:+.3}, ε {:.2}, loss {}",
            r.episode,
            r.outcome,
            r.steps,
            r.discounted_return,
            r.epsilon,
            r.loss_mean.map_or("-".into(), |l| format!("{l:.4}"))
        );
    }
    println!("resumed run identical: {}", resumed.params() == trainer.params() && resumed.log() == trainer.log());
    Ok(())
}
