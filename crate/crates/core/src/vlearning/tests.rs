use glam::DVec2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numeric::ParamSet;
use crate::sim::{Event, FullState, JointState, ObservableState, ScenarioConfig};
use crate::value_net::{discount_factor, SarlConfig};

fn tiny() -> SarlConfig {
    SarlConfig {
        embedding: vec![16, 12],
        feature: vec![12, 8],
        attention: vec![12, 8],
        value: vec![16, 12, 8],
        ..SarlConfig::sarl()
    }
}

fn small_scenario() -> ScenarioConfig {
    ScenarioConfig {
        n_humans: 2,
        ..Default::default()
    }
}

#[test]
fn action_space_layout() {
    let space = ActionSpace::new(1.0).unwrap();
    assert_eq!(space.len(), 80);
    assert_eq!(space.speeds[4], 1.0);
    let k1 = (0.2f64.exp() - 1.0) / (std::f64::consts::E - 1.0);
    assert!((space.speeds[0] - k1).abs() < 1e-15);
    assert!((space.speeds[0] - 0.128851).abs() < 1e-6);
    assert!(space.speeds.windows(2).all(|w| w[0] < w[1]));
    // Heading 4 of the slowest speed points along +y.
    let a = space.actions[4];
    assert!(a.x.abs() < 1e-15 && (a.y - space.speeds[0]).abs() < 1e-15);
    assert_eq!(space.indices(4 + 16 * 3), (3, 4));
    for a in &space.actions {
        assert!(a.length() > 0.0 && a.length() <= 1.0 + 1e-15);
    }
    let scaled = ActionSpace::new(1.3).unwrap();
    assert_eq!(scaled.speeds[4], 1.3);
    assert!(ActionSpace::new(0.0).is_err());
}

#[test]
fn epsilon_schedule_is_piecewise_linear() {
    let c = TrainConfig::default();
    assert_eq!(c.epsilon(0), 0.5);
    assert_eq!(c.epsilon(2500), 0.3);
    assert_eq!(c.epsilon(5000), 0.1);
    assert_eq!(c.epsilon(12345), 0.1);
    assert!(c.epsilon(4999) > 0.1);
}

#[test]
fn discounted_targets_follow_the_return() {
    let d = discount_factor(0.9, 0.25, 1.0);
    let t = discounted_targets(&[0.0, 0.0, 1.0], d);
    assert_eq!(t[2], 1.0);
    assert!((t[1] - d).abs() < 1e-15);
    assert!((t[0] - d * d).abs() < 1e-15);
    assert_eq!(discounted_targets(&[0.0; 5], d), vec![0.0; 5]);
    let with_penalty = discounted_targets(&[-0.05, 0.0, -0.25], d);
    assert!((with_penalty[0] - (-0.05 - 0.25 * d * d)).abs() < 1e-15);
}

#[test]
fn replay_memory_is_a_bounded_fifo() {
    let mut m = ReplayMemory::new(3).unwrap();
    for k in 0..5 {
        m.push(k);
        assert!(m.len() <= 3);
    }
    assert_eq!(m.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut s: Vec<i32> = m.sample(3, &mut rng).into_iter().copied().collect();
    s.sort();
    assert_eq!(s, vec![2, 3, 4]);
    assert_eq!(m.sample(10, &mut rng).len(), 3);
    assert!(ReplayMemory::<i32>::new(0).is_err());
}

fn empty_env() -> CrowdEnv {
    CrowdEnv::new(
        ScenarioConfig {
            n_humans: 0,
            ..Default::default()
        },
        0,
    )
    .unwrap()
}

#[test]
fn uniform_exploration_passes_chi_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = SarlParams::new(tiny(), &mut rng).unwrap();
    let env = empty_env();
    let space = ActionSpace::new(1.0).unwrap();
    let mut counts = [0usize; 80];
    let draws = 10_000;
    for _ in 0..draws {
        counts[select_action(&params, &env, &space, 1.0, 0.9, &mut rng).unwrap()] += 1;
    }
    let expected = draws as f64 / 80.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of χ² with 79 degrees of freedom.
    assert!(chi2 < 111.14, "chi2 = {chi2}");
}

#[test]
fn greedy_choice_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = SarlParams::new(tiny(), &mut rng).unwrap();
    let env = CrowdEnv::new(small_scenario(), 5).unwrap();
    let space = ActionSpace::new(1.0).unwrap();
    let a = select_action(&params, &env, &space, 0.0, 0.9, &mut rng).unwrap();
    let b = select_action(&params, &env, &space, 0.0, 0.9, &mut rng).unwrap();
    assert_eq!(a, b);
    assert!(select_action(&params, &env, &space, 1.5, 0.9, &mut rng).is_err());
}

#[test]
fn greedy_choice_in_empty_scene_heads_for_goal() {
    // A value network that prefers being close to the goal: V = -d_g.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = SarlParams::new(tiny(), &mut rng).unwrap();
    params.scale(0.0);
    let layers = params.value.layers_mut();
    layers[0].weight.set(0, 0, 1.0);
    layers[1].weight.set(0, 0, 1.0);
    layers[2].weight.set(0, 0, 1.0);
    let last = layers.len() - 1;
    layers[last].weight.set(0, 0, -1.0);

    let env = empty_env();
    let space = ActionSpace::new(1.0).unwrap();
    let k = select_action(&params, &env, &space, 0.0, 0.9, &mut rng).unwrap();
    let brute = (0..80)
        .min_by(|&a, &b| {
            let d = |k: usize| (env.state().robot.goal - env.state().robot.position - space.actions[k] * 0.25).length();
            d(a).partial_cmp(&d(b)).unwrap()
        })
        .unwrap();
    assert_eq!(k, brute);
    assert!((space.actions[k] - DVec2::Y).length() < 1e-12);
}

#[test]
fn argmax_breaks_ties_low() {
    assert_eq!(argmax(&[0.0, 2.0, 2.0, 1.0]), 1);
    assert_eq!(argmax(&[3.0]), 0);
}

fn transition(reward: f64, terminal: bool, x: f64) -> Transition {
    let robot = FullState {
        position: DVec2::new(x, 0.0),
        velocity: DVec2::ZERO,
        radius: 0.3,
        goal: DVec2::new(0.0, 4.0),
        v_pref: 1.0,
    };
    let human = ObservableState {
        position: DVec2::new(1.0, 1.0),
        velocity: DVec2::new(0.1, 0.0),
        radius: 0.3,
    };
    let state = JointState {
        robot,
        humans: vec![human],
        time: 0.0,
    };
    let mut next = state.clone();
    next.robot.position.y += 0.25;
    Transition {
        state,
        reward,
        next,
        terminal,
    }
}

#[test]
fn td_targets_respect_terminals_and_target_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let target = SarlParams::new(tiny(), &mut rng).unwrap();
    let items = [
        transition(-0.25, true, 0.0),
        transition(0.0, false, 0.5),
        transition(-0.05, false, -0.5),
    ];
    let batch: Vec<&Transition> = items.iter().collect();
    let y = td_targets(&target, &batch, 0.9, 0.25).unwrap();
    assert_eq!(y[0], -0.25);
    let d = discount_factor(0.9, 0.25, 1.0);
    for k in 1..3 {
        let v = target.value_of(&crate::state_repr::to_robot_centric(&items[k].next)).unwrap();
        assert!((y[k] - (items[k].reward + d * v)).abs() < 1e-12);
    }

    let mut zero = target.clone();
    zero.scale(0.0);
    let y0 = td_targets(&zero, &batch, 0.9, 0.25).unwrap();
    assert_eq!(y0, vec![-0.25, 0.0, -0.05]);
}

#[test]
fn td_loss_matches_two_pass_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut online = SarlParams::new(tiny(), &mut rng).unwrap();
    let target = SarlParams::new(tiny(), &mut rng).unwrap();
    let items: Vec<Transition> = (0..7).map(|k| transition(0.01 * k as f64, k % 3 == 0, k as f64 * 0.1)).collect();
    let batch: Vec<&Transition> = items.iter().collect();

    let y = td_targets(&target, &batch, 0.9, 0.25).unwrap();
    let v: Vec<f64> = items
        .iter()
        .map(|t| online.value_of(&crate::state_repr::to_robot_centric(&t.state)).unwrap())
        .collect();
    let reference = v.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 7.0;

    let before = online.clone();
    let mut adam = crate::numeric::AdamState::new(&online);
    let (loss, used) = td_update(&mut online, &target, &batch, 0.9, 0.25, 1e-3, &mut adam).unwrap();
    assert!((loss - reference).abs() < 1e-12);
    assert_eq!(used, y);
    assert_ne!(online, before);
    assert!(td_update(&mut online, &target, &[], 0.9, 0.25, 1e-3, &mut adam).is_err());
}

fn demos(n: usize, seed: u64) -> DemoSet {
    collect_demonstrations(n, seed, &small_scenario(), 0.9, 0.1, 1).unwrap()
}

#[test]
fn demonstrations_carry_returns_and_hash() {
    let set = demos(4, 11);
    assert_eq!(set.episodes.len(), 4);
    assert!(set.manifest.scenario.robot_visible);
    let d = discount_factor(0.9, 0.25, 1.0);
    for e in &set.episodes {
        assert_eq!(e.targets, discounted_targets(&e.rewards, d));
        if e.outcome == Event::ReachedGoal {
            assert_eq!(*e.rewards.last().unwrap(), 1.0);
            assert_eq!(*e.targets.last().unwrap(), 1.0);
        }
        let ts: Vec<Transition> = e.transitions().collect();
        assert_eq!(ts.len(), e.len());
        assert_eq!(ts.last().unwrap().terminal, e.outcome != Event::Timeout);
        assert!(ts[..ts.len() - 1].iter().all(|t| !t.terminal));
    }
    assert_eq!(set.content_hash(), demos(4, 11).manifest.content_hash);
    assert_ne!(set.content_hash(), demos(4, 12).manifest.content_hash);
    let parallel = collect_demonstrations(4, 11, &small_scenario(), 0.9, 0.1, 3).unwrap();
    assert_eq!(parallel, set);
}

#[test]
fn demonstration_file_round_trip_and_tamper_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demo.jsonl");
    let set = demos(3, 1);
    set.save(&path).unwrap();
    assert_eq!(DemoSet::load(&path).unwrap(), set);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 4);
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut episode: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    let r = episode["rewards"][0].as_f64().unwrap();
    episode["rewards"][0] = serde_json::json!(r + 0.5);
    lines[1] = serde_json::to_string(&episode).unwrap();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(matches!(DemoSet::load(&path), Err(Error::Format { .. })));
}

#[test]
fn imitation_reduces_loss_and_is_seeded() {
    let set = demos(6, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let init = SarlParams::new(tiny(), &mut rng).unwrap();

    let mut a = init.clone();
    let report = imitation_learning(&mut a, set.samples(), 20, 32, 0.01, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(report.epoch_losses.len(), 20);
    assert!(report.epoch_losses[19] < report.epoch_losses[0]);

    let mut b = init.clone();
    imitation_learning(&mut b, set.samples(), 20, 32, 0.01, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);

    let mut c = init.clone();
    let none = imitation_learning(&mut c, set.samples(), 0, 32, 0.01, &mut rng).unwrap();
    assert!(none.epoch_losses.is_empty());
    assert_eq!(c, init);
}

#[derive(Default)]
struct TargetProbe {
    synced: Option<Vec<f64>>,
    checks: usize,
    mismatches: usize,
}

impl TrainHooks for TargetProbe {
    fn on_targets(&mut self, _episode: usize, target: &SarlParams, _targets: &[f64]) {
        let flat = target.tensors().concat();
        if let Some(s) = &self.synced {
            self.checks += 1;
            if *s != flat {
                self.mismatches += 1;
            }
        } else {
            self.synced = Some(flat);
        }
    }

    fn on_sync(&mut self, _episode: usize, online: &SarlParams) {
        self.synced = Some(online.tensors().concat());
    }
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        rl_episodes: 6,
        epsilon_decay_episodes: 4,
        batch_size: 16,
        target_update_interval: 2,
        checkpoint_interval: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn targets_come_from_the_frozen_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = SarlParams::new(tiny(), &mut rng).unwrap();
    let set = demos(2, 3);
    let mut trainer = RlTrainer::new(params, quick_config(), small_scenario(), 9, Some(&set)).unwrap();
    let mut probe = TargetProbe::default();
    trainer.train(5, None, &mut probe).unwrap();
    assert!(probe.checks > 0);
    assert_eq!(probe.mismatches, 0);
    // Episode 5 trained after the last sync.
    assert_ne!(trainer.params(), trainer.target());
    trainer.train(6, None, &mut probe).unwrap();
    assert_eq!(trainer.params(), trainer.target());
}

#[test]
fn zero_episodes_leave_params_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = SarlParams::new(tiny(), &mut rng).unwrap();
    let config = TrainConfig {
        rl_episodes: 0,
        ..quick_config()
    };
    let (out, log) = train_rl(params.clone(), &config, &small_scenario(), 1, None).unwrap();
    assert_eq!(out, params);
    assert!(log.is_empty());
}

#[test]
fn training_log_is_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = SarlParams::new(tiny(), &mut rng).unwrap();
    let set = demos(2, 4);
    let run = |ckpt: Option<&std::path::Path>| {
        let mut t = RlTrainer::new(params.clone(), quick_config(), small_scenario(), 21, Some(&set)).unwrap();
        t.train(6, ckpt, &mut NoHooks).unwrap();
        t
    };
    let a = run(None);
    let b = run(None);
    assert_eq!(a.log(), b.log());
    assert_eq!(a.params(), b.params());
    assert!(a.log().iter().skip(1).all(|r| r.updates == r.steps));
    assert_eq!(a.log()[0].updates, 0);
    assert_eq!(a.log()[0].epsilon, 0.5);

    // Interrupt after 4 episodes, resume, finish.
    let ckpt = dir.path().join("train.ckpt");
    let mut partial = RlTrainer::new(params.clone(), quick_config(), small_scenario(), 21, Some(&set)).unwrap();
    partial.train(4, Some(&ckpt), &mut NoHooks).unwrap();
    drop(partial);
    let mut resumed = RlTrainer::resume(&ckpt).unwrap();
    assert_eq!(resumed.episode(), 4);
    resumed.train(6, None, &mut NoHooks).unwrap();
    assert_eq!(resumed.log(), a.log());
    assert_eq!(resumed.params(), a.params());

    let la = dir.path().join("a.jsonl");
    let lb = dir.path().join("b.jsonl");
    a.write_log(&la).unwrap();
    resumed.write_log(&lb).unwrap();
    assert_eq!(std::fs::read(&la).unwrap(), std::fs::read(&lb).unwrap());
}

#[test]
fn corrupted_replay_sidecar_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let params = SarlParams::new(tiny(), &mut rng).unwrap();
    let ckpt = dir.path().join("t.ckpt");
    let mut t = RlTrainer::new(params, quick_config(), small_scenario(), 1, None).unwrap();
    t.train(1, Some(&ckpt), &mut NoHooks).unwrap();
    let sidecar = dir.path().join("t.ckpt.replay");
    let mut bytes = std::fs::read(&sidecar).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&sidecar, bytes).unwrap();
    assert!(matches!(RlTrainer::resume(&ckpt), Err(Error::Format { .. })));
}
