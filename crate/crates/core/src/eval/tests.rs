use glam::DVec2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::sim::{FullState, JointState, ObservableState};
use crate::value_net::SarlConfig;

fn empty() -> ScenarioConfig {
    ScenarioConfig {
        n_humans: 0,
        ..Default::default()
    }
}

fn tiny_policy(seed: u64) -> ValuePolicy {
    let config = SarlConfig {
        embedding: vec![16, 12],
        feature: vec![12, 8],
        attention: vec![12, 8],
        value: vec![16, 12, 8],
        ..SarlConfig::sarl()
    };
    let params = SarlParams::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    ValuePolicy::new("tiny", params, 0.9)
}

fn small(n: usize) -> EvalConfig {
    EvalConfig {
        n_cases: n,
        ..Default::default()
    }
}

#[test]
fn straight_line_in_empty_scenes_always_succeeds() {
    let report = run_eval(&StraightLinePolicy, &empty(), &small(5)).unwrap();
    assert_eq!(report.success_rate, 1.0);
    assert_eq!(report.discomfort_frequency, 0.0);
    // 8 m at 1 m/s in 0.25 s steps; the goal counts as reached within one
    // robot radius, so step 31 ends 0.25 m short and finishes.
    assert_eq!(report.mean_nav_time, Some(7.75));
    let d = crate::value_net::discount_factor(0.9, 0.25, 1.0);
    for c in &report.cases {
        assert_eq!(c.steps, 31);
        assert_eq!(c.min_separation, None);
        assert!((c.discounted_return - d.powi(30)).abs() < 1e-12);
    }
}

#[test]
fn evaluation_is_reproducible_and_thread_independent() {
    let scenario = ScenarioConfig::default();
    let orca = OrcaPolicy::new(0.1).unwrap();
    let a = run_eval(&orca, &scenario, &small(8)).unwrap();
    let b = run_eval(&orca, &scenario, &small(8)).unwrap();
    assert_eq!(a, b);
    let c = run_eval(&orca, &scenario, &EvalConfig { threads: 3, ..small(8) }).unwrap();
    assert_eq!(a, c);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&c).unwrap()
    );
    assert!((a.success_rate + a.collision_rate + a.timeout_rate - 1.0).abs() < 1e-12);
    for (i, case) in a.cases.iter().enumerate() {
        assert_eq!(case.seed, 1_000_000 + i as u64);
    }
}

#[test]
fn rates_and_nav_time_aggregate_cases() {
    let case = |outcome, duration, disc| CaseRecord {
        case: 0,
        seed: 0,
        outcome,
        steps: 0,
        duration,
        discounted_return: 1.0,
        discomfort_time: disc,
        min_separation: None,
        failure: None,
    };
    let report = EvalReport::from_cases(
        "x",
        Setting::Visible,
        0,
        vec![
            case(Event::ReachedGoal, 10.0, 1.0),
            case(Event::ReachedGoal, 12.0, 0.0),
            case(Event::Collision, 3.0, 0.5),
            case(Event::Timeout, 25.0, 0.0),
        ],
    );
    assert_eq!(report.success_rate, 0.5);
    assert_eq!(report.collision_rate, 0.25);
    assert_eq!(report.timeout_rate, 0.25);
    assert_eq!(report.mean_nav_time, Some(11.0));
    assert!((report.discomfort_frequency - 1.5 / 50.0).abs() < 1e-15);
    let none = EvalReport::from_cases("x", Setting::Invisible, 0, vec![case(Event::Collision, 1.0, 0.0)]);
    assert_eq!(none.mean_nav_time, None);
    assert!(none.table().contains(" - "));
    assert!(report.table().lines().next().unwrap().contains("Disc."));
}

struct Flaky;

impl Policy for Flaky {
    fn name(&self) -> &str {
        "flaky"
    }

    fn act(&self, env: &CrowdEnv) -> crate::Result<DVec2> {
        if env.log().records.len() >= 2 {
            Err(Error::Training("boom".into()))
        } else {
            Ok(DVec2::new(0.0, 1.0))
        }
    }
}

#[test]
fn policy_failure_is_scored_as_timeout() {
    let report = run_eval(&Flaky, &empty(), &small(2)).unwrap();
    assert_eq!(report.timeout_rate, 1.0);
    assert_eq!(report.failures(), 2);
    assert!(report.cases[0].failure.as_deref().unwrap().contains("boom"));
    assert_eq!(report.cases[0].steps, 2);
    assert!(run_eval(&Flaky, &empty(), &small(0)).is_err());
}

#[test]
fn orca_policy_respects_speed_and_margin() {
    assert!(OrcaPolicy::new(-0.1).is_err());
    let orca = OrcaPolicy::new(0.1).unwrap();
    let mut env = CrowdEnv::new(ScenarioConfig::default().with_setting(Setting::Visible), 3).unwrap();
    while !env.is_done() {
        let a = orca.act(&env).unwrap();
        assert!(a.length() <= env.state().robot.v_pref + 1e-12);
        env.step(a).unwrap();
    }
}

fn joint(humans: &[(f64, f64)]) -> JointState {
    JointState {
        robot: FullState {
            position: DVec2::new(0.0, -4.0),
            velocity: DVec2::ZERO,
            radius: 0.3,
            goal: DVec2::new(0.0, 4.0),
            v_pref: 1.0,
        },
        humans: humans
            .iter()
            .map(|&(x, y)| ObservableState {
                position: DVec2::new(x, y),
                velocity: DVec2::new(0.2, -0.1),
                radius: 0.3,
            })
            .collect(),
        time: 0.0,
    }
}

#[test]
fn attention_export() {
    let policy = tiny_policy(1);
    assert_eq!(export_attention(&policy, &joint(&[(1.0, 0.0)])).unwrap(), vec![1.0]);

    let scores = export_attention(&policy, &joint(&[(1.0, 0.0), (-2.0, 1.0), (1.0, 0.0)])).unwrap();
    assert_eq!(scores.len(), 3);
    assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((scores[0] - scores[2]).abs() < 1e-12);

    assert!(export_attention(&policy, &joint(&[])).unwrap().is_empty());
    assert!(matches!(
        export_attention(&StraightLinePolicy, &joint(&[(1.0, 0.0)])),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn polar_map_covers_the_action_space() {
    let policy = tiny_policy(2);
    let env = CrowdEnv::new(ScenarioConfig::default(), 4).unwrap();
    let map = value_polar_map(&policy, &env, 0.9).unwrap();
    assert_eq!(map.len(), 80);
    let space = ActionSpace::new(1.0).unwrap();
    let direct = policy.params().action_values(&env, &space.actions, 0.9).unwrap();
    for (k, e) in map.iter().enumerate() {
        assert_eq!((e.speed_index, e.heading_index), space.indices(k));
        assert_eq!(e.value, direct[k]);
    }
    assert!(matches!(value_polar_map(&OrcaPolicy::new(0.0).unwrap(), &env, 0.9), Err(Error::Unsupported(_))));
}

#[test]
fn rendered_files_are_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let mut env = CrowdEnv::new(ScenarioConfig::default(), 5).unwrap();
    env.step(DVec2::new(0.0, 1.0)).unwrap();
    env.step(DVec2::new(0.5, 0.5)).unwrap();
    let (json, svg) = render_episode(env.log(), &dir.path().join("ep")).unwrap();
    let plot: TrajectoryPlot = serde_json::from_slice(&std::fs::read(json).unwrap()).unwrap();
    assert_eq!(plot.format, PLOT_FORMAT);
    assert_eq!(plot.robot.samples.len(), 2);
    assert_eq!(plot.humans.len(), 5);
    assert!(plot.humans.iter().all(|h| h.samples.len() == 2));
    let text = std::fs::read_to_string(svg).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    assert_eq!(text.matches("<polyline").count(), 6);

    let fresh = CrowdEnv::new(ScenarioConfig::default(), 5).unwrap();
    let (_, svg) = render_episode(fresh.log(), &dir.path().join("empty")).unwrap();
    assert!(std::fs::read_to_string(svg).unwrap().ends_with("</svg>\n"));

    let map = value_polar_map(&tiny_policy(3), &fresh, 0.9).unwrap();
    let (json, svg) = render_polar_map(&map, &dir.path().join("polar")).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(json).unwrap()).unwrap();
    assert_eq!(v["kind"], "polar");
    assert_eq!(v["entries"].as_array().unwrap().len(), 80);
    assert_eq!(std::fs::read_to_string(svg).unwrap().matches("<path").count(), 80);

    let path = dir.path().join("att.json");
    write_attention(&[0.25, 0.75], &path).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    assert_eq!(v["scores"][1][1], 0.75);
}
