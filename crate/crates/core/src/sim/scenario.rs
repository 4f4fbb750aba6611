use std::f64::consts::TAU;

use glam::DVec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FullState, HumanIntent, JointState, ObservableState, ScenarioConfig};
use crate::error::{Error, Result};

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Initial joint state plus the humans' hidden goals and speeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub state: JointState,
    pub intents: Vec<HumanIntent>,
}

/// Circle crossing: humans start on the circle at random angles and head for
/// the antipode, starts and goals jittered per coordinate. The robot crosses
/// from `(0, -R)` to `(0, R)`.
pub fn generate_scenario(seed: u64, config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = config.circle_radius;
    let robot = FullState {
        position: DVec2::new(0.0, -radius),
        velocity: DVec2::ZERO,
        radius: config.robot_radius,
        goal: DVec2::new(0.0, radius),
        v_pref: config.robot_v_pref,
    };

    let v_pref_dist = normal(config.human_v_pref.mean, config.human_v_pref.std)?;
    let radius_dist = normal(config.human_radius.mean, config.human_radius.std)?;

    // (start, goal, radius) of every placed agent, robot first.
    let mut placed: Vec<(DVec2, DVec2, f64)> = vec![(robot.position, robot.goal, robot.radius)];
    let mut humans = Vec::with_capacity(config.n_humans);
    let mut intents = Vec::with_capacity(config.n_humans);
    let p = config.perturbation_scale;
    for index in 0..config.n_humans {
        let v_pref = v_pref_dist.sample(&mut rng).clamp(0.5, 1.5);
        let human_radius = radius_dist.sample(&mut rng).clamp(0.2, 0.5);
        let mut accepted = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let angle = rng.random_range(0.0..TAU);
            let on_circle = radius * DVec2::new(angle.cos(), angle.sin());
            let jitter = |rng: &mut ChaCha8Rng| {
                if p > 0.0 {
                    DVec2::new(rng.random_range(-p..=p), rng.random_range(-p..=p))
                } else {
                    DVec2::ZERO
                }
            };
            let start = on_circle + jitter(&mut rng);
            let goal = -on_circle + jitter(&mut rng);
            let clear = placed.iter().all(|(s, g, r)| {
                let min_gap = r + human_radius + config.spawn_margin;
                (start - *s).length() > min_gap && (goal - *g).length() > min_gap
            });
            if clear {
                accepted = Some((start, goal));
                break;
            }
        }
        let (start, goal) = accepted.ok_or_else(|| {
            Error::Scenario(format!(
                "could not place human {index} of {} after {MAX_PLACEMENT_ATTEMPTS} attempts (seed {seed})",
                config.n_humans
            ))
        })?;
        placed.push((start, goal, human_radius));
        humans.push(ObservableState {
            position: start,
            velocity: DVec2::ZERO,
            radius: human_radius,
        });
        intents.push(HumanIntent { goal, v_pref });
    }

    Ok(Scenario {
        state: JointState {
            robot,
            humans,
            time: 0.0,
        },
        intents,
    })
}

fn normal(mean: f64, std: f64) -> Result<Normal<f64>> {
    Normal::new(mean, std).map_err(|e| Error::Config(format!("invalid Gaussian ({mean}, {std}): {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_crowd() {
        let config = ScenarioConfig {
            n_humans: 0,
            ..Default::default()
        };
        let s = generate_scenario(3, &config).unwrap();
        assert!(s.state.humans.is_empty());
        assert!((s.state.robot.distance_to_goal() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_scenario() {
        let config = ScenarioConfig::default();
        assert_eq!(
            generate_scenario(42, &config).unwrap(),
            generate_scenario(42, &config).unwrap()
        );
        assert_ne!(
            generate_scenario(42, &config).unwrap(),
            generate_scenario(43, &config).unwrap()
        );
    }

    #[test]
    fn overcrowded_config_is_rejected() {
        let config = ScenarioConfig {
            n_humans: 60,
            circle_radius: 1.0,
            perturbation_scale: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            generate_scenario(0, &config),
            Err(Error::Scenario(_))
        ));
    }

    #[test]
    fn sampled_parameters_are_clamped() {
        let config = ScenarioConfig {
            n_humans: 8,
            human_v_pref: super::super::Gaussian { mean: 1.0, std: 2.0 },
            human_radius: super::super::Gaussian { mean: 0.3, std: 0.5 },
            circle_radius: 8.0,
            ..Default::default()
        };
        for seed in 0..50 {
            let s = generate_scenario(seed, &config).unwrap();
            for (h, i) in s.state.humans.iter().zip(&s.intents) {
                assert!((0.2..=0.5).contains(&h.radius));
                assert!((0.5..=1.5).contains(&i.v_pref));
            }
        }
    }
}
