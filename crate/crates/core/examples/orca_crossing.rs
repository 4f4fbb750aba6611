//! Six ORCA agents swap places across a 4 m circle.
//!
//! `cargo run --example orca_crossing`

use glam::DVec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crowdnav::orca::{orca_lines, orca_step_detailed, OrcaAgent};

fn main() {
    let (n, radius, speed, dt) = (6, 0.3, 1.0, 0.25);
    // Random start angles. A regular ring jams in the middle and only
    // unwinds by slowly swirling, since each agent touches two neighbours and
    // standing still is the closest velocity all of its planes allow.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut starts: Vec<DVec2> = Vec::new();
    while starts.len() < n {
        let p = DVec2::from_angle(rng.random_range(0.0..std::f64::consts::TAU)) * 4.0;
        if starts.iter().all(|q| (*q - p).length() > 0.7 && (*q + p).length() > 0.7) {
            starts.push(p);
        }
    }
    let mut agents: Vec<OrcaAgent> = starts.iter().map(|&p| OrcaAgent::new(p, DVec2::ZERO, radius, speed)).collect();

    let mut min_gap = f64::INFINITY;
    let mut infeasible_steps = 0;
    for step in 0..100 {
        for (a, s) in agents.iter_mut().zip(&starts) {
            a.preferred_velocity = ((-*s - a.position) / dt).clamp_length_max(speed);
        }
        if step == 10 {
            let lines = orca_lines(&agents[0], &agents[1..], dt);
            println!("agent 0 at step 10 has {} half-planes, first {:?}", lines.len(), lines[0]);
        }
        let solutions = orca_step_detailed(&agents, dt);
        infeasible_steps += solutions.iter().any(|s| !s.feasible) as usize;
        for (a, s) in agents.iter_mut().zip(&solutions) {
            a.velocity = s.velocity;
            a.position += s.velocity * dt;
        }
        for i in 0..n {
            for j in i + 1..n {
                min_gap = min_gap.min((agents[i].position - agents[j].position).length() - 2.0 * radius);
            }
        }
    }
    let arrived = agents
        .iter()
        .zip(&starts)
        .filter(|(a, s)| (a.position + **s).length() < 0.05)
        .count();
    println!("{arrived}/{n} agents at their antipodes; smallest gap {min_gap:.3} m; {infeasible_steps} steps with an infeasible program");
}
