//! Value and attention of an untrained SARL and LM-SARL network on one
//! state, plus the local map around the first human.
//!
//! `cargo run --example attention_weights`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crowdnav::sim::{CrowdEnv, ScenarioConfig};
use crowdnav::state_repr::{build_local_maps, to_robot_centric};
use crowdnav::value_net::{SarlConfig, SarlParams};

fn main() -> crowdnav::Result<()> {
    let env = CrowdEnv::new(ScenarioConfig::default(), 11)?;
    let state = to_robot_centric(env.state());
    println!("robot-centric: d_g {:.2}, {} humans", state.robot[0], state.humans.len());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for config in [SarlConfig::sarl(), SarlConfig::lm_sarl()] {
        let lm = config.use_local_map;
        let params = SarlParams::new(config, &mut rng)?;
        let out = params.forward(&params.encode(&state))?;
        let weights: Vec<String> = out.attention.iter().map(|a| format!("{a:.3}")).collect();
        println!(
            "{:8} value {:+.4}  attention [{}]  ({} parameters)",
            if lm { "lm-sarl" } else { "sarl" },
            out.value,
            weights.join(", "),
            crowdnav::numeric::ParamSet::parameter_count(&params)
        );
    }

    let map = &build_local_maps(&state, SarlConfig::lm_sarl().local_map)[0];
    println!("local map of human 0: {} neighbours inside", map.occupancy_total());
    Ok(())
}
