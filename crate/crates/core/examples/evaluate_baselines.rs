//! ORCA and straight-line robots on the seeded test suite in both settings.
//!
//! `cargo run --release --example evaluate_baselines -- [cases]`

use crowdnav::eval::{run_eval, EvalConfig, EvalReport, OrcaPolicy, Policy, StraightLinePolicy};
use crowdnav::sim::{ScenarioConfig, Setting};

fn main() -> crowdnav::Result<()> {
    let cases = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let eval = EvalConfig {
        n_cases: cases,
        ..EvalConfig::default()
    };
    for setting in [Setting::Invisible, Setting::Visible] {
        let scenario = ScenarioConfig::default().with_setting(setting);
        let margin = if setting == Setting::Visible { 0.1 } else { 0.0 };
        let policies: [Box<dyn Policy>; 2] = [Box::new(OrcaPolicy::new(margin)?), Box::new(StraightLinePolicy)];
        println!("{}", EvalReport::table_header(setting));
        for policy in &policies {
            let report = run_eval(policy.as_ref(), &scenario, &eval)?;
            println!("{}", report.table_row());
        }
        println!();
    }
    Ok(())
}
