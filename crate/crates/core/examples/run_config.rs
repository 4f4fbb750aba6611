//! A TOML run configuration driven through the command-line front end,
//! the same code path as the `crowdnav` binary.
//!
//! `cargo run --example run_config`

use clap::Parser;

use crowdnav::cli::{run, Cli};
use crowdnav::config::RunConfig;

const CONFIG: &str = r#"
seed = 4

[scenario]
n_humans = 3
robot_visible = true

[eval]
n_cases = 10

[baseline]
orca_margin = 0.15
"#;

fn main() -> crowdnav::Result<()> {
    let config = RunConfig::from_toml(CONFIG)?;
    println!("setting {}, ORCA margin {}, model embedding {:?}", config.setting(), config.orca_margin(), config.model.embedding);

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("run.toml");
    std::fs::write(&path, CONFIG).map_err(|e| crowdnav::Error::io(&path, e))?;
    let out = dir.path().to_str().expect("utf-8 temp path");
    let conf = path.to_str().expect("utf-8 temp path");

    for args in [
        vec!["crowdnav", "--config", conf, "--output-dir", out, "eval", "--policy", "orca", "--policy", "straight"],
        vec!["crowdnav", "--config", conf, "--output-dir", out, "simulate", "--seed", "12"],
    ] {
        run(Cli::try_parse_from(args).expect("valid arguments"))?;
    }
    let mut files: Vec<String> = std::fs::read_dir(dir.path())
        .map_err(|e| crowdnav::Error::io(dir.path(), e))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    files.sort();
    println!("outputs: {}", files.join(", "));

    if let Err(e) = RunConfig::from_toml("[scenario]\nhumans = 3\n") {
        println!("rejected config (exit {}): {e}", e.exit_code());
    }
    Ok(())
}
