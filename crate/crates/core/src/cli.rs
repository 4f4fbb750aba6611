//! `crowdnav` command line: collect, train-il, train-rl, eval, simulate, plot.
//!
//! Experiments are defined by a TOML [`RunConfig`]; flags only override
//! seeds, paths and a few counts. Exit status is 0 on success, 2 for usage
//! or configuration errors, 3 for unreadable or malformed data and 4 for
//! failures while running.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{RunConfig, OUTPUT_DIR_ENV};
use crate::error::{Error, Result};
use crate::eval::{
    export_attention, render_episode, render_polar_map, run_eval, value_polar_map, write_attention, EvalReport,
    OrcaPolicy, Policy, StraightLinePolicy, ValuePolicy,
};
use crate::sim::{CrowdEnv, EpisodeLog, Setting};
use crate::value_net::SarlParams;
use crate::vlearning::{collect_demonstrations, imitation_learning, DemoSet, NoHooks, RlTrainer};

#[derive(Debug, Parser)]
#[command(name = "crowdnav", version, about = "Crowd-aware robot navigation with deep V-learning")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for collection and evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Where outputs go unless the config names one.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    /// Overrides `scenario.robot_visible`.
    #[arg(long, global = true)]
    pub setting: Option<Setting>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record ORCA demonstrations for imitation learning.
    Collect {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a fresh value network to the demonstration returns.
    TrainIl {
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deep V-learning from an imitation checkpoint.
    TrainRl {
        /// Starting network; defaults to the configured IL checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Demonstrations that seed the replay memory.
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark policies on the seeded test suite.
    Eval {
        /// `orca`, `straight` or a checkpoint path; repeatable.
        #[arg(long = "policy", required = true)]
        policies: Vec<String>,
        #[arg(long)]
        cases: Option<usize>,
        /// Extra ORCA radius.
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Roll out and log one episode.
    Simulate {
        #[arg(long, default_value = "orca")]
        policy: String,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an episode log, or value and attention maps at one frame.
    Plot {
        /// Episode log written by `simulate`.
        log: PathBuf,
        /// Step whose state is analysed by --polar and --attention.
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Value of every action at the frame.
        #[arg(long)]
        polar: bool,
        /// Attention over the humans at the frame.
        #[arg(long)]
        attention: bool,
        /// Network for --polar and --attention.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output stem; defaults to the log path without extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses the process arguments, runs, and reports errors on stderr.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.common)?;
    match cli.command {
        Command::Collect { episodes, out } => collect(&config, episodes, out),
        Command::TrainIl { demos, epochs, out } => train_il(&config, demos, epochs, out),
        Command::TrainRl {
            init,
            demos,
            resume,
            episodes,
            out,
        } => train_rl(&config, init, demos, resume, episodes, out),
        Command::Eval {
            policies,
            cases,
            margin,
        } => eval(&config, &policies, cases, margin, cli.common.seed),
        Command::Simulate { policy, margin, out } => simulate(&config, &policy, margin, out),
        Command::Plot {
            log,
            frame,
            polar,
            attention,
            checkpoint,
            out,
        } => plot(&config, &log, frame, polar, attention, checkpoint, out),
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(threads) = common.threads {
        config.threads = threads;
    }
    if let Some(setting) = common.setting {
        config.scenario = config.scenario.with_setting(setting);
    }
    if config.paths.output_dir.is_none() {
        config.paths.output_dir = common.output_dir.clone();
    }
    config.eval.threads = config.threads;
    config.validate()?;
    Ok(config)
}

/// Output path: explicit flag, else the configured name under the output
/// directory, whose parent is created.
fn output_path(config: &RunConfig, explicit: Option<PathBuf>, configured: &Path) -> Result<PathBuf> {
    let path = explicit.unwrap_or_else(|| config.resolve(configured));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", parent.display())))?;
    }
    Ok(path)
}

fn input_path(config: &RunConfig, explicit: Option<PathBuf>, configured: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| config.resolve(configured))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn collect(config: &RunConfig, episodes: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let n = episodes.unwrap_or(config.train.il_episodes);
    let path = output_path(config, out, &config.paths.demonstrations)?;
    log::info!("collecting {n} ORCA demonstrations (seed {})", config.seed);
    let set = collect_demonstrations(
        n,
        config.seed,
        &config.scenario,
        config.train.gamma,
        config.train.demo_margin,
        config.threads,
    )?;
    set.save(&path)?;
    let successes = set
        .episodes
        .iter()
        .filter(|e| e.outcome == crate::sim::Event::ReachedGoal)
        .count();
    println!(
        "wrote {} episodes ({} transitions, {successes} successful) to {}",
        set.episodes.len(),
        set.transitions().count(),
        path.display()
    );
    println!("content hash {}", set.manifest.content_hash);
    Ok(())
}

#[derive(Serialize)]
struct EpochLine {
    epoch: usize,
    loss: f64,
}

fn train_il(config: &RunConfig, demos: Option<PathBuf>, epochs: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let demo_path = input_path(config, demos, &config.paths.demonstrations);
    let set = DemoSet::load(&demo_path)?;
    let out = output_path(config, out, &config.paths.il_checkpoint)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = SarlParams::new(config.model.clone(), &mut rng)?;
    let epochs = epochs.unwrap_or(config.train.il_epochs);
    let report = imitation_learning(
        &mut params,
        set.samples(),
        epochs,
        config.train.batch_size,
        config.train.il_lr,
        &mut rng,
    )?;
    params.save(&out)?;
    let log_path = output_path(config, None, &config.paths.il_log)?;
    write_jsonl(
        &log_path,
        report
            .epoch_losses
            .iter()
            .enumerate()
            .map(|(epoch, &loss)| EpochLine { epoch, loss }),
    )?;
    println!(
        "imitation: {epochs} epochs on {} samples, final loss {}",
        set.samples().count(),
        report.epoch_losses.last().map_or("-".into(), |l| format!("{l:.6}"))
    );
    println!("wrote {} and {}", out.display(), log_path.display());
    Ok(())
}

fn train_rl(
    config: &RunConfig,
    init: Option<PathBuf>,
    demos: Option<PathBuf>,
    resume: Option<PathBuf>,
    episodes: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let training_path = output_path(config, None, &config.paths.training_checkpoint)?;
    let mut trainer = match resume {
        Some(path) => {
            let t = RlTrainer::resume(&path)?;
            log::info!("resumed from {} at episode {}", path.display(), t.episode());
            t
        }
        None => {
            let init = input_path(config, init, &config.paths.il_checkpoint);
            let params = SarlParams::load(&init)?;
            let demo_path = input_path(config, demos, &config.paths.demonstrations);
            let set = if demo_path.exists() {
                Some(DemoSet::load(&demo_path)?)
            } else {
                log::warn!("no demonstrations at {}; replay memory starts empty", demo_path.display());
                None
            };
            RlTrainer::new(params, config.train.clone(), config.scenario.clone(), config.seed, set.as_ref())?
        }
    };
    let until = episodes.unwrap_or(trainer.config().rl_episodes);
    trainer.train(until, Some(&training_path), &mut NoHooks)?;
    let out = output_path(config, out, &config.paths.rl_checkpoint)?;
    trainer.params().save(&out)?;
    let log_path = output_path(config, None, &config.paths.training_log)?;
    trainer.write_log(&log_path)?;
    let recent = &trainer.log()[trainer.log().len().saturating_sub(100)..];
    if !recent.is_empty() {
        let n = recent.len() as f64;
        let rate = |ev| recent.iter().filter(|r| r.outcome == ev).count() as f64 / n;
        println!(
            "last {} episodes: success {:.2}, collision {:.2}, return {:.3}",
            recent.len(),
            rate(crate::sim::Event::ReachedGoal),
            rate(crate::sim::Event::Collision),
            recent.iter().map(|r| r.discounted_return).sum::<f64>() / n
        );
    }
    println!(
        "wrote {}, {} and {}",
        out.display(),
        training_path.display(),
        log_path.display()
    );
    Ok(())
}

/// `orca`, `straight`, or a checkpoint path. Bare words that name no
/// baseline are usage errors; paths that cannot be read are data errors.
fn make_policy(config: &RunConfig, policy: &str, margin: Option<f64>) -> Result<Box<dyn Policy>> {
    match policy {
        "orca" => Ok(Box::new(OrcaPolicy::new(margin.unwrap_or(config.orca_margin()))?)),
        "straight" => Ok(Box::new(StraightLinePolicy)),
        _ => {
            let path = Path::new(policy);
            let looks_like_path = policy.contains(std::path::MAIN_SEPARATOR) || policy.contains('/') || path.extension().is_some();
            if !looks_like_path && !path.exists() {
                return Err(Error::Usage(format!(
                    "unknown policy '{policy}'; expected orca, straight or a checkpoint path"
                )));
            }
            let params = SarlParams::load(path)?;
            let name = path.file_stem().map_or(policy.to_string(), |s| s.to_string_lossy().into_owned());
            Ok(Box::new(ValuePolicy::new(name, params, config.train.gamma)))
        }
    }
}

/// `--seed` moves the suite: case `i` runs scenario `seed + i`.
fn eval(
    config: &RunConfig,
    specs: &[String],
    cases: Option<usize>,
    margin: Option<f64>,
    seed: Option<u64>,
) -> Result<()> {
    let mut eval_config = config.eval.clone();
    if let Some(n) = cases {
        eval_config.n_cases = n;
    }
    if let Some(seed) = seed {
        eval_config.base_seed = seed;
    }
    let policies = specs
        .iter()
        .map(|s| make_policy(config, s, margin))
        .collect::<Result<Vec<_>>>()?;
    println!("{}", EvalReport::table_header(config.setting()));
    for policy in &policies {
        let report = run_eval(policy.as_ref(), &config.scenario, &eval_config)?;
        println!("{}", report.table_row());
        let path = output_path(
            config,
            None,
            Path::new(&format!("eval_{}_{}.json", report.policy, report.setting)),
        )?;
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        if report.failures() > 0 {
            log::warn!("{} cases ended in a policy failure", report.failures());
        }
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn simulate(config: &RunConfig, policy: &str, margin: Option<f64>, out: Option<PathBuf>) -> Result<()> {
    let policy = make_policy(config, policy, margin)?;
    let mut env = CrowdEnv::new(config.scenario.clone(), config.seed)?;
    while !env.is_done() {
        let action = policy.act(&env)?;
        env.step(action)?;
    }
    let path = output_path(
        config,
        out,
        Path::new(&format!("episode_{}_{}.jsonl", policy.name(), config.seed)),
    )?;
    let log = env.into_log();
    log.save(&path)?;
    println!(
        "{}: {:?} after {} steps ({:.2} s); log {}",
        policy.name(),
        log.outcome(),
        log.records.len(),
        log.duration(),
        path.display()
    );
    Ok(())
}

fn plot(
    config: &RunConfig,
    log_path: &Path,
    frame: usize,
    polar: bool,
    attention: bool,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let log = EpisodeLog::load(log_path)?;
    let stem = out.unwrap_or_else(|| log_path.with_extension(""));
    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", parent.display())))?;
    }
    if !polar && !attention {
        let (json, svg) = render_episode(&log, &stem)?;
        println!("wrote {} and {}", json.display(), svg.display());
        return Ok(());
    }
    let checkpoint = checkpoint.ok_or_else(|| Error::Usage("--polar and --attention need --checkpoint".into()))?;
    let policy = ValuePolicy::new("value", SarlParams::load(&checkpoint)?, config.train.gamma);
    let env = CrowdEnv::replay(&log, frame).map_err(|e| match e {
        Error::Format { reason, .. } => Error::format(log_path, reason),
        other => other,
    })?;
    if polar {
        let entries = value_polar_map(&policy, &env, config.train.gamma)?;
        let name = format!("{}_polar_{frame}", stem.file_name().unwrap_or_default().to_string_lossy());
        let (json, svg) = render_polar_map(&entries, &stem.with_file_name(name))?;
        println!("wrote {} and {}", json.display(), svg.display());
    }
    if attention {
        let scores = export_attention(&policy, env.state())?;
        let name = format!("{}_attention_{frame}.json", stem.file_name().unwrap_or_default().to_string_lossy());
        let path = stem.with_file_name(name);
        write_attention(&scores, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
