use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use bplan_core::{load_map, sense_and_update, BeliefMap, Cell, GroundTruthMap};
use bplan_runner::bench::{benchmark, summarize, summary_table, write_csv};
use bplan_runner::config::{ConfigError, RunConfig};
use bplan_runner::env::{EpisodeConfig, Task};
use bplan_runner::episode::{run_episode, EpisodeMetrics, Planner, StepRecord};
use bplan_runner::mapgen::{generate_corpus, load_corpus, write_corpus, MapGenError};
use bplan_runner::plot::render_svg;
use bplan_runner::training::{load_policy, save_policy, write_log, Trainer};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "bplan", version, about = "Viewpoint-graph exploration and navigation planners")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a map corpus (style, width, height and count come from the config).
    GenMaps,
    /// Run one exploration episode and plot it.
    Explore(EpisodeArgs),
    /// Run one navigation episode and plot it.
    Navigate(EpisodeArgs),
    /// Train a policy on a map corpus.
    Train {
        #[arg(long)]
        maps: PathBuf,
    },
    /// Run planners over a map corpus.
    Bench {
        #[arg(long)]
        maps: PathBuf,
        /// Comma-separated planner names.
        #[arg(long, value_delimiter = ',', required = true)]
        planners: Vec<String>,
        /// Policy weights for the `learned` planner.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render a saved episode as SVG.
    Plot {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        episode: PathBuf,
    },
}

#[derive(Args)]
struct EpisodeArgs {
    #[arg(long)]
    map: PathBuf,
    /// learned, nearest_frontier, replan_navigate or random.
    #[arg(long)]
    planner: String,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct EpisodeFile {
    planner: String,
    task: String,
    metrics: EpisodeMetrics,
    records: Vec<StepRecord>,
    failure: Option<String>,
}

enum Failure {
    Config(anyhow::Error),
    Corpus(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn corpus_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Corpus(e.into())
}

fn load_config(common: &Common) -> Result<RunConfig, ConfigError> {
    let mut c = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        c.episode.seed = s;
    }
    Ok(c)
}

fn read_map(path: &Path) -> Result<GroundTruthMap, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(corpus_err)?;
    load_map(&text).with_context(|| format!("parsing {}", path.display())).map_err(corpus_err)
}

fn read_corpus(dir: &Path) -> Result<Vec<(String, Arc<GroundTruthMap>)>, Failure> {
    let maps = load_corpus(dir).map_err(|e: MapGenError| corpus_err(e))?;
    Ok(maps.into_iter().map(|(n, m)| (n, Arc::new(m))).collect())
}

fn planner(name: &str, config: &RunConfig, checkpoint: Option<&Path>) -> Result<Planner, Failure> {
    Ok(match name {
        "learned" => {
            let path = checkpoint.ok_or_else(|| config_err(anyhow!("the learned planner needs --checkpoint")))?;
            Planner::Learned(Arc::new(load_policy(config, path)?))
        }
        "nearest_frontier" => Planner::NearestFrontier,
        "replan_navigate" => Planner::ReplanNavigate,
        "random" => Planner::Random,
        other => return Err(config_err(anyhow!("unknown planner `{other}`"))),
    })
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Belief seen along a recorded trajectory.
fn replay_belief(truth: &GroundTruthMap, cfg: &EpisodeConfig, records: &[StepRecord]) -> BeliefMap {
    let mut belief = BeliefMap::for_map(truth);
    sense_and_update(truth.start(), truth, &mut belief, cfg.range);
    let cs = truth.cell_size();
    for r in records {
        let cell = Cell::new((r.pose.x / cs).floor() as usize, (r.pose.y / cs).floor() as usize);
        sense_and_update(cell, truth, &mut belief, cfg.range);
    }
    belief
}

fn episode_cmd(common: &Common, mut config: RunConfig, task: Task, args: &EpisodeArgs) -> Result<(), Failure> {
    config.episode.task = task;
    let map = Arc::new(read_map(&args.map)?);
    let p = planner(&args.planner, &config, args.checkpoint.as_deref())?;
    let mut ep = run_episode(map, &p, &config.episode).map_err(|e| Failure::Other(e.into()))?;
    if !config.record_timing {
        ep.metrics.compute_s = 0.0;
    }
    create_out(&common.out)?;
    let file = EpisodeFile {
        planner: p.name().to_string(),
        task: task.name().to_string(),
        metrics: ep.metrics.clone(),
        records: ep.records.clone(),
        failure: ep.failure.clone(),
    };
    fs::write(common.out.join("episode.json"), serde_json::to_string_pretty(&file).map_err(anyhow::Error::from)?)
        .context("writing episode.json")?;
    fs::write(common.out.join("trajectory.svg"), render_svg(&ep.belief, ep.start, ep.target, &ep.records))
        .context("writing trajectory.svg")?;
    println!(
        "{} {}: distance {:.2} m, {} steps, success {}, coverage {:.3}",
        file.planner, file.task, ep.metrics.distance, ep.metrics.steps, ep.metrics.success, ep.metrics.coverage
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli.common).map_err(config_err)?;
    let common = &cli.common;
    match &cli.command {
        Command::GenMaps => {
            let maps = generate_corpus(config.style, config.width, config.height, config.episode.seed, config.count)
                .map_err(config_err)?;
            let paths = write_corpus(&common.out, &maps).map_err(|e| Failure::Other(e.into()))?;
            println!("wrote {} maps to {}", paths.len(), common.out.display());
        }
        Command::Explore(args) => episode_cmd(common, config, Task::Exploration, args)?,
        Command::Navigate(args) => episode_cmd(common, config, Task::Navigation, args)?,
        Command::Train { maps } => {
            let corpus: Vec<Arc<GroundTruthMap>> = read_corpus(maps)?.into_iter().map(|(_, m)| m).collect();
            let ckpt = common.out.join("checkpoints");
            create_out(&ckpt)?;
            let every = config.checkpoint_every;
            let mut trainer = Trainer::new(config.clone(), config.episode.seed)?;
            trainer.run(&corpus, config.episodes, |p| {
                if every > 0 && p.episode % every == 0 {
                    save_policy(&p.agent.policy, &ckpt.join(format!("policy_{:06}.bpck", p.episode)))?;
                    println!("episode {}: distance {:.2} m, success {}, alpha {:.4}", p.episode, p.distance, p.success, p.agent.alpha());
                }
                Ok(())
            })?;
            save_policy(&trainer.agent.policy, &common.out.join("policy.bpck"))?;
            write_log(&trainer.log, &common.out.join("train_log.csv"))?;
            println!("trained {} episodes, {} updates", config.episodes, trainer.log.len());
        }
        Command::Bench { maps, planners, checkpoint } => {
            let corpus = read_corpus(maps)?;
            let planners: Vec<Planner> =
                planners.iter().map(|n| planner(n.trim(), &config, checkpoint.as_deref())).collect::<Result<_, _>>()?;
            let rows = benchmark(&planners, &corpus, &config.episode, config.record_timing);
            create_out(&common.out)?;
            let f = fs::File::create(common.out.join("results.csv")).context("creating results.csv")?;
            write_csv(&rows, f).context("writing results.csv")?;
            let table = summary_table(&summarize(&rows));
            fs::write(common.out.join("summary.txt"), &table).context("writing summary.txt")?;
            print!("{table}");
        }
        Command::Plot { map, episode } => {
            let truth = read_map(map)?;
            let text = fs::read_to_string(episode).with_context(|| format!("reading {}", episode.display()))?;
            let file: EpisodeFile = serde_json::from_str(&text).context("parsing episode file")?;
            let belief = replay_belief(&truth, &config.episode, &file.records);
            let cs = truth.cell_size();
            let target = if file.task == Task::Navigation.name() { truth.target().map(|t| t.center(cs)) } else { None };
            create_out(&common.out)?;
            fs::write(common.out.join("trajectory.svg"), render_svg(&belief, truth.start().center(cs), target, &file.records))
                .context("writing trajectory.svg")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Corpus(e)) => {
            eprintln!("corpus error: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
