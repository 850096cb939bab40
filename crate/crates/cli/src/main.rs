use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use navlearn::agent::DdpgAgent;
use navlearn::neural::checkpoint::Checkpoint;
use navlearn::replay::demo_file::{read_demo_file, write_demo_file, DemoRecord};
use navlearn::trainer::metrics::read_metrics;
use navlearn::trainer::pilot::rescore_records;
use navlearn::trainer::plot::{smoothed, smoothed_csv, smoothed_svg};
use navlearn::trainer::{evaluate, load_run_world, pilot_demos, train, Mode, PilotConfig, RunConfig, RunOutputs};
use navlearn_teleop::{serve, ServeOptions, SessionCore};

#[derive(Parser)]
#[command(name = "navlearn", version, about = "Mapless navigation with demonstration-boosted DDPG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand that reads a run configuration.
#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML); defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// World file path or built-in world name.
    #[arg(long)]
    world: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(w) = &self.world {
            cfg.world = w.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; writes metrics.csv, evals.jsonl and checkpoints to --out.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        demo_file: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on seeded missions and print the report as JSON.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        missions: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out the scripted pilot and write a demonstration file.
    PilotDemos {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute every reward in a demonstration file from its stored fields.
    RescoreDemos {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        demo_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Moving-average CSV and SVG chart from a metrics log.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 4000)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the tele-operation websocket at /ws.
    TeleopServe {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: std::net::SocketAddr,
        #[arg(long)]
        demo_out: Option<PathBuf>,
        /// Directory of static UI assets served at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

fn load_agent(path: &Path) -> Result<DdpgAgent> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(DdpgAgent::from_checkpoint(&ck)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, steps, mode, demo_file, out } => {
            let mut cfg = common.load()?;
            if let Some(s) = steps {
                cfg.total_steps = s;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if demo_file.is_some() {
                cfg.demo_file = demo_file;
            }
            std::fs::create_dir_all(&out)?;
            write_text(&out.join("config.toml"), &cfg.to_toml())?;
            let outcome = train(&cfg, &RunOutputs::in_dir(&out), None)?;
            println!(
                "trained {} steps over {} episodes; first evaluation at >= threshold: {}",
                outcome.steps_run,
                outcome.episodes,
                outcome.threshold_step.map_or("none".to_string(), |s| s.to_string())
            );
        }
        Command::Evaluate { common, checkpoint, missions, out } => {
            let cfg = common.load()?;
            let world = load_run_world(&cfg)?;
            let agent = load_agent(&checkpoint)?;
            let report = evaluate(&agent.actor, &world, &cfg.env, missions.unwrap_or(cfg.eval_missions), cfg.eval_seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => write_text(&p, &text)?,
                None => println!("{text}"),
            }
            info!("{} successes, {} collisions, {} timeouts", report.successes, report.collisions, report.timeouts);
        }
        Command::PilotDemos { common, count, out } => {
            let cfg = common.load()?;
            let world = load_run_world(&cfg)?;
            let demos = pilot_demos(&world, &cfg.env, count, cfg.seed, &PilotConfig::default())?;
            write_demo_file(&out, &world.name, &demos)?;
            println!("wrote {} demonstration transitions to {}", demos.len(), out.display());
        }
        Command::RescoreDemos { common, demo_file, out } => {
            let cfg = common.load()?;
            let world = load_run_world(&cfg)?;
            let set = read_demo_file(&demo_file, &cfg.env, 0)?;
            if let Some(name) = &set.env_name {
                if *name != world.name {
                    bail!("demo file was recorded in `{name}` but --world is `{}`", world.name);
                }
            }
            let (records, changed) = rescore_records(&set.records, &world, &cfg.env);
            let mut w = BufWriter::new(File::create(&out)?);
            for r in &records {
                writeln!(w, "{}", DemoRecord::to_line(r))?;
            }
            w.flush()?;
            println!("rescored {} records; {changed} rewards differ from the file", records.len());
        }
        Command::Plot { metrics, window, out } => {
            let rows = read_metrics(BufReader::new(File::open(&metrics)?))?;
            let series = smoothed(&rows, window);
            std::fs::create_dir_all(&out)?;
            write_text(&out.join("moving_average.csv"), &smoothed_csv(&series))?;
            write_text(&out.join("moving_average.svg"), &smoothed_svg(&series, 2000))?;
            println!("wrote {} and {}", out.join("moving_average.csv").display(), out.join("moving_average.svg").display());
        }
        Command::TeleopServe { common, bind, demo_out, assets } => {
            let cfg = common.load()?;
            let world = load_run_world(&cfg)?;
            let sink = match &demo_out {
                Some(p) => Some(Box::new(BufWriter::new(File::create(p)?)) as Box<dyn Write + Send>),
                None => None,
            };
            let session = SessionCore::new(world.clone(), cfg.env, cfg.seed, sink)?;
            let opts = ServeOptions { assets, ..ServeOptions::default() };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(bind, session, world, opts, None))?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
