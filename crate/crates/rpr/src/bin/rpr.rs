//! Command-line entry points: dataset generation, training, embedding,
//! evaluation and plotting, all driven by one flat config format.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rpr::config::{RunConfig, Trajectory};
use rpr::embedder::load_model;
use rpr::error::Error;
use rpr::evaluation::{
    build_embedding_set, load_embedding_set, render_matrices, render_pr_curve, run_evaluation,
    save_embedding_set, EvalReport,
};
use rpr::ingest::load_sequence;
use rpr::simworld::{generate_traversal, generate_world, WaypointPath};
use rpr::trainer;

const EXIT_CONFIG: u8 = 2;
const EXIT_MISSING: u8 = 3;
const EXIT_RUN: u8 = 4;

#[derive(Parser)]
#[command(
    name = "rpr",
    about = "Radar place recognition: simulate, train, embed, evaluate, plot",
    after_help = "Exit codes:\n  \
        0  success\n  \
        2  configuration error (unknown key, bad value, invalid combination)\n  \
        3  missing file or directory\n  \
        4  run failure (I/O, corrupt data, training abort)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides applied after the config file, e.g. `-s variant.name=vTR2`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> rpr::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (key, value) = kv.split_once('=').ok_or_else(|| {
                Error::Config(format!("override `{kv}` is not of the form key=value"))
            })?;
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic radar dataset in the ingest layout.
    Simgen {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an embedder on one or more datasets.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset directories (ingest layout); repeatable.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        /// Output directory for checkpoint, loss log and snapshot.
        #[arg(long)]
        out: PathBuf,
        /// Resume from this trainer checkpoint instead of initializing.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Embed every scan of a dataset with a trained model.
    Embed {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset directory (ingest layout).
        #[arg(long)]
        data: PathBuf,
        /// Model or trainer checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for the embedding set files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate query embeddings against database embeddings.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory holding the query embedding set.
        #[arg(long)]
        queries: PathBuf,
        /// Directory holding the database embedding set.
        #[arg(long)]
        database: PathBuf,
        /// Output directory for report and matrix files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render PNGs (matrices, PR curve) from an evaluation report.
    Plot {
        /// Path to a report.json produced by `eval`.
        #[arg(long)]
        report: PathBuf,
        /// Output directory for the PNGs.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_pool(dirs: &[PathBuf]) -> rpr::Result<Vec<rpr::ingest::RadarSequence>> {
    dirs.iter().map(|d| load_sequence(d)).collect()
}

fn run(cli: Cli) -> rpr::Result<()> {
    match cli.command {
        Command::Simgen { config, out } => {
            let cfg = config.load()?;
            let sim = &cfg.sim;
            let world = generate_world(sim.sim.seed, sim.n_scatterers, sim.extent_m);
            let path = match sim.trajectory {
                Trajectory::Loop => WaypointPath::loop_path((0.0, 0.0), sim.loop_radius_m, 64),
                Trajectory::Line => WaypointPath::new(vec![
                    (-sim.line_length_m / 2.0, 0.0),
                    (sim.line_length_m / 2.0, 0.0),
                ])?,
            };
            let path = if sim.reverse { path.reversed() } else { path };
            let n = generate_traversal(&world, &path, sim.speed_mps, &sim.sim, &out)?;
            cfg.write_snapshot(&out.join("config.txt"))?;
            println!("wrote {n} scans to {}", out.display());
        }
        Command::Train {
            config,
            data,
            out,
            resume,
        } => {
            let cfg = config.load()?;
            let pool = load_pool(&data)?;
            let report = match resume {
                Some(ckpt) => trainer::resume(&cfg, &ckpt, &pool, &out)?,
                None => trainer::train(&cfg, &pool, &out)?,
            };
            println!(
                "trained {} steps, final loss {:.6}, checkpoint {}",
                report.steps,
                report.final_loss,
                report.checkpoint.display()
            );
        }
        Command::Embed {
            config,
            data,
            checkpoint,
            out,
        } => {
            let cfg = config.load()?;
            let (model, _) = load_model(&checkpoint)?;
            let seq = load_sequence(&data)?;
            let set = build_embedding_set(&model, &seq, &cfg.grid)?;
            save_embedding_set(&out, &set)?;
            cfg.write_snapshot(&out.join("config.txt"))?;
            println!("embedded {} scans to {}", set.len(), out.display());
        }
        Command::Eval {
            config,
            queries,
            database,
            out,
        } => {
            let cfg = config.load()?;
            let q = load_embedding_set(&queries)?;
            let db = load_embedding_set(&database)?;
            let report = run_evaluation(&q, &db, &cfg.eval, &out)?;
            cfg.write_snapshot(&out.join("config.txt"))?;
            let r1 = report
                .recall_at_n
                .first()
                .map(|&(n, r)| format!("recall@{n} {r:.4}"))
                .unwrap_or_default();
            println!(
                "evaluated {}x{}, {r1}, report {}",
                report.num_queries,
                report.num_database,
                out.join("report.json").display()
            );
        }
        Command::Plot { report, out } => {
            let rep = EvalReport::load(&report)?;
            let report_dir = report.parent().unwrap_or(Path::new("."));
            render_matrices(&rep, report_dir, &out)?;
            render_pr_curve(&rep, &out.join("pr_curve.png"))?;
            println!("wrote plots to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Argument(_) | Error::ConfigMismatch { .. } => EXIT_CONFIG,
                Error::Missing(_) => EXIT_MISSING,
                _ => EXIT_RUN,
            };
            ExitCode::from(code)
        }
    }
}
