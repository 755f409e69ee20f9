//! Command-line front end for the turbine localization and inspection
//! pipeline. Stages talk through plain files (PLY, CSV, JSON) under the
//! output directory, so each one can run and be inspected on its own.
//!
//! Exit codes: 0 success, 2 domain failure (no satisfactory match),
//! 64 usage or config error, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use rotorscan_core::config::{load_config, RunConfig};
use rotorscan_core::matcher::MatchResult;
use rotorscan_core::model::generate_turbine_model;
use rotorscan_core::pipeline::{run_e2e, run_match_loop};
use rotorscan_core::sim::{read_frames, simulate_climb, write_frames};
use rotorscan_core::trajectory::{
    export_trajectory_csv, generate_trajectory, import_trajectory_csv,
};
use rotorscan_core::trigger::{run_inspection, write_events_csv};
use rotorscan_core::{ply, Error};

const EXIT_OK: u8 = 0;
const EXIT_NO_MATCH: u8 = 2;
const EXIT_CONFIG: u8 = 64;

#[derive(Parser)]
#[command(name = "rotorscan", version, about = "Locate a rotating wind turbine in LiDAR scans and plan its inspection")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Dump intermediate clouds per matching batch into this directory.
    #[arg(long, global = true)]
    dump_stages: Option<PathBuf>,

    /// Print per-batch progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the reference turbine model to <out>/model.ply.
    GenerateModel,
    /// Simulate the climb and write frames to <out>/frames/.
    Simulate,
    /// Run the matching loop over recorded frames; writes <out>/match.json.
    Match {
        /// Frame directory (defaults to <out>/frames).
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Plan the inspection trajectory from a match report.
    Plan {
        /// Match report (defaults to <out>/match.json).
        #[arg(long = "match-report")]
        match_report: Option<PathBuf>,
    },
    /// Simulate the camera trigger along a planned trajectory.
    Trigger {
        /// Trajectory CSV (defaults to <out>/trajectory.csv).
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run the whole pipeline and print a one-line summary.
    E2e,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidConfig(_) | Error::InvalidTurbineParams(_) => EXIT_CONFIG,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<u8, Error> {
    // Config errors must surface before anything is written.
    let config = load(&cli)?;
    let out: &Path = &cli.out;

    match &cli.command {
        Command::GenerateModel => {
            let model = generate_turbine_model(&config.turbine.canonical(), &config.model_sampling)?;
            std::fs::create_dir_all(out)?;
            let path = out.join("model.ply");
            ply::write_ply_file(&model, &path)?;
            println!("wrote {} points to {}", model.len(), path.display());
            Ok(EXIT_OK)
        }
        Command::Simulate => {
            let frames = simulate_climb(
                &config.scene_spec(),
                &config.sensor,
                &config.climb.start_pose,
                config.climb.climb_rate_m_s,
                config.climb.duration_s,
                config.seed,
            )?;
            let dir = out.join("frames");
            write_frames(&dir, &frames)?;
            println!("wrote {} frames to {}", frames.len(), dir.display());
            Ok(EXIT_OK)
        }
        Command::Match { frames } => {
            let frames_dir = frames.clone().unwrap_or_else(|| out.join("frames"));
            let frames = read_frames(&frames_dir)?;
            let outcome = run_match_loop(&config, &frames, cli.dump_stages.as_deref(), cli.verbose)?;
            std::fs::create_dir_all(out)?;
            if let Some(best) = &outcome.best {
                serde_json::to_writer_pretty(
                    std::fs::File::create(out.join("match.json"))?,
                    best,
                )?;
                println!(
                    "best match: cluster {} score {:.6} yaw {:.5} (converged: {})",
                    best.cluster_index, best.score, best.pose.yaw, best.converged
                );
            } else {
                println!("no clusters produced a match");
            }
            Ok(if outcome.satisfactory {
                EXIT_OK
            } else {
                EXIT_NO_MATCH
            })
        }
        Command::Plan { match_report } => {
            let report_path = match_report.clone().unwrap_or_else(|| out.join("match.json"));
            let report: MatchResult =
                serde_json::from_reader(std::fs::File::open(&report_path)?)?;
            let traj = generate_trajectory(
                &config.turbine.canonical(),
                &report.pose,
                &config.trajectory,
            )?;
            std::fs::create_dir_all(out)?;
            let csv_path = out.join("trajectory.csv");
            export_trajectory_csv(&traj, &csv_path)?;
            #[derive(serde::Serialize)]
            struct Echo<'a> {
                turbine_pose: &'a rotorscan_core::Pose4,
                params: &'a rotorscan_core::trajectory::TrajectoryParams,
            }
            serde_json::to_writer_pretty(
                std::fs::File::create(out.join("trajectory_params.json"))?,
                &Echo {
                    turbine_pose: &traj.turbine_pose,
                    params: &traj.params,
                },
            )?;
            println!(
                "wrote {} waypoints to {}",
                traj.waypoints.len(),
                csv_path.display()
            );
            Ok(EXIT_OK)
        }
        Command::Trigger { trajectory } => {
            let traj_path = trajectory.clone().unwrap_or_else(|| out.join("trajectory.csv"));
            let waypoints = import_trajectory_csv(&traj_path)?;
            let report = run_inspection(
                &waypoints,
                &config.scene_spec(),
                &config.trigger.to_config(),
                config.trigger.dwell_s_per_hold,
                config.seed,
            )?;
            std::fs::create_dir_all(out)?;
            let mut events = std::fs::File::create(out.join("events.csv"))?;
            write_events_csv(&report, &mut events)?;
            serde_json::to_writer_pretty(
                std::fs::File::create(out.join("coverage.json"))?,
                &report,
            )?;
            println!(
                "{} trigger events across {} hold points",
                report.total_events,
                report.holds.len()
            );
            Ok(EXIT_OK)
        }
        Command::E2e => {
            let summary = run_e2e(&config, out, cli.dump_stages.as_deref(), cli.verbose)?;
            println!(
                "score={:.6} yaw={:.5} yaw_err={:.5} events={}",
                summary.score, summary.yaw_rad, summary.yaw_error_rad, summary.trigger_events
            );
            Ok(if summary.satisfactory {
                EXIT_OK
            } else {
                EXIT_NO_MATCH
            })
        }
    }
}
