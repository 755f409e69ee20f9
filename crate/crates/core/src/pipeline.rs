//! Stage orchestration: the while-unsatisfactory matching loop over frame
//! batches, and the end-to-end run that chains simulation, matching,
//! planning, and triggering through plain files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::geometry::{wrap_angle, PointCloud};
use crate::matcher::{is_satisfactory, match_clusters, MatchResult};
use crate::model::generate_turbine_model;
use crate::ply;
use crate::preprocess::{append_frame, cluster, cluster_cloud, reject_ground, voxelize};
use crate::sim::{simulate_climb, write_frames, ScanFrame};
use crate::trajectory::{export_trajectory_csv, generate_trajectory};
use crate::trigger::{run_inspection, write_events_csv};

/// Outcome of the batch matching loop.
#[derive(Debug, Clone)]
pub struct MatchLoopOutcome {
    /// Best match seen across all batches, None if no batch produced
    /// clusters.
    pub best: Option<MatchResult>,
    pub satisfactory: bool,
    pub frames_used: usize,
    pub batches_run: usize,
}

/// Fold frames in batch by batch; after each batch run
/// voxelize -> reject ground -> cluster -> match, keep the best match, and
/// stop as soon as it is satisfactory.
pub fn run_match_loop(
    config: &RunConfig,
    frames: &[ScanFrame],
    dump_dir: Option<&Path>,
    verbose: bool,
) -> Result<MatchLoopOutcome> {
    let model = generate_turbine_model(&config.turbine.canonical(), &config.model_sampling)?;

    let mut global = PointCloud::new("world");
    let mut best: Option<MatchResult> = None;
    let mut frames_used = 0usize;
    let mut batches_run = 0usize;

    for batch in frames.chunks(config.matching.batch_frames.max(1)) {
        let batch_start = std::time::Instant::now();
        for frame in batch {
            append_frame(&mut global, frame);
        }
        frames_used += batch.len();
        batches_run += 1;

        let voxelized = voxelize(&global, &config.voxel);
        if voxelized.len() < 3 {
            continue;
        }
        let rejection = reject_ground(
            &voxelized,
            config.ground.threshold_m,
            config.ground.max_tilt_deg,
            config.ground.iterations,
            config.seed,
        )?;
        let t_preprocess = batch_start.elapsed();
        let clusters = cluster(
            &rejection.survivors,
            config.clustering.linkage_radius_m,
            config.clustering.min_cluster_size,
        );
        let t_cluster = batch_start.elapsed() - t_preprocess;

        if let Some(dir) = dump_dir {
            let stage_dir = dir.join(format!("batch_{batches_run:03}"));
            fs::create_dir_all(&stage_dir)?;
            ply::write_ply_file(&global, stage_dir.join("registered.ply"))?;
            ply::write_ply_file(&voxelized, stage_dir.join("voxelized.ply"))?;
            ply::write_ply_file(&rejection.survivors, stage_dir.join("ground_removed.ply"))?;
            for (i, members) in clusters.clusters.iter().enumerate() {
                ply::write_ply_file(
                    &cluster_cloud(&rejection.survivors, members),
                    stage_dir.join(format!("cluster_{i:02}.ply")),
                )?;
            }
        }

        if clusters.clusters.is_empty() {
            if verbose {
                eprintln!("batch {batches_run}: no clusters yet ({} points)", global.len());
            }
            continue;
        }

        let result = match_clusters(&model, &rejection.survivors, &clusters, &config.icp)?;
        if verbose {
            eprintln!(
                "batch {batches_run}: {} clusters, best score {:.6} (cluster {}) \
                 [preprocess {:.0?}, cluster {:.0?}, match {:.0?}]",
                clusters.clusters.len(),
                result.score,
                result.cluster_index,
                t_preprocess,
                t_cluster,
                batch_start.elapsed() - t_preprocess - t_cluster,
            );
        }
        let better = match &best {
            None => true,
            Some(b) => result.score < b.score,
        };
        if better {
            best = Some(result);
        }
        if let Some(b) = &best {
            if is_satisfactory(b, config.matching.score_threshold) {
                return Ok(MatchLoopOutcome {
                    best,
                    satisfactory: true,
                    frames_used,
                    batches_run,
                });
            }
        }
    }

    Ok(MatchLoopOutcome {
        best,
        satisfactory: false,
        frames_used,
        batches_run,
    })
}

/// End-to-end summary, also written as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct E2eSummary {
    pub satisfactory: bool,
    pub score: f64,
    pub yaw_rad: f64,
    pub yaw_error_rad: f64,
    pub hub_error_m: f64,
    pub trigger_events: usize,
    pub frames_used: usize,
    pub batches_run: usize,
}

/// Run the whole pipeline into `out_dir`: reference model, simulated climb,
/// matching loop, trajectory, and trigger simulation. Returns the summary;
/// `satisfactory == false` means the frame budget ran out without a match
/// and the downstream stages were skipped.
pub fn run_e2e(
    config: &RunConfig,
    out_dir: &Path,
    dump_dir: Option<&Path>,
    verbose: bool,
) -> Result<E2eSummary> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;

    let model = generate_turbine_model(&config.turbine.canonical(), &config.model_sampling)?;
    ply::write_ply_file(&model, out_dir.join("model.ply"))?;

    let scene = config.scene_spec();
    let frames = simulate_climb(
        &scene,
        &config.sensor,
        &config.climb.start_pose,
        config.climb.climb_rate_m_s,
        config.climb.duration_s,
        config.seed,
    )?;
    write_frames(out_dir.join("frames"), &frames)?;

    let outcome = run_match_loop(config, &frames, dump_dir, verbose)?;

    let gt_pose = config.turbine.ground_truth_pose();
    let canonical_hub = config.turbine.canonical().hub_position;

    let (score, yaw, yaw_err, hub_err) = match &outcome.best {
        Some(b) => {
            serde_json::to_writer_pretty(
                fs::File::create(out_dir.join("match.json"))?,
                b,
            )?;
            let recovered_hub = b.pose.apply(&canonical_hub);
            (
                b.score,
                b.pose.yaw,
                wrap_angle(b.pose.yaw - gt_pose.yaw).abs(),
                recovered_hub.distance(&config.turbine.hub_position),
            )
        }
        None => (f64::INFINITY, f64::NAN, f64::NAN, f64::NAN),
    };

    let mut trigger_events = 0usize;
    if outcome.satisfactory {
        let best = outcome.best.as_ref().expect("satisfactory implies a match");
        let traj = generate_trajectory(
            &config.turbine.canonical(),
            &best.pose,
            &config.trajectory,
        )?;
        export_trajectory_csv(&traj, out_dir.join("trajectory.csv"))?;
        #[derive(Serialize)]
        struct TrajectoryEcho<'a> {
            turbine_pose: &'a crate::geometry::Pose4,
            params: &'a crate::trajectory::TrajectoryParams,
        }
        serde_json::to_writer_pretty(
            fs::File::create(out_dir.join("trajectory_params.json"))?,
            &TrajectoryEcho {
                turbine_pose: &traj.turbine_pose,
                params: &traj.params,
            },
        )?;

        let report = run_inspection(
            &traj.waypoints,
            &scene,
            &config.trigger.to_config(),
            config.trigger.dwell_s_per_hold,
            config.seed,
        )?;
        trigger_events = report.total_events;
        let mut events = fs::File::create(out_dir.join("events.csv"))?;
        write_events_csv(&report, &mut events)?;
        serde_json::to_writer_pretty(fs::File::create(out_dir.join("coverage.json"))?, &report)?;
    }

    let summary = E2eSummary {
        satisfactory: outcome.satisfactory,
        score,
        yaw_rad: yaw,
        yaw_error_rad: yaw_err,
        hub_error_m: hub_err,
        trigger_events,
        frames_used: outcome.frames_used,
        batches_run: outcome.batches_run,
    };
    serde_json::to_writer_pretty(fs::File::create(out_dir.join("summary.json"))?, &summary)?;
    Ok(summary)
}
