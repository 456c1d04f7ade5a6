//! Episode runner: one full closed loop of playback, scanning, odometry,
//! control and reward logging.

use crate::controller::Controller;
use anyhow::{Context, Result};
use scanctl::odometry::compute_ape;
use scanctl::rl::{EnvConfig, Env, Scene};
use scanctl::scansim::Trajectory;
use scanctl::Pose64;
use std::io::Write;
use std::path::Path;

/// One logged control tick.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    pub theta: f64,
    pub omega_cmd: f64,
    pub omega_applied: f64,
    pub r_exp: f64,
    pub r_lio: f64,
    pub r_total: f64,
    pub rte: f64,
    pub est: Pose64,
    pub gt: Pose64,
    pub u_fingerprint: Option<u64>,
    pub mpc_objective: Option<f64>,
    pub mpc_residual: Option<f64>,
    pub mpc_iterations: Option<usize>,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub records: Vec<StepRecord>,
    /// first-tick uncertainty samples, when the controller computed them
    pub initial_samples: Option<scanctl::uncertainty::UncertaintySamples<f64>>,
    pub est_traj: Trajectory<f64>,
    pub gt_traj: Trajectory<f64>,
    pub ape: Option<f64>,
    pub mean_r_exp: f64,
    pub degenerate_steps: usize,
    pub failed: bool,
    /// per-tick decision latencies; excluded from the deterministic CSVs
    pub latencies_us: Vec<u64>,
}

/// Runs a full episode of `steps` ticks (clipped to the trajectory). An
/// episode where more than half the registrations were degenerate is
/// marked failed; its partial log is still returned.
pub fn run_episode(
    scene: &Scene<f64>,
    controller: &Controller,
    seed: u64,
    env_cfg: &EnvConfig<f64>,
    steps: usize,
) -> Result<EpisodeResult> {
    // one tick of lead time keeps the velocity stencil inside the
    // trajectory
    let start = scene.traj.start_time() + env_cfg.dt;
    let mut env = Env::new(&scene.map, &scene.traj, env_cfg.clone(), start, seed)
        .context("episode setup")?;

    let mut initial_samples = None;
    let mut records = Vec::with_capacity(steps);
    let mut latencies = Vec::with_capacity(steps);
    let mut sum_r_exp = 0.0;
    for _ in 0..steps {
        if !env.has_time_left() {
            break;
        }
        let decision = controller.decide(&mut env)?;
        if records.is_empty() && decision.u_fingerprint.is_some() {
            initial_samples = Some(env.uncertainty());
        }
        let out = env.step(decision.omega_cmd)?;
        latencies.push(decision.latency_us);
        sum_r_exp += out.reward.r_exp;
        records.push(StepRecord {
            t: out.time,
            theta: out.theta,
            omega_cmd: decision.omega_cmd,
            omega_applied: out.omega_applied,
            r_exp: out.reward.r_exp,
            r_lio: out.reward.r_lio,
            r_total: out.reward.total,
            rte: out.rte,
            est: env.pose_estimate(),
            gt: env.true_pose(),
            u_fingerprint: decision.u_fingerprint,
            mpc_objective: decision.mpc_objective,
            mpc_residual: decision.mpc_residual,
            mpc_iterations: decision.mpc_iterations,
            degenerate: out.degenerate,
        });
    }

    let (est_traj, gt_traj) = env.trajectories()?;
    let failed = records.is_empty() || env.degenerate_steps * 2 > records.len();
    let ape = compute_ape(&est_traj, &gt_traj, true).ok().map(|r| r.rmse);
    let mean_r_exp = if records.is_empty() {
        0.0
    } else {
        sum_r_exp / records.len() as f64
    };
    Ok(EpisodeResult {
        records,
        initial_samples,
        est_traj,
        gt_traj,
        ape,
        mean_r_exp,
        degenerate_steps: env.degenerate_steps,
        failed,
        latencies_us: latencies,
    })
}

fn opt_u64(v: Option<u64>) -> String {
    v.map(|x| format!("{x:016x}")).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

/// Writes the per-step log; formatting is fixed-precision so reruns are
/// byte-identical. Latencies are deliberately not part of this file.
pub fn write_episode_csv(path: &Path, result: &EpisodeResult) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "t,theta,omega_cmd,omega_applied,r_exp,r_lio,r_total,rte,\
         est_x,est_y,est_z,est_qx,est_qy,est_qz,est_qw,\
         gt_x,gt_y,gt_z,gt_qx,gt_qy,gt_qz,gt_qw,\
         u_fingerprint,mpc_objective,mpc_residual,mpc_iterations,degenerate"
    )?;
    for r in &result.records {
        let eq = r.est.quaternion();
        let gq = r.gt.quaternion();
        writeln!(
            f,
            "{:.4},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},\
             {:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},\
             {:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},\
             {},{},{},{},{}",
            r.t,
            r.theta,
            r.omega_cmd,
            r.omega_applied,
            r.r_exp,
            r.r_lio,
            r.r_total,
            r.rte,
            r.est.translation.x,
            r.est.translation.y,
            r.est.translation.z,
            eq.i,
            eq.j,
            eq.k,
            eq.w,
            r.gt.translation.x,
            r.gt.translation.y,
            r.gt.translation.z,
            gq.i,
            gq.j,
            gq.k,
            gq.w,
            opt_u64(r.u_fingerprint),
            opt_f64(r.mpc_objective),
            opt_f64(r.mpc_residual),
            r.mpc_iterations.map(|x| x.to_string()).unwrap_or_default(),
            r.degenerate as u8,
        )?;
    }
    Ok(())
}

/// Metrics summary as JSON.
pub fn write_metrics_json(path: &Path, scene: &str, controller: &str, seed: u64, result: &EpisodeResult) -> Result<()> {
    let p50 = percentile(&result.latencies_us, 0.50);
    let p95 = percentile(&result.latencies_us, 0.95);
    let metrics = serde_json::json!({
        "scene": scene,
        "controller": controller,
        "seed": seed,
        "steps": result.records.len(),
        "ape_rmse_m": result.ape,
        "ape_alignment": "umeyama-no-scale",
        "mean_r_exp": result.mean_r_exp,
        "degenerate_steps": result.degenerate_steps,
        "failed": result.failed,
        "latency_p50_ms": p50 / 1000.0,
        "latency_p95_ms": p95 / 1000.0,
    });
    std::fs::write(path, serde_json::to_string_pretty(&metrics)?)?;
    Ok(())
}

/// Parses an episode CSV back into a result (latencies are not part of the
/// file and come back empty), so plots can be re-rendered after the fact.
pub fn read_episode_csv(path: &Path) -> Result<EpisodeResult> {
    use scanctl::geometry::Pose;
    use nalgebra::{Quaternion, UnitQuaternion, Vector3};

    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading episode log {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty episode log")?;
    if !header.starts_with("t,theta,omega_cmd") {
        anyhow::bail!("not an episode log: unexpected header");
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 27 {
            anyhow::bail!("line {}: expected 27 columns, got {}", lineno + 2, cols.len());
        }
        let f = |i: usize| -> Result<f64> {
            cols[i]
                .parse()
                .with_context(|| format!("line {}: column {}", lineno + 2, i + 1))
        };
        let pose = |base: usize| -> Result<Pose<f64>> {
            let q = UnitQuaternion::from_quaternion(Quaternion::new(
                f(base + 6)?,
                f(base + 3)?,
                f(base + 4)?,
                f(base + 5)?,
            ));
            Ok(Pose::from_quaternion(
                q,
                Vector3::new(f(base)?, f(base + 1)?, f(base + 2)?),
            ))
        };
        records.push(StepRecord {
            t: f(0)?,
            theta: f(1)?,
            omega_cmd: f(2)?,
            omega_applied: f(3)?,
            r_exp: f(4)?,
            r_lio: f(5)?,
            r_total: f(6)?,
            rte: f(7)?,
            est: pose(8)?,
            gt: pose(15)?,
            u_fingerprint: (!cols[22].is_empty())
                .then(|| u64::from_str_radix(cols[22], 16))
                .transpose()?,
            mpc_objective: (!cols[23].is_empty()).then(|| f(23)).transpose()?,
            mpc_residual: (!cols[24].is_empty()).then(|| f(24)).transpose()?,
            mpc_iterations: (!cols[25].is_empty())
                .then(|| cols[25].parse::<usize>())
                .transpose()?,
            degenerate: cols[26].trim() == "1",
        });
    }
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let est_traj = Trajectory::new(times.clone(), records.iter().map(|r| r.est).collect())?;
    let gt_traj = Trajectory::new(times, records.iter().map(|r| r.gt).collect())?;
    let ape = compute_ape(&est_traj, &gt_traj, true).ok().map(|r| r.rmse);
    let mean_r_exp = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.r_exp).sum::<f64>() / records.len() as f64
    };
    let degenerate_steps = records.iter().filter(|r| r.degenerate).count();
    let failed = records.is_empty() || degenerate_steps * 2 > records.len();
    Ok(EpisodeResult {
        records,
        initial_samples: None,
        est_traj,
        gt_traj,
        ape,
        mean_r_exp,
        degenerate_steps,
        failed,
        latencies_us: Vec::new(),
    })
}

/// Nearest-rank percentile of microsecond latencies.
pub fn percentile(values: &[u64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1] as f64
}
