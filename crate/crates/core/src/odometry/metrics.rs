//! Trajectory accuracy metrics: absolute pose error after rigid alignment
//! and windowed relative translational error.

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::scalar::Real;
use crate::scansim::trajectory::Trajectory;
use nalgebra::{Matrix3, Vector3};

/// Summary of a trajectory evaluation.
#[derive(Debug, Clone)]
pub struct TrajectoryMetrics<T: Real> {
    pub ape_rmse: T,
    pub rte_series: Vec<(T, T)>,
}

#[derive(Debug, Clone)]
pub struct ApeResult<T: Real> {
    pub rmse: T,
    pub mean: T,
    pub max: T,
    pub matched: usize,
    /// Rigid alignment applied to the estimate before the residuals.
    pub alignment: Pose<T>,
}

/// Rigid transform (rotation + translation, no scale) minimizing
/// `sum_i || R a_i + t - b_i ||^2` via the SVD of the cross-covariance.
pub fn align_umeyama<T: Real>(a: &[Vector3<T>], b: &[Vector3<T>]) -> Result<Pose<T>> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "alignment needs >= 2 matched points, got {}",
            a.len().min(b.len())
        )));
    }
    let inv = T::one() / T::of(a.len() as f64);
    let mut ca = Vector3::zeros();
    let mut cb = Vector3::zeros();
    for (pa, pb) in a.iter().zip(b) {
        ca += pa;
        cb += pb;
    }
    ca *= inv;
    cb *= inv;

    let mut w = Matrix3::zeros();
    for (pa, pb) in a.iter().zip(b) {
        w += (pb - cb) * (pa - ca).transpose();
    }
    let svd = w.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Singular("svd failed".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Singular("svd failed".into()))?;
    let mut s = Matrix3::identity();
    if (u * vt).determinant() < T::zero() {
        s[(2, 2)] = -T::one();
    }
    let r = u * s * vt;
    let t = cb - r * ca;
    Ok(Pose::new(r, t))
}

/// Nearest-timestamp matches between two trajectories; a pair is kept when
/// the time gap is at most half the reference sampling interval.
fn match_poses<'a, T: Real>(
    est: &'a Trajectory<T>,
    truth: &'a Trajectory<T>,
) -> Vec<(&'a Pose<T>, &'a Pose<T>, T)> {
    if truth.len() < 2 {
        return Vec::new();
    }
    let mut gaps: Vec<T> = truth.times.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let half_dt = gaps[gaps.len() / 2] / T::of(2.0);

    let mut out = Vec::with_capacity(est.len());
    for (i, t) in est.times.iter().enumerate() {
        let idx = match truth
            .times
            .binary_search_by(|probe| probe.partial_cmp(t).unwrap())
        {
            Ok(j) => j,
            Err(j) => {
                if j == 0 {
                    0
                } else if j >= truth.len() {
                    truth.len() - 1
                } else if (truth.times[j] - *t).abs() < (*t - truth.times[j - 1]).abs() {
                    j
                } else {
                    j - 1
                }
            }
        };
        if (truth.times[idx] - *t).abs() <= half_dt {
            out.push((&est.poses[i], &truth.poses[idx], *t));
        }
    }
    out
}

/// RMSE of translational residuals between timestamp-matched poses, after
/// an optional rigid (no-scale) alignment of the estimate onto the truth.
pub fn compute_ape<T: Real>(
    estimate: &Trajectory<T>,
    truth: &Trajectory<T>,
    align: bool,
) -> Result<ApeResult<T>> {
    let matches = match_poses(estimate, truth);
    if matches.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "APE needs >= 2 matched poses, got {}",
            matches.len()
        )));
    }
    let est_pts: Vec<Vector3<T>> = matches.iter().map(|(e, _, _)| e.translation).collect();
    let gt_pts: Vec<Vector3<T>> = matches.iter().map(|(_, g, _)| g.translation).collect();
    let alignment = if align {
        align_umeyama(&est_pts, &gt_pts)?
    } else {
        Pose::identity()
    };

    let mut sum_sq = T::zero();
    let mut sum = T::zero();
    let mut max = T::zero();
    for (e, g) in est_pts.iter().zip(&gt_pts) {
        let r = (alignment.transform(e) - g).norm();
        sum_sq += r * r;
        sum += r;
        if r > max {
            max = r;
        }
    }
    let n = T::of(matches.len() as f64);
    Ok(ApeResult {
        rmse: (sum_sq / n).sqrt(),
        mean: sum / n,
        max,
        matched: matches.len(),
        alignment,
    })
}

/// Mean relative translational error over the window `[t - tau, t]`: for
/// each consecutive matched pose pair, the difference between the true and
/// estimated body-frame relative motions.
pub fn compute_rte<T: Real>(
    estimate: &Trajectory<T>,
    truth: &Trajectory<T>,
    t: T,
    tau: T,
) -> Result<T> {
    let t0 = t - tau;
    let eps = T::of(1e-9);
    let covered = |traj: &Trajectory<T>| {
        !traj.is_empty() && traj.start_time() <= t0 + eps && traj.end_time() >= t - eps
    };
    if !covered(estimate) || !covered(truth) {
        return Err(Error::InsufficientData(format!(
            "window [{}, {}] not covered by both trajectories",
            t0.to_f64_lossy(),
            t.to_f64_lossy()
        )));
    }
    let matches: Vec<_> = match_poses(estimate, truth)
        .into_iter()
        .filter(|(_, _, ts)| *ts >= t0 - eps && *ts <= t + eps)
        .collect();
    if matches.len() < 2 {
        return Err(Error::InsufficientData(
            "RTE window holds fewer than 2 matched poses".into(),
        ));
    }
    let mut sum = T::zero();
    for w in matches.windows(2) {
        let (e0, g0, _) = w[0];
        let (e1, g1, _) = w[1];
        let rel_est = e0.inverse().compose(e1).translation;
        let rel_gt = g0.inverse().compose(g1).translation;
        sum += (rel_gt - rel_est).norm();
    }
    Ok(sum / T::of(matches.len() as f64 - 1.0))
}
