//! Simplified LiDAR odometry: scan-to-map point-to-plane Gauss-Newton
//! registration with a motion prior, producing a pose estimate and a 6x6
//! covariance, plus trajectory error metrics.

mod local_map;
mod metrics;

pub use local_map::LocalMap;
pub use metrics::{align_umeyama, compute_ape, compute_rte, ApeResult, TrajectoryMetrics};

use crate::error::{Error, Result};
use crate::geometry::{FrameChain, PointCloud, Pose};
use crate::scalar::Real;
use nalgebra::{Matrix3, Matrix6, Rotation3, Vector3, Vector6};

/// Registration tuning knobs. Covariance blocks are ordered rotation first,
/// translation second, matching the residual Jacobian layout.
#[derive(Debug, Clone)]
pub struct OdomConfig<T: Real> {
    pub max_iterations: usize,
    pub convergence_tol: T,
    pub huber_delta: T,
    /// point-to-plane measurement noise standard deviation (meters)
    pub measurement_sigma: T,
    pub corr_radius: T,
    pub min_correspondences: usize,
    pub window: T,
    pub knn: usize,
    pub map_cell: T,
    pub density_cell: T,
    pub max_points_per_cell: usize,
    pub max_scan_points: usize,
    /// Per-step process noise standard deviations (rad, m).
    pub process_sigma_rot: T,
    pub process_sigma_trans: T,
    /// Initial pose uncertainty standard deviations (rad, m).
    pub init_sigma_rot: T,
    pub init_sigma_trans: T,
}

impl<T: Real> Default for OdomConfig<T> {
    fn default() -> Self {
        let c = T::of;
        Self {
            max_iterations: 8,
            convergence_tol: c(1e-6),
            huber_delta: c(0.1),
            measurement_sigma: c(0.05),
            corr_radius: c(0.2),
            min_correspondences: 10,
            window: c(5.0),
            knn: 10,
            map_cell: c(0.5),
            density_cell: c(0.08),
            max_points_per_cell: 1,
            max_scan_points: 1500,
            process_sigma_rot: c(0.02),
            process_sigma_trans: c(0.05),
            init_sigma_rot: c(0.05),
            init_sigma_trans: c(0.1),
        }
    }
}

/// Diagnostics from one registration call.
#[derive(Debug, Clone, Default)]
pub struct RegistrationReport<T: Real> {
    pub iterations: usize,
    pub correspondences: usize,
    pub converged: bool,
    /// Robust cost per Gauss-Newton iteration.
    pub cost_history: Vec<T>,
}

/// Estimator state: pose, covariance, and the sliding-window local map.
#[derive(Debug, Clone)]
pub struct OdomState<T: Real> {
    pub pose: Pose<T>,
    pub covariance: Matrix6<T>,
    pub map: LocalMap<T>,
    initialized: bool,
}

impl<T: Real> OdomState<T> {
    pub fn new(cfg: &OdomConfig<T>) -> Self {
        Self {
            pose: Pose::identity(),
            covariance: initial_covariance(cfg),
            map: LocalMap::new(cfg.map_cell, cfg.density_cell, cfg.max_points_per_cell, cfg.knn),
            initialized: false,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Diagonal of the positional covariance block, for the policy input.
    pub fn positional_cov_diag(&self) -> Vector3<T> {
        Vector3::new(
            self.covariance[(3, 3)],
            self.covariance[(4, 4)],
            self.covariance[(5, 5)],
        )
    }

    /// Discards the measurement and adopts the prior with inflated
    /// covariance, the fallback on degenerate registration.
    pub fn fallback_to_prior(&mut self, prior: &Pose<T>, cfg: &OdomConfig<T>, scale: T) {
        self.pose = *prior;
        self.covariance = (propagated_covariance(&self.covariance, cfg) * scale).symmetric_part();
    }

    /// Registers a lidar-frame scan against the local map with a
    /// point-to-plane Gauss-Newton solve anchored by the motion prior.
    ///
    /// On success the pose and covariance are updated and the scan is merged
    /// into the map. On a degenerate-geometry error the state is untouched;
    /// callers typically invoke [`OdomState::fallback_to_prior`] then.
    pub fn register_scan(
        &mut self,
        scan: &PointCloud<T>,
        chain: &FrameChain<T>,
        prior: &Pose<T>,
        time: T,
        cfg: &OdomConfig<T>,
    ) -> Result<RegistrationReport<T>> {
        let lidar_in_body = chain.lidar_in_body();
        let body_points: Vec<Vector3<T>> = subsample(&scan.points, cfg.max_scan_points)
            .iter()
            .map(|p| lidar_in_body.transform(p))
            .collect();

        if !self.initialized {
            self.pose = *prior;
            self.covariance = initial_covariance(cfg);
            let world: Vec<Vector3<T>> = body_points.iter().map(|p| self.pose.transform(p)).collect();
            self.map.insert(&world, time);
            self.initialized = true;
            return Ok(RegistrationReport {
                iterations: 0,
                correspondences: 0,
                converged: true,
                cost_history: vec![],
            });
        }

        let sigma_prior = propagated_covariance(&self.covariance, cfg);
        let prior_info = sigma_prior
            .try_inverse()
            .ok_or_else(|| Error::Singular("prior covariance not invertible".into()))?;
        let meas_info = T::one() / (cfg.measurement_sigma * cfg.measurement_sigma);

        let mut pose = *prior;
        let mut report = RegistrationReport::default();
        let mut info_measurement = Matrix6::zeros();

        // correspondences are fixed at the prior pose: re-associating each
        // iteration lets pairs slip along self-similar surfaces and the
        // estimate ratchets away from the prior
        let pairs: Vec<(Vector3<T>, usize)> = body_points
            .iter()
            .filter_map(|p| {
                let q = prior.transform(p);
                self.map.nearest(&q, cfg.corr_radius).map(|(mi, _)| (*p, mi))
            })
            .collect();
        if pairs.len() < cfg.min_correspondences {
            return Err(Error::RegistrationDegenerate(
                pairs.len(),
                cfg.min_correspondences,
            ));
        }
        report.correspondences = pairs.len();

        for iter in 0..cfg.max_iterations {
            let mut h = Matrix6::zeros();
            let mut b = Vector6::zeros();
            let mut info = Matrix6::zeros();
            let mut cost = T::zero();

            for (p, mi) in &pairs {
                let q = pose.transform(p);
                let m = self.map.points[*mi];
                let n = self.map.normals[*mi];
                let eps = n.dot(&(q - m));
                let j = point_to_plane_jacobian(&(pose.rotation * p), &n);

                let abs = eps.abs();
                let (w, rho) = if abs <= cfg.huber_delta {
                    (T::one(), eps * eps / T::of(2.0))
                } else {
                    (
                        cfg.huber_delta / abs,
                        cfg.huber_delta * (abs - cfg.huber_delta / T::of(2.0)),
                    )
                };
                h += j * j.transpose() * (w * meas_info);
                b += j * (eps * w * meas_info);
                info += j * j.transpose() * meas_info;
                cost += rho * meas_info;
            }
            info_measurement = info;

            // motion-prior factor: anchors weakly observed directions
            let xi = pose_difference(&pose, prior);
            h += prior_info;
            b += prior_info * xi;
            cost += (xi.transpose() * prior_info * xi)[0] / T::of(2.0);
            report.cost_history.push(cost);

            let delta = solve_spd(&h, &(-b))?;
            pose = apply_delta(&pose, &delta);
            report.iterations = iter + 1;
            if delta.norm() < cfg.convergence_tol {
                report.converged = true;
                break;
            }
        }

        self.pose = pose;
        let post_info = info_measurement + prior_info;
        let cov = post_info
            .try_inverse()
            .ok_or_else(|| Error::Singular("information matrix not invertible".into()))?;
        self.covariance = cov.symmetric_part();

        let world: Vec<Vector3<T>> = body_points.iter().map(|p| self.pose.transform(p)).collect();
        self.map.insert(&world, time);
        self.map.trim(time, cfg.window);
        Ok(report)
    }
}

/// Uniform-stride subsample capping the scan size fed to the solver.
fn subsample<T: Copy>(points: &[T], max: usize) -> Vec<T> {
    if points.len() <= max {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(max);
    points.iter().step_by(stride).copied().collect()
}

/// Jacobian of the point-to-plane residual with respect to the 6-DoF pose,
/// rotation block first: `[(R p) x n ; n]`.
#[inline]
pub fn point_to_plane_jacobian<T: Real>(rotated_point: &Vector3<T>, normal: &Vector3<T>) -> Vector6<T> {
    let rot = rotated_point.cross(normal);
    Vector6::new(rot.x, rot.y, rot.z, normal.x, normal.y, normal.z)
}

fn initial_covariance<T: Real>(cfg: &OdomConfig<T>) -> Matrix6<T> {
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        m[(i, i)] = cfg.init_sigma_rot * cfg.init_sigma_rot;
        m[(i + 3, i + 3)] = cfg.init_sigma_trans * cfg.init_sigma_trans;
    }
    m
}

fn propagated_covariance<T: Real>(cov: &Matrix6<T>, cfg: &OdomConfig<T>) -> Matrix6<T> {
    let mut m = *cov;
    for i in 0..3 {
        m[(i, i)] += cfg.process_sigma_rot * cfg.process_sigma_rot;
        m[(i + 3, i + 3)] += cfg.process_sigma_trans * cfg.process_sigma_trans;
    }
    m
}

/// World-frame pose difference in the solver's tangent parameterization:
/// `[log(R R_ref^T) ; t - t_ref]`.
fn pose_difference<T: Real>(pose: &Pose<T>, reference: &Pose<T>) -> Vector6<T> {
    let dr = pose.rotation * reference.rotation.transpose();
    let aa = nalgebra::UnitQuaternion::from_rotation_matrix(
        &Rotation3::from_matrix_unchecked(dr),
    )
    .scaled_axis();
    let dt = pose.translation - reference.translation;
    Vector6::new(aa.x, aa.y, aa.z, dt.x, dt.y, dt.z)
}

/// Left-multiplicative update `R <- exp(dphi) R`, `t <- t + dt`.
fn apply_delta<T: Real>(pose: &Pose<T>, delta: &Vector6<T>) -> Pose<T> {
    let dphi = Vector3::new(delta[0], delta[1], delta[2]);
    let dt = Vector3::new(delta[3], delta[4], delta[5]);
    let dr: Matrix3<T> = *Rotation3::new(dphi).matrix();
    Pose::new(dr * pose.rotation, pose.translation + dt)
}

fn solve_spd<T: Real>(h: &Matrix6<T>, rhs: &Vector6<T>) -> Result<Vector6<T>> {
    nalgebra::Cholesky::new(h.symmetric_part())
        .map(|c| c.solve(rhs))
        .or_else(|| h.lu().solve(rhs))
        .ok_or_else(|| Error::Singular("normal equations singular".into()))
}
