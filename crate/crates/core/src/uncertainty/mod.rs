//! Predictive observability over candidate scan angles: synthetic scans
//! rendered from the panoramic depth map, the A-optimal uncertainty value
//! (trace of the inverse information matrix), and its differentiable
//! piecewise-linear surrogate.

use crate::geometry::pano::{bin_azimuth, bin_elevation, pano_bin_direction};
use crate::geometry::{PanoDepthMap, Pose};
use crate::scalar::{wrap_pi, wrap_tau, Real};
use crate::scansim::SensorModel;
use nalgebra::{Matrix6, Vector3, Vector6};
use rayon::prelude::*;

/// World-frame surface points with unit normals, the rendered scan
/// prediction for one candidate angle.
#[derive(Debug, Clone, Default)]
pub struct OrientedPoints<T: Real> {
    pub points: Vec<Vector3<T>>,
    pub normals: Vec<Vector3<T>>,
}

impl<T: Real> OrientedPoints<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Observability analysis output for one candidate angle.
#[derive(Debug, Clone)]
pub struct ObservabilityResult<T: Real> {
    pub theta: T,
    pub info: Matrix6<T>,
    /// trace of the inverse information matrix
    pub u_value: T,
    pub point_count: usize,
}

/// The N pre-sampled uncertainty values backing the surrogate cost,
/// anchored at `theta0` with spacing `dtheta`.
#[derive(Debug, Clone)]
pub struct UncertaintySamples<T: Real> {
    pub theta0: T,
    pub dtheta: T,
    pub values: Vec<T>,
}

impl<T: Real> UncertaintySamples<T> {
    pub fn new(theta0: T, dtheta: T, values: Vec<T>) -> Self {
        assert!(values.len() >= 4, "need at least 4 samples around the circle");
        Self {
            theta0,
            dtheta,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Debug dump as CSV rows of `(s, theta_s, u_s)` for plotting.
    pub fn write_csv(&self, path: &std::path::Path) -> crate::error::Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "s,theta,u")?;
        for (s, u) in self.values.iter().enumerate() {
            let theta = crate::scalar::wrap_tau(self.theta0 + self.dtheta * T::of(s as f64));
            writeln!(f, "{},{:.9},{:.9}", s, theta.to_f64_lossy(), u.to_f64_lossy())?;
        }
        Ok(())
    }

    /// Stable fingerprint of the sample set, for episode logs.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = rustc_hash::FxHasher::default();
        self.theta0.to_f64_lossy().to_bits().hash(&mut h);
        self.dtheta.to_f64_lossy().to_bits().hash(&mut h);
        for v in &self.values {
            v.to_f64_lossy().to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Renders the synthetic point set a scan directed at `theta` would see,
/// by back-projecting the pano bins inside the sensor's field of view
/// (seam-wrapped in azimuth). Normals come from pano neighborhood
/// gradients. Points and normals are returned in the world frame.
pub fn predict_scan<T: Real>(
    pano: &PanoDepthMap<T>,
    theta: T,
    sensor: &SensorModel<T>,
    body_pose: &Pose<T>,
) -> OrientedPoints<T> {
    let (w, h) = (pano.width(), pano.height());
    let half_h = sensor.fov_horizontal / T::of(2.0);
    let half_v = sensor.fov_vertical / T::of(2.0);

    let mut out = OrientedPoints::default();
    for v in 0..h {
        let el = bin_elevation::<T>(v, h);
        if el.abs() > half_v {
            continue;
        }
        for u in 0..w {
            if !pano.is_hit(u, v) {
                continue;
            }
            let az = bin_azimuth::<T>(u, w);
            if wrap_pi(az - theta).abs() > half_h {
                continue;
            }
            let p_body = pano_bin_direction::<T>(u, v, w, h) * pano.range(u, v);
            let n_body = pano_gradient_normal(pano, u, v);
            out.points.push(body_pose.transform(&p_body));
            out.normals.push(body_pose.rotation * n_body);
        }
    }
    out
}

/// Surface normal at bin (u, v) from the cross product of the azimuth and
/// elevation finite differences of the back-projected neighborhood; falls
/// back to the viewing direction when neighbors are missing.
fn pano_gradient_normal<T: Real>(pano: &PanoDepthMap<T>, u: usize, v: usize) -> Vector3<T> {
    let (w, h) = (pano.width(), pano.height());
    let point_at = |uu: usize, vv: usize| -> Option<Vector3<T>> {
        pano.is_hit(uu, vv)
            .then(|| pano_bin_direction::<T>(uu, vv, w, h) * pano.range(uu, vv))
    };
    let center = point_at(u, v).expect("caller checked hit");

    let left = point_at((u + w - 1) % w, v);
    let right = point_at((u + 1) % w, v);
    let du = match (left, right) {
        (Some(a), Some(b)) => Some(b - a),
        (Some(a), None) => Some(center - a),
        (None, Some(b)) => Some(b - center),
        (None, None) => None,
    };
    let up = (v > 0).then(|| point_at(u, v - 1)).flatten();
    let down = (v + 1 < h).then(|| point_at(u, v + 1)).flatten();
    let dv = match (up, down) {
        (Some(a), Some(b)) => Some(b - a),
        (Some(a), None) => Some(center - a),
        (None, Some(b)) => Some(b - center),
        (None, None) => None,
    };

    if let (Some(du), Some(dv)) = (du, dv) {
        let n = du.cross(&dv);
        let norm = n.norm();
        if norm > T::of(1e-12) {
            return n / norm;
        }
    }
    -center.normalize()
}

/// Jacobian of the point-to-plane residual at a world point with respect to
/// the body pose, rotation block first.
pub fn residual_jacobian<T: Real>(
    point_world: &Vector3<T>,
    normal: &Vector3<T>,
    body_pose_estimate: &Pose<T>,
) -> Vector6<T> {
    // R p equals the world point relative to the body origin
    let rp = point_world - body_pose_estimate.translation;
    let rot = rp.cross(normal);
    Vector6::new(rot.x, rot.y, rot.z, normal.x, normal.y, normal.z)
}

/// A-optimal uncertainty of a rendered point set: assembles the damped
/// information matrix from the residual Jacobians and returns the trace of
/// its inverse (rotation and translation contributions summed unweighted).
pub fn a_optimal_u<T: Real>(
    points: &OrientedPoints<T>,
    theta: T,
    body_pose_estimate: &Pose<T>,
    damping: T,
) -> ObservabilityResult<T> {
    a_optimal_u_weighted(points, theta, body_pose_estimate, damping, &Vector6::repeat(T::one()))
}

/// [`a_optimal_u`] with a diagonal weighting of the six pose directions in
/// the trace: `sum_i w_i [Lambda^-1]_ii`.
pub fn a_optimal_u_weighted<T: Real>(
    points: &OrientedPoints<T>,
    theta: T,
    body_pose_estimate: &Pose<T>,
    damping: T,
    trace_weights: &Vector6<T>,
) -> ObservabilityResult<T> {
    let mut info = Matrix6::zeros();
    for (p, n) in points.points.iter().zip(&points.normals) {
        let j = residual_jacobian(p, n, body_pose_estimate);
        info += j * j.transpose();
    }
    let mut damped = info;
    for i in 0..6 {
        damped[(i, i)] += damping;
    }
    let u_value = weighted_trace_of_inverse(&damped, trace_weights);
    ObservabilityResult {
        theta,
        info: damped,
        u_value,
        point_count: points.len(),
    }
}

/// `sum_i w_i [M^-1]_ii` via Cholesky solves against the canonical basis.
fn weighted_trace_of_inverse<T: Real>(m: &Matrix6<T>, w: &Vector6<T>) -> T {
    if let Some(chol) = nalgebra::Cholesky::new(*m) {
        let mut tr = T::zero();
        for i in 0..6 {
            let mut e = Vector6::zeros();
            e[i] = T::one();
            tr += w[i] * chol.solve(&e)[i];
        }
        tr
    } else {
        // damping keeps this path rare; fall back to a dense inverse
        m.try_inverse()
            .map(|inv| {
                let mut tr = T::zero();
                for i in 0..6 {
                    tr += w[i] * inv[(i, i)];
                }
                tr
            })
            .unwrap_or_else(T::no_return)
    }
}

/// Samples the uncertainty value at `N = round(2π/Δθ)` angles anchored at
/// `theta_t`, evaluated in parallel with deterministic ordering.
pub fn sample_uncertainty<T: Real>(
    pano: &PanoDepthMap<T>,
    theta_t: T,
    dtheta: T,
    sensor: &SensorModel<T>,
    body_pose: &Pose<T>,
    damping: T,
) -> UncertaintySamples<T> {
    sample_uncertainty_weighted(
        pano,
        theta_t,
        dtheta,
        sensor,
        body_pose,
        damping,
        &Vector6::repeat(T::one()),
    )
}

/// [`sample_uncertainty`] with a diagonal trace weighting.
#[allow(clippy::too_many_arguments)]
pub fn sample_uncertainty_weighted<T: Real>(
    pano: &PanoDepthMap<T>,
    theta_t: T,
    dtheta: T,
    sensor: &SensorModel<T>,
    body_pose: &Pose<T>,
    damping: T,
    trace_weights: &Vector6<T>,
) -> UncertaintySamples<T> {
    let n = (T::two_pi() / dtheta).round().to_f64_lossy() as usize;
    assert!(n >= 4, "dtheta too coarse");
    let values: Vec<T> = (0..n)
        .into_par_iter()
        .map(|s| {
            let theta = wrap_tau(theta_t + dtheta * T::of(s as f64));
            let rendered = predict_scan(pano, theta, sensor, body_pose);
            a_optimal_u_weighted(&rendered, theta, body_pose, damping, trace_weights).u_value
        })
        .collect();
    UncertaintySamples::new(theta_t, dtheta, values)
}

/// Piecewise-linear surrogate cost and its angle gradient. Periodic in 2π;
/// the gradient between knots is the slope of the active segment.
pub fn surrogate_cost<T: Real>(samples: &UncertaintySamples<T>, theta: T) -> (T, T) {
    let n = samples.values.len();
    let mut i = wrap_tau(theta - samples.theta0) / samples.dtheta;
    let nt = T::of(n as f64);
    if i >= nt {
        i -= nt;
    }
    let mut idx = i.floor().to_f64_lossy() as usize;
    let mut delta = i - T::of(idx as f64);
    // snap to the knot when floating-point wrap left a vanishing fraction
    let snap = T::of(1e-9);
    if delta < snap {
        delta = T::zero();
    } else if delta > T::one() - snap {
        delta = T::zero();
        idx += 1;
    }
    let idx = idx % n;
    let next = (idx + 1) % n;
    let (u0, u1) = (samples.values[idx], samples.values[next]);
    let cost = (T::one() - delta) * u0 + delta * u1;
    let grad = (u1 - u0) / samples.dtheta;
    (cost, grad)
}
