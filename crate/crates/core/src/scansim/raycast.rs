//! Virtual LiDAR scan synthesis by raycasting against the point-cloud map.

use crate::geometry::{Frame, PointCloud, Pose};
use crate::scalar::Real;
use crate::scansim::map::WorldMap;
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustc_hash::FxHashSet;

/// Sensor geometry: a rectangular ray grid spanning the horizontal and
/// vertical fields of view, centered on the lidar +x axis.
#[derive(Debug, Clone)]
pub struct SensorModel<T: Real> {
    pub fov_horizontal: T,
    pub fov_vertical: T,
    pub n_azimuth: usize,
    pub n_elevation: usize,
    pub max_range: T,
    pub range_sigma: T,
}

impl<T: Real> SensorModel<T> {
    pub fn new(
        fov_horizontal: T,
        fov_vertical: T,
        n_azimuth: usize,
        n_elevation: usize,
        max_range: T,
        range_sigma: T,
    ) -> Self {
        assert!(fov_horizontal > T::zero() && fov_horizontal <= T::two_pi());
        assert!(fov_vertical > T::zero() && fov_vertical <= T::pi());
        assert!(n_azimuth >= 1 && n_elevation >= 1);
        Self {
            fov_horizontal,
            fov_vertical,
            n_azimuth,
            n_elevation,
            max_range,
            range_sigma,
        }
    }

    /// Ray directions in the lidar frame, at the centers of the grid cells.
    pub fn ray_directions(&self) -> Vec<Vector3<T>> {
        let mut dirs = Vec::with_capacity(self.n_azimuth * self.n_elevation);
        let half = T::of(0.5);
        for ie in 0..self.n_elevation {
            let el = (T::of(ie as f64) + half) / T::of(self.n_elevation as f64)
                * self.fov_vertical
                - self.fov_vertical * half;
            for ia in 0..self.n_azimuth {
                let az = (T::of(ia as f64) + half) / T::of(self.n_azimuth as f64)
                    * self.fov_horizontal
                    - self.fov_horizontal * half;
                dirs.push(Vector3::new(
                    el.cos() * az.cos(),
                    el.cos() * az.sin(),
                    el.sin(),
                ));
            }
        }
        dirs
    }
}

/// Range of the nearest map point within `hit_radius` of the ray from
/// `origin` along unit `dir`, marching at half-cell steps up to `max_march`.
/// The 3x3x3 neighborhood of every sampled cell is examined so that points
/// straddling cell borders are not missed.
fn cast_ray<T: Real>(
    map: &WorldMap<T>,
    origin: &Vector3<T>,
    dir: &Vector3<T>,
    max_march: T,
) -> Option<T> {
    let cell = T::of(map.grid.cell_size());
    let hit_r = map.hit_radius;
    let points = &map.cloud.points;

    let mut best: Option<(T, u32)> = None;
    let mut visited: FxHashSet<(i32, i32, i32)> = FxHashSet::default();

    let step = cell * T::of(0.5);
    let n_steps = (max_march / step).ceil().to_f64_lossy() as usize;

    let mut s = T::zero();
    for _ in 0..=n_steps {
        let sample = origin + dir * s;
        let center = map.grid.key_of(&sample);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = (center.0 + dx, center.1 + dy, center.2 + dz);
                    if !visited.insert(key) {
                        continue;
                    }
                    if let Some(idxs) = map.grid.cell(&key) {
                        for &i in idxs {
                            let rel = points[i as usize] - origin;
                            let along = rel.dot(dir);
                            if along <= T::zero() {
                                continue;
                            }
                            let perp2 = rel.norm_squared() - along * along;
                            if perp2 <= hit_r * hit_r {
                                match best {
                                    Some((b, bi)) if along > b || (along == b && i >= bi) => {}
                                    _ => best = Some((along, i)),
                                }
                            }
                        }
                    }
                }
            }
        }
        // nothing later along the ray can beat an established hit
        if let Some((b, _)) = best {
            if s > b + hit_r + cell {
                break;
            }
        }
        s += step;
    }
    // refine the range by intersecting the ray with the hit point's
    // tangent plane; the raw along-ray projection is biased short at
    // grazing incidence by up to hit_radius / sin(incidence)
    best.map(|(along, i)| {
        let n = map.normals[i as usize];
        let m = map.cloud.points[i as usize];
        let denom = n.dot(dir);
        if denom.abs() > T::of(1e-3) {
            let r = n.dot(&(m - origin)) / denom;
            if r > T::zero() && (r - along).abs() <= cell {
                return r;
            }
        }
        along
    })
}

/// Synthesizes one LiDAR scan: for every sensor ray, the nearest map point
/// within the hit radius and inside `max_range`, with Gaussian range noise,
/// expressed in the lidar frame. Rays with no hit produce no point.
pub fn raycast_scan<T: Real, R: Rng>(
    map: &WorldMap<T>,
    sensor: &SensorModel<T>,
    lidar_pose_in_world: &Pose<T>,
    rng: &mut R,
) -> PointCloud<T> {
    let mut out = PointCloud::new(Frame::Lidar);
    if map.is_empty() {
        return out;
    }
    let origin = lidar_pose_in_world.translation;
    let noise = (sensor.range_sigma > T::zero())
        .then(|| Normal::new(0.0f64, sensor.range_sigma.to_f64_lossy()).unwrap());
    let max_march = sensor.max_range + map.hit_radius;
    for dir_lidar in sensor.ray_directions() {
        let dir_world = lidar_pose_in_world.rotation * dir_lidar;
        let Some(range) = cast_ray(map, &origin, &dir_world, max_march) else {
            continue;
        };
        if range > sensor.max_range {
            continue;
        }
        let mut r = range;
        if let Some(n) = &noise {
            r += T::of(n.sample(rng));
        }
        if r > T::zero() && r <= sensor.max_range {
            out.points.push(dir_lidar * r);
        }
    }
    out
}
