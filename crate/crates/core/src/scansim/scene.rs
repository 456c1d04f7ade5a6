//! Procedurally generated worlds and reference trajectories: a corridor
//! with wall texture and ribs, a box room with apertures, and a forest of
//! vertical trunks over a ground plane.

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::scalar::Real;
use crate::scansim::map::WorldMap;
use crate::scansim::trajectory::Trajectory;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Tunnel,
    Room,
    Forest,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tunnel" => Ok(SceneKind::Tunnel),
            "room" => Ok(SceneKind::Room),
            "forest" => Ok(SceneKind::Forest),
            other => Err(Error::Config(format!("unknown scene kind {other}"))),
        }
    }
}

/// Generation parameters; every dimension is meters, every rate seconds.
#[derive(Debug, Clone)]
pub struct SceneParams<T: Real> {
    pub pitch: T,
    pub speed: T,
    pub traj_dt: T,
    pub cell_size: T,

    pub tunnel_length: T,
    pub tunnel_width: T,
    pub tunnel_height: T,
    pub wall_amplitude: T,
    pub wall_period: T,
    pub texture_noise: T,
    pub rib_spacing: T,
    pub rib_depth: T,
    pub rib_width: T,

    pub room_width: T,
    pub room_depth: T,
    pub room_height: T,
    pub room_loops: T,

    pub forest_extent: T,
    pub trunk_density: T,
    pub trunk_radius: T,
    pub trunk_height: T,
}

impl<T: Real> Default for SceneParams<T> {
    fn default() -> Self {
        let c = T::of;
        Self {
            pitch: c(0.10),
            speed: c(2.0),
            traj_dt: c(0.1),
            cell_size: c(0.5),
            tunnel_length: c(140.0),
            tunnel_width: c(6.0),
            tunnel_height: c(4.0),
            wall_amplitude: c(0.15),
            wall_period: c(7.0),
            texture_noise: c(0.01),
            rib_spacing: c(12.0),
            rib_depth: c(0.35),
            rib_width: c(0.4),
            room_width: c(14.0),
            room_depth: c(11.0),
            room_height: c(4.0),
            room_loops: c(4.0),
            forest_extent: c(50.0),
            trunk_density: c(0.08),
            trunk_radius: c(0.25),
            trunk_height: c(6.0),
        }
    }
}

/// Axis-aligned box room centered in x/y with the floor at z = 0; returns
/// points and inward normals. Shared by tests and the room generator.
pub fn box_room_points<T: Real>(
    width: T,
    depth: T,
    height: T,
    pitch: T,
) -> (Vec<Vector3<T>>, Vec<Vector3<T>>) {
    let mut pts = Vec::new();
    let mut ns = Vec::new();
    let hx = width / T::of(2.0);
    let hy = depth / T::of(2.0);
    let steps = |span: T| (span / pitch).round().to_f64_lossy() as usize;

    // walls at x = ±hx
    for iy in 0..=steps(depth) {
        let y = -hy + pitch * T::of(iy as f64);
        for iz in 0..=steps(height) {
            let z = pitch * T::of(iz as f64);
            pts.push(Vector3::new(hx, y, z));
            ns.push(Vector3::new(-T::one(), T::zero(), T::zero()));
            pts.push(Vector3::new(-hx, y, z));
            ns.push(Vector3::new(T::one(), T::zero(), T::zero()));
        }
    }
    // walls at y = ±hy
    for ix in 0..=steps(width) {
        let x = -hx + pitch * T::of(ix as f64);
        for iz in 0..=steps(height) {
            let z = pitch * T::of(iz as f64);
            pts.push(Vector3::new(x, hy, z));
            ns.push(Vector3::new(T::zero(), -T::one(), T::zero()));
            pts.push(Vector3::new(x, -hy, z));
            ns.push(Vector3::new(T::zero(), T::one(), T::zero()));
        }
    }
    // floor and ceiling
    for ix in 0..=steps(width) {
        let x = -hx + pitch * T::of(ix as f64);
        for iy in 0..=steps(depth) {
            let y = -hy + pitch * T::of(iy as f64);
            pts.push(Vector3::new(x, y, T::zero()));
            ns.push(Vector3::new(T::zero(), T::zero(), T::one()));
            pts.push(Vector3::new(x, y, height));
            ns.push(Vector3::new(T::zero(), T::zero(), -T::one()));
        }
    }
    (pts, ns)
}

/// Deterministic synthetic scene: a world map plus a reference trajectory
/// traversing it at the configured speed.
pub fn generate_synthetic_scene<T: Real>(
    kind: SceneKind,
    seed: u64,
    params: &SceneParams<T>,
) -> Result<(WorldMap<T>, Trajectory<T>)> {
    if params.pitch <= T::zero() || params.speed <= T::zero() || params.traj_dt <= T::zero() {
        return Err(Error::Config("pitch, speed, traj_dt must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, normals, traj) = match kind {
        SceneKind::Tunnel => tunnel_scene(params, &mut rng)?,
        SceneKind::Room => room_scene(params, &mut rng)?,
        SceneKind::Forest => forest_scene(params, &mut rng)?,
    };
    let map = WorldMap::with_normals(points, normals, params.cell_size, params.pitch / T::of(2.0))?;
    Ok((map, traj))
}

fn check_positive<T: Real>(vals: &[(T, &str)]) -> Result<()> {
    for (v, name) in vals {
        if *v <= T::zero() {
            return Err(Error::Config(format!("{name} must be positive")));
        }
    }
    Ok(())
}

type ScenePieces<T> = (Vec<Vector3<T>>, Vec<Vector3<T>>, Trajectory<T>);

/// Corridor along +x. Side walls carry a sinusoidal displacement plus
/// point noise, and ring ribs protrude inward every `rib_spacing` meters;
/// the rib side faces are the only surfaces with ±x normals, which is what
/// makes some scan directions more informative than others here.
fn tunnel_scene<T: Real>(p: &SceneParams<T>, rng: &mut ChaCha8Rng) -> Result<ScenePieces<T>> {
    check_positive(&[
        (p.tunnel_length, "tunnel_length"),
        (p.tunnel_width, "tunnel_width"),
        (p.tunnel_height, "tunnel_height"),
    ])?;
    let mut pts = Vec::new();
    let mut ns = Vec::new();
    let hw = p.tunnel_width / T::of(2.0);
    let len = p.tunnel_length;
    let steps = |span: T| (span / p.pitch).round().to_f64_lossy() as usize;
    let two_pi = T::two_pi();

    let in_rib = |x: T| -> bool {
        if p.rib_spacing <= T::zero() {
            return false;
        }
        let k = (x / p.rib_spacing).round();
        k >= T::one() && (x - k * p.rib_spacing).abs() <= p.rib_width / T::of(2.0)
    };
    let wall_f = |x: T| p.wall_amplitude * (two_pi * x / p.wall_period).sin();
    let wall_fx = |x: T| p.wall_amplitude * (two_pi / p.wall_period) * (two_pi * x / p.wall_period).cos();

    for ix in 0..=steps(len) {
        let x = p.pitch * T::of(ix as f64);
        let f = wall_f(x);
        let fx = wall_fx(x);
        let rib = in_rib(x);
        let d = if rib { p.rib_depth } else { T::zero() };
        for iz in 0..=steps(p.tunnel_height) {
            let z = p.pitch * T::of(iz as f64);
            let jitter = T::of(rng.gen_range(-1.0..1.0)) * p.texture_noise;
            // +y wall, inward normal has a -y component
            let n_plus = Vector3::new(-fx, -T::one(), T::zero()).normalize();
            pts.push(Vector3::new(x, hw - f - d + jitter, z));
            ns.push(n_plus);
            // -y wall mirrors it
            let jitter = T::of(rng.gen_range(-1.0..1.0)) * p.texture_noise;
            let n_minus = Vector3::new(-fx, T::one(), T::zero()).normalize();
            pts.push(Vector3::new(x, -hw + f + d + jitter, z));
            ns.push(n_minus);
        }
        for iy in 0..=steps(p.tunnel_width) {
            let y = -hw + p.pitch * T::of(iy as f64);
            let jitter = T::of(rng.gen_range(-1.0..1.0)) * p.texture_noise;
            pts.push(Vector3::new(x, y, jitter));
            ns.push(Vector3::z());
            let jitter = T::of(rng.gen_range(-1.0..1.0)) * p.texture_noise;
            pts.push(Vector3::new(x, y, p.tunnel_height - d + jitter));
            ns.push(-Vector3::z());
        }
    }

    // rib side faces: annular bands facing ±x
    if p.rib_spacing > T::zero() && p.rib_depth > T::zero() {
        let mut k = T::one();
        while k * p.rib_spacing < len {
            let xc = k * p.rib_spacing;
            for (x_face, sign) in [
                (xc - p.rib_width / T::of(2.0), -T::one()),
                (xc + p.rib_width / T::of(2.0), T::one()),
            ] {
                let f = wall_f(x_face);
                for iz in 0..=steps(p.tunnel_height) {
                    let z = p.pitch * T::of(iz as f64);
                    let mut d = p.pitch;
                    while d <= p.rib_depth {
                        pts.push(Vector3::new(x_face, hw - f - d, z));
                        ns.push(Vector3::new(sign, T::zero(), T::zero()));
                        pts.push(Vector3::new(x_face, -hw + f + d, z));
                        ns.push(Vector3::new(sign, T::zero(), T::zero()));
                        d += p.pitch;
                    }
                }
                for iy in 0..=steps(p.tunnel_width) {
                    let y = -hw + p.pitch * T::of(iy as f64);
                    let mut d = p.pitch;
                    while d <= p.rib_depth {
                        pts.push(Vector3::new(x_face, y, p.tunnel_height - d));
                        ns.push(Vector3::new(sign, T::zero(), T::zero()));
                        d += p.pitch;
                    }
                }
            }
            k += T::one();
        }
    }

    // straight flight down the center line
    let duration = len / p.speed;
    let n = (duration / p.traj_dt).floor().to_f64_lossy() as usize;
    let mut times = Vec::with_capacity(n + 1);
    let mut poses = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = p.traj_dt * T::of(i as f64);
        times.push(t);
        poses.push(Pose::from_translation(Vector3::new(
            p.speed * t,
            T::zero(),
            p.tunnel_height / T::of(2.0),
        )));
    }
    Ok((pts, ns, Trajectory::new(times, poses)?))
}

/// Box room with a door aperture in the +x wall and a window in the +y
/// wall; the trajectory is a circular loop inside the room with the body
/// yaw following the path tangent.
fn room_scene<T: Real>(p: &SceneParams<T>, rng: &mut ChaCha8Rng) -> Result<ScenePieces<T>> {
    check_positive(&[
        (p.room_width, "room_width"),
        (p.room_depth, "room_depth"),
        (p.room_height, "room_height"),
    ])?;
    let (raw_pts, raw_ns) = box_room_points(p.room_width, p.room_depth, p.room_height, p.pitch);
    let hx = p.room_width / T::of(2.0);
    let hy = p.room_depth / T::of(2.0);

    // door: 1 x 2.2 m in the +x wall at y ~ 0; window: 1.6 x 1.2 m in the
    // +y wall
    let door = |pt: &Vector3<T>| -> bool {
        (pt.x - hx).abs() < p.pitch / T::of(2.0)
            && pt.y.abs() < T::of(0.5)
            && pt.z < T::of(2.2)
    };
    let window = |pt: &Vector3<T>| -> bool {
        (pt.y - hy).abs() < p.pitch / T::of(2.0)
            && pt.x.abs() < T::of(0.8)
            && (pt.z - T::of(1.6)).abs() < T::of(0.6)
    };

    let mut pts = Vec::new();
    let mut ns = Vec::new();
    for (pt, n) in raw_pts.into_iter().zip(raw_ns) {
        if door(&pt) || window(&pt) {
            continue;
        }
        let jitter = T::of(rng.gen_range(-1.0..1.0)) * p.texture_noise;
        pts.push(pt + n * jitter);
        ns.push(n);
    }

    let radius = (if hx < hy { hx } else { hy }) * T::of(0.55);
    let circumference = T::two_pi() * radius;
    let duration = circumference * p.room_loops / p.speed;
    let n_steps = (duration / p.traj_dt).floor().to_f64_lossy() as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut poses = Vec::with_capacity(n_steps + 1);
    for i in 0..=n_steps {
        let t = p.traj_dt * T::of(i as f64);
        let ang = p.speed * t / radius;
        let pos = Vector3::new(
            radius * ang.cos(),
            radius * ang.sin(),
            p.room_height / T::of(2.0),
        );
        let yaw = ang + T::frac_pi_2();
        times.push(t);
        poses.push(Pose::from_quaternion(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            pos,
        ));
    }
    Ok((pts, ns, Trajectory::new(times, poses)?))
}

/// Ground plane plus random vertical cylinders; density 0 gives the bare
/// plane. The trajectory is a straight diagonal pass at constant height.
fn forest_scene<T: Real>(p: &SceneParams<T>, rng: &mut ChaCha8Rng) -> Result<ScenePieces<T>> {
    check_positive(&[(p.forest_extent, "forest_extent")])?;
    if p.trunk_density < T::zero() {
        return Err(Error::Config("trunk_density must be >= 0".into()));
    }
    let mut pts = Vec::new();
    let mut ns = Vec::new();
    let half = p.forest_extent / T::of(2.0);
    let steps = (p.forest_extent / p.pitch).round().to_f64_lossy() as usize;

    for ix in 0..=steps {
        let x = -half + p.pitch * T::of(ix as f64);
        for iy in 0..=steps {
            let y = -half + p.pitch * T::of(iy as f64);
            let jitter = T::of(rng.gen_range(-1.0..1.0)) * p.texture_noise;
            pts.push(Vector3::new(x, y, jitter));
            ns.push(Vector3::z());
        }
    }

    let area = (p.forest_extent * p.forest_extent).to_f64_lossy();
    let n_trunks = (p.trunk_density.to_f64_lossy() * area).round() as usize;
    for _ in 0..n_trunks {
        let cx = T::of(rng.gen_range(-0.9..0.9)) * half;
        let cy = T::of(rng.gen_range(-0.9..0.9)) * half;
        let n_ang = ((T::two_pi() * p.trunk_radius / p.pitch)
            .round()
            .to_f64_lossy() as usize)
            .max(6);
        let n_z = (p.trunk_height / p.pitch).round().to_f64_lossy() as usize;
        for ia in 0..n_ang {
            let ang = T::two_pi() * T::of(ia as f64) / T::of(n_ang as f64);
            let dir = Vector3::new(ang.cos(), ang.sin(), T::zero());
            for iz in 0..=n_z {
                let z = p.pitch * T::of(iz as f64);
                pts.push(Vector3::new(cx, cy, T::zero()) + dir * p.trunk_radius + Vector3::new(T::zero(), T::zero(), z));
                ns.push(dir);
            }
        }
    }

    // diagonal pass with tangent-aligned yaw
    let start = Vector3::new(-half * T::of(0.8), -half * T::of(0.8), T::of(1.5));
    let end = Vector3::new(half * T::of(0.8), half * T::of(0.8), T::of(1.5));
    let dir = end - start;
    let dist = dir.norm();
    let yaw = dir.y.atan2(dir.x);
    let duration = dist / p.speed;
    let n = (duration / p.traj_dt).floor().to_f64_lossy() as usize;
    let mut times = Vec::with_capacity(n + 1);
    let mut poses = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = p.traj_dt * T::of(i as f64);
        let alpha = t / duration;
        times.push(t);
        poses.push(Pose::from_quaternion(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            start + dir * alpha,
        ));
    }
    Ok((pts, ns, Trajectory::new(times, poses)?))
}
