//! Timestamped pose trajectories: SE(3) interpolation and TUM-format I/O.

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::scalar::Real;
use nalgebra::{UnitQuaternion, Vector3};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Time-sorted pose sequence.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub poses: Vec<Pose<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(times: Vec<T>, poses: Vec<Pose<T>>) -> Result<Self> {
        if times.len() != poses.len() {
            return Err(Error::Config("trajectory times/poses length mismatch".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("trajectory times must be strictly increasing".into()));
        }
        Ok(Self { times, poses })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_time(&self) -> T {
        self.times[0]
    }

    pub fn end_time(&self) -> T {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> T {
        self.end_time() - self.start_time()
    }

    /// SE(3)-interpolated pose at `t`: linear translation, slerp rotation.
    pub fn sample(&self, t: T) -> Result<Pose<T>> {
        if self.is_empty() {
            return Err(Error::InsufficientData("empty trajectory".into()));
        }
        if t < self.start_time() || t > self.end_time() {
            return Err(Error::OutOfRange(format!(
                "t = {} outside [{}, {}]",
                t.to_f64_lossy(),
                self.start_time().to_f64_lossy(),
                self.end_time().to_f64_lossy()
            )));
        }
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return Ok(self.poses[i]),
            Err(i) => i,
        };
        let (i0, i1) = (idx - 1, idx);
        let span = self.times[i1] - self.times[i0];
        let alpha = (t - self.times[i0]) / span;

        let p0 = &self.poses[i0];
        let p1 = &self.poses[i1];
        let q = p0.quaternion().slerp(&p1.quaternion(), alpha);
        let tr = p0.translation * (T::one() - alpha) + p1.translation * alpha;
        Ok(Pose::from_quaternion(q, tr))
    }

    /// Body-frame velocity at `t` from a central finite difference.
    pub fn body_velocity(&self, t: T, h: T) -> Result<Vector3<T>> {
        let lo = if t - h < self.start_time() { self.start_time() } else { t - h };
        let hi = if t + h > self.end_time() { self.end_time() } else { t + h };
        if hi <= lo {
            return Err(Error::InsufficientData("trajectory too short for velocity".into()));
        }
        let a = self.sample(lo)?;
        let b = self.sample(hi)?;
        let world_vel = (b.translation - a.translation) / (hi - lo);
        let at = self.sample(t)?;
        Ok(at.rotation.transpose() * world_vel)
    }
}

/// Reads a TUM-format trajectory: `timestamp tx ty tz qx qy qz qw` per line,
/// `#` comments ignored.
pub fn load_tum<T: Real>(path: &Path) -> Result<Trajectory<T>> {
    let file = std::fs::File::open(path)?;
    let mut times = Vec::new();
    let mut poses = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = trimmed
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("bad number at line {}", lineno + 1)))?;
        if vals.len() != 8 {
            return Err(Error::Parse(format!(
                "line {} has {} fields, expected 8",
                lineno + 1,
                vals.len()
            )));
        }
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            T::of(vals[7]),
            T::of(vals[4]),
            T::of(vals[5]),
            T::of(vals[6]),
        ));
        times.push(T::of(vals[0]));
        poses.push(Pose::from_quaternion(
            q,
            Vector3::new(T::of(vals[1]), T::of(vals[2]), T::of(vals[3])),
        ));
    }
    Trajectory::new(times, poses)
}

/// Writes a trajectory in TUM format with fixed decimal precision.
pub fn save_tum<T: Real>(path: &Path, traj: &Trajectory<T>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for (t, pose) in traj.times.iter().zip(&traj.poses) {
        let q = pose.quaternion();
        let tr = pose.translation;
        writeln!(
            w,
            "{:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            t.to_f64_lossy(),
            tr.x.to_f64_lossy(),
            tr.y.to_f64_lossy(),
            tr.z.to_f64_lossy(),
            q.i.to_f64_lossy(),
            q.j.to_f64_lossy(),
            q.k.to_f64_lossy(),
            q.w.to_f64_lossy(),
        )?;
    }
    Ok(())
}
