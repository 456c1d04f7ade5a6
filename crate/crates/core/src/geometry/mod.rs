//! Coordinate frames, rigid transforms, point-cloud containers and the
//! panoramic depth projection shared by all downstream modules.

pub(crate) mod pano;
mod ply;

pub use pano::{bin_azimuth, bin_elevation, pano_bin_direction, project_to_pano, PanoDepthMap};
pub use ply::{load_ply, save_ply_binary, PlyCloud};

use crate::error::{Error, Result};
use crate::scalar::{wrap_tau, Real};
use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};

/// Coordinate frame a point cloud is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    World,
    Body,
    Lidar,
}

/// SE(3) rigid transform: orthonormal rotation plus translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Pure rotation about the Z axis.
    pub fn rot_z(angle: T) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<T>, t: Vector3<T>) -> Self {
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: t,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// Checks `R^T R = I` and `det R = +1` to the stated tolerance.
    pub fn validate(&self, tol: T) -> Result<()> {
        let gram = self.rotation.transpose() * self.rotation;
        let err = (gram - Matrix3::identity()).norm();
        if err > tol {
            return Err(Error::Config(format!(
                "rotation not orthonormal: |R^T R - I| = {}",
                err.to_f64_lossy()
            )));
        }
        let det = self.rotation.determinant();
        if (det - T::one()).abs() > tol {
            return Err(Error::Config(format!(
                "rotation determinant {} != +1",
                det.to_f64_lossy()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose<T> {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// 4x4 homogeneous matrix form.
    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Container for 3D points tagged with the frame they are expressed in.
#[derive(Debug, Clone)]
pub struct PointCloud<T: Real> {
    pub points: Vec<Vector3<T>>,
    frame: Frame,
}

impl<T: Real> PointCloud<T> {
    pub fn new(frame: Frame) -> Self {
        Self {
            points: Vec::new(),
            frame,
        }
    }

    pub fn from_points(frame: Frame, points: Vec<Vector3<T>>) -> Self {
        debug_assert!(points.iter().all(|p| p.iter().all(|c| c.is_finite())));
        Self { points, frame }
    }

    #[inline]
    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Re-express every point through `pose` into `target` frame.
    pub fn transformed(&self, pose: &Pose<T>, target: Frame) -> PointCloud<T> {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform(p)).collect(),
            frame: target,
        }
    }
}

/// Static extrinsics plus the time-varying rotor angle that connect the
/// lidar frame to the vehicle body: body <- motor base <- rotor <- lidar.
#[derive(Debug, Clone)]
pub struct FrameChain<T: Real> {
    pub body_to_motorbase: Pose<T>,
    pub motor_to_lidar: Pose<T>,
    rotor_angle: T,
}

impl<T: Real> FrameChain<T> {
    pub fn identity() -> Self {
        Self {
            body_to_motorbase: Pose::identity(),
            motor_to_lidar: Pose::identity(),
            rotor_angle: T::zero(),
        }
    }

    pub fn new(body_to_motorbase: Pose<T>, motor_to_lidar: Pose<T>, rotor_angle: T) -> Self {
        Self {
            body_to_motorbase,
            motor_to_lidar,
            rotor_angle: wrap_tau(rotor_angle),
        }
    }

    #[inline]
    pub fn rotor_angle(&self) -> T {
        self.rotor_angle
    }

    pub fn set_rotor_angle(&mut self, angle: T) {
        self.rotor_angle = wrap_tau(angle);
    }

    /// Lidar pose in the body frame at the current rotor angle.
    pub fn lidar_in_body(&self) -> Pose<T> {
        self.body_to_motorbase
            .compose(&Pose::rot_z(self.rotor_angle))
            .compose(&self.motor_to_lidar)
    }

    /// Lidar pose in the world frame given the body pose.
    pub fn lidar_in_world(&self, body_in_world: &Pose<T>) -> Pose<T> {
        body_in_world.compose(&self.lidar_in_body())
    }
}

/// Maps a point observed in the lidar frame into the world frame through the
/// full chain: world <- body <- motor base <- rotor(θ) <- lidar.
pub fn compose_frame_chain<T: Real>(
    chain: &FrameChain<T>,
    body_in_world: &Pose<T>,
    point_in_lidar: &Vector3<T>,
) -> Vector3<T> {
    let in_motor = chain.motor_to_lidar.transform(point_in_lidar);
    let in_motorbase = Pose::rot_z(chain.rotor_angle).transform(&in_motor);
    let in_body = chain.body_to_motorbase.transform(&in_motorbase);
    body_in_world.transform(&in_body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose<f64> {
        let axis = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
        let q = UnitQuaternion::from_scaled_axis(axis);
        let t = Vector3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        Pose::from_quaternion(q, t)
    }

    #[test]
    fn pose_validate_accepts_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            random_pose(&mut rng).validate(1e-9).unwrap();
        }
    }

    #[test]
    fn pose_validate_rejects_scaled_matrix() {
        let mut p = Pose::<f64>::identity();
        p.rotation *= 1.01;
        assert!(p.validate(1e-9).is_err());
    }

    #[test]
    fn pose_inverse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let p = random_pose(&mut rng);
            let q = p.compose(&p.inverse());
            assert!((q.rotation - Matrix3::identity()).norm() < 1e-12);
            assert!(q.translation.norm() < 1e-12);
        }
    }

    #[test]
    fn chain_identity_case() {
        let chain = FrameChain::<f64>::identity();
        let out = compose_frame_chain(&chain, &Pose::identity(), &Vector3::new(1.0, 0.0, 0.0));
        assert!((out - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn chain_pure_z_rotation() {
        let mut chain = FrameChain::<f64>::identity();
        chain.set_rotor_angle(FRAC_PI_2);
        let out = compose_frame_chain(&chain, &Pose::identity(), &Vector3::new(1.0, 0.0, 0.0));
        assert!((out - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    /// Independent oracle: the same chain written as a product of 4x4
    /// homogeneous matrices.
    #[test]
    fn chain_matches_homogeneous_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let chain = FrameChain::new(
                random_pose(&mut rng),
                random_pose(&mut rng),
                rng.gen_range(0.0..2.0 * PI),
            );
            let body = random_pose(&mut rng);
            let p = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );

            let m = body.to_homogeneous()
                * chain.body_to_motorbase.to_homogeneous()
                * Pose::rot_z(chain.rotor_angle()).to_homogeneous()
                * chain.motor_to_lidar.to_homogeneous();
            let hp = m * p.push(1.0);
            let expect = Vector3::new(hp[0], hp[1], hp[2]);

            let got = compose_frame_chain(&chain, &body, &p);
            assert!((got - expect).norm() < 1e-12);
        }
    }

    /// Re-evaluating at θ1+θ2 equals applying Rz(θ2) in the motor-base frame.
    #[test]
    fn chain_rotation_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let t1 = rng.gen_range(0.0..2.0 * PI);
            let t2 = rng.gen_range(0.0..2.0 * PI);
            let base = random_pose(&mut rng);
            let lid = random_pose(&mut rng);
            let body = random_pose(&mut rng);
            let p = Vector3::new(rng.gen(), rng.gen(), rng.gen());

            let chain_sum = FrameChain::new(base, lid, t1 + t2);
            let direct = compose_frame_chain(&chain_sum, &body, &p);

            // Rz(θ2) inserted between the motor base and the rotor-at-θ1.
            let chain_t1 = FrameChain::new(
                base.compose(&Pose::rot_z(t2)),
                lid,
                t1,
            );
            let composed = compose_frame_chain(&chain_t1, &body, &p);
            assert!((direct - composed).norm() < 1e-12);
        }
    }

    #[test]
    fn cloud_transform_changes_frame() {
        let c = PointCloud::from_points(Frame::Lidar, vec![Vector3::new(1.0, 2.0, 3.0)]);
        let moved = c.transformed(&Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)), Frame::World);
        assert_eq!(moved.frame(), Frame::World);
        assert!((moved.points[0] - Vector3::new(2.0, 2.0, 3.0)).norm() < 1e-15);
    }
}
