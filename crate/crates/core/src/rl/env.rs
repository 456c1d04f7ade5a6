//! The closed simulation loop: trajectory playback, raycast scanning,
//! scan-to-map odometry, coverage bookkeeping and reward computation, one
//! control tick at a time.

use crate::error::{Error, Result};
use crate::geometry::{project_to_pano, Frame, FrameChain, PanoDepthMap, PointCloud, Pose};
use crate::odometry::{compute_rte, OdomConfig, OdomState};
use crate::rl::reward::{compute_reward, RewardTerms, RewardWeights};
use crate::scalar::Real;
use crate::scansim::{
    raycast_scan, step_scanner, ScannerState, SensorModel, Trajectory, VoxelCoverage, WorldMap,
};
use crate::uncertainty::{sample_uncertainty_weighted, UncertaintySamples};
use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Everything the closed loop needs besides the scene itself.
#[derive(Debug, Clone)]
pub struct EnvConfig<T: Real> {
    pub dt: T,
    pub control_delay: usize,
    pub omega_max: T,
    pub sensor: SensorModel<T>,
    pub chain: FrameChain<T>,
    pub odom: OdomConfig<T>,
    pub coverage_cell: T,
    pub policy_pano: (usize, usize),
    pub analysis_pano: (usize, usize),
    pub rewards: RewardWeights<T>,
    /// RTE sliding-window length
    pub tau: T,
    /// spacing of the uncertainty samples
    pub dtheta: T,
    /// information-matrix damping
    pub damping: T,
    /// per-step motion-prior noise, the stand-in for IMU integration error
    pub prior_sigma_rot: T,
    pub prior_sigma_trans: T,
    /// diagonal weighting of the six pose directions in the uncertainty
    /// value (rotation block first)
    pub trace_weights: nalgebra::Vector6<T>,
}

impl<T: Real> Default for EnvConfig<T> {
    fn default() -> Self {
        let c = T::of;
        Self {
            dt: c(0.1),
            control_delay: 1,
            omega_max: c(8.0),
            sensor: SensorModel::new(
                c(70f64.to_radians()),
                c(77f64.to_radians()),
                40,
                24,
                c(30.0),
                c(0.01),
            ),
            chain: FrameChain::identity(),
            odom: OdomConfig::default(),
            coverage_cell: c(0.5),
            policy_pano: (80, 40),
            analysis_pano: (360, 180),
            rewards: RewardWeights::default(),
            tau: c(2.0),
            dtheta: c(std::f64::consts::PI / 18.0),
            damping: c(1e-3),
            prior_sigma_rot: c(0.002),
            prior_sigma_trans: c(0.02),
            trace_weights: nalgebra::Vector6::repeat(T::one()),
        }
    }
}

/// Result of one control tick.
#[derive(Debug, Clone)]
pub struct StepOutcome<T: Real> {
    pub time: T,
    pub theta: T,
    pub omega_applied: T,
    pub reward: RewardTerms<T>,
    pub rte: T,
    pub new_voxels: usize,
    pub total_voxels: usize,
    pub degenerate: bool,
    pub done: bool,
}

/// Single-episode simulation state.
pub struct Env<'scene, T: Real> {
    pub map: &'scene WorldMap<T>,
    pub traj: &'scene Trajectory<T>,
    pub cfg: EnvConfig<T>,
    scanner: ScannerState<T>,
    odom: OdomState<T>,
    coverage: VoxelCoverage<T>,
    start_time: T,
    time: T,
    est_times: Vec<T>,
    est_poses: Vec<Pose<T>>,
    gt_poses: Vec<Pose<T>>,
    rng: ChaCha8Rng,
    pub degenerate_steps: usize,
    pub steps: usize,
}

impl<'scene, T: Real> Env<'scene, T> {
    /// Sets up the episode at `start_time`: the scanner at angle zero and
    /// the odometry initialized from a first scan at the true pose.
    pub fn new(
        map: &'scene WorldMap<T>,
        traj: &'scene Trajectory<T>,
        cfg: EnvConfig<T>,
        start_time: T,
        seed: u64,
    ) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::Config("empty world map".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = traj.sample(start_time)?;
        let mut scanner = ScannerState::new(T::zero(), cfg.omega_max);
        scanner.time = T::zero();

        let mut chain = cfg.chain.clone();
        chain.set_rotor_angle(scanner.theta);
        let lidar_pose = chain.lidar_in_world(&gt);
        let scan = raycast_scan(map, &cfg.sensor, &lidar_pose, &mut rng);

        let mut odom = OdomState::new(&cfg.odom);
        odom.register_scan(&scan, &chain, &gt, start_time, &cfg.odom)?;

        let mut coverage = VoxelCoverage::new(cfg.coverage_cell);
        let scan_world = scan.transformed(&lidar_pose, Frame::World);
        coverage.update(&scan_world);

        Ok(Self {
            map,
            traj,
            cfg,
            scanner,
            odom,
            coverage,
            start_time,
            time: start_time,
            est_times: vec![start_time],
            est_poses: vec![gt],
            gt_poses: vec![gt],
            rng,
            degenerate_steps: 0,
            steps: 0,
        })
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn theta(&self) -> T {
        self.scanner.theta
    }

    pub fn pose_estimate(&self) -> Pose<T> {
        self.odom.pose
    }

    pub fn true_pose(&self) -> Pose<T> {
        *self.gt_poses.last().unwrap()
    }

    pub fn covariance_trace(&self) -> T {
        self.odom.covariance.trace()
    }

    /// Estimated and ground-truth trajectories logged so far.
    pub fn trajectories(&self) -> Result<(Trajectory<T>, Trajectory<T>)> {
        Ok((
            Trajectory::new(self.est_times.clone(), self.est_poses.clone())?,
            Trajectory::new(self.est_times.clone(), self.gt_poses.clone())?,
        ))
    }

    /// True when another full control tick fits inside the trajectory.
    pub fn has_time_left(&self) -> bool {
        self.time + self.cfg.dt <= self.traj.end_time()
    }

    /// Local-map points re-expressed in the current estimated body frame.
    fn local_cloud_body(&self) -> PointCloud<T> {
        let inv = self.odom.pose.inverse();
        PointCloud::from_points(
            Frame::Body,
            self.odom.map.points.iter().map(|p| inv.transform(p)).collect(),
        )
    }

    /// Policy-resolution panoramic depth image of the accumulated cloud.
    pub fn policy_pano(&self) -> PanoDepthMap<T> {
        let (w, h) = self.cfg.policy_pano;
        project_to_pano(&self.local_cloud_body(), w, h, self.cfg.sensor.max_range)
    }

    /// Observation features for the policy and critic.
    pub fn observe(&self) -> Result<crate::costnet::PolicyObservation<T>> {
        let (w, h) = self.cfg.policy_pano;
        let cloud = self.local_cloud_body();
        let pano = project_to_pano(&cloud, w, h, self.cfg.sensor.max_range);
        self.observation_from(&pano)
    }

    fn observation_from(
        &self,
        pano: &PanoDepthMap<T>,
    ) -> Result<crate::costnet::PolicyObservation<T>> {
        let velocity = self.traj.body_velocity(self.time, self.cfg.dt)?;
        crate::costnet::PolicyObservation::new(
            velocity,
            self.odom.positional_cov_diag(),
            self.scanner.theta,
            pano,
        )
    }

    /// Observation plus uncertainty samples from one shared snapshot of the
    /// accumulated cloud.
    pub fn observe_with_uncertainty(
        &self,
    ) -> Result<(crate::costnet::PolicyObservation<T>, UncertaintySamples<T>)> {
        let cloud = self.local_cloud_body();
        let (pw, ph) = self.cfg.policy_pano;
        let policy_pano = project_to_pano(&cloud, pw, ph, self.cfg.sensor.max_range);
        let obs = self.observation_from(&policy_pano)?;
        let (aw, ah) = self.cfg.analysis_pano;
        let analysis = project_to_pano(&cloud, aw, ah, self.cfg.sensor.max_range);
        let samples = sample_uncertainty_weighted(
            &analysis,
            self.scanner.theta,
            self.cfg.dtheta,
            &self.cfg.sensor,
            &self.odom.pose,
            self.cfg.damping,
            &self.cfg.trace_weights,
        );
        Ok((obs, samples))
    }

    /// Uncertainty samples around the circle from the analysis-resolution
    /// pano, anchored at the current rotor angle.
    pub fn uncertainty(&self) -> UncertaintySamples<T> {
        let (w, h) = self.cfg.analysis_pano;
        let pano = project_to_pano(&self.local_cloud_body(), w, h, self.cfg.sensor.max_range);
        sample_uncertainty_weighted(
            &pano,
            self.scanner.theta,
            self.cfg.dtheta,
            &self.cfg.sensor,
            &self.odom.pose,
            self.cfg.damping,
            &self.cfg.trace_weights,
        )
    }

    /// Advances one control tick with the commanded angular velocity.
    pub fn step(&mut self, omega_cmd: T) -> Result<StepOutcome<T>> {
        if !self.has_time_left() {
            return Err(Error::OutOfRange("trajectory exhausted".into()));
        }
        step_scanner(
            &mut self.scanner,
            omega_cmd,
            self.cfg.dt,
            self.cfg.control_delay,
        );
        let t_new = self.time + self.cfg.dt;
        let gt_new = self.traj.sample(t_new)?;
        let gt_prev = *self.gt_poses.last().unwrap();
        let est_prev = self.odom.pose;

        let mut chain = self.cfg.chain.clone();
        chain.set_rotor_angle(self.scanner.theta);
        let lidar_pose = chain.lidar_in_world(&gt_new);
        let scan = raycast_scan(self.map, &self.cfg.sensor, &lidar_pose, &mut self.rng);

        // motion prior: previous estimate advanced by the true relative
        // motion corrupted with integration noise
        let rel = gt_prev.inverse().compose(&gt_new);
        let prior = est_prev.compose(&self.noisy(&rel));

        let mut degenerate = false;
        match self
            .odom
            .register_scan(&scan, &chain, &prior, t_new, &self.cfg.odom)
        {
            Ok(_) => {}
            Err(Error::RegistrationDegenerate(_, _)) => {
                degenerate = true;
                self.degenerate_steps += 1;
                self.odom.fallback_to_prior(&prior, &self.cfg.odom, T::of(10.0));
            }
            Err(e) => return Err(e),
        }

        self.time = t_new;
        self.est_times.push(t_new);
        self.est_poses.push(self.odom.pose);
        self.gt_poses.push(gt_new);
        self.steps += 1;

        // coverage of real space uses the true sensor pose
        let scan_world = scan.transformed(&lidar_pose, Frame::World);
        let (new_voxels, total_voxels) = self.coverage.update(&scan_world);

        let rte = self.current_rte()?;
        let reward = compute_reward(new_voxels, total_voxels, rte, &self.cfg.rewards);

        Ok(StepOutcome {
            time: t_new,
            theta: self.scanner.theta,
            omega_applied: self.scanner.omega,
            reward,
            rte,
            new_voxels,
            total_voxels,
            degenerate,
            done: !self.has_time_left(),
        })
    }

    /// Windowed relative error from the logged trajectories; before the
    /// full window is covered, the window shrinks to the elapsed time.
    fn current_rte(&self) -> Result<T> {
        let elapsed = self.time - self.start_time;
        let tau = self.cfg.tau.min(elapsed);
        if tau < self.cfg.dt * T::of(1.5) {
            // first tick: a single pose pair carries no relative error yet
            return Ok(self.cfg.rewards.rte_floor);
        }
        let (est, truth) = self.trajectories()?;
        compute_rte(&est, &truth, self.time, tau)
    }

    fn noisy(&mut self, rel: &Pose<T>) -> Pose<T> {
        let rot_n = Normal::new(0.0, self.cfg.prior_sigma_rot.to_f64_lossy()).unwrap();
        let trans_n = Normal::new(0.0, self.cfg.prior_sigma_trans.to_f64_lossy()).unwrap();
        let axis = Vector3::new(
            T::of(rot_n.sample(&mut self.rng)),
            T::of(rot_n.sample(&mut self.rng)),
            T::of(rot_n.sample(&mut self.rng)),
        );
        let dt = Vector3::new(
            T::of(trans_n.sample(&mut self.rng)),
            T::of(trans_n.sample(&mut self.rng)),
            T::of(trans_n.sample(&mut self.rng)),
        );
        let dr = *Rotation3::new(axis).matrix();
        Pose::new(dr * rel.rotation, rel.translation + dt)
    }

    /// Uniform random command in the control bounds, for the random
    /// baseline controller.
    pub fn random_command(&mut self) -> T {
        T::of(self
            .rng
            .gen_range(-self.cfg.omega_max.to_f64_lossy()..self.cfg.omega_max.to_f64_lossy()))
    }
}
