//! Runtime configuration: a TOML-like text format (`[section]` headers,
//! `key = value` pairs, `#` comments) holding every tunable default, plus
//! the conversions into the core crate's config types.

use anyhow::{anyhow, bail, Context, Result};
use scanctl::costnet::{AngleMode, CostNet, HeadBounds, HorizonConditioning};
use scanctl::mpc::{MpcConfig, SolveSettings};
use scanctl::odometry::OdomConfig;
use scanctl::rl::{EnvConfig, RewardWeights, TrainConfig, TrainMode};
use scanctl::scansim::{SceneParams, SensorModel};
use scanctl::FrameChain64;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Config {
    // [geometry] policy pano resolution
    pub pano_width: usize,
    pub pano_height: usize,

    // [scansim]
    pub dt: f64,
    pub control_delay: usize,
    pub omega_max: f64,
    pub cell_size: f64,
    pub sensor_fov_h_deg: f64,
    pub sensor_fov_v_deg: f64,
    pub rays_azimuth: usize,
    pub rays_elevation: usize,
    pub max_range: f64,
    pub range_sigma: f64,
    pub map_knn: usize,

    // [uncertainty]
    pub dtheta_deg: f64,
    pub damping: f64,
    pub analysis_width: usize,
    pub analysis_height: usize,
    pub trace_weights: Vec<f64>,

    // [odometry]
    pub odom_max_iterations: usize,
    pub odom_convergence_tol: f64,
    pub odom_huber_delta: f64,
    pub odom_measurement_sigma: f64,
    pub odom_corr_radius: f64,
    pub odom_min_correspondences: usize,
    pub odom_window: f64,
    pub odom_knn: usize,
    pub odom_map_cell: f64,
    pub odom_density_cell: f64,
    pub odom_max_points_per_cell: usize,
    pub odom_max_scan_points: usize,
    pub odom_process_sigma_rot: f64,
    pub odom_process_sigma_trans: f64,
    pub odom_init_sigma_rot: f64,
    pub odom_init_sigma_trans: f64,
    pub tau: f64,

    // [costnet]
    pub hidden: Vec<usize>,
    pub q_min: f64,
    pub q_max: f64,
    pub lin_bound: f64,
    pub per_step_conditioning: bool,
    pub wrapped_angle: bool,
    pub costnet_seed: u64,
    pub q_bias_init: f64,

    // [mpc]
    pub horizon: usize,
    pub rho: f64,
    pub alpha: f64,
    pub mpc_max_iterations: usize,
    pub mpc_tolerance: f64,
    pub backtracking: bool,

    // [rl]
    pub total_steps: usize,
    pub episode_len: f64,
    pub train_split: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub grad_clip: f64,
    pub kl_stop: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub use_uncertainty: bool,
    pub train_mode: String,
    pub checkpoint_every: usize,
    pub eval_every: usize,

    // [rewards]
    pub lambda_exp: f64,
    pub lambda_lio: f64,
    pub rte_floor: f64,

    // [env]
    pub coverage_cell: f64,
    pub prior_sigma_rot: f64,
    pub prior_sigma_trans: f64,

    // [scene]
    pub scene_seed: u64,
    pub scene: SceneParams<f64>,

    // [harness]
    pub episode_steps: usize,
    pub seeds: Vec<u64>,
    pub scenes: Vec<String>,
    pub controllers: Vec<String>,
    pub fixed_slow: f64,
    pub fixed_fast: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            pano_width: 80,
            pano_height: 40,
            dt: 0.1,
            control_delay: 1,
            omega_max: 8.0,
            cell_size: 0.5,
            sensor_fov_h_deg: 70.0,
            sensor_fov_v_deg: 77.0,
            rays_azimuth: 40,
            rays_elevation: 24,
            max_range: 30.0,
            range_sigma: 0.01,
            map_knn: 10,
            dtheta_deg: 10.0,
            damping: 1e-3,
            analysis_width: 360,
            analysis_height: 180,
            trace_weights: vec![1.0; 6],
            odom_max_iterations: 8,
            odom_convergence_tol: 1e-6,
            odom_huber_delta: 0.1,
            odom_measurement_sigma: 0.05,
            odom_corr_radius: 0.2,
            odom_min_correspondences: 10,
            odom_window: 5.0,
            odom_knn: 10,
            odom_map_cell: 0.5,
            odom_density_cell: 0.08,
            odom_max_points_per_cell: 1,
            odom_max_scan_points: 1500,
            odom_process_sigma_rot: 0.02,
            odom_process_sigma_trans: 0.05,
            odom_init_sigma_rot: 0.05,
            odom_init_sigma_trans: 0.1,
            tau: 2.0,
            hidden: vec![256, 256],
            q_min: 0.1,
            q_max: 1e5,
            lin_bound: 10.0,
            per_step_conditioning: true,
            wrapped_angle: true,
            costnet_seed: 0,
            q_bias_init: -10.0,
            horizon: 10,
            rho: 0.05,
            alpha: 0.5,
            mpc_max_iterations: 200,
            mpc_tolerance: 1e-8,
            backtracking: true,
            total_steps: 500_000,
            episode_len: 60.0,
            train_split: 0.4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            grad_clip: 0.5,
            kl_stop: 0.01,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch: 128,
            sigma_start: 0.5,
            sigma_end: 0.05,
            use_uncertainty: true,
            train_mode: "ppo".into(),
            checkpoint_every: 10_000,
            eval_every: 5_000,
            lambda_exp: 1.0,
            lambda_lio: 1.0,
            rte_floor: 0.01,
            coverage_cell: 0.5,
            prior_sigma_rot: 0.002,
            prior_sigma_trans: 0.02,
            scene_seed: 1,
            scene: SceneParams::default(),
            episode_steps: 600,
            seeds: vec![1, 2, 3],
            scenes: vec!["tunnel".into()],
            controllers: vec!["fixed-slow".into(), "random".into(), "mpc".into()],
            fixed_slow: 1.0,
            fixed_fast: 8.0,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Config::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            self.apply(&section, key.trim(), value.trim())
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(())
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let value = value.trim_matches('"');
        let f = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| anyhow!("bad float {value:?} for {section}.{key}"))
        };
        let u = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| anyhow!("bad integer {value:?} for {section}.{key}"))
        };
        let b = || -> Result<bool> {
            value
                .parse()
                .map_err(|_| anyhow!("bad bool {value:?} for {section}.{key}"))
        };
        let u64v = || -> Result<u64> {
            value
                .parse()
                .map_err(|_| anyhow!("bad integer {value:?} for {section}.{key}"))
        };
        let list_u64 = || -> Result<Vec<u64>> {
            value
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| anyhow!("bad list for {section}.{key}")))
                .collect()
        };
        let list_usize = || -> Result<Vec<usize>> {
            value
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| anyhow!("bad list for {section}.{key}")))
                .collect()
        };
        let list_str =
            || -> Vec<String> { value.split(',').map(|s| s.trim().to_string()).collect() };

        match (section, key) {
            ("geometry", "pano_width") => self.pano_width = u()?,
            ("geometry", "pano_height") => self.pano_height = u()?,

            ("scansim", "dt") => self.dt = f()?,
            ("scansim", "control_delay") => self.control_delay = u()?,
            ("scansim", "omega_max") => self.omega_max = f()?,
            ("scansim", "cell_size") => self.cell_size = f()?,
            ("scansim", "sensor_fov_h_deg") => self.sensor_fov_h_deg = f()?,
            ("scansim", "sensor_fov_v_deg") => self.sensor_fov_v_deg = f()?,
            ("scansim", "rays_azimuth") => self.rays_azimuth = u()?,
            ("scansim", "rays_elevation") => self.rays_elevation = u()?,
            ("scansim", "max_range") => self.max_range = f()?,
            ("scansim", "range_sigma") => self.range_sigma = f()?,
            ("scansim", "map_knn") => self.map_knn = u()?,

            ("uncertainty", "dtheta_deg") => self.dtheta_deg = f()?,
            ("uncertainty", "damping") => self.damping = f()?,
            ("uncertainty", "analysis_width") => self.analysis_width = u()?,
            ("uncertainty", "analysis_height") => self.analysis_height = u()?,
            ("uncertainty", "trace_weights") => {
                let w: Vec<f64> = value
                    .split(',')
                    .map(|x| x.trim().parse().map_err(|_| anyhow!("bad trace_weights")))
                    .collect::<Result<_>>()?;
                if w.len() != 6 {
                    bail!("trace_weights needs 6 entries");
                }
                self.trace_weights = w;
            }

            ("odometry", "max_iterations") => self.odom_max_iterations = u()?,
            ("odometry", "convergence_tol") => self.odom_convergence_tol = f()?,
            ("odometry", "huber_delta") => self.odom_huber_delta = f()?,
            ("odometry", "measurement_sigma") => self.odom_measurement_sigma = f()?,
            ("odometry", "corr_radius") => self.odom_corr_radius = f()?,
            ("odometry", "min_correspondences") => self.odom_min_correspondences = u()?,
            ("odometry", "window") => self.odom_window = f()?,
            ("odometry", "knn") => self.odom_knn = u()?,
            ("odometry", "map_cell") => self.odom_map_cell = f()?,
            ("odometry", "density_cell") => self.odom_density_cell = f()?,
            ("odometry", "max_points_per_cell") => self.odom_max_points_per_cell = u()?,
            ("odometry", "max_scan_points") => self.odom_max_scan_points = u()?,
            ("odometry", "process_sigma_rot") => self.odom_process_sigma_rot = f()?,
            ("odometry", "process_sigma_trans") => self.odom_process_sigma_trans = f()?,
            ("odometry", "init_sigma_rot") => self.odom_init_sigma_rot = f()?,
            ("odometry", "init_sigma_trans") => self.odom_init_sigma_trans = f()?,
            ("odometry", "tau") => self.tau = f()?,

            ("costnet", "hidden") => self.hidden = list_usize()?,
            ("costnet", "q_min") => self.q_min = f()?,
            ("costnet", "q_max") => self.q_max = f()?,
            ("costnet", "lin_bound") => self.lin_bound = f()?,
            ("costnet", "per_step_conditioning") => self.per_step_conditioning = b()?,
            ("costnet", "wrapped_angle") => self.wrapped_angle = b()?,
            ("costnet", "seed") => self.costnet_seed = u64v()?,
            ("costnet", "q_bias_init") => self.q_bias_init = f()?,

            ("mpc", "horizon") => self.horizon = u()?,
            ("mpc", "rho") => self.rho = f()?,
            ("mpc", "alpha") => self.alpha = f()?,
            ("mpc", "max_iterations") => self.mpc_max_iterations = u()?,
            ("mpc", "tolerance") => self.mpc_tolerance = f()?,
            ("mpc", "backtracking") => self.backtracking = b()?,

            ("rl", "total_steps") => self.total_steps = u()?,
            ("rl", "episode_len") => self.episode_len = f()?,
            ("rl", "train_split") => self.train_split = f()?,
            ("rl", "gamma") => self.gamma = f()?,
            ("rl", "gae_lambda") => self.gae_lambda = f()?,
            ("rl", "clip_epsilon") => self.clip_epsilon = f()?,
            ("rl", "grad_clip") => self.grad_clip = f()?,
            ("rl", "kl_stop") => self.kl_stop = f()?,
            ("rl", "learning_rate") => self.learning_rate = f()?,
            ("rl", "epochs") => self.epochs = u()?,
            ("rl", "minibatch") => self.minibatch = u()?,
            ("rl", "sigma_start") => self.sigma_start = f()?,
            ("rl", "sigma_end") => self.sigma_end = f()?,
            ("rl", "use_uncertainty") => self.use_uncertainty = b()?,
            ("rl", "mode") => self.train_mode = value.to_string(),
            ("rl", "checkpoint_every") => self.checkpoint_every = u()?,
            ("rl", "eval_every") => self.eval_every = u()?,

            ("rewards", "lambda_exp") => self.lambda_exp = f()?,
            ("rewards", "lambda_lio") => self.lambda_lio = f()?,
            ("rewards", "rte_floor") => self.rte_floor = f()?,

            ("env", "coverage_cell") => self.coverage_cell = f()?,
            ("env", "prior_sigma_rot") => self.prior_sigma_rot = f()?,
            ("env", "prior_sigma_trans") => self.prior_sigma_trans = f()?,

            ("scene", "seed") => self.scene_seed = u64v()?,
            ("scene", "pitch") => self.scene.pitch = f()?,
            ("scene", "speed") => self.scene.speed = f()?,
            ("scene", "traj_dt") => self.scene.traj_dt = f()?,
            ("scene", "cell_size") => self.scene.cell_size = f()?,
            ("scene", "tunnel_length") => self.scene.tunnel_length = f()?,
            ("scene", "tunnel_width") => self.scene.tunnel_width = f()?,
            ("scene", "tunnel_height") => self.scene.tunnel_height = f()?,
            ("scene", "wall_amplitude") => self.scene.wall_amplitude = f()?,
            ("scene", "wall_period") => self.scene.wall_period = f()?,
            ("scene", "texture_noise") => self.scene.texture_noise = f()?,
            ("scene", "rib_spacing") => self.scene.rib_spacing = f()?,
            ("scene", "rib_depth") => self.scene.rib_depth = f()?,
            ("scene", "rib_width") => self.scene.rib_width = f()?,
            ("scene", "room_width") => self.scene.room_width = f()?,
            ("scene", "room_depth") => self.scene.room_depth = f()?,
            ("scene", "room_height") => self.scene.room_height = f()?,
            ("scene", "room_loops") => self.scene.room_loops = f()?,
            ("scene", "forest_extent") => self.scene.forest_extent = f()?,
            ("scene", "trunk_density") => self.scene.trunk_density = f()?,
            ("scene", "trunk_radius") => self.scene.trunk_radius = f()?,
            ("scene", "trunk_height") => self.scene.trunk_height = f()?,

            ("harness", "episode_steps") => self.episode_steps = u()?,
            ("harness", "seeds") => self.seeds = list_u64()?,
            ("harness", "scenes") => self.scenes = list_str(),
            ("harness", "controllers") => self.controllers = list_str(),
            ("harness", "fixed_slow") => self.fixed_slow = f()?,
            ("harness", "fixed_fast") => self.fixed_fast = f()?,

            _ => bail!("unknown config key {section}.{key}"),
        }
        Ok(())
    }

    // -- conversions into core types ---------------------------------------

    pub fn sensor_model(&self) -> SensorModel<f64> {
        SensorModel::new(
            self.sensor_fov_h_deg.to_radians(),
            self.sensor_fov_v_deg.to_radians(),
            self.rays_azimuth,
            self.rays_elevation,
            self.max_range,
            self.range_sigma,
        )
    }

    pub fn odom_config(&self) -> OdomConfig<f64> {
        OdomConfig {
            max_iterations: self.odom_max_iterations,
            convergence_tol: self.odom_convergence_tol,
            huber_delta: self.odom_huber_delta,
            measurement_sigma: self.odom_measurement_sigma,
            corr_radius: self.odom_corr_radius,
            min_correspondences: self.odom_min_correspondences,
            window: self.odom_window,
            knn: self.odom_knn,
            map_cell: self.odom_map_cell,
            density_cell: self.odom_density_cell,
            max_points_per_cell: self.odom_max_points_per_cell,
            max_scan_points: self.odom_max_scan_points,
            process_sigma_rot: self.odom_process_sigma_rot,
            process_sigma_trans: self.odom_process_sigma_trans,
            init_sigma_rot: self.odom_init_sigma_rot,
            init_sigma_trans: self.odom_init_sigma_trans,
        }
    }

    pub fn env_config(&self) -> EnvConfig<f64> {
        EnvConfig {
            dt: self.dt,
            control_delay: self.control_delay,
            omega_max: self.omega_max,
            sensor: self.sensor_model(),
            chain: FrameChain64::identity(),
            odom: self.odom_config(),
            coverage_cell: self.coverage_cell,
            policy_pano: (self.pano_width, self.pano_height),
            analysis_pano: (self.analysis_width, self.analysis_height),
            rewards: RewardWeights {
                lambda_exp: self.lambda_exp,
                lambda_lio: self.lambda_lio,
                rte_floor: self.rte_floor,
            },
            tau: self.tau,
            dtheta: self.dtheta_deg.to_radians(),
            damping: self.damping,
            prior_sigma_rot: self.prior_sigma_rot,
            prior_sigma_trans: self.prior_sigma_trans,
            trace_weights: nalgebra::Vector6::from_iterator(self.trace_weights.iter().copied()),
        }
    }

    pub fn mpc_config(&self) -> MpcConfig<f64> {
        MpcConfig {
            horizon: self.horizon,
            dt: self.dt,
            rho: self.rho,
            omega_max: self.omega_max,
            settings: SolveSettings {
                max_iterations: self.mpc_max_iterations,
                tolerance: self.mpc_tolerance,
                alpha: self.alpha,
                backtracking: self.backtracking,
                stationarity_tol: 1e-6,
            },
        }
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig<f64>> {
        let mode = match self.train_mode.as_str() {
            "ppo" => TrainMode::Ppo,
            "critic-descent" => TrainMode::CriticDescent,
            other => bail!("unknown rl.mode {other:?} (ppo | critic-descent)"),
        };
        Ok(TrainConfig {
            total_steps: self.total_steps,
            episode_len: self.episode_len,
            train_split: self.train_split,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            clip_epsilon: self.clip_epsilon,
            grad_clip: self.grad_clip,
            kl_stop: self.kl_stop,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            minibatch: self.minibatch,
            noise_sigma_start: self.sigma_start,
            noise_sigma_end: self.sigma_end,
            use_uncertainty: self.use_uncertainty,
            mode,
            checkpoint_every: self.checkpoint_every,
            eval_every: self.eval_every,
            seed,
        })
    }

    /// Feature dimension of the policy observation at the configured pano
    /// resolution.
    pub fn feature_dim(&self) -> usize {
        8 + self.pano_width * self.pano_height
    }

    pub fn new_costnet(&self) -> CostNet<f64> {
        let mut net = CostNet::with_architecture(
            self.feature_dim(),
            &self.hidden,
            self.costnet_seed,
            HeadBounds {
                q_min: self.q_min,
                q_max: self.q_max,
                lin_bound: self.lin_bound,
            },
            if self.wrapped_angle {
                AngleMode::Wrapped
            } else {
                AngleMode::Raw
            },
            if self.per_step_conditioning {
                HorizonConditioning::PerStepIndex
            } else {
                HorizonConditioning::Constant
            },
        );
        net.set_q_bias(self.q_bias_init);
        net
    }
}
