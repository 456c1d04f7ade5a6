//! Training driver: episodes sampled from the training split of each
//! scene, per-update learning-curve logging, periodic held-out evaluation,
//! and exactly resumable checkpoints.

use crate::costnet::{load_checkpoint, save_checkpoint, Adam, CostNet};
use crate::error::{Error, Result};
use crate::mpc::{solve, MpcConfig};
use crate::odometry::compute_ape;
use crate::rl::critic::Critic;
use crate::rl::env::{Env, EnvConfig};
use crate::rl::ppo::{collect_rollout, derive_seed, ppo_update, TrainConfig};
use crate::scalar::Real;
use crate::scansim::{Trajectory, WorldMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

/// A named world plus its reference trajectory.
pub struct Scene<T: Real> {
    pub name: String,
    pub map: WorldMap<T>,
    pub traj: Trajectory<T>,
}

#[derive(Debug, Clone)]
pub struct TrainProgress<T: Real> {
    pub step: usize,
    pub update: u64,
    pub mean_return: T,
    pub kl: T,
    pub sigma: T,
    pub eval_ape: Option<T>,
    pub rejected: bool,
    pub skipped_plans: usize,
}

/// Mutable training state; everything random derives from the config seed
/// and the counters here, so restoring the state resumes the exact stream.
pub struct Trainer<T: Real> {
    pub net: CostNet<T>,
    pub critic: Critic<T>,
    pub actor_opt: Adam<T>,
    pub critic_opt: Adam<T>,
    pub cfg: TrainConfig<T>,
    pub global_step: usize,
    pub update_index: u64,
    pub curve: Vec<TrainProgress<T>>,
}

impl<T: Real> Trainer<T> {
    pub fn new(net: CostNet<T>, critic: Critic<T>, cfg: TrainConfig<T>) -> Self {
        let actor_opt = Adam::new(net.param_count());
        let critic_opt = Adam::new(critic.mlp.param_count());
        Self {
            net,
            critic,
            actor_opt,
            critic_opt,
            cfg,
            global_step: 0,
            update_index: 0,
            curve: Vec::new(),
        }
    }

    /// Runs updates until `step_budget` environment steps have been
    /// consumed (in whole episodes). Writes checkpoints and logs into
    /// `out_dir` when given.
    pub fn run(
        &mut self,
        scenes: &[Scene<T>],
        env_cfg: &EnvConfig<T>,
        mpc: &MpcConfig<T>,
        step_budget: usize,
        out_dir: Option<&Path>,
    ) -> Result<()> {
        if scenes.is_empty() {
            return Err(Error::Config("no training scenes".into()));
        }
        let split = self.cfg.train_split.to_f64_lossy();
        if !(0.0 < split && split < 1.0) {
            return Err(Error::Config(format!("train_split {split} outside (0, 1)")));
        }
        for (v, name) in [
            (self.cfg.gamma.to_f64_lossy(), "gamma"),
            (self.cfg.gae_lambda.to_f64_lossy(), "gae_lambda"),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        let steps_per_episode = self.cfg.steps_per_episode(env_cfg.dt);
        let mut last_checkpoint = self.global_step;
        let mut last_eval = self.global_step;

        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
        }

        while self.global_step < step_budget {
            let scene = &scenes[(self.update_index as usize) % scenes.len()];
            let start = self.sample_train_start(scene, env_cfg)?;
            let mut env = Env::new(
                &scene.map,
                &scene.traj,
                env_cfg.clone(),
                start,
                derive_seed(self.cfg.seed, 1, self.update_index),
            )?;
            let sigma = self.cfg.sigma_at(self.global_step);
            let lr = self.cfg.lr_at(self.global_step);
            let mut noise_rng =
                ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, 2, self.update_index));
            let rollout = collect_rollout(
                &mut env,
                &self.net,
                &self.critic,
                mpc,
                steps_per_episode,
                sigma,
                self.cfg.use_uncertainty,
                &mut noise_rng,
            )?;
            self.global_step += rollout.transitions.len();

            let mut update_rng =
                ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, 3, self.update_index));
            let stats = ppo_update(
                &[rollout],
                &mut self.net,
                &mut self.critic,
                &mut self.actor_opt,
                &mut self.critic_opt,
                mpc,
                &self.cfg,
                lr,
                &mut update_rng,
            )?;
            self.update_index += 1;

            let eval_ape = if self.global_step - last_eval >= self.cfg.eval_every
                || self.global_step >= step_budget
            {
                last_eval = self.global_step;
                Some(self.evaluate(scenes, env_cfg, mpc)?)
            } else {
                None
            };

            let progress = TrainProgress {
                step: self.global_step,
                update: self.update_index,
                mean_return: stats.mean_return,
                kl: stats.kl,
                sigma,
                eval_ape,
                rejected: stats.rejected,
                skipped_plans: stats.skipped_plans,
            };
            self.curve.push(progress);

            if let Some(dir) = out_dir {
                self.append_logs(dir)?;
                if self.global_step - last_checkpoint >= self.cfg.checkpoint_every {
                    last_checkpoint = self.global_step;
                    self.save_state(&dir.join(format!("ckpt_{}", self.global_step)))?;
                }
            }
        }
        if let Some(dir) = out_dir {
            self.save_state(&dir.join("ckpt_final"))?;
        }
        Ok(())
    }

    /// Episode start time sampled uniformly inside the training split.
    fn sample_train_start(&self, scene: &Scene<T>, env_cfg: &EnvConfig<T>) -> Result<T> {
        let t0 = scene.traj.start_time();
        let dur = scene.traj.duration();
        let split_end = dur * self.cfg.train_split;
        let span = (split_end - self.cfg.episode_len).max(T::zero());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, 0, self.update_index));
        let u = T::of(rng.gen_range(0.0..1.0));
        // leave one control tick of headroom for the velocity stencil
        Ok(t0 + span * u + env_cfg.dt)
    }

    /// Deterministic noise-free episodes starting in the held-out part of
    /// every scene; returns the mean translational APE.
    pub fn evaluate(
        &self,
        scenes: &[Scene<T>],
        env_cfg: &EnvConfig<T>,
        mpc: &MpcConfig<T>,
    ) -> Result<T> {
        let mut total = T::zero();
        for (i, scene) in scenes.iter().enumerate() {
            let t0 = scene.traj.start_time();
            let dur = scene.traj.duration();
            let start = t0 + dur * self.cfg.train_split + env_cfg.dt;
            let steps = self.cfg.steps_per_episode(env_cfg.dt);
            let mut env = Env::new(
                &scene.map,
                &scene.traj,
                env_cfg.clone(),
                start,
                derive_seed(self.cfg.seed, 4, i as u64),
            )?;
            for _ in 0..steps {
                if !env.has_time_left() {
                    break;
                }
                let (obs, samples) = if self.cfg.use_uncertainty {
                    let (o, s) = env.observe_with_uncertainty()?;
                    (o, Some(s))
                } else {
                    (env.observe()?, None)
                };
                let params = self.net.forward(&obs, mpc.horizon)?;
                let sol = solve(&mpc.problem(env.theta(), samples, params))?;
                env.step(sol.omega[0])?;
            }
            let (est, truth) = env.trajectories()?;
            total += compute_ape(&est, &truth, true)?.rmse;
        }
        Ok(total / T::of(scenes.len() as f64))
    }

    /// Writes the checkpoint directory: the policy in the exchange format,
    /// the critic parameters, and the optimizer/counter state needed to
    /// resume exactly.
    pub fn save_state(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_checkpoint(&dir.join("policy.f32"), &self.net)?;

        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("critic.f32"))?);
        for p in self.critic.mlp.flat_params() {
            f.write_all(&(p.to_f64_lossy() as f32).to_le_bytes())?;
        }
        f.flush()?;
        let critic_meta = serde_json::json!({
            "architecture": self.critic.mlp.sizes(),
        });
        std::fs::write(
            dir.join("critic.f32.json"),
            serde_json::to_string_pretty(&critic_meta).unwrap(),
        )?;

        let mut st = std::io::BufWriter::new(std::fs::File::create(dir.join("state.bin"))?);
        st.write_all(&(self.global_step as u64).to_le_bytes())?;
        st.write_all(&self.update_index.to_le_bytes())?;
        for opt in [&self.actor_opt, &self.critic_opt] {
            let (m, v, t) = opt.state();
            st.write_all(&(m.len() as u64).to_le_bytes())?;
            st.write_all(&(t as u64).to_le_bytes())?;
            for x in m.iter().chain(v.iter()) {
                st.write_all(&x.to_f64_lossy().to_le_bytes())?;
            }
        }
        st.flush()?;
        Ok(())
    }

    /// Restores a [`Trainer`] from [`Trainer::save_state`] output.
    pub fn load_state(dir: &Path, cfg: TrainConfig<T>) -> Result<Self> {
        let net: CostNet<T> = load_checkpoint(&dir.join("policy.f32"))?;

        let critic_meta: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.join("critic.f32.json"))?,
        )
        .map_err(|e| Error::Parse(format!("critic sidecar: {e}")))?;
        let sizes: Vec<usize> = critic_meta["architecture"]
            .as_array()
            .ok_or_else(|| Error::Parse("critic architecture missing".into()))?
            .iter()
            .map(|v| v.as_u64().unwrap() as usize)
            .collect();
        let mut critic = Critic::<T> {
            mlp: crate::costnet::Mlp::new(&sizes, 0),
        };
        let mut bytes = Vec::new();
        std::fs::File::open(dir.join("critic.f32"))?.read_to_end(&mut bytes)?;
        if bytes.len() != critic.mlp.param_count() * 4 {
            return Err(Error::Parse("critic checkpoint size mismatch".into()));
        }
        let params: Vec<T> = bytes
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        critic.mlp.set_flat_params(&params);

        let mut st = Vec::new();
        std::fs::File::open(dir.join("state.bin"))?.read_to_end(&mut st)?;
        let mut off = 0usize;
        let read_u64 = |buf: &[u8], off: &mut usize| -> u64 {
            let v = u64::from_le_bytes(buf[*off..*off + 8].try_into().unwrap());
            *off += 8;
            v
        };
        let global_step = read_u64(&st, &mut off) as usize;
        let update_index = read_u64(&st, &mut off);
        let mut opts = Vec::new();
        for expected in [net.param_count(), critic.mlp.param_count()] {
            let len = read_u64(&st, &mut off) as usize;
            let t = read_u64(&st, &mut off) as usize;
            if len != expected {
                return Err(Error::Parse("optimizer state size mismatch".into()));
            }
            let read_vec = |off: &mut usize| -> Vec<T> {
                (0..len)
                    .map(|_| {
                        let v = f64::from_le_bytes(st[*off..*off + 8].try_into().unwrap());
                        *off += 8;
                        T::of(v)
                    })
                    .collect()
            };
            let m = read_vec(&mut off);
            let v = read_vec(&mut off);
            let mut opt = Adam::new(len);
            opt.restore(m, v, t);
            opts.push(opt);
        }
        let critic_opt = opts.pop().unwrap();
        let actor_opt = opts.pop().unwrap();
        Ok(Self {
            net,
            critic,
            actor_opt,
            critic_opt,
            cfg,
            global_step,
            update_index,
            curve: Vec::new(),
        })
    }

    /// Appends the newest curve row to `curve.csv` and `scalars.ndjson`.
    fn append_logs(&self, dir: &Path) -> Result<()> {
        let Some(p) = self.curve.last() else {
            return Ok(());
        };
        let curve_path = dir.join("curve.csv");
        let mut needs_header = !curve_path.exists();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&curve_path)?;
        if needs_header {
            writeln!(f, "step,update,mean_return,kl,sigma,eval_ape")?;
            needs_header = false;
        }
        let _ = needs_header;
        writeln!(
            f,
            "{},{},{:.9},{:.9},{:.6},{}",
            p.step,
            p.update,
            p.mean_return.to_f64_lossy(),
            p.kl.to_f64_lossy(),
            p.sigma.to_f64_lossy(),
            p.eval_ape
                .map(|a| format!("{:.9}", a.to_f64_lossy()))
                .unwrap_or_default(),
        )?;

        let mut nd = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("scalars.ndjson"))?;
        let row = serde_json::json!({
            "step": p.step,
            "update": p.update,
            "mean_return": p.mean_return.to_f64_lossy(),
            "kl": p.kl.to_f64_lossy(),
            "sigma": p.sigma.to_f64_lossy(),
            "eval_ape": p.eval_ape.map(|a| a.to_f64_lossy()),
            "rejected": p.rejected,
            "skipped_plans": p.skipped_plans,
        });
        writeln!(nd, "{row}")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costnet::{AngleMode, HeadBounds, HorizonConditioning};
    use crate::rl::env::tests::{tiny_cfg, tiny_scene};

    fn tiny_trainer(cfg: TrainConfig<f64>) -> Trainer<f64> {
        let net = CostNet::with_architecture(
            208,
            &[16],
            cfg.seed,
            HeadBounds::default(),
            AngleMode::Wrapped,
            HorizonConditioning::PerStepIndex,
        );
        let critic = Critic::new(208, &[16], cfg.seed.wrapping_add(1));
        Trainer::new(net, critic, cfg)
    }

    fn tiny_scenes() -> Vec<Scene<f64>> {
        let (map, traj) = tiny_scene();
        vec![Scene {
            name: "room".into(),
            map,
            traj,
        }]
    }

    fn tiny_train_cfg() -> TrainConfig<f64> {
        TrainConfig {
            total_steps: 200,
            episode_len: 2.0,
            train_split: 0.4,
            epochs: 2,
            minibatch: 32,
            eval_every: 1_000_000, // skip evals in the smoke test
            checkpoint_every: 1_000_000,
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn zero_budget_trains_nothing() {
        let mut t = tiny_trainer(tiny_train_cfg());
        let scenes = tiny_scenes();
        t.run(
            &scenes,
            &tiny_cfg(),
            &MpcConfig {
                horizon: 5,
                ..Default::default()
            },
            0,
            None,
        )
        .unwrap();
        assert_eq!(t.global_step, 0);
        assert!(t.curve.is_empty());
    }

    #[test]
    fn short_run_progresses_and_logs() {
        let mut t = tiny_trainer(tiny_train_cfg());
        let scenes = tiny_scenes();
        t.run(
            &scenes,
            &tiny_cfg(),
            &MpcConfig {
                horizon: 5,
                ..Default::default()
            },
            60,
            None,
        )
        .unwrap();
        assert!(t.global_step >= 60);
        assert_eq!(t.curve.len() as u64, t.update_index);
        for p in &t.curve {
            assert!(p.mean_return.is_finite());
            assert!(!p.rejected);
        }
    }

    /// Stop-and-resume equals an uninterrupted run: parameters, optimizer
    /// moments and the derived random streams all restore exactly.
    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let dir = std::env::temp_dir().join("scanctl_resume_test");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let scenes = tiny_scenes();
        let mpc = MpcConfig {
            horizon: 5,
            ..Default::default()
        };
        let env_cfg = tiny_cfg();
        let cfg = tiny_train_cfg();

        let mut full = tiny_trainer(cfg.clone());
        full.run(&scenes, &env_cfg, &mpc, 80, None).unwrap();

        let mut half = tiny_trainer(cfg.clone());
        half.run(&scenes, &env_cfg, &mpc, 40, None).unwrap();
        half.save_state(&dir.join("mid")).unwrap();
        let mut resumed = Trainer::load_state(&dir.join("mid"), cfg).unwrap();
        assert_eq!(resumed.global_step, half.global_step);
        resumed.run(&scenes, &env_cfg, &mpc, 80, None).unwrap();

        assert_eq!(full.global_step, resumed.global_step);
        let a = full.net.params();
        let b = resumed.net.params();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits(), "policy diverged after resume");
        }
        let ca = full.critic.mlp.flat_params();
        let cb = resumed.critic.mlp.flat_params();
        for (x, y) in ca.iter().zip(&cb) {
            assert_eq!(x.to_bits(), y.to_bits(), "critic diverged after resume");
        }
    }
}
