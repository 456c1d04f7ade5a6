//! On-policy training of the cost-map network through the differentiable
//! controller: rollout collection with Gaussian command perturbation,
//! generalized advantage estimation, the clipped surrogate update with the
//! actor gradient routed through the MPC solution, and a direct
//! critic-descent mode.

use crate::costnet::{clip_global_norm, Adam, CostNet, PolicyObservation};
use crate::error::Result;
use crate::mpc::{policy_gradient, solve, MpcConfig};
use crate::rl::critic::Critic;
use crate::rl::env::Env;
use crate::scalar::Real;
use crate::uncertainty::UncertaintySamples;
use rand::{seq::SliceRandom, Rng};
use rand_chacha::ChaCha8Rng;

/// Which objective drives the cost-map parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// clipped-surrogate policy optimization on the perturbed command
    Ppo,
    /// direct ascent on the critic value at the planned command
    CriticDescent,
}

#[derive(Debug, Clone)]
pub struct TrainConfig<T: Real> {
    pub total_steps: usize,
    /// episode length in seconds
    pub episode_len: T,
    /// fraction of each trajectory reserved for training starts
    pub train_split: T,
    pub gamma: T,
    pub gae_lambda: T,
    pub clip_epsilon: T,
    pub grad_clip: T,
    pub kl_stop: T,
    /// initial Adam learning rate, decayed linearly to zero
    pub learning_rate: T,
    pub epochs: usize,
    pub minibatch: usize,
    pub noise_sigma_start: T,
    pub noise_sigma_end: T,
    pub use_uncertainty: bool,
    pub mode: TrainMode,
    pub checkpoint_every: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        let c = T::of;
        Self {
            total_steps: 500_000,
            episode_len: c(60.0),
            train_split: c(0.4),
            gamma: c(0.99),
            gae_lambda: c(0.95),
            clip_epsilon: c(0.2),
            grad_clip: c(0.5),
            kl_stop: c(0.01),
            learning_rate: c(3e-4),
            epochs: 4,
            minibatch: 128,
            noise_sigma_start: c(0.5),
            noise_sigma_end: c(0.05),
            use_uncertainty: true,
            mode: TrainMode::Ppo,
            checkpoint_every: 10_000,
            eval_every: 5_000,
            seed: 0,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    /// Control ticks per episode at the given cadence.
    pub fn steps_per_episode(&self, dt: T) -> usize {
        (self.episode_len / dt).round().to_f64_lossy() as usize
    }

    pub fn sigma_at(&self, step: usize) -> T {
        let f = (T::of(step as f64) / T::of(self.total_steps.max(1) as f64)).min(T::one());
        self.noise_sigma_start + (self.noise_sigma_end - self.noise_sigma_start) * f
    }

    pub fn lr_at(&self, step: usize) -> T {
        let f = (T::of(step as f64) / T::of(self.total_steps.max(1) as f64)).min(T::one());
        self.learning_rate * (T::one() - f)
    }
}

/// One environment step as stored for the update.
#[derive(Debug, Clone)]
pub struct Transition<T: Real> {
    pub obs: PolicyObservation<T>,
    pub samples: Option<UncertaintySamples<T>>,
    pub theta0: T,
    pub omega_star: T,
    pub omega_applied: T,
    pub logprob: T,
    pub value: T,
    pub reward: T,
    pub sigma: T,
}

#[derive(Debug, Clone, Default)]
pub struct Rollout<T: Real> {
    pub transitions: Vec<Transition<T>>,
    pub bootstrap_value: T,
    pub total_reward: T,
    pub degenerate_steps: usize,
    pub nonconverged_plans: usize,
}

fn gaussian_logprob<T: Real>(x: T, mean: T, sigma: T) -> T {
    if sigma <= T::zero() {
        return T::zero();
    }
    let z = (x - mean) / sigma;
    let half = T::of(0.5);
    -half * z * z - (sigma * T::of((2.0 * std::f64::consts::PI).sqrt())).ln()
}

/// Runs the policy for up to `length` steps: plan via the MPC layer,
/// perturb the command with Gaussian noise, step the environment, and
/// record everything the update needs. A trajectory that ends early
/// truncates the rollout with a bootstrap value.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollout<T: Real>(
    env: &mut Env<T>,
    net: &CostNet<T>,
    critic: &Critic<T>,
    mpc: &MpcConfig<T>,
    length: usize,
    sigma: T,
    use_uncertainty: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout<T>> {
    let mut out = Rollout::default();
    let observe = |env: &Env<T>| -> Result<(PolicyObservation<T>, Option<UncertaintySamples<T>>)> {
        if use_uncertainty {
            let (obs, samples) = env.observe_with_uncertainty()?;
            Ok((obs, Some(samples)))
        } else {
            Ok((env.observe()?, None))
        }
    };
    let plan = |env: &Env<T>,
                obs: &PolicyObservation<T>,
                samples: Option<UncertaintySamples<T>>|
     -> Result<_> {
        let params = net.forward(obs, mpc.horizon)?;
        let problem = mpc.problem(env.theta(), samples, params);
        solve(&problem)
    };

    for _ in 0..length {
        if !env.has_time_left() {
            break;
        }
        let (obs, samples) = observe(env)?;
        let sol = plan(env, &obs, samples.clone())?;
        if !sol.converged {
            out.nonconverged_plans += 1;
        }
        let omega_star = sol.omega[0];
        let noise = T::of(rng.sample::<f64, _>(rand_distr::StandardNormal));
        let omega = omega_star + sigma * noise;
        let logprob = gaussian_logprob(omega, omega_star, sigma);
        let value = critic.value(&obs, omega);
        let theta0 = env.theta();

        let step = env.step(omega)?;
        if step.degenerate {
            out.degenerate_steps += 1;
        }
        out.total_reward += step.reward.total;
        out.transitions.push(Transition {
            obs,
            samples,
            theta0,
            omega_star,
            omega_applied: omega,
            logprob,
            value,
            reward: step.reward.total,
            sigma,
        });
        if step.done {
            break;
        }
    }

    if !out.transitions.is_empty() {
        // time-limit truncation: bootstrap with the critic at the next
        // planned command
        let (obs, samples) = observe(env)?;
        let sol = plan(env, &obs, samples)?;
        out.bootstrap_value = critic.value(&obs, sol.omega[0]);
    }
    Ok(out)
}

/// Generalized advantage estimation over one rollout; every step is
/// non-terminal (episodes end by time limit), so the tail bootstraps.
pub fn gae<T: Real>(
    rewards: &[T],
    values: &[T],
    bootstrap: T,
    gamma: T,
    lambda: T,
) -> (Vec<T>, Vec<T>) {
    let n = rewards.len();
    let mut advantages = vec![T::zero(); n];
    let mut acc = T::zero();
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next_v - values[t];
        acc = delta + gamma * lambda * acc;
        advantages[t] = acc;
    }
    let returns: Vec<T> = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| *a + *v)
        .collect();
    (advantages, returns)
}

/// Centers and scales to unit variance; a zero-variance batch maps to zero.
pub fn normalize_advantages<T: Real>(adv: &mut [T]) {
    if adv.is_empty() {
        return;
    }
    let n = T::of(adv.len() as f64);
    let mean = adv.iter().copied().sum::<T>() / n;
    let var = adv.iter().map(|a| (*a - mean) * (*a - mean)).sum::<T>() / n;
    let std = var.sqrt() + T::of(1e-8);
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}

#[derive(Debug, Clone)]
pub struct UpdateStats<T: Real> {
    pub mean_return: T,
    pub kl: T,
    pub epochs_applied: usize,
    pub actor_grad_norm: T,
    pub critic_loss: T,
    pub skipped_plans: usize,
    pub rejected: bool,
}

/// One training update from a batch of rollouts. The actor gradient flows
/// through the cost parameters into the planned command via the
/// implicit-function-theorem gradient of the MPC layer; the critic
/// regresses to the discounted returns. Epochs stop early once the
/// approximate KL divergence passes the threshold; a non-finite update is
/// rejected wholesale.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<T: Real>(
    rollouts: &[Rollout<T>],
    net: &mut CostNet<T>,
    critic: &mut Critic<T>,
    actor_opt: &mut Adam<T>,
    critic_opt: &mut Adam<T>,
    mpc: &MpcConfig<T>,
    cfg: &TrainConfig<T>,
    lr: T,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats<T>> {
    let mut transitions: Vec<&Transition<T>> = Vec::new();
    let mut advantages: Vec<T> = Vec::new();
    let mut returns: Vec<T> = Vec::new();
    for r in rollouts {
        if r.transitions.is_empty() {
            continue;
        }
        let rewards: Vec<T> = r.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<T> = r.transitions.iter().map(|t| t.value).collect();
        let (adv, ret) = gae(&rewards, &values, r.bootstrap_value, cfg.gamma, cfg.gae_lambda);
        advantages.extend(adv);
        returns.extend(ret);
        transitions.extend(r.transitions.iter());
    }
    let n_rollouts = rollouts.iter().filter(|r| !r.transitions.is_empty()).count();
    let mean_return = if n_rollouts == 0 {
        T::zero()
    } else {
        rollouts.iter().map(|r| r.total_reward).sum::<T>() / T::of(n_rollouts as f64)
    };
    if transitions.is_empty() {
        return Ok(UpdateStats {
            mean_return,
            kl: T::zero(),
            epochs_applied: 0,
            actor_grad_norm: T::zero(),
            critic_loss: T::zero(),
            skipped_plans: 0,
            rejected: false,
        });
    }
    normalize_advantages(&mut advantages);

    let net_snapshot = net.params();
    let critic_snapshot = critic.mlp.flat_params();
    let actor_opt_snapshot = actor_opt.clone();
    let critic_opt_snapshot = critic_opt.clone();

    let mut stats = UpdateStats {
        mean_return,
        kl: T::zero(),
        epochs_applied: 0,
        actor_grad_norm: T::zero(),
        critic_loss: T::zero(),
        skipped_plans: 0,
        rejected: false,
    };

    let mut indices: Vec<usize> = (0..transitions.len()).collect();
    let mut finite = true;

    'epochs: for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        let mut kl_sum = T::zero();
        let mut kl_count = 0usize;
        for chunk in indices.chunks(cfg.minibatch.max(1)) {
            let mut ascent = vec![T::zero(); net.param_count()];
            let inv = T::one() / T::of(chunk.len() as f64);
            for &i in chunk {
                let tr = transitions[i];
                let params = net.forward(&tr.obs, mpc.horizon)?;
                let problem = mpc.problem(tr.theta0, tr.samples.clone(), params);
                let sol = solve(&problem)?;
                if !sol.converged || sol.clamped[0] {
                    stats.skipped_plans += 1;
                    continue;
                }
                let omega_star = sol.omega[0];
                let logp_new = gaussian_logprob(tr.omega_applied, omega_star, tr.sigma);
                kl_sum += tr.logprob - logp_new;
                kl_count += 1;

                let scalar = match cfg.mode {
                    TrainMode::Ppo => {
                        let ratio = (logp_new - tr.logprob).exp();
                        let clipped = ratio
                            .clamp(T::one() - cfg.clip_epsilon, T::one() + cfg.clip_epsilon);
                        let adv = advantages[i];
                        // gradient of min(ratio*adv, clipped*adv) w.r.t. the
                        // planned command; zero on the clipped branch
                        if ratio * adv <= clipped * adv {
                            let dlogp_domega_star = if tr.sigma > T::zero() {
                                (tr.omega_applied - omega_star) / (tr.sigma * tr.sigma)
                            } else {
                                T::zero()
                            };
                            ratio * adv * dlogp_domega_star
                        } else {
                            T::zero()
                        }
                    }
                    TrainMode::CriticDescent => critic.value_and_domega(&tr.obs, omega_star).1,
                };
                if scalar != T::zero() {
                    let pg = policy_gradient(&problem, &sol, scalar, net, &tr.obs)?;
                    for (g, a) in pg.grad.iter().zip(ascent.iter_mut()) {
                        *a += *g * inv;
                    }
                }
            }
            let mut grad: Vec<T> = ascent.iter().map(|a| -*a).collect();
            let pre = clip_global_norm(&mut grad, cfg.grad_clip);
            stats.actor_grad_norm = pre;
            if grad.iter().any(|g| !g.is_finite()) {
                finite = false;
                break 'epochs;
            }
            let mut params = net.params();
            actor_opt.step(&mut params, &grad, lr);
            net.set_params(&params);
            net.mlp.quantize_to_f32();
        }
        stats.epochs_applied += 1;
        if kl_count > 0 {
            stats.kl = kl_sum / T::of(kl_count as f64);
            if cfg.mode == TrainMode::Ppo && stats.kl > cfg.kl_stop {
                break;
            }
        }
        if cfg.mode == TrainMode::CriticDescent {
            break;
        }
    }

    // critic regression toward the discounted returns
    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.minibatch.max(1)) {
            let batch: Vec<(&PolicyObservation<T>, T, T)> = chunk
                .iter()
                .map(|&i| (&transitions[i].obs, transitions[i].omega_applied, returns[i]))
                .collect();
            stats.critic_loss = critic.regress(&batch, critic_opt, lr, cfg.grad_clip);
            if !stats.critic_loss.is_finite() {
                finite = false;
            }
        }
        if !finite {
            break;
        }
    }

    if !finite
        || net.params().iter().any(|p| !p.is_finite())
        || critic.mlp.flat_params().iter().any(|p| !p.is_finite())
    {
        net.set_params(&net_snapshot);
        critic.mlp.set_flat_params(&critic_snapshot);
        *actor_opt = actor_opt_snapshot;
        *critic_opt = critic_opt_snapshot;
        stats.rejected = true;
    }
    Ok(stats)
}

/// Splitmix-style stream derivation so every source of randomness is a
/// pure function of the master seed and a counter.
pub fn derive_seed(master: u64, stream: u64, counter: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(counter.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
