//! Reward computation and on-policy training of the cost-map network
//! through the differentiable controller.

mod critic;
mod env;
mod ppo;
mod reward;
mod train;

pub use critic::Critic;
pub use env::{Env, EnvConfig, StepOutcome};
pub use ppo::{
    collect_rollout, derive_seed, gae, normalize_advantages, ppo_update, Rollout, TrainConfig,
    TrainMode, Transition, UpdateStats,
};
pub use reward::{compute_reward, RewardTerms, RewardWeights};
pub use train::{Scene, TrainProgress, Trainer};
