//! Per-step reward: exploration (newly observed voxel ratio) plus
//! localization fidelity (inverse windowed relative error).

use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct RewardWeights<T: Real> {
    pub lambda_exp: T,
    pub lambda_lio: T,
    /// lower bound on the RTE entering the reciprocal, capping the reward
    pub rte_floor: T,
}

impl<T: Real> Default for RewardWeights<T> {
    fn default() -> Self {
        Self {
            lambda_exp: T::one(),
            lambda_lio: T::one(),
            rte_floor: T::of(0.01),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RewardTerms<T: Real> {
    pub r_exp: T,
    pub r_lio: T,
    pub total: T,
}

/// `r_exp = new/total` (0 for an empty scan), `r_lio = 1/max(rte, floor)`,
/// combined with the configured weights.
pub fn compute_reward<T: Real>(
    new_voxels: usize,
    total_voxels: usize,
    rte: T,
    weights: &RewardWeights<T>,
) -> RewardTerms<T> {
    let r_exp = if total_voxels == 0 {
        T::zero()
    } else {
        T::of(new_voxels as f64) / T::of(total_voxels as f64)
    };
    let r_lio = T::one() / rte.max(weights.rte_floor);
    RewardTerms {
        r_exp,
        r_lio,
        total: weights.lambda_exp * r_exp + weights.lambda_lio * r_lio,
    }
}
