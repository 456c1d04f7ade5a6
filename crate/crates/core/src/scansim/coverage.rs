//! Voxel coverage bookkeeping for the exploration reward.

use crate::geometry::PointCloud;
use crate::scalar::Real;
use crate::scansim::voxel::{voxel_key, VoxelKey};
use rustc_hash::FxHashSet;

/// Set of space voxels ever observed during an episode; grows monotonically.
#[derive(Debug, Clone)]
pub struct VoxelCoverage<T: Real> {
    seen: FxHashSet<VoxelKey>,
    cell: T,
}

impl<T: Real> VoxelCoverage<T> {
    pub fn new(cell: T) -> Self {
        assert!(cell > T::zero());
        Self {
            seen: FxHashSet::default(),
            cell,
        }
    }

    pub fn seen_count(&self) -> usize {
        self.seen.len()
    }

    /// Folds a world-frame scan into the coverage set. Returns
    /// `(new_count, total_count)`: distinct voxels touched by this scan that
    /// were unseen before, and all distinct voxels it touched.
    pub fn update(&mut self, scan_in_world: &PointCloud<T>) -> (usize, usize) {
        let mut touched: FxHashSet<VoxelKey> = FxHashSet::default();
        for p in &scan_in_world.points {
            touched.insert(voxel_key(p, self.cell));
        }
        let total = touched.len();
        let mut new = 0usize;
        for key in touched {
            if self.seen.insert(key) {
                new += 1;
            }
        }
        (new, total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;
    use nalgebra::Vector3;

    fn grid_cloud(n: usize) -> PointCloud<f64> {
        // n distinct 1m voxels along x
        let pts = (0..n).map(|i| Vector3::new(i as f64 + 0.5, 0.5, 0.5)).collect();
        PointCloud::from_points(Frame::World, pts)
    }

    #[test]
    fn first_scan_all_new() {
        let mut cov = VoxelCoverage::new(1.0);
        let (new, total) = cov.update(&grid_cloud(100));
        assert_eq!((new, total), (100, 100));
    }

    #[test]
    fn replay_has_no_novelty() {
        let mut cov = VoxelCoverage::new(1.0);
        cov.update(&grid_cloud(100));
        let (new, total) = cov.update(&grid_cloud(100));
        assert_eq!((new, total), (0, 100));
    }

    /// Set-difference oracle: a scan overlapping 40 of 100 previous voxels
    /// reports 60 new.
    #[test]
    fn partial_overlap() {
        let mut cov = VoxelCoverage::new(1.0);
        cov.update(&grid_cloud(100));
        let pts = (60..160)
            .map(|i| Vector3::new(i as f64 + 0.5, 0.5, 0.5))
            .collect();
        let (new, total) = cov.update(&PointCloud::from_points(Frame::World, pts));
        assert_eq!((new, total), (60, 100));
        assert_eq!(cov.seen_count(), 160);
    }

    #[test]
    fn ratio_stays_in_unit_interval() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut cov = VoxelCoverage::new(0.5);
        for _ in 0..20 {
            let pts: Vec<Vector3<f64>> = (0..rng.gen_range(0..200))
                .map(|_| Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 0.0))
                .collect();
            let (new, total) = cov.update(&PointCloud::from_points(Frame::World, pts));
            if total > 0 {
                let r = new as f64 / total as f64;
                assert!((0.0..=1.0).contains(&r));
            } else {
                assert_eq!(new, 0);
            }
        }
    }
}
