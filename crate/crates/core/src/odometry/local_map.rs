//! Sliding-window local map used by scan-to-map registration.

use crate::scalar::Real;
use crate::scansim::map::pca_normal;
use crate::scansim::voxel::VoxelGrid;
use nalgebra::Vector3;

/// World-frame map points with per-point normals and insertion timestamps,
/// trimmed to a time window and density-capped per voxel.
#[derive(Debug, Clone)]
pub struct LocalMap<T: Real> {
    pub points: Vec<Vector3<T>>,
    pub normals: Vec<Vector3<T>>,
    pub times: Vec<T>,
    grid: VoxelGrid,
    density: VoxelGrid,
    cell: T,
    density_cell: T,
    max_per_cell: usize,
    knn: usize,
}

impl<T: Real> LocalMap<T> {
    pub fn new(cell: T, density_cell: T, max_per_cell: usize, knn: usize) -> Self {
        Self {
            points: Vec::new(),
            normals: Vec::new(),
            times: Vec::new(),
            grid: VoxelGrid::new(cell.to_f64_lossy()),
            density: VoxelGrid::new(density_cell.to_f64_lossy()),
            cell,
            density_cell,
            max_per_cell,
            knn,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest map point within `radius` of `query`.
    pub fn nearest(&self, query: &Vector3<T>, radius: T) -> Option<(usize, T)> {
        self.grid
            .nearest(&self.points, query, radius)
            .map(|(i, d2)| (i as usize, d2.sqrt()))
    }

    /// Inserts a world-frame scan, skipping points in already-dense cells,
    /// then estimates normals for the new points by k-NN PCA.
    pub fn insert(&mut self, scan_world: &[Vector3<T>], time: T) {
        let start = self.points.len();
        for p in scan_world {
            let key = self.density.key_of(p);
            let occupancy = self.density.cell(&key).map_or(0, |c| c.len());
            if occupancy >= self.max_per_cell {
                continue;
            }
            let idx = self.points.len() as u32;
            self.grid.insert(p, idx);
            self.density.insert(p, idx);
            self.points.push(*p);
            self.normals.push(Vector3::zeros());
            self.times.push(time);
        }
        let search = self.cell * T::of(2.0);
        for i in start..self.points.len() {
            let nbrs = self.grid.k_nearest(&self.points, &self.points[i], self.knn, search);
            self.normals[i] = pca_normal(&self.points, &nbrs)
                .unwrap_or_else(|| fallback_normal(&self.points[i]));
        }
    }

    /// Drops entries older than `now - window` and rebuilds the indexes.
    pub fn trim(&mut self, now: T, window: T) {
        let cutoff = now - window;
        if self.times.iter().all(|t| *t >= cutoff) {
            return;
        }
        let mut points = Vec::with_capacity(self.points.len());
        let mut normals = Vec::with_capacity(self.points.len());
        let mut times = Vec::with_capacity(self.points.len());
        let mut grid = VoxelGrid::new(self.cell.to_f64_lossy());
        let mut density = VoxelGrid::new(self.density_cell.to_f64_lossy());
        for i in 0..self.points.len() {
            if self.times[i] >= cutoff {
                let idx = points.len() as u32;
                grid.insert(&self.points[i], idx);
                density.insert(&self.points[i], idx);
                points.push(self.points[i]);
                normals.push(self.normals[i]);
                times.push(self.times[i]);
            }
        }
        self.points = points;
        self.normals = normals;
        self.times = times;
        self.grid = grid;
        self.density = density;
    }
}

/// Radial direction stand-in for points whose neighborhood is too sparse
/// for PCA.
fn fallback_normal<T: Real>(p: &Vector3<T>) -> Vector3<T> {
    let n = p.norm();
    if n > T::zero() {
        -p / n
    } else {
        Vector3::z()
    }
}
