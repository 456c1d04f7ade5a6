//! Point-cloud world model with a voxel hash index and per-point normals.

use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud};
use crate::scalar::Real;
use crate::scansim::voxel::VoxelGrid;
use nalgebra::{Matrix3, Vector3};

/// Dense ground-truth map: world-frame points, unit normals, and the spatial
/// index used by the raycaster. `hit_radius` is the ray/point association
/// threshold, typically half the map sampling pitch.
#[derive(Debug, Clone)]
pub struct WorldMap<T: Real> {
    pub cloud: PointCloud<T>,
    pub normals: Vec<Vector3<T>>,
    pub grid: VoxelGrid,
    pub hit_radius: T,
}

impl<T: Real> WorldMap<T> {
    /// Builds a map from points whose normals are already known (synthetic
    /// scenes, PLY files with normal properties).
    pub fn with_normals(
        points: Vec<Vector3<T>>,
        normals: Vec<Vector3<T>>,
        cell_size: T,
        hit_radius: T,
    ) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::Config("normal count != point count".into()));
        }
        for n in &normals {
            if (n.norm() - T::one()).abs() > T::of(1e-6) {
                return Err(Error::Config("map normal not unit length".into()));
            }
        }
        let mut grid = VoxelGrid::new(cell_size.to_f64_lossy());
        for (i, p) in points.iter().enumerate() {
            grid.insert(p, i as u32);
        }
        Ok(Self {
            cloud: PointCloud::from_points(Frame::World, points),
            normals,
            grid,
            hit_radius,
        })
    }

    /// Builds a map from bare points, estimating normals by PCA over the
    /// k nearest neighbors.
    pub fn from_points(
        points: Vec<Vector3<T>>,
        cell_size: T,
        hit_radius: T,
        knn: usize,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("empty map".into()));
        }
        let mut grid = VoxelGrid::new(cell_size.to_f64_lossy());
        for (i, p) in points.iter().enumerate() {
            grid.insert(p, i as u32);
        }
        let search_radius = cell_size * T::of(2.0);
        let normals: Vec<Vector3<T>> = points
            .iter()
            .map(|p| {
                let nbrs = grid.k_nearest(&points, p, knn, search_radius);
                pca_normal(&points, &nbrs).unwrap_or_else(|| Vector3::z())
            })
            .collect();
        Ok(Self {
            cloud: PointCloud::from_points(Frame::World, points),
            normals,
            grid,
            hit_radius,
        })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Unit normal of the best-fit plane through the given neighbors (smallest
/// eigenvector of the scatter matrix). `None` when the neighborhood is too
/// small or degenerate.
pub fn pca_normal<T: Real>(points: &[Vector3<T>], nbrs: &[(u32, T)]) -> Option<Vector3<T>> {
    if nbrs.len() < 3 {
        return None;
    }
    let inv = T::one() / T::of(nbrs.len() as f64);
    let mut mean = Vector3::zeros();
    for (i, _) in nbrs {
        mean += points[*i as usize];
    }
    mean *= inv;
    let mut scatter = Matrix3::zeros();
    for (i, _) in nbrs {
        let d = points[*i as usize] - mean;
        scatter += d * d.transpose();
    }
    scatter *= inv;
    let eig = nalgebra::SymmetricEigen::new(scatter);
    let mut min_i = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    let n = eig.eigenvectors.column(min_i).into_owned();
    let norm = n.norm();
    if norm <= T::zero() {
        return None;
    }
    Some(n / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pca_normal_of_plane_patch() {
        // z = 0 plane patch
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                pts.push(Vector3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0));
            }
        }
        let nbrs: Vec<(u32, f64)> = (0..25).map(|i| (i as u32, 0.0)).collect();
        let n = pca_normal(&pts, &nbrs).unwrap();
        assert!(n.z.abs() > 1.0 - 1e-9);
    }

    #[test]
    fn from_points_estimates_unit_normals() {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push(Vector3::new(i as f64 * 0.05, j as f64 * 0.05, 0.0));
            }
        }
        let m = WorldMap::from_points(pts, 0.25, 0.025, 10).unwrap();
        for n in &m.normals {
            assert!((n.norm() - 1.0).abs() < 1e-6);
            assert!(n.z.abs() > 0.99);
        }
    }

    #[test]
    fn with_normals_rejects_non_unit() {
        let pts = vec![Vector3::new(0.0, 0.0, 0.0)];
        let ns = vec![Vector3::new(0.0, 0.0, 2.0)];
        assert!(WorldMap::with_normals(pts, ns, 0.5, 0.025).is_err());
    }
}
