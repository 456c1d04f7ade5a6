//! Uniform voxel hash over 3D points.

use crate::scalar::Real;
use nalgebra::Vector3;
use rustc_hash::FxHashMap;

pub type VoxelKey = (i32, i32, i32);

/// Voxel key of a point at the given cell size.
#[inline]
pub fn voxel_key<T: Real>(p: &Vector3<T>, cell: T) -> VoxelKey {
    let f = |c: T| (c / cell).floor().to_f64_lossy() as i32;
    (f(p.x), f(p.y), f(p.z))
}

/// Hash grid mapping voxel keys to point indices. Insertion order is
/// preserved inside each cell, which keeps queries deterministic.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    cells: FxHashMap<VoxelKey, Vec<u32>>,
    cell_size: f64,
}

impl VoxelGrid {
    pub fn new(cell_size: f64) -> Self {
        assert!(cell_size > 0.0);
        Self {
            cells: FxHashMap::default(),
            cell_size,
        }
    }

    #[inline]
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn key_of<T: Real>(&self, p: &Vector3<T>) -> VoxelKey {
        voxel_key(p, T::of(self.cell_size))
    }

    pub fn insert<T: Real>(&mut self, p: &Vector3<T>, index: u32) {
        self.cells.entry(self.key_of(p)).or_default().push(index);
    }

    pub fn cell(&self, key: &VoxelKey) -> Option<&[u32]> {
        self.cells.get(key).map(|v| v.as_slice())
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Indices in the 3x3x3 neighborhood of the cell containing `p`.
    pub fn neighborhood<T: Real>(&self, p: &Vector3<T>, out: &mut Vec<u32>) {
        out.clear();
        let (kx, ky, kz) = self.key_of(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(v) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
    }

    /// Nearest point to `query` among `points`, searched over expanding
    /// voxel shells; returns `(index, squared distance)`.
    pub fn nearest<T: Real>(
        &self,
        points: &[Vector3<T>],
        query: &Vector3<T>,
        max_dist: T,
    ) -> Option<(u32, T)> {
        let (kx, ky, kz) = self.key_of(query);
        let max_shell = (max_dist.to_f64_lossy() / self.cell_size).ceil() as i32 + 1;
        let mut best: Option<(u32, T)> = None;
        for shell in 0..=max_shell {
            // once a candidate is closer than the nearest possible point in
            // this shell, stop
            if let Some((_, d2)) = best {
                let reach = T::of((shell - 1).max(0) as f64 * self.cell_size);
                if d2.sqrt() < reach {
                    break;
                }
            }
            for dx in -shell..=shell {
                for dy in -shell..=shell {
                    for dz in -shell..=shell {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != shell {
                            continue;
                        }
                        if let Some(idxs) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                            for &i in idxs {
                                let d2 = (points[i as usize] - query).norm_squared();
                                if best.map_or(true, |(_, b)| d2 < b) {
                                    best = Some((i, d2));
                                }
                            }
                        }
                    }
                }
            }
        }
        best.filter(|(_, d2)| d2.sqrt() <= max_dist)
    }

    /// Up to `k` nearest points to `query`, by expanding shells; returned
    /// sorted by distance. Ties broken by index for determinism.
    pub fn k_nearest<T: Real>(
        &self,
        points: &[Vector3<T>],
        query: &Vector3<T>,
        k: usize,
        max_dist: T,
    ) -> Vec<(u32, T)> {
        let (kx, ky, kz) = self.key_of(query);
        let max_shell = (max_dist.to_f64_lossy() / self.cell_size).ceil() as i32 + 1;
        let mut found: Vec<(u32, T)> = Vec::with_capacity(k * 2);
        for shell in 0..=max_shell {
            if found.len() >= k {
                // candidates beyond this shell cannot displace the current
                // k-th best if it is closer than the shell boundary
                let reach = T::of((shell - 1).max(0) as f64 * self.cell_size);
                found.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
                if found[k - 1].1.sqrt() < reach {
                    break;
                }
            }
            for dx in -shell..=shell {
                for dy in -shell..=shell {
                    for dz in -shell..=shell {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != shell {
                            continue;
                        }
                        if let Some(idxs) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                            for &i in idxs {
                                let d2 = (points[i as usize] - query).norm_squared();
                                if d2.sqrt() <= max_dist {
                                    found.push((i, d2));
                                }
                            }
                        }
                    }
                }
            }
        }
        found.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        found.truncate(k);
        found
    }
}
