//! Panoramic depth map: spherical range image indexed by azimuth and
//! colatitude, storing the minimum range per bin.

use crate::geometry::PointCloud;
use crate::scalar::{wrap_tau, Real};
use nalgebra::Vector3;

/// H x W spherical range image. A bin holds the shortest range among the
/// points projected into it, or [`Real::no_return`] when nothing mapped
/// there. Column 0 is azimuth 0 (the +x axis), row 0 is the +z pole.
#[derive(Debug, Clone)]
pub struct PanoDepthMap<T: Real> {
    width: usize,
    height: usize,
    max_range: T,
    ranges: Vec<T>,
    /// Points skipped during projection (zero-norm or beyond max range).
    pub dropped: usize,
}

impl<T: Real> PanoDepthMap<T> {
    pub fn empty(width: usize, height: usize, max_range: T) -> Self {
        assert!(width >= 1 && height >= 1, "pano dimensions must be >= 1");
        Self {
            width,
            height,
            max_range,
            ranges: vec![T::no_return(); width * height],
            dropped: 0,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn max_range(&self) -> T {
        self.max_range
    }

    #[inline]
    pub fn range(&self, u: usize, v: usize) -> T {
        self.ranges[v * self.width + u]
    }

    #[inline]
    pub fn is_hit(&self, u: usize, v: usize) -> bool {
        self.range(u, v) < T::no_return()
    }

    pub fn hit_count(&self) -> usize {
        self.ranges.iter().filter(|r| **r < T::no_return()).count()
    }

    fn bin_mut(&mut self, u: usize, v: usize) -> &mut T {
        &mut self.ranges[v * self.width + u]
    }

    /// Bin indices for a direction/point, with pole and seam values clamped
    /// into the valid grid.
    pub fn bin_of(&self, p: &Vector3<T>) -> Option<(usize, usize)> {
        let norm = p.norm();
        if norm <= T::zero() || !norm.is_finite() {
            return None;
        }
        let az = wrap_tau(p.y.atan2(p.x));
        let colat = T::frac_pi_2() - (p.z / norm).asin();
        let u = (az / T::two_pi() * T::of(self.width as f64)).floor();
        let v = (colat / T::pi() * T::of(self.height as f64)).floor();
        let clamp = |x: T, hi: usize| -> usize {
            let i = x.to_f64_lossy().max(0.0) as usize;
            i.min(hi - 1)
        };
        Some((clamp(u, self.width), clamp(v, self.height)))
    }
}

/// Projects a cloud into a panoramic depth map. Points beyond `max_range`
/// are dropped; points exactly at the origin are skipped and tallied.
pub fn project_to_pano<T: Real>(
    cloud: &PointCloud<T>,
    width: usize,
    height: usize,
    max_range: T,
) -> PanoDepthMap<T> {
    let mut map = PanoDepthMap::empty(width, height, max_range);
    for p in &cloud.points {
        let norm = p.norm();
        if norm <= T::zero() || !norm.is_finite() || norm > max_range {
            map.dropped += 1;
            continue;
        }
        let (u, v) = map.bin_of(p).expect("finite nonzero point always bins");
        let bin = map.bin_mut(u, v);
        if norm < *bin {
            *bin = norm;
        }
    }
    map
}

/// Unit direction of the bin center `(u, v)`; the inverse of the projection
/// at bin centers, used for raycast windows and round-trip checks.
pub fn pano_bin_direction<T: Real>(
    u: usize,
    v: usize,
    width: usize,
    height: usize,
) -> Vector3<T> {
    assert!(u < width && v < height);
    let az = (T::of(u as f64) + T::of(0.5)) / T::of(width as f64) * T::two_pi();
    let colat = (T::of(v as f64) + T::of(0.5)) / T::of(height as f64) * T::pi();
    let el = T::frac_pi_2() - colat;
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Azimuth of the center of column `u`.
pub fn bin_azimuth<T: Real>(u: usize, width: usize) -> T {
    (T::of(u as f64) + T::of(0.5)) / T::of(width as f64) * T::two_pi()
}

/// Elevation (π/2 − colatitude) of the center of row `v`.
pub fn bin_elevation<T: Real>(v: usize, height: usize) -> T {
    T::frac_pi_2() - (T::of(v as f64) + T::of(0.5)) / T::of(height as f64) * T::pi()
}
