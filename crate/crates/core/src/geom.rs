//! Small geometric primitives shared across the crate.

use std::f64::consts::{PI, TAU};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Axis-aligned box, `min` componentwise below `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    /// Strict `min < max` on all axes.
    pub fn is_valid(&self) -> bool {
        self.min.iter().chain(self.max.iter()).all(|v| v.is_finite())
            && (0..3).all(|i| self.min[i] < self.max[i])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    /// Inclusive containment (boundary points count as inside).
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Strict containment (boundary points are outside).
    pub fn contains_strict(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] > self.min[i] && p[i] < self.max[i])
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && self.max[i] >= other.min[i])
    }

    /// Slab intersection of the infinite ray `origin + t * dir` with this box.
    ///
    /// Returns the parameter interval `[t_entry, t_exit]` (possibly with
    /// negative entry when the origin is inside), or `None` when the ray
    /// misses. Zero direction components are handled exactly: the ray hits
    /// only if the origin lies within that slab.
    pub fn ray_intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t_entry = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        for i in 0..3 {
            if dir[i] == 0.0 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
            } else {
                let inv = 1.0 / dir[i];
                let t0 = (self.min[i] - origin[i]) * inv;
                let t1 = (self.max[i] - origin[i]) * inv;
                let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
                t_entry = t_entry.max(lo);
                t_exit = t_exit.min(hi);
                if t_entry > t_exit {
                    return None;
                }
            }
        }
        Some((t_entry, t_exit))
    }

    /// Clips the segment `p0 -> p1` against this box, returning the parameter
    /// sub-interval of `[0, 1]` that lies inside, or `None` if disjoint.
    pub fn clip_segment(&self, p0: &Vec3, p1: &Vec3) -> Option<(f64, f64)> {
        let d = p1 - p0;
        let (entry, exit) = self.ray_intersect(p0, &d)?;
        let lo = entry.max(0.0);
        let hi = exit.min(1.0);
        if lo > hi {
            None
        } else {
            Some((lo, hi))
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(TAU);
    if x > PI {
        x -= TAU;
    }
    x
}

/// Magnitude of the wrapped difference between two angles, in `[0, pi]`.
pub fn angle_dist(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// Rotation about the world z axis.
pub fn rot_z(yaw: f64) -> Mat3 {
    let (s, c) = yaw.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}
