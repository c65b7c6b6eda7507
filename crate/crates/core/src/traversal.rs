//! Exact amortized grid stepping along a segment (Amanatides & Woo style).

use crate::geom::Vec3;

/// Integer voxel coordinates within a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl VoxelKey {
    pub fn new(x: i32, y: i32, z: i32) -> Self {
        VoxelKey { x, y, z }
    }
}

impl From<(i32, i32, i32)> for VoxelKey {
    fn from(v: (i32, i32, i32)) -> Self {
        VoxelKey::new(v.0, v.1, v.2)
    }
}

/// Voxel containing a world point for a grid anchored at `origin`.
///
/// Points exactly on a boundary belong to the upper voxel (floor convention).
pub fn voxel_of(p: &Vec3, origin: &Vec3, resolution: f64) -> VoxelKey {
    VoxelKey {
        x: ((p.x - origin.x) / resolution).floor() as i32,
        y: ((p.y - origin.y) / resolution).floor() as i32,
        z: ((p.z - origin.z) / resolution).floor() as i32,
    }
}

/// World-frame center of a voxel.
pub fn voxel_center(key: VoxelKey, origin: &Vec3, resolution: f64) -> Vec3 {
    Vec3::new(
        origin.x + (key.x as f64 + 0.5) * resolution,
        origin.y + (key.y as f64 + 0.5) * resolution,
        origin.z + (key.z as f64 + 0.5) * resolution,
    )
}

/// Iterator over every voxel a segment passes through, in order, starting at
/// the segment start's voxel and ending at the segment end's voxel.
///
/// Crossing decisions use the exact parametric boundary crossings of the
/// segment; simultaneous crossings step the lowest axis first.
pub struct GridRay {
    current: [i32; 3],
    end: [i32; 3],
    step: [i32; 3],
    t_max: [f64; 3],
    t_delta: [f64; 3],
    steps_left: u32,
    done: bool,
}

impl GridRay {
    pub fn new(from: &Vec3, to: &Vec3, origin: &Vec3, resolution: f64) -> Self {
        let a0 = (from - origin) / resolution;
        let a1 = (to - origin) / resolution;
        let mut current = [0i32; 3];
        let mut end = [0i32; 3];
        let mut step = [0i32; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for i in 0..3 {
            current[i] = a0[i].floor() as i32;
            end[i] = a1[i].floor() as i32;
            let d = a1[i] - a0[i];
            if d > 0.0 {
                step[i] = 1;
                t_delta[i] = 1.0 / d;
                t_max[i] = (current[i] as f64 + 1.0 - a0[i]) / d;
            } else if d < 0.0 {
                step[i] = -1;
                t_delta[i] = -1.0 / d;
                t_max[i] = (a0[i] - current[i] as f64) / -d;
            }
        }
        let steps_left: u32 = (0..3).map(|i| (end[i] - current[i]).unsigned_abs()).sum();
        GridRay {
            current,
            end,
            step,
            t_max,
            t_delta,
            // One extra step of slack for boundary-exact endpoints.
            steps_left: steps_left + 1,
            done: false,
        }
    }
}

impl Iterator for GridRay {
    type Item = VoxelKey;

    fn next(&mut self) -> Option<VoxelKey> {
        if self.done {
            return None;
        }
        let out = VoxelKey::new(self.current[0], self.current[1], self.current[2]);
        if self.current == self.end || self.steps_left == 0 {
            self.done = true;
        } else {
            self.steps_left -= 1;
            let mut axis = 0;
            for i in 1..3 {
                if self.t_max[i] < self.t_max[axis] {
                    axis = i;
                }
            }
            self.current[axis] += self.step[axis];
            self.t_max[axis] += self.t_delta[axis];
        }
        Some(out)
    }
}
