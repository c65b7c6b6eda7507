//! Slow, independent reimplementations of the geometric queries, used by the
//! test suites to cross-check the fast production paths.
//!
//! Nothing here shares algorithmic structure with the code it validates: ray
//! casting is checked by containment marching plus bisection, grid traversal
//! by dense segment sampling, and visibility gain by exhaustive slab-clipped
//! occlusion tests.  Keep these implementations naive on purpose.

use crate::geom::Vec3;
use crate::mapping::{MapSnapshot, Occupancy};
use crate::planner::PlannerParams;
use crate::scene::Scene;
use crate::sensor::{camera_pose, Pose, Rig};
use crate::traversal::{voxel_of, VoxelKey};

/// First surface hit of a unit-direction ray found by marching containment
/// queries and refining the boundary by bisection.
///
/// Marches in `step` increments until a sample falls strictly inside a box,
/// then bisects the bracketing interval down to `step * 1e-9`.  Rays that
/// only graze a face (never entering an interior) are reported as misses,
/// and features thinner than `step` can be stepped over, so callers should
/// pick `step` well below the smallest box extent.
pub fn march_ray(
    scene: &Scene,
    origin: &Vec3,
    dir: &Vec3,
    max_range: f64,
    step: f64,
) -> Option<(f64, usize)> {
    assert!(step > 0.0 && max_range > 0.0);
    if let Some(class_id) = scene.contains(origin) {
        return Some((0.0, class_id));
    }
    let steps = (max_range / step).ceil() as usize;
    let mut prev_t = 0.0;
    for i in 1..=steps {
        let t = (i as f64 * step).min(max_range);
        if scene.contains(&(origin + dir * t)).is_some() {
            // Bisect (prev_t, t]: prev_t outside, t inside.
            let mut lo = prev_t;
            let mut hi = t;
            while hi - lo > step * 1e-9 {
                let mid = 0.5 * (lo + hi);
                if scene.contains(&(origin + dir * mid)).is_some() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let class = scene
                .contains(&(origin + dir * hi))
                .expect("bisection keeps hi inside");
            return Some((hi, class));
        }
        prev_t = t;
    }
    None
}

/// Voxel keys touched by a segment, found by dense sampling.
///
/// Samples `samples + 1` evenly spaced points (endpoints included) and
/// deduplicates consecutive repeats.  Thin corner clips between sample
/// points can be missed, so the result is a subset of the true traversal;
/// use it for one-sided containment checks.
pub fn sampled_voxels(
    from: &Vec3,
    to: &Vec3,
    origin: &Vec3,
    resolution: f64,
    samples: usize,
) -> Vec<VoxelKey> {
    assert!(samples >= 1);
    let mut keys: Vec<VoxelKey> = Vec::new();
    for i in 0..=samples {
        let f = i as f64 / samples as f64;
        let p = from + (to - from) * f;
        let k = voxel_of(&p, origin, resolution);
        if keys.last() != Some(&k) {
            keys.push(k);
        }
    }
    keys
}

/// Euclidean distance from a point to an axis-aligned box (zero inside).
pub fn point_box_distance(p: &Vec3, box_min: &Vec3, box_max: &Vec3) -> f64 {
    let mut d2 = 0.0;
    for a in 0..3 {
        let v = p[a];
        let d = if v < box_min[a] {
            box_min[a] - v
        } else if v > box_max[a] {
            v - box_max[a]
        } else {
            0.0
        };
        d2 += d * d;
    }
    d2.sqrt()
}

/// Minimum distance from a segment to a box, approximated by dense sampling
/// of the segment.
pub fn segment_box_distance(
    from: &Vec3,
    to: &Vec3,
    box_min: &Vec3,
    box_max: &Vec3,
    samples: usize,
) -> f64 {
    assert!(samples >= 1);
    let mut best = f64::INFINITY;
    for i in 0..=samples {
        let f = i as f64 / samples as f64;
        let p = from + (to - from) * f;
        best = best.min(point_box_distance(&p, box_min, box_max));
    }
    best
}

/// Parameter interval `[t_entry, t_exit] ⊆ [0, 1]` where the segment
/// `from + t·(to - from)` overlaps the box, or `None` if it misses.
pub fn segment_box_interval(
    from: &Vec3,
    to: &Vec3,
    box_min: &Vec3,
    box_max: &Vec3,
) -> Option<(f64, f64)> {
    let d = to - from;
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for a in 0..3 {
        if d[a] == 0.0 {
            if from[a] < box_min[a] || from[a] > box_max[a] {
                return None;
            }
            continue;
        }
        let mut lo = (box_min[a] - from[a]) / d[a];
        let mut hi = (box_max[a] - from[a]) / d[a];
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Exhaustive reimplementation of the planner's visibility gain.
///
/// Walks the same stride sublattice but decides occlusion by slab-clipping
/// the camera-to-center segment against every occupied voxel cube: the view
/// is blocked iff some occupied voxel other than the target overlaps the
/// segment with an entry parameter before the target's own entry.  Exact
/// parameter ties between cubes are resolved differently than the grid
/// walk, so feed it poses in general position.
pub fn brute_unknown_visible(
    snap: &MapSnapshot,
    body: &Pose,
    rig: &Rig,
    params: &PlannerParams,
) -> f64 {
    let d_max = params.d_max.unwrap_or_else(|| rig.max_range());
    let res = snap.resolution();
    let dims = snap.dims();
    let origin = *snap.origin();

    let cube = |k: VoxelKey| {
        let min = Vec3::new(
            origin.x + k.x as f64 * res,
            origin.y + k.y as f64 * res,
            origin.z + k.z as f64 * res,
        );
        (min, min + Vec3::new(res, res, res))
    };
    let mut occupied: Vec<VoxelKey> = Vec::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let k = VoxelKey::new(x, y, z);
                if snap.occupied(k) {
                    occupied.push(k);
                }
            }
        }
    }

    let stride = params.gain_stride.max(1);
    let cell_weight = (stride as f64).powi(3);
    let mut total = 0.0;
    for z in (0..dims[2]).step_by(stride as usize) {
        for y in (0..dims[1]).step_by(stride as usize) {
            for x in (0..dims[0]).step_by(stride as usize) {
                let key = VoxelKey::new(x, y, z);
                if snap.state(key) != Occupancy::Unknown {
                    continue;
                }
                let center = snap.center(key);
                let mut visible = false;
                for mount in rig.mounts() {
                    let cam = camera_pose(body, mount);
                    let intr = &mount.intrinsics;
                    let rel = center - cam.origin;
                    if rel.norm() > d_max {
                        continue;
                    }
                    let pc = cam.rotation.transpose() * rel;
                    if pc.z < intr.min_range || pc.z > d_max {
                        continue;
                    }
                    let u = intr.fx * pc.x / pc.z + intr.cx;
                    let v = intr.fy * pc.y / pc.z + intr.cy;
                    if !(0.0..intr.width as f64).contains(&u)
                        || !(0.0..intr.height as f64).contains(&v)
                    {
                        continue;
                    }
                    let (tmin, tmax) = cube(key);
                    let target_entry = segment_box_interval(&cam.origin, &center, &tmin, &tmax)
                        .map_or(0.0, |(t_in, _)| t_in);
                    let mut blocked = false;
                    for &w in &occupied {
                        if w == key {
                            continue;
                        }
                        let (wmin, wmax) = cube(w);
                        if let Some((w_in, _)) =
                            segment_box_interval(&cam.origin, &center, &wmin, &wmax)
                        {
                            if w_in < target_entry {
                                blocked = true;
                                break;
                            }
                        }
                    }
                    if blocked {
                        continue;
                    }
                    visible = true;
                    break;
                }
                if visible {
                    let w = if params.alpha > 0.0 {
                        majority_neighbor_class(snap, key)
                            .and_then(|c| params.class_weights.get(c).copied())
                            .unwrap_or(0.0)
                    } else {
                        0.0
                    };
                    total += cell_weight * (1.0 + params.alpha * w);
                }
            }
        }
    }
    total
}

/// Independent majority vote over occupied 6-neighbor classes (sort and
/// scan runs instead of per-candidate counting); ties pick the lowest id.
fn majority_neighbor_class(snap: &MapSnapshot, key: VoxelKey) -> Option<usize> {
    let mut classes: Vec<usize> = [
        (-1, 0, 0),
        (1, 0, 0),
        (0, -1, 0),
        (0, 1, 0),
        (0, 0, -1),
        (0, 0, 1),
    ]
    .into_iter()
    .filter_map(|(dx, dy, dz)| {
        snap.occupied_class(VoxelKey::new(key.x + dx, key.y + dy, key.z + dz))
    })
    .collect();
    classes.sort_unstable();
    let mut best: Option<(usize, usize)> = None; // (count, class)
    let mut i = 0;
    while i < classes.len() {
        let c = classes[i];
        let mut j = i;
        while j < classes.len() && classes[j] == c {
            j += 1;
        }
        let run = j - i;
        // Ascending class order plus strict > keeps the lowest id on ties.
        if best.is_none_or(|(bn, _)| run > bn) {
            best = Some((run, c));
        }
        i = j;
    }
    best.map(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;
    use crate::mapping::{ClassDistribution, MapParams, VoxelMap};
    use crate::scene::{drydock_classes, make_drydock};
    use approx::assert_relative_eq;

    #[test]
    fn march_agrees_with_ray_cast_on_a_wall() {
        let scene = make_drydock(20.0, 12.0, 6.0, 0.4, drydock_classes()).unwrap();
        // From mid-dock toward the side wall whose inner face is y = 6.
        let origin = Vec3::new(5.0, 0.0, 3.0);
        let dir = Vec3::new(0.0, 1.0, 0.0);
        let fast = scene.ray_cast(&origin, &dir, 30.0).unwrap().unwrap();
        let slow = march_ray(&scene, &origin, &dir, 30.0, 0.05).unwrap();
        assert_relative_eq!(slow.0, fast.t, epsilon = 1e-6);
        assert_relative_eq!(fast.t, 6.0, epsilon = 1e-12);
        assert_eq!(slow.1, fast.class_id);
    }

    #[test]
    fn march_misses_open_sky() {
        let scene = make_drydock(20.0, 12.0, 6.0, 0.4, drydock_classes()).unwrap();
        let up = march_ray(&scene, &Vec3::new(5.0, 0.0, 3.0), &Vec3::new(0.0, 0.0, 1.0), 10.0, 0.05);
        assert_eq!(up, None);
    }

    #[test]
    fn sampled_voxels_cover_an_axis_segment() {
        let keys = sampled_voxels(
            &Vec3::new(0.2, 0.2, 0.2),
            &Vec3::new(1.4, 0.2, 0.2),
            &Vec3::zeros(),
            0.4,
            1000,
        );
        let expect: Vec<VoxelKey> = [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0)]
            .into_iter()
            .map(VoxelKey::from)
            .collect();
        assert_eq!(keys, expect);
    }

    #[test]
    fn point_box_distance_cases() {
        let min = Vec3::zeros();
        let max = Vec3::new(1.0, 1.0, 1.0);
        assert_eq!(point_box_distance(&Vec3::new(0.5, 0.5, 0.5), &min, &max), 0.0);
        assert_relative_eq!(
            point_box_distance(&Vec3::new(2.0, 0.5, 0.5), &min, &max),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            point_box_distance(&Vec3::new(2.0, 2.0, 0.5), &min, &max),
            std::f64::consts::SQRT_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn segment_box_interval_cases() {
        let min = Vec3::new(1.0, 0.0, 0.0);
        let max = Vec3::new(2.0, 1.0, 1.0);
        let a = Vec3::new(0.0, 0.5, 0.5);
        let b = Vec3::new(4.0, 0.5, 0.5);
        let (t0, t1) = segment_box_interval(&a, &b, &min, &max).unwrap();
        assert_relative_eq!(t0, 0.25, max_relative = 1e-12);
        assert_relative_eq!(t1, 0.5, max_relative = 1e-12);
        // Segment ending before the box.
        assert_eq!(
            segment_box_interval(&a, &Vec3::new(0.9, 0.5, 0.5), &min, &max),
            None
        );
        // Parallel segment outside a slab.
        assert_eq!(
            segment_box_interval(
                &Vec3::new(0.0, 2.0, 0.5),
                &Vec3::new(4.0, 2.0, 0.5),
                &min,
                &max
            ),
            None
        );
    }

    #[test]
    fn brute_gain_matches_planner_on_a_simple_map() {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(6.0, 6.0, 6.0));
        let mut map = VoxelMap::new(bounds, 0.5, 2, MapParams::default()).unwrap();
        // A small occupied slab to exercise occlusion.
        for y in 3..9 {
            for z in 3..9 {
                map.set_voxel(VoxelKey::new(7, y, z), 3.0, ClassDistribution::uniform(2))
                    .unwrap();
            }
        }
        let snap = map.snapshot();
        let body = Pose::new(Vec3::new(1.73, 2.91, 3.17), 0.37).unwrap();
        let rig = Rig::preset(3).unwrap();
        let params = PlannerParams::default();
        let fast = crate::planner::unknown_visible(&snap, &body, &rig, &params);
        let slow = brute_unknown_visible(&snap, &body, &rig, &params);
        assert_relative_eq!(fast, slow, max_relative = 1e-12);
        assert!(fast > 0.0);
    }
}
