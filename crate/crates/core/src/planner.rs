//! Receding-horizon next-best-view planning.
//!
//! Each planning step grows an RRT over 4-DOF poses inside the map bounds,
//! scores every node by the unknown volume its cameras would see (discounted
//! by travel cost along the branch), then executes only the first edge of the
//! best branch before replanning.  All queries run against an immutable
//! [`MapSnapshot`] so every candidate is judged against identical map state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{angle_dist, normalize_angle, Vec3};
use crate::mapping::{MapSnapshot, Occupancy};
use crate::sensor::{camera_pose, Pose, Rig};
use crate::traversal::{GridRay, VoxelKey};

/// Planner tuning constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Nodes grown per planning step before checking the gain threshold.
    pub tree_size: usize,
    /// Hard cap on tree size when the initial tree found too little gain.
    pub max_tree_size: usize,
    /// Maximum edge length in meters.
    pub edge_length: f64,
    /// Yaw term weight in edge cost, meters per radian.
    pub yaw_weight: f64,
    /// Exponential decay rate of gain with branch cost, per meter.
    pub decay: f64,
    /// Range limit for gain rays; `None` uses the rig's largest max_range.
    pub d_max: Option<f64>,
    /// Voxel stride of the gain sublattice; counted voxels are weighted by
    /// stride cubed so the total stays in voxel units.
    pub gain_stride: i32,
    /// Robot collision radius in meters.
    pub radius: f64,
    /// Gain below which the planner keeps growing and eventually falls back
    /// to a random recovery step.
    pub min_gain: f64,
    /// Semantic weighting strength; 0 disables semantic gain shaping.
    pub alpha: f64,
    /// Per-class weights used when `alpha > 0`; missing entries read as 0.
    pub class_weights: Vec<f64>,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            tree_size: 60,
            max_tree_size: 300,
            edge_length: 1.0,
            yaw_weight: 0.25,
            decay: 0.5,
            d_max: None,
            gain_stride: 2,
            radius: 0.5,
            min_gain: 1.0,
            alpha: 0.0,
            class_weights: Vec::new(),
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if self.tree_size < 1 || self.max_tree_size < self.tree_size {
            return Err(Error::invalid(
                "planner needs 1 <= tree_size <= max_tree_size",
            ));
        }
        if !(self.edge_length > 0.0 && self.edge_length.is_finite()) {
            return Err(Error::invalid("edge_length must be positive"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid("collision radius must be positive"));
        }
        for (name, v) in [
            ("yaw_weight", self.yaw_weight),
            ("decay", self.decay),
            ("min_gain", self.min_gain),
            ("alpha", self.alpha),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if let Some(d) = self.d_max {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid("d_max must be positive"));
            }
        }
        if self.gain_stride < 1 {
            return Err(Error::invalid("gain_stride must be at least 1"));
        }
        if self.class_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("class weights must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One RRT node.  `gain` follows the recursion
/// `gain = parent.gain + marginal_gain * exp(-decay * path_cost)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub pose: Pose,
    pub parent: Option<usize>,
    /// Cost of the edge from the parent: |Δposition| + yaw_weight·|Δyaw|.
    pub edge_cost: f64,
    /// Accumulated edge cost from the root.
    pub path_cost: f64,
    /// unknown_visible evaluated at this node's pose.
    pub marginal_gain: f64,
    pub gain: f64,
}

/// Outcome bookkeeping for one planning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostic {
    pub tree_size: usize,
    pub best_gain: f64,
    /// True when the gain threshold was never met and a random recovery step
    /// was returned instead of a tree edge.
    pub recovery: bool,
}

/// Attempt limit for rejection sampling before declaring the planner stuck.
const MAX_SAMPLE_ATTEMPTS: u32 = 10_000;

/// True iff the pose is inside the map bounds and no occupied voxel center
/// lies within `radius` of it.  Unknown voxels do not block: planning is
/// optimistic, otherwise no motion is possible in a fresh map.
pub fn is_collision_free(snap: &MapSnapshot, pose: &Pose, radius: f64) -> bool {
    let p = pose.position;
    if !snap.bounds().contains(&p) {
        return false;
    }
    if snap.occupied_count() == 0 {
        return true;
    }
    let lo = snap.key_at(&Vec3::new(p.x - radius, p.y - radius, p.z - radius));
    let hi = snap.key_at(&Vec3::new(p.x + radius, p.y + radius, p.z + radius));
    let r2 = radius * radius;
    for z in lo.z..=hi.z {
        for y in lo.y..=hi.y {
            for x in lo.x..=hi.x {
                let key = VoxelKey::new(x, y, z);
                if snap.occupied(key) && (snap.center(key) - p).norm_squared() < r2 {
                    return false;
                }
            }
        }
    }
    true
}

/// True iff an occupied voxel lies on the segment strictly before the
/// target's voxel.
fn segment_blocked(snap: &MapSnapshot, from: &Vec3, to: &Vec3, target: VoxelKey) -> bool {
    for key in GridRay::new(from, to, snap.origin(), snap.resolution()) {
        if key == target {
            return false;
        }
        if snap.occupied(key) {
            return true;
        }
    }
    false
}

/// Majority dominant class over the occupied 6-neighbors; ties resolve to
/// the lowest class id.  `None` when no neighbor is occupied.
fn neighbor_majority_class(snap: &MapSnapshot, key: VoxelKey) -> Option<usize> {
    let neighbors = [
        VoxelKey::new(key.x - 1, key.y, key.z),
        VoxelKey::new(key.x + 1, key.y, key.z),
        VoxelKey::new(key.x, key.y - 1, key.z),
        VoxelKey::new(key.x, key.y + 1, key.z),
        VoxelKey::new(key.x, key.y, key.z - 1),
        VoxelKey::new(key.x, key.y, key.z + 1),
    ];
    let mut votes: [Option<usize>; 6] = [None; 6];
    for (slot, n) in votes.iter_mut().zip(neighbors) {
        *slot = snap.occupied_class(n);
    }
    let mut best: Option<(usize, usize)> = None; // (class, count)
    for c in votes.into_iter().flatten() {
        let count = votes.iter().filter(|v| **v == Some(c)).count();
        best = match best {
            None => Some((c, count)),
            Some((bc, bn)) => {
                if count > bn || (count == bn && c < bc) {
                    Some((c, count))
                } else {
                    Some((bc, bn))
                }
            }
        };
    }
    best.map(|(c, _)| c)
}

/// Weighted count of unknown voxels any rig camera could observe from `body`.
///
/// A voxel on the gain sublattice counts if it is unknown, its center falls
/// inside some camera's frustum (z between min_range and the gain range),
/// and no occupied voxel blocks the segment from that camera.  Each counted
/// voxel contributes `stride³ · (1 + alpha·w_class)`.
pub fn unknown_visible(snap: &MapSnapshot, body: &Pose, rig: &Rig, params: &PlannerParams) -> f64 {
    let d_max = params.d_max.unwrap_or_else(|| rig.max_range());
    let cams: Vec<_> = rig
        .mounts()
        .iter()
        .map(|m| (camera_pose(body, m), m.intrinsics))
        .collect();
    let stride = params.gain_stride.max(1);
    let cell_weight = (stride as f64).powi(3);
    let d2 = d_max * d_max;
    let dims = snap.dims();
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
                for (cam, intr) in &cams {
                    let rel = center - cam.origin;
                    if rel.norm_squared() > d2 {
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
                    if segment_blocked(snap, &cam.origin, &center, key) {
                        continue;
                    }
                    visible = true;
                    break;
                }
                if visible {
                    let w = if params.alpha > 0.0 {
                        neighbor_majority_class(snap, key)
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

/// One RRT expansion attempt: sample, steer toward the nearest node, check
/// collisions, and append a node on success.  Returns whether a node was
/// added; a rejected sample leaves the tree unchanged.
pub fn expand_tree<R: Rng>(
    tree: &mut Vec<PlanNode>,
    snap: &MapSnapshot,
    rig: &Rig,
    params: &PlannerParams,
    rng: &mut R,
) -> bool {
    debug_assert!(!tree.is_empty(), "expand_tree needs a rooted tree");
    let b = snap.bounds();
    let sample = Vec3::new(
        rng.random_range(b.min.x..b.max.x),
        rng.random_range(b.min.y..b.max.y),
        rng.random_range(b.min.z..b.max.z),
    );
    let yaw = normalize_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));

    let mut nearest = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, node) in tree.iter().enumerate() {
        let d2 = (node.pose.position - sample).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            nearest = i;
        }
    }
    let from = tree[nearest].pose;
    let delta = sample - from.position;
    let dist = delta.norm();
    let position = if dist > params.edge_length {
        from.position + delta * (params.edge_length / dist)
    } else {
        sample
    };
    let candidate = Pose { position, yaw };
    let midpoint = Pose { position: (from.position + position) * 0.5, yaw };
    if !is_collision_free(snap, &candidate, params.radius)
        || !is_collision_free(snap, &midpoint, params.radius)
    {
        return false;
    }

    let edge_cost = (position - from.position).norm() + params.yaw_weight * angle_dist(from.yaw, yaw);
    let path_cost = tree[nearest].path_cost + edge_cost;
    let marginal_gain = unknown_visible(snap, &candidate, rig, params);
    let gain = tree[nearest].gain + marginal_gain * (-params.decay * path_cost).exp();
    tree.push(PlanNode {
        pose: candidate,
        parent: Some(nearest),
        edge_cost,
        path_cost,
        marginal_gain,
        gain,
    });
    true
}

fn grow<R: Rng>(
    tree: &mut Vec<PlanNode>,
    snap: &MapSnapshot,
    rig: &Rig,
    params: &PlannerParams,
    rng: &mut R,
    target_size: usize,
) -> Result<()> {
    let mut failures = 0u32;
    while tree.len() < target_size {
        if expand_tree(tree, snap, rig, params, rng) {
            failures = 0;
        } else {
            failures += 1;
            if failures >= MAX_SAMPLE_ATTEMPTS {
                return Err(Error::PlanningStuck(format!(
                    "no collision-free sample accepted after {failures} attempts"
                )));
            }
        }
    }
    Ok(())
}

/// Highest-gain node; ties resolve to the earliest node.
fn best_node(tree: &[PlanNode]) -> usize {
    let mut best = 0;
    for (i, node) in tree.iter().enumerate().skip(1) {
        if node.gain > tree[best].gain {
            best = i;
        }
    }
    best
}

fn sample_recovery<R: Rng>(
    snap: &MapSnapshot,
    current: &Pose,
    params: &PlannerParams,
    rng: &mut R,
) -> Result<Pose> {
    let reach = 2.0 * params.edge_length;
    let b = snap.bounds();
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let offset = Vec3::new(
            rng.random_range(-reach..reach),
            rng.random_range(-reach..reach),
            rng.random_range(-reach..reach),
        );
        if offset.norm_squared() > reach * reach {
            continue;
        }
        let position = current.position + offset;
        if !b.contains(&position) {
            continue;
        }
        let yaw = normalize_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let pose = Pose { position, yaw };
        if is_collision_free(snap, &pose, params.radius) {
            return Ok(pose);
        }
    }
    Err(Error::PlanningStuck(
        "no collision-free recovery pose within reach".into(),
    ))
}

/// Plan the next sensing pose from `current`.
///
/// Grows a tree of `tree_size` nodes (continuing to `max_tree_size` while
/// the best gain stays under `min_gain`), then returns the first edge of the
/// best branch.  If the whole tree stays under the threshold, a bounded
/// random recovery step keeps the episode moving.
pub fn plan_next<R: Rng>(
    snap: &MapSnapshot,
    current: &Pose,
    rig: &Rig,
    params: &PlannerParams,
    rng: &mut R,
) -> Result<(Pose, Diagnostic)> {
    params.validate()?;
    let mut tree = vec![PlanNode {
        pose: *current,
        parent: None,
        edge_cost: 0.0,
        path_cost: 0.0,
        marginal_gain: 0.0,
        gain: 0.0,
    }];
    grow(&mut tree, snap, rig, params, rng, params.tree_size)?;
    let mut best = best_node(&tree);
    if tree[best].gain < params.min_gain {
        grow(&mut tree, snap, rig, params, rng, params.max_tree_size)?;
        best = best_node(&tree);
    }
    if tree[best].gain >= params.min_gain && best != 0 {
        let mut node = best;
        while let Some(parent) = tree[node].parent {
            if parent == 0 {
                break;
            }
            node = parent;
        }
        let diag = Diagnostic {
            tree_size: tree.len(),
            best_gain: tree[best].gain,
            recovery: false,
        };
        return Ok((tree[node].pose, diag));
    }
    let pose = sample_recovery(snap, current, params, rng)?;
    let diag = Diagnostic {
        tree_size: tree.len(),
        best_gain: tree[best].gain,
        recovery: true,
    };
    Ok((pose, diag))
}

/// Kinematic teleport: the vehicle assumes the target pose exactly.
pub fn act(_current: &Pose, target: &Pose) -> Pose {
    Pose {
        position: target.position,
        yaw: normalize_angle(target.yaw),
    }
}
