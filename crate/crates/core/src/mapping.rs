//! Probabilistic semantic-metric voxel mapping.
//!
//! The map is a sparse hash grid over a bounded axis-aligned volume.  Each
//! stored voxel carries an occupancy log-odds value and a categorical class
//! distribution; voxels never touched by a measurement are implicitly unknown
//! with a uniform class prior.  Occupancy and semantics are both updated by
//! recursive Bayesian rules, so integration order within a single measurement
//! batch is made explicit and deterministic here.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::sensor::PointCloud;
use crate::traversal::{voxel_center, voxel_of, GridRay, VoxelKey};

/// Tuning constants for occupancy and semantic updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapParams {
    /// Inverse sensor model probability for a voxel containing a hit.
    pub p_hit: f64,
    /// Inverse sensor model probability for a voxel a ray passed through.
    pub p_miss: f64,
    /// Lower log-odds saturation bound.
    pub l_min: f64,
    /// Upper log-odds saturation bound.
    pub l_max: f64,
    /// Half-width of the dead band around 0.5 occupancy probability within
    /// which a voxel still counts as unknown.
    pub band: f64,
    /// Probability floor applied during semantic fusion so no class is ever
    /// irrecoverably ruled out.
    pub class_floor: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            p_hit: 0.7,
            p_miss: 0.4,
            l_min: -2.0,
            l_max: 3.5,
            band: 0.15,
            class_floor: 1e-6,
        }
    }
}

impl MapParams {
    fn validate(&self) -> Result<()> {
        if !(self.p_hit > 0.0 && self.p_hit < 1.0 && self.p_miss > 0.0 && self.p_miss < 1.0) {
            return Err(Error::invalid(
                "sensor model probabilities must lie strictly inside (0, 1)",
            ));
        }
        if !(self.l_min.is_finite() && self.l_max.is_finite() && self.l_min < self.l_max) {
            return Err(Error::invalid("log-odds clamp bounds must satisfy l_min < l_max"));
        }
        if !(self.band >= 0.0 && self.band < 0.5) {
            return Err(Error::invalid("dead band half-width must lie in [0, 0.5)"));
        }
        if !(self.class_floor > 0.0 && self.class_floor < 1.0) {
            return Err(Error::invalid("class floor must lie strictly inside (0, 1)"));
        }
        Ok(())
    }
}

/// One recursive log-odds occupancy update with saturation.
///
/// `p_meas` is the inverse sensor model probability for this measurement and
/// must lie strictly inside (0, 1).
pub fn logodds_update(l: f64, p_meas: f64, params: &MapParams) -> Result<f64> {
    if !p_meas.is_finite() || p_meas <= 0.0 || p_meas >= 1.0 {
        return Err(Error::invalid(format!(
            "measurement probability {p_meas} must lie strictly inside (0, 1)"
        )));
    }
    if !l.is_finite() {
        return Err(Error::invalid("log-odds input must be finite"));
    }
    Ok((l + (p_meas / (1.0 - p_meas)).ln()).clamp(params.l_min, params.l_max))
}

/// Occupancy probability corresponding to a log-odds value.
pub fn occupancy_probability(l: f64) -> f64 {
    1.0 - 1.0 / (1.0 + l.exp())
}

/// Discrete occupancy classification of a voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Occupancy {
    Occupied,
    Free,
    Unknown,
}

/// A categorical distribution over the scene's class table.
///
/// Entries are non-negative and sum to one (within a small numerical
/// tolerance at construction; fusion renormalizes exactly once per update).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    p: Vec<f64>,
}

impl ClassDistribution {
    /// Uniform prior over `k` classes.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "class distribution needs at least one class");
        ClassDistribution { p: vec![1.0 / k as f64; k] }
    }

    /// Distribution from explicit probabilities.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("class distribution needs at least one class"));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "class distribution entries must be finite and non-negative",
            ));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "class distribution sums to {sum}, expected 1"
            )));
        }
        Ok(ClassDistribution { p })
    }

    /// A peaked distribution putting `1 - epsilon` on `class` and spreading
    /// the remainder evenly over the other classes.
    pub fn peaked(class: usize, k: usize, epsilon: f64) -> Result<Self> {
        if k < 1 || class >= k {
            return Err(Error::invalid(format!(
                "class index {class} out of range for {k} classes"
            )));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::invalid("confusion mass must lie in [0, 1)"));
        }
        let mut p = if k == 1 {
            vec![1.0]
        } else {
            vec![epsilon / (k - 1) as f64; k]
        };
        p[class] = 1.0 - epsilon;
        Ok(ClassDistribution { p })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Most probable class; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.p.iter().enumerate().skip(1) {
            if *v > self.p[best] {
                best = i;
            }
        }
        best
    }

    /// Bayesian fusion of a prior with an observed class distribution.
    ///
    /// Both inputs are floored at `floor` before the elementwise product so a
    /// confident wrong observation cannot zero out a class forever, and the
    /// normalized result is nudged back above the floor (mass is taken
    /// proportionally from the remaining classes).
    pub fn fuse(&self, obs: &ClassDistribution, floor: f64) -> Result<ClassDistribution> {
        if self.p.len() != obs.p.len() {
            return Err(Error::invalid(format!(
                "cannot fuse class distributions of sizes {} and {}",
                self.p.len(),
                obs.p.len()
            )));
        }
        let mut q: Vec<f64> = self
            .p
            .iter()
            .zip(&obs.p)
            .map(|(a, b)| a.max(floor) * b.max(floor))
            .collect();
        let sum: f64 = q.iter().sum();
        for v in &mut q {
            *v /= sum;
        }
        // Enforce the floor on the output.  Raising small entries removes
        // mass from the rest; repeat in case the rescued mass pushes another
        // entry under (terminates: the below-floor set only grows).
        loop {
            let mut floored_mass = 0.0;
            let mut rest_mass = 0.0;
            for &v in &q {
                if v < floor {
                    floored_mass += floor;
                } else {
                    rest_mass += v;
                }
            }
            if floored_mass == 0.0 || rest_mass == 0.0 {
                break;
            }
            let scale = (1.0 - floored_mass) / rest_mass;
            let mut clean = true;
            for v in &mut q {
                if *v < floor {
                    *v = floor;
                } else {
                    *v *= scale;
                    if *v < floor {
                        clean = false;
                    }
                }
            }
            if clean {
                break;
            }
        }
        Ok(ClassDistribution { p: q })
    }
}

/// Bayesian fusion of a stored class distribution with an observation.
pub fn fuse_semantics(
    prior: &ClassDistribution,
    obs: &ClassDistribution,
    floor: f64,
) -> Result<ClassDistribution> {
    prior.fuse(obs, floor)
}

/// Per-voxel storage: occupancy log-odds, class belief, and hit count.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelState {
    pub log_odds: f64,
    pub classes: ClassDistribution,
    pub hits: u32,
}

/// Aggregate occupancy bookkeeping over the whole bounded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageStats {
    pub occupied: u64,
    pub free: u64,
    pub unknown: u64,
    /// Occupied voxel counts keyed by most probable class.
    pub per_class_occupied: Vec<u64>,
}

impl CoverageStats {
    pub fn total(&self) -> u64 {
        self.occupied + self.free + self.unknown
    }

    /// Fraction of the grid that has left the unknown state.
    pub fn observed_fraction(&self) -> f64 {
        (self.occupied + self.free) as f64 / self.total() as f64
    }
}

/// Summary of one point cloud integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntegrationReport {
    /// Rays processed (hit rays plus free rays), excluding degenerate ones.
    pub rays: usize,
    /// Distinct voxels that received at least one occupancy update.
    pub cells_touched: usize,
    /// Voxels created by this integration.
    pub cells_new: usize,
    /// Rays skipped because the endpoint coincided with the sensor origin.
    pub degenerate_rays: usize,
}

/// Sparse semantic-metric voxel map over a bounded volume.
pub struct VoxelMap {
    bounds: Aabb,
    resolution: f64,
    origin: Vec3,
    dims: [i32; 3],
    num_classes: usize,
    params: MapParams,
    store: rustc_hash::FxHashMap<VoxelKey, VoxelState>,
}

impl VoxelMap {
    pub fn new(bounds: Aabb, resolution: f64, num_classes: usize, params: MapParams) -> Result<Self> {
        if !bounds.is_valid() {
            return Err(Error::invalid("map bounds must be a valid box"));
        }
        if !resolution.is_finite() || resolution <= 0.0 {
            return Err(Error::invalid(format!(
                "voxel resolution {resolution} must be positive"
            )));
        }
        if num_classes < 1 {
            return Err(Error::invalid("map needs at least one semantic class"));
        }
        params.validate()?;
        let e = bounds.extent();
        let mut dims = [0i32; 3];
        for (i, len) in [e.x, e.y, e.z].into_iter().enumerate() {
            let n = (len / resolution).ceil();
            if !(n >= 1.0 && n <= i32::MAX as f64) {
                return Err(Error::invalid("map bounds produce an unusable grid size"));
            }
            dims[i] = n as i32;
        }
        let total = dims.iter().map(|&d| d as u64).product::<u64>();
        if total > (1 << 31) {
            return Err(Error::invalid(format!(
                "grid of {total} voxels is too large; use a coarser resolution"
            )));
        }
        Ok(VoxelMap {
            origin: bounds.min,
            bounds,
            resolution,
            dims,
            num_classes,
            params,
            store: rustc_hash::FxHashMap::default(),
        })
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> &Vec3 {
        &self.origin
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn total_voxels(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    /// Number of voxels holding explicit state.
    pub fn stored_voxels(&self) -> usize {
        self.store.len()
    }

    pub fn key_at(&self, p: &Vec3) -> VoxelKey {
        voxel_of(p, &self.origin, self.resolution)
    }

    pub fn center(&self, key: VoxelKey) -> Vec3 {
        voxel_center(key, &self.origin, self.resolution)
    }

    pub fn in_bounds(&self, key: VoxelKey) -> bool {
        key.x >= 0
            && key.y >= 0
            && key.z >= 0
            && key.x < self.dims[0]
            && key.y < self.dims[1]
            && key.z < self.dims[2]
    }

    pub fn voxel(&self, key: VoxelKey) -> Option<&VoxelState> {
        self.store.get(&key)
    }

    /// Occupancy probability of a voxel, or `None` if it was never updated.
    pub fn occupancy(&self, key: VoxelKey) -> Option<f64> {
        self.store.get(&key).map(|v| occupancy_probability(v.log_odds))
    }

    /// Discrete occupancy state; untouched voxels are unknown.
    pub fn state(&self, key: VoxelKey) -> Occupancy {
        match self.store.get(&key) {
            None => Occupancy::Unknown,
            Some(v) => self.state_of(v.log_odds),
        }
    }

    fn state_of(&self, log_odds: f64) -> Occupancy {
        let p = occupancy_probability(log_odds);
        if p > 0.5 + self.params.band {
            Occupancy::Occupied
        } else if p < 0.5 - self.params.band {
            Occupancy::Free
        } else {
            Occupancy::Unknown
        }
    }

    /// Most probable class of a stored voxel.
    pub fn classify(&self, key: VoxelKey) -> Result<usize> {
        self.store
            .get(&key)
            .map(|v| v.classes.argmax())
            .ok_or_else(|| Error::NotFound(format!("voxel ({}, {}, {})", key.x, key.y, key.z)))
    }

    /// Overwrite a voxel's state directly.  Intended for building test
    /// fixtures; regular updates should go through [`VoxelMap::integrate`].
    pub fn set_voxel(&mut self, key: VoxelKey, log_odds: f64, classes: ClassDistribution) -> Result<()> {
        if !self.in_bounds(key) {
            return Err(Error::invalid(format!(
                "voxel ({}, {}, {}) lies outside the map grid",
                key.x, key.y, key.z
            )));
        }
        if classes.len() != self.num_classes {
            return Err(Error::invalid(format!(
                "class distribution has {} entries, map expects {}",
                classes.len(),
                self.num_classes
            )));
        }
        if !log_odds.is_finite() {
            return Err(Error::invalid("log-odds must be finite"));
        }
        let hits = self.store.get(&key).map_or(0, |v| v.hits);
        self.store.insert(
            key,
            VoxelState {
                log_odds: log_odds.clamp(self.params.l_min, self.params.l_max),
                classes,
                hits,
            },
        );
        Ok(())
    }

    fn entry(&mut self, key: VoxelKey, created: &mut usize) -> &mut VoxelState {
        let num_classes = self.num_classes;
        self.store.entry(key).or_insert_with(|| {
            *created += 1;
            VoxelState {
                log_odds: 0.0,
                classes: ClassDistribution::uniform(num_classes),
                hits: 0,
            }
        })
    }

    /// Integrate one sensing batch into the map.
    ///
    /// Endpoint voxels of hit rays receive a single `p_hit` occupancy update
    /// per integration regardless of how many points land in them, plus one
    /// semantic fusion per point.  Every other in-bounds voxel traversed by a
    /// ray receives a single `p_miss` update, except the voxel containing the
    /// sensor origin, which is never updated by traversal.  Endpoint updates
    /// take priority: a voxel that is both an endpoint and on another ray's
    /// path only gets the endpoint update.
    pub fn integrate(&mut self, cloud: &PointCloud) -> Result<IntegrationReport> {
        if !self.bounds.contains(&cloud.origin) {
            return Err(Error::invalid(
                "sensor origin lies outside the map bounds",
            ));
        }
        for p in &cloud.hits {
            if !(p.position.x.is_finite() && p.position.y.is_finite() && p.position.z.is_finite()) {
                return Err(Error::invalid("point cloud contains a non-finite hit"));
            }
            if p.classes.len() != self.num_classes {
                return Err(Error::invalid(format!(
                    "point labeled over {} classes, map expects {}",
                    p.classes.len(),
                    self.num_classes
                )));
            }
        }
        for e in &cloud.free_rays {
            if !(e.x.is_finite() && e.y.is_finite() && e.z.is_finite()) {
                return Err(Error::invalid("point cloud contains a non-finite free ray"));
            }
        }

        let mut report = IntegrationReport::default();
        let origin_key = self.key_at(&cloud.origin);
        let hit_p = self.params.p_hit;
        let miss_p = self.params.p_miss;
        let floor = self.params.class_floor;
        let params = self.params;

        // Pass 1: endpoint updates, in point order.
        let mut endpoint_keys: FxHashSet<VoxelKey> = FxHashSet::default();
        for p in &cloud.hits {
            if p.position == cloud.origin {
                report.degenerate_rays += 1;
                continue;
            }
            report.rays += 1;
            let key = self.key_at(&p.position);
            if !self.in_bounds(key) {
                continue;
            }
            let first_point_here = endpoint_keys.insert(key);
            let mut created = 0;
            let voxel = self.entry(key, &mut created);
            if first_point_here {
                voxel.log_odds = logodds_update(voxel.log_odds, hit_p, &params)?;
            }
            voxel.classes = voxel.classes.fuse(&p.classes, floor)?;
            voxel.hits += 1;
            report.cells_new += created;
        }

        // Pass 2: free-space carving, in ray order.  Hit rays stop short of
        // their endpoint voxel; free rays carve their full length.
        let grid_origin = self.origin;
        let resolution = self.resolution;
        let mut missed_keys: FxHashSet<VoxelKey> = FxHashSet::default();
        let mut carve = |map: &mut Self,
                         end: &Vec3,
                         stop_key: Option<VoxelKey>,
                         report: &mut IntegrationReport|
         -> Result<()> {
            for key in GridRay::new(&cloud.origin, end, &grid_origin, resolution) {
                if Some(key) == stop_key {
                    break;
                }
                if key == origin_key
                    || !map.in_bounds(key)
                    || endpoint_keys.contains(&key)
                    || !missed_keys.insert(key)
                {
                    continue;
                }
                let mut created = 0;
                let voxel = map.entry(key, &mut created);
                voxel.log_odds = logodds_update(voxel.log_odds, miss_p, &params)?;
                report.cells_new += created;
            }
            Ok(())
        };
        for p in &cloud.hits {
            if p.position == cloud.origin {
                continue;
            }
            let end_key = self.key_at(&p.position);
            carve(self, &p.position, Some(end_key), &mut report)?;
        }
        for e in &cloud.free_rays {
            if *e == cloud.origin {
                report.degenerate_rays += 1;
                continue;
            }
            report.rays += 1;
            carve(self, e, None, &mut report)?;
        }

        report.cells_touched = endpoint_keys.len() + missed_keys.len();
        Ok(report)
    }

    /// Occupancy tallies over the full bounded grid.
    pub fn coverage_stats(&self) -> CoverageStats {
        let mut occupied = 0u64;
        let mut free = 0u64;
        let mut per_class = vec![0u64; self.num_classes];
        for v in self.store.values() {
            match self.state_of(v.log_odds) {
                Occupancy::Occupied => {
                    occupied += 1;
                    per_class[v.classes.argmax()] += 1;
                }
                Occupancy::Free => free += 1,
                Occupancy::Unknown => {}
            }
        }
        CoverageStats {
            occupied,
            free,
            unknown: self.total_voxels() - occupied - free,
            per_class_occupied: per_class,
        }
    }

    /// Write the stored voxels as CSV, sorted by integer key.
    ///
    /// Columns: `voxel_x,voxel_y,voxel_z,log_odds,p_occ,class_id,class_p`.
    /// `log_odds` and `class_p` round-trip exactly through [`VoxelMap::import_csv`];
    /// `p_occ` is derived and informational.
    pub fn export_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "voxel_x,voxel_y,voxel_z,log_odds,p_occ,class_id,class_p")?;
        let mut keys: Vec<VoxelKey> = self.store.keys().copied().collect();
        keys.sort();
        for key in keys {
            let v = &self.store[&key];
            let class_id = v.classes.argmax();
            writeln!(
                w,
                "{},{},{},{},{:.6},{},{}",
                key.x,
                key.y,
                key.z,
                v.log_odds,
                occupancy_probability(v.log_odds),
                class_id,
                v.classes.probs()[class_id],
            )?;
        }
        Ok(())
    }

    /// Load voxel rows in the [`VoxelMap::export_csv`] format into this map.
    ///
    /// Only the dominant class probability survives a round trip; the
    /// remaining mass is spread evenly over the other classes.  Hit counts
    /// are not persisted.
    pub fn import_csv<R: std::io::BufRead>(&mut self, r: R) -> Result<()> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::invalid("voxel CSV is empty"))?;
        if header.trim() != "voxel_x,voxel_y,voxel_z,log_odds,p_occ,class_id,class_p" {
            return Err(Error::invalid(format!("unrecognized voxel CSV header: {header}")));
        }
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::invalid(format!(
                    "voxel CSV row {} has {} fields, expected 7",
                    lineno + 2,
                    fields.len()
                )));
            }
            let parse_err = |what: &str| {
                Error::invalid(format!("voxel CSV row {}: bad {what}", lineno + 2))
            };
            let key = VoxelKey::new(
                fields[0].trim().parse().map_err(|_| parse_err("voxel_x"))?,
                fields[1].trim().parse().map_err(|_| parse_err("voxel_y"))?,
                fields[2].trim().parse().map_err(|_| parse_err("voxel_z"))?,
            );
            let log_odds: f64 = fields[3].trim().parse().map_err(|_| parse_err("log_odds"))?;
            let class_id: usize = fields[5].trim().parse().map_err(|_| parse_err("class_id"))?;
            let class_p: f64 = fields[6].trim().parse().map_err(|_| parse_err("class_p"))?;
            if class_id >= self.num_classes || !(0.0..=1.0).contains(&class_p) {
                return Err(parse_err("class columns"));
            }
            let k = self.num_classes;
            // Spread the residual mass evenly, clamped so rounding can never
            // push another class above the recorded dominant one.
            let mut p = if k == 1 {
                vec![1.0]
            } else {
                vec![((1.0 - class_p) / (k - 1) as f64).min(class_p); k]
            };
            p[class_id] = class_p;
            self.set_voxel(key, log_odds, ClassDistribution::new(p)?)?;
        }
        Ok(())
    }

    /// Freeze the map into a dense snapshot for planning queries.
    pub fn snapshot(&self) -> MapSnapshot {
        let n = self.total_voxels() as usize;
        let mut cells = vec![CELL_UNKNOWN; n];
        let mut class_of = vec![0u16; n];
        let mut occupied_count = 0usize;
        let nx = self.dims[0] as usize;
        let nxy = nx * self.dims[1] as usize;
        for (key, v) in &self.store {
            let idx = key.x as usize + key.y as usize * nx + key.z as usize * nxy;
            match self.state_of(v.log_odds) {
                Occupancy::Occupied => {
                    cells[idx] = CELL_OCCUPIED;
                    class_of[idx] = v.classes.argmax() as u16;
                    occupied_count += 1;
                }
                Occupancy::Free => cells[idx] = CELL_FREE,
                Occupancy::Unknown => {}
            }
        }
        MapSnapshot {
            bounds: self.bounds,
            resolution: self.resolution,
            origin: self.origin,
            dims: self.dims,
            cells,
            class_of,
            occupied_count,
        }
    }
}

const CELL_UNKNOWN: u8 = 0;
const CELL_FREE: u8 = 1;
const CELL_OCCUPIED: u8 = 2;

/// Immutable dense view of a [`VoxelMap`] at one instant.
///
/// Planning evaluates many candidate poses against the same map state; the
/// snapshot trades the hash lookups of the sparse store for flat array
/// indexing and guarantees every candidate sees identical data.
#[derive(Debug, Clone)]
pub struct MapSnapshot {
    bounds: Aabb,
    resolution: f64,
    origin: Vec3,
    dims: [i32; 3],
    cells: Vec<u8>,
    class_of: Vec<u16>,
    occupied_count: usize,
}

impl MapSnapshot {
    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> &Vec3 {
        &self.origin
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied_count
    }

    pub fn key_at(&self, p: &Vec3) -> VoxelKey {
        voxel_of(p, &self.origin, self.resolution)
    }

    pub fn center(&self, key: VoxelKey) -> Vec3 {
        voxel_center(key, &self.origin, self.resolution)
    }

    pub fn in_bounds(&self, key: VoxelKey) -> bool {
        key.x >= 0
            && key.y >= 0
            && key.z >= 0
            && key.x < self.dims[0]
            && key.y < self.dims[1]
            && key.z < self.dims[2]
    }

    fn index(&self, key: VoxelKey) -> Option<usize> {
        if self.in_bounds(key) {
            Some(
                key.x as usize
                    + key.y as usize * self.dims[0] as usize
                    + key.z as usize * (self.dims[0] as usize * self.dims[1] as usize),
            )
        } else {
            None
        }
    }

    /// Discrete state of a voxel; out-of-bounds keys read as unknown.
    pub fn state(&self, key: VoxelKey) -> Occupancy {
        match self.index(key).map(|i| self.cells[i]) {
            Some(CELL_FREE) => Occupancy::Free,
            Some(CELL_OCCUPIED) => Occupancy::Occupied,
            _ => Occupancy::Unknown,
        }
    }

    pub fn occupied(&self, key: VoxelKey) -> bool {
        matches!(self.index(key).map(|i| self.cells[i]), Some(CELL_OCCUPIED))
    }

    /// Most probable class of an occupied voxel.
    pub fn occupied_class(&self, key: VoxelKey) -> Option<usize> {
        self.index(key).and_then(|i| {
            if self.cells[i] == CELL_OCCUPIED {
                Some(self.class_of[i] as usize)
            } else {
                None
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::LabeledPoint;
    use approx::assert_relative_eq;

    fn small_map(n: f64, res: f64, k: usize) -> VoxelMap {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(n, n, n));
        VoxelMap::new(bounds, res, k, MapParams::default()).unwrap()
    }

    #[test]
    fn logodds_neutral_measurement_is_identity() {
        let p = MapParams::default();
        assert_eq!(logodds_update(0.0, 0.5, &p).unwrap(), 0.0);
    }

    #[test]
    fn logodds_hit_from_prior() {
        let p = MapParams::default();
        let l = logodds_update(0.0, 0.7, &p).unwrap();
        assert_relative_eq!(l, 0.8473, max_relative = 1e-4);
    }

    #[test]
    fn logodds_saturates_at_upper_clamp() {
        let p = MapParams::default();
        assert_eq!(logodds_update(3.4, 0.9, &p).unwrap(), 3.5);
    }

    #[test]
    fn logodds_rejects_degenerate_probability() {
        let p = MapParams::default();
        assert!(logodds_update(0.0, 0.0, &p).is_err());
        assert!(logodds_update(0.0, 1.0, &p).is_err());
        assert!(logodds_update(0.0, f64::NAN, &p).is_err());
    }

    #[test]
    fn fuse_uniform_prior_with_peaked_observation() {
        let prior = ClassDistribution::uniform(4);
        let obs = ClassDistribution::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        let out = prior.fuse(&obs, 1e-6).unwrap();
        for (got, want) in out.probs().iter().zip(obs.probs()) {
            assert_relative_eq!(got, want, max_relative = 1e-9);
        }
    }

    #[test]
    fn fuse_squares_and_renormalizes() {
        let d = ClassDistribution::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        let out = d.fuse(&d, 1e-6).unwrap();
        // (0.49, 0.01, 0.01, 0.01) normalized.
        assert_relative_eq!(out.probs()[0], 0.49 / 0.52, max_relative = 1e-9);
        assert_relative_eq!(out.probs()[1], 0.01 / 0.52, max_relative = 1e-9);
    }

    #[test]
    fn fuse_with_uniform_observation_keeps_prior() {
        let prior = ClassDistribution::new(vec![0.6, 0.3, 0.1]).unwrap();
        let out = prior.fuse(&ClassDistribution::uniform(3), 1e-6).unwrap();
        for (got, want) in out.probs().iter().zip(prior.probs()) {
            assert_relative_eq!(got, want, max_relative = 1e-9);
        }
    }

    #[test]
    fn fuse_respects_probability_floor() {
        let prior = ClassDistribution::peaked(0, 3, 0.0).unwrap();
        let obs = ClassDistribution::peaked(0, 3, 0.0).unwrap();
        let out = prior.fuse(&obs, 1e-6).unwrap();
        assert!(out.probs().iter().all(|&v| v >= 1e-6));
        let sum: f64 = out.probs().iter().sum();
        assert_relative_eq!(sum, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn repeated_fusion_concentrates_on_true_class() {
        let mut d = ClassDistribution::uniform(3);
        let obs = ClassDistribution::peaked(2, 3, 0.3).unwrap();
        for _ in 0..3 {
            d = d.fuse(&obs, 1e-6).unwrap();
        }
        assert_eq!(d.argmax(), 2);
        assert!(d.probs()[2] > 0.9);
    }

    #[test]
    fn argmax_tie_resolves_to_lowest_index() {
        let d = ClassDistribution::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(d.argmax(), 0);
    }

    fn one_ray_cloud(origin: Vec3, hit: Vec3, k: usize) -> PointCloud {
        PointCloud {
            origin,
            hits: vec![LabeledPoint {
                position: hit,
                classes: ClassDistribution::peaked(0, k, 0.1).unwrap(),
            }],
            free_rays: Vec::new(),
        }
    }

    #[test]
    fn integrate_single_ray_carves_and_marks() {
        let mut map = small_map(4.0, 0.5, 2);
        let cloud = one_ray_cloud(
            Vec3::new(0.25, 0.25, 0.25),
            Vec3::new(1.75, 0.25, 0.25),
            2,
        );
        let report = map.integrate(&cloud).unwrap();
        assert_eq!(report.rays, 1);
        assert_eq!(report.degenerate_rays, 0);
        assert_eq!(report.cells_touched, 3);
        assert_eq!(report.cells_new, 3);

        // The sensor's own voxel stays untouched.
        assert_eq!(map.occupancy(VoxelKey::new(0, 0, 0)), None);
        for k in [VoxelKey::new(1, 0, 0), VoxelKey::new(2, 0, 0)] {
            assert_relative_eq!(map.occupancy(k).unwrap(), 0.4, max_relative = 1e-12);
        }
        assert_relative_eq!(
            map.occupancy(VoxelKey::new(3, 0, 0)).unwrap(),
            0.7,
            max_relative = 1e-12
        );
    }

    #[test]
    fn integrate_twice_accumulates_endpoint_evidence() {
        let mut map = small_map(4.0, 0.5, 2);
        let cloud = one_ray_cloud(
            Vec3::new(0.25, 0.25, 0.25),
            Vec3::new(1.75, 0.25, 0.25),
            2,
        );
        map.integrate(&cloud).unwrap();
        map.integrate(&cloud).unwrap();
        let p = map.occupancy(VoxelKey::new(3, 0, 0)).unwrap();
        assert_relative_eq!(p, 0.8448275862068966, max_relative = 1e-12);
        assert_eq!(map.voxel(VoxelKey::new(3, 0, 0)).unwrap().hits, 2);
    }

    #[test]
    fn integrate_deduplicates_endpoint_occupancy_within_batch() {
        let mut map = small_map(4.0, 0.5, 2);
        let origin = Vec3::new(0.25, 0.25, 0.25);
        let classes = ClassDistribution::uniform(2);
        let cloud = PointCloud {
            origin,
            hits: vec![
                LabeledPoint { position: Vec3::new(1.75, 0.25, 0.25), classes: classes.clone() },
                LabeledPoint { position: Vec3::new(1.8, 0.3, 0.3), classes: classes.clone() },
            ],
            free_rays: Vec::new(),
        };
        map.integrate(&cloud).unwrap();
        // Both points share voxel (3,0,0): one occupancy update, two hits.
        let v = map.voxel(VoxelKey::new(3, 0, 0)).unwrap();
        assert_relative_eq!(occupancy_probability(v.log_odds), 0.7, max_relative = 1e-12);
        assert_eq!(v.hits, 2);
    }

    #[test]
    fn integrate_counts_degenerate_rays() {
        let mut map = small_map(4.0, 0.5, 2);
        let origin = Vec3::new(0.25, 0.25, 0.25);
        let mut cloud = one_ray_cloud(origin, origin, 2);
        cloud.free_rays.push(origin);
        let report = map.integrate(&cloud).unwrap();
        assert_eq!(report.degenerate_rays, 2);
        assert_eq!(report.rays, 0);
        assert_eq!(map.stored_voxels(), 0);
    }

    #[test]
    fn integrate_free_ray_carves_full_segment() {
        let mut map = small_map(4.0, 0.5, 2);
        let cloud = PointCloud {
            origin: Vec3::new(0.25, 0.25, 0.25),
            hits: Vec::new(),
            free_rays: vec![Vec3::new(1.75, 0.25, 0.25)],
        };
        map.integrate(&cloud).unwrap();
        // Unlike a hit ray, the final voxel is carved free too.
        assert_relative_eq!(
            map.occupancy(VoxelKey::new(3, 0, 0)).unwrap(),
            0.4,
            max_relative = 1e-12
        );
    }

    #[test]
    fn integrate_rejects_origin_outside_bounds() {
        let mut map = small_map(4.0, 0.5, 2);
        let cloud = one_ray_cloud(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.25, 0.25), 2);
        assert!(map.integrate(&cloud).is_err());
    }

    #[test]
    fn integrate_clips_rays_to_bounds() {
        let mut map = small_map(2.0, 0.5, 2);
        // Hit point beyond the far face: carve inside, no endpoint update.
        let cloud = one_ray_cloud(Vec3::new(0.25, 0.25, 0.25), Vec3::new(5.0, 0.25, 0.25), 2);
        map.integrate(&cloud).unwrap();
        for v in map.coverage_stats().per_class_occupied {
            assert_eq!(v, 0);
        }
        assert_eq!(map.state(VoxelKey::new(3, 0, 0)), Occupancy::Unknown);
        assert!(map.occupancy(VoxelKey::new(2, 0, 0)).is_some());
    }

    #[test]
    fn state_thresholds_respect_dead_band() {
        let mut map = small_map(4.0, 1.0, 2);
        let k = VoxelKey::new(0, 0, 0);
        assert_eq!(map.state(k), Occupancy::Unknown);

        // One miss: p = 0.4, inside [0.35, 0.65] -> still unknown.
        let l_miss = logodds_update(0.0, 0.4, map.params()).unwrap();
        map.set_voxel(k, l_miss, ClassDistribution::uniform(2)).unwrap();
        assert_eq!(map.state(k), Occupancy::Unknown);

        // Two misses: p ~ 0.3 -> free.
        let l2 = logodds_update(l_miss, 0.4, map.params()).unwrap();
        map.set_voxel(k, l2, ClassDistribution::uniform(2)).unwrap();
        assert_eq!(map.state(k), Occupancy::Free);

        // One hit from scratch: p = 0.7 -> occupied.
        let l_hit = logodds_update(0.0, 0.7, map.params()).unwrap();
        map.set_voxel(k, l_hit, ClassDistribution::uniform(2)).unwrap();
        assert_eq!(map.state(k), Occupancy::Occupied);
    }

    #[test]
    fn classify_reports_missing_voxel() {
        let map = small_map(4.0, 1.0, 3);
        match map.classify(VoxelKey::new(1, 1, 1)) {
            Err(Error::NotFound(_)) => {}
            other => panic!("expected NotFound, got {other:?}"),
        }
    }

    #[test]
    fn coverage_stats_partition_the_grid() {
        let mut map = small_map(10.0, 1.0, 2);
        let stats = map.coverage_stats();
        assert_eq!(stats.total(), 1000);
        assert_eq!(stats.unknown, 1000);
        assert_eq!(stats.observed_fraction(), 0.0);

        let l_hit = logodds_update(0.0, 0.7, map.params()).unwrap();
        map.set_voxel(
            VoxelKey::new(1, 2, 3),
            l_hit,
            ClassDistribution::peaked(1, 2, 0.1).unwrap(),
        )
        .unwrap();
        let stats = map.coverage_stats();
        assert_eq!(stats.occupied, 1);
        assert_eq!(stats.unknown, 999);
        assert_eq!(stats.per_class_occupied, vec![0, 1]);
        assert_eq!(stats.total(), 1000);
    }

    #[test]
    fn snapshot_mirrors_map_state() {
        let mut map = small_map(4.0, 0.5, 2);
        let cloud = one_ray_cloud(
            Vec3::new(0.25, 0.25, 0.25),
            Vec3::new(1.75, 0.25, 0.25),
            2,
        );
        map.integrate(&cloud).unwrap();
        map.integrate(&cloud).unwrap();
        let snap = map.snapshot();
        assert_eq!(snap.state(VoxelKey::new(3, 0, 0)), Occupancy::Occupied);
        assert_eq!(snap.occupied_class(VoxelKey::new(3, 0, 0)), Some(0));
        // Two misses push a carved voxel through the dead band into Free.
        assert_eq!(snap.state(VoxelKey::new(1, 0, 0)), Occupancy::Free);
        // The sensor's own voxel is never carved.
        assert_eq!(snap.state(VoxelKey::new(0, 0, 0)), Occupancy::Unknown);
        assert_eq!(snap.state(VoxelKey::new(100, 0, 0)), Occupancy::Unknown);
        assert_eq!(snap.occupied_count(), 1);
        for x in 0..snap.dims()[0] {
            for y in 0..snap.dims()[1] {
                for z in 0..snap.dims()[2] {
                    let k = VoxelKey::new(x, y, z);
                    assert_eq!(snap.state(k), map.state(k), "mismatch at {k:?}");
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_preserves_voxels() {
        let mut map = small_map(4.0, 0.5, 3);
        let cloud = one_ray_cloud(
            Vec3::new(0.25, 0.25, 0.25),
            Vec3::new(1.75, 0.25, 0.25),
            3,
        );
        map.integrate(&cloud).unwrap();
        let mut buf = Vec::new();
        map.export_csv(&mut buf).unwrap();

        let mut restored = small_map(4.0, 0.5, 3);
        restored.import_csv(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(restored.stored_voxels(), map.stored_voxels());
        for key in [
            VoxelKey::new(1, 0, 0),
            VoxelKey::new(2, 0, 0),
            VoxelKey::new(3, 0, 0),
        ] {
            let a = map.voxel(key).unwrap();
            let b = restored.voxel(key).unwrap();
            assert_eq!(a.log_odds, b.log_odds, "log-odds drifted for {key:?}");
            assert_eq!(a.classes.argmax(), b.classes.argmax());
            assert_relative_eq!(
                a.classes.probs()[a.classes.argmax()],
                b.classes.probs()[b.classes.argmax()],
                max_relative = 1e-12
            );
            assert_eq!(map.state(key), restored.state(key));
        }
    }

    #[test]
    fn csv_import_rejects_malformed_rows() {
        let mut map = small_map(4.0, 0.5, 2);
        let bad_header = "x,y,z\n";
        assert!(map.import_csv(std::io::Cursor::new(bad_header)).is_err());
        let bad_row = "voxel_x,voxel_y,voxel_z,log_odds,p_occ,class_id,class_p\n1,1\n";
        assert!(map.import_csv(std::io::Cursor::new(bad_row)).is_err());
        let bad_class = "voxel_x,voxel_y,voxel_z,log_odds,p_occ,class_id,class_p\n1,1,1,0.5,0.62,9,0.9\n";
        assert!(map.import_csv(std::io::Cursor::new(bad_class)).is_err());
    }

    #[test]
    fn map_rejects_bad_construction() {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(4.0, 4.0, 4.0));
        assert!(VoxelMap::new(bounds, 0.0, 2, MapParams::default()).is_err());
        assert!(VoxelMap::new(bounds, -1.0, 2, MapParams::default()).is_err());
        assert!(VoxelMap::new(bounds, 1.0, 0, MapParams::default()).is_err());
        let p = MapParams { p_hit: 1.0, ..MapParams::default() };
        assert!(VoxelMap::new(bounds, 1.0, 2, p).is_err());
    }
}
