//! Experiment orchestration: sense-plan-act episodes, multi-seed coverage
//! aggregation, the battery power model, and camera-count design selection.
//!
//! Everything downstream of the RNG seed is deterministic, so per-seed
//! episode outputs are reproducible byte-for-byte; wall-clock phase timings
//! are recorded alongside but are the only non-reproducible quantities.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mapping::{MapParams, VoxelMap};
use crate::planner::{self, PlannerParams};
use crate::scene::{self, Scene};
use crate::sensor::{self, Pose, Rig, SenseOptions};

/// Where the experiment scene comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSource {
    /// Load a scene JSON file.
    File { path: PathBuf },
    /// Generate the synthetic dry dock.
    Drydock {
        #[serde(default = "default_dock_length")]
        length: f64,
        #[serde(default = "default_dock_width")]
        width: f64,
        #[serde(default = "default_dock_depth")]
        depth: f64,
        #[serde(default = "default_dock_wall")]
        wall_thickness: f64,
    },
}

fn default_dock_length() -> f64 {
    20.0
}
fn default_dock_width() -> f64 {
    12.0
}
fn default_dock_depth() -> f64 {
    6.0
}
fn default_dock_wall() -> f64 {
    0.4
}

impl SceneSource {
    pub fn load(&self) -> Result<Scene> {
        match self {
            SceneSource::File { path } => scene::load_scene(path),
            SceneSource::Drydock { length, width, depth, wall_thickness } => scene::make_drydock(
                *length,
                *width,
                *depth,
                *wall_thickness,
                scene::drydock_classes(),
            ),
        }
    }
}

/// Explicit start pose override.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

/// Full experiment description; the config JSON mirrors this one-to-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneSource,
    /// Camera counts to compare, each instantiated from the rig presets.
    pub rig_variants: Vec<usize>,
    /// Optional rig JSON file; when set it replaces the preset variants.
    pub rig_file: Option<PathBuf>,
    /// Sense-plan-act iterations per episode.
    pub iterations: usize,
    pub seeds: Vec<u64>,
    /// Voxel edge length in meters.
    pub resolution: f64,
    /// Observations per second; converts flight minutes into an iteration
    /// budget.
    pub sense_rate: f64,
    pub sense: SenseOptions,
    pub map: MapParams,
    pub planner: PlannerParams,
    /// Defaults to the scene-bounds center at 1.5 m altitude.
    pub start: Option<StartPose>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scene: SceneSource::Drydock {
                length: default_dock_length(),
                width: default_dock_width(),
                depth: default_dock_depth(),
                wall_thickness: default_dock_wall(),
            },
            rig_variants: vec![1, 3, 5],
            rig_file: None,
            iterations: 300,
            seeds: vec![1, 2, 3, 4, 5],
            resolution: 0.4,
            sense_rate: 2.0,
            sense: SenseOptions::default(),
            map: MapParams::default(),
            planner: PlannerParams::default(),
            start: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.rig_file.is_none() {
            if self.rig_variants.is_empty() {
                return Err(Error::invalid("at least one rig variant is required"));
            }
            for &m in &self.rig_variants {
                if !(1..=5).contains(&m) {
                    return Err(Error::invalid(format!("rig variant {m} is not in 1..=5")));
                }
            }
            for (i, m) in self.rig_variants.iter().enumerate() {
                if self.rig_variants[..i].contains(m) {
                    return Err(Error::invalid(format!("rig variant {m} appears twice")));
                }
            }
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::invalid("resolution must be positive"));
        }
        if !(self.sense_rate > 0.0 && self.sense_rate.is_finite()) {
            return Err(Error::invalid("sense_rate must be positive"));
        }
        self.planner.validate()?;
        Ok(())
    }

    /// Resolve the rig variants to concrete rigs, in comparison order.
    pub fn rigs(&self) -> Result<Vec<Rig>> {
        match &self.rig_file {
            Some(path) => Ok(vec![sensor::load_rig(path)?]),
            None => self.rig_variants.iter().map(|&m| Rig::preset(m)).collect(),
        }
    }

    /// Start pose for a given scene.
    pub fn start_pose(&self, scene: &Scene) -> Result<Pose> {
        match self.start {
            Some(s) => Pose::new(Vec3::new(s.position[0], s.position[1], s.position[2]), s.yaw),
            None => {
                let c = scene.bounds().center();
                Pose::new(Vec3::new(c.x, c.y, 1.5), 0.0)
            }
        }
    }
}

/// Load an [`ExperimentConfig`] from JSON.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path)
        .map_err(|e| Error::load(path.display().to_string(), format!("config: {e}")))?;
    serde_json::from_str(&json)
        .map_err(|e| Error::load(path.display().to_string(), format!("config: {e}")))
}

/// Coverage and cumulative phase timings after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    pub occupied: u64,
    pub free: u64,
    pub unknown: u64,
    /// Cumulative wall-clock seconds spent planning before this record.
    pub cum_plan_s: f64,
    /// Cumulative wall-clock seconds spent sensing.
    pub cum_sense_s: f64,
    /// Cumulative wall-clock seconds spent integrating clouds.
    pub cum_integrate_s: f64,
}

/// One planning decision within an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub iteration: usize,
    pub tree_size: usize,
    pub best_gain: f64,
    pub chosen: Pose,
    pub recovery: bool,
}

/// Everything one episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub m: usize,
    pub seed: u64,
    pub records: Vec<CoverageRecord>,
    pub plans: Vec<PlanRow>,
    /// True when the episode ended early; `error` then says why.
    pub aborted: bool,
    pub error: Option<String>,
}

/// Run one sense-plan-act episode.  Mid-run failures (for example a stuck
/// planner) abort the episode and are reported in the result rather than as
/// an error; only invalid setup is an `Err`.
pub fn run_episode(scene: &Scene, rig: &Rig, config: &ExperimentConfig, seed: u64) -> Result<EpisodeResult> {
    config.validate()?;
    let mut map = VoxelMap::new(
        *scene.bounds(),
        config.resolution,
        scene.classes().len(),
        config.map,
    )?;
    let start = config.start_pose(scene)?;
    if !scene.bounds().contains(&start.position) {
        return Err(Error::invalid("start pose lies outside the scene bounds"));
    }

    let mut result = EpisodeResult {
        m: rig.m(),
        seed,
        records: Vec::with_capacity(config.iterations),
        plans: Vec::with_capacity(config.iterations),
        aborted: false,
        error: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pose = start;
    let mut cum_plan = 0.0;
    let mut cum_sense = 0.0;
    let mut cum_integrate = 0.0;

    for t in 1..=config.iterations {
        let clock = Instant::now();
        let observations = match sensor::sense_all(scene, &pose, rig, &config.sense, &mut rng) {
            Ok(o) => o,
            Err(e) => {
                result.aborted = true;
                result.error = Some(format!("sensing failed at iteration {t}: {e}"));
                break;
            }
        };
        cum_sense += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let mut integrate_err = None;
        for obs in &observations {
            // A camera buried in geometry (or pushed out of bounds by its
            // mount offset) has nothing trustworthy to carve.
            if obs.degenerate || !map.bounds().contains(&obs.cloud.origin) {
                continue;
            }
            if let Err(e) = map.integrate(&obs.cloud) {
                integrate_err = Some(format!("integration failed at iteration {t}: {e}"));
                break;
            }
        }
        cum_integrate += clock.elapsed().as_secs_f64();
        if let Some(e) = integrate_err {
            result.aborted = true;
            result.error = Some(e);
            break;
        }

        let stats = map.coverage_stats();
        result.records.push(CoverageRecord {
            iteration: t,
            occupied: stats.occupied,
            free: stats.free,
            unknown: stats.unknown,
            cum_plan_s: cum_plan,
            cum_sense_s: cum_sense,
            cum_integrate_s: cum_integrate,
        });

        let clock = Instant::now();
        let snapshot = map.snapshot();
        let planned = planner::plan_next(&snapshot, &pose, rig, &config.planner, &mut rng);
        cum_plan += clock.elapsed().as_secs_f64();
        match planned {
            Ok((target, diag)) => {
                result.plans.push(PlanRow {
                    iteration: t,
                    tree_size: diag.tree_size,
                    best_gain: diag.best_gain,
                    chosen: target,
                    recovery: diag.recovery,
                });
                pose = planner::act(&pose, &target);
            }
            Err(e) => {
                result.aborted = true;
                result.error = Some(format!("planning failed at iteration {t}: {e}"));
                break;
            }
        }
    }
    Ok(result)
}

/// Per-iteration aggregate over the seeds of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStat {
    pub mean_occupied: f64,
    pub std_occupied: f64,
    pub mean_free: f64,
    pub mean_unknown: f64,
    pub mean_plan_ms: f64,
    pub mean_integrate_ms: f64,
    pub mean_sense_ms: f64,
}

/// The aggregated coverage curve of one rig variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantCurve {
    pub m: usize,
    pub seeds_used: usize,
    /// Index 0 holds iteration 1.
    pub iterations: Vec<IterationStat>,
}

impl VariantCurve {
    pub fn final_mean_occupied(&self) -> f64 {
        self.iterations.last().map_or(0.0, |s| s.mean_occupied)
    }

    /// Mean per-iteration sense+integrate cost, the per-observation
    /// processing load of this camera count.
    pub fn mean_sense_integrate_ms(&self) -> f64 {
        if self.iterations.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .iterations
            .iter()
            .map(|s| s.mean_sense_ms + s.mean_integrate_ms)
            .sum();
        total / self.iterations.len() as f64
    }
}

/// Build a curve from hand-made occupied means (timings zero).  Intended for
/// selector tests and synthetic fixtures.
pub fn synthetic_curve(m: usize, occupied_means: &[f64]) -> VariantCurve {
    VariantCurve {
        m,
        seeds_used: 1,
        iterations: occupied_means
            .iter()
            .map(|&mo| IterationStat {
                mean_occupied: mo,
                std_occupied: 0.0,
                mean_free: 0.0,
                mean_unknown: 0.0,
                mean_plan_ms: 0.0,
                mean_integrate_ms: 0.0,
                mean_sense_ms: 0.0,
            })
            .collect(),
    }
}

fn aggregate_variant(m: usize, episodes: &[&EpisodeResult], iterations: usize) -> VariantCurve {
    let n = episodes.len() as f64;
    let mut stats = Vec::with_capacity(iterations);
    for t in 0..iterations {
        let mut sum_occ = 0.0;
        let mut sum_free = 0.0;
        let mut sum_unknown = 0.0;
        let mut sum_plan = 0.0;
        let mut sum_sense = 0.0;
        let mut sum_integrate = 0.0;
        for ep in episodes {
            let r = &ep.records[t];
            sum_occ += r.occupied as f64;
            sum_free += r.free as f64;
            sum_unknown += r.unknown as f64;
            let (p0, s0, i0) = if t == 0 {
                (0.0, 0.0, 0.0)
            } else {
                let prev = &ep.records[t - 1];
                (prev.cum_plan_s, prev.cum_sense_s, prev.cum_integrate_s)
            };
            sum_plan += r.cum_plan_s - p0;
            sum_sense += r.cum_sense_s - s0;
            sum_integrate += r.cum_integrate_s - i0;
        }
        let mean_occupied = sum_occ / n;
        let mut var = 0.0;
        for ep in episodes {
            let d = ep.records[t].occupied as f64 - mean_occupied;
            var += d * d;
        }
        stats.push(IterationStat {
            mean_occupied,
            std_occupied: (var / n).sqrt(),
            mean_free: sum_free / n,
            mean_unknown: sum_unknown / n,
            mean_plan_ms: sum_plan / n * 1000.0,
            mean_integrate_ms: sum_integrate / n * 1000.0,
            mean_sense_ms: sum_sense / n * 1000.0,
        });
    }
    VariantCurve { m, seeds_used: episodes.len(), iterations: stats }
}

/// Everything a full experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub episodes: Vec<EpisodeResult>,
    pub curves: Vec<VariantCurve>,
}

/// Run every (variant, seed) episode and aggregate coverage curves.
///
/// Episodes run in parallel; results are joined in (variant, seed) order so
/// aggregation is deterministic.  Aborted episodes are excluded from the
/// curves with a warning; a variant with no completed episode is an error.
pub fn run_experiment(scene: &Scene, config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let rigs = config.rigs()?;
    let start = config.start_pose(scene)?;
    if !scene.bounds().contains(&start.position) {
        return Err(Error::invalid("start pose lies outside the scene bounds"));
    }

    let jobs: Vec<(usize, u64)> = rigs
        .iter()
        .enumerate()
        .flat_map(|(i, _)| config.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let episodes: Vec<EpisodeResult> = jobs
        .par_iter()
        .map(|&(rig_idx, seed)| run_episode(scene, &rigs[rig_idx], config, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut curves = Vec::with_capacity(rigs.len());
    for rig in &rigs {
        let m = rig.m();
        let complete: Vec<&EpisodeResult> = episodes
            .iter()
            .filter(|e| e.m == m && !e.aborted)
            .collect();
        for failed in episodes.iter().filter(|e| e.m == m && e.aborted) {
            log::warn!(
                "excluding aborted episode (m={}, seed={}): {}",
                failed.m,
                failed.seed,
                failed.error.as_deref().unwrap_or("unknown failure")
            );
        }
        if complete.is_empty() {
            return Err(Error::PlanningStuck(format!(
                "no episode of the {m}-camera variant completed"
            )));
        }
        curves.push(aggregate_variant(m, &complete, config.iterations));
    }
    Ok(ExperimentOutcome { episodes, curves })
}

/// Battery endurance per camera count: mean and standard deviation of
/// hovering minutes until depletion.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    /// (camera count, mean minutes, std minutes), ascending by camera count.
    entries: Vec<(usize, f64, f64)>,
}

impl Default for PowerModel {
    /// Measured hover endurance of the 1/3/5-camera builds.
    fn default() -> Self {
        PowerModel {
            entries: vec![(1, 8.79, 0.86), (3, 8.17, 0.41), (5, 6.00, 0.99)],
        }
    }
}

impl PowerModel {
    pub fn new(mut entries: Vec<(usize, f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("power model needs at least one entry"));
        }
        entries.sort_by_key(|e| e.0);
        for (m, mean, std) in &entries {
            if !(*mean > 0.0 && *std >= 0.0) {
                return Err(Error::invalid(format!(
                    "power entry for {m} cameras must have positive mean and std >= 0"
                )));
            }
        }
        Ok(PowerModel { entries })
    }

    pub fn entries(&self) -> &[(usize, f64, f64)] {
        &self.entries
    }

    /// Mean flight minutes for a camera count: exact table value where
    /// measured, linear interpolation between neighbors otherwise.
    pub fn flight_time(&self, m: usize) -> Result<f64> {
        if !(1..=5).contains(&m) {
            return Err(Error::invalid(format!("camera count {m} is not in 1..=5")));
        }
        if let Some(e) = self.entries.iter().find(|e| e.0 == m) {
            return Ok(e.1);
        }
        let below = self.entries.iter().rev().find(|e| e.0 < m);
        let above = self.entries.iter().find(|e| e.0 > m);
        match (below, above) {
            (Some(lo), Some(hi)) => {
                let f = (m - lo.0) as f64 / (hi.0 - lo.0) as f64;
                Ok(lo.1 + f * (hi.1 - lo.1))
            }
            _ => Err(Error::invalid(format!(
                "camera count {m} is outside the measured power table"
            ))),
        }
    }
}

/// Mean flight minutes for `m` cameras under the given power model.
pub fn flight_time(power: &PowerModel, m: usize) -> Result<f64> {
    power.flight_time(m)
}

/// First iteration whose mean occupied count reaches `fraction` of the
/// curve's own final value; `None` if never reached.
pub fn time_to_coverage(curve: &VariantCurve, fraction: f64) -> Result<Option<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "coverage fraction {fraction} must lie in (0, 1]"
        )));
    }
    Ok(time_to_coverage_at(curve, fraction * curve.final_mean_occupied()))
}

/// First iteration whose mean occupied count reaches an absolute threshold.
/// Use a shared threshold (for example a fraction of the best variant's
/// final count) for cross-variant comparisons.
pub fn time_to_coverage_at(curve: &VariantCurve, threshold: f64) -> Option<usize> {
    curve
        .iterations
        .iter()
        .position(|s| s.mean_occupied >= threshold)
        .map(|i| i + 1)
}

/// One variant's row in the design-selection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub m: usize,
    pub flight_minutes: f64,
    /// floor(flight minutes × 60 × sense rate): observations affordable on
    /// one battery.
    pub budget_iterations: usize,
    /// Iteration actually scored: the budget clipped to the curve length.
    pub score_iteration: usize,
    /// Mean occupied count at the scored iteration.
    pub score: f64,
}

/// Outcome of the camera-count trade-off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    pub selected_m: usize,
}

/// Pick the camera count with the best battery-budgeted coverage: each
/// variant is scored by its mean occupied count at the last iteration its
/// flight time can afford.  Ties go to the smaller (cheaper) camera count.
pub fn select_design(
    curves: &[VariantCurve],
    power: &PowerModel,
    sense_rate: f64,
) -> Result<SelectionReport> {
    if curves.is_empty() {
        return Err(Error::invalid("select_design needs at least one curve"));
    }
    if !(sense_rate > 0.0 && sense_rate.is_finite()) {
        return Err(Error::invalid("sense_rate must be positive"));
    }
    let mut rows = Vec::with_capacity(curves.len());
    let mut ordered: Vec<&VariantCurve> = curves.iter().collect();
    ordered.sort_by_key(|c| c.m);
    for curve in ordered {
        if curve.iterations.is_empty() {
            return Err(Error::invalid(format!(
                "curve for m={} has no iterations",
                curve.m
            )));
        }
        let minutes = power.flight_time(curve.m)?;
        let budget = (minutes * 60.0 * sense_rate).floor() as usize;
        let score_iteration = budget.min(curve.iterations.len()).max(1);
        rows.push(SelectionRow {
            m: curve.m,
            flight_minutes: minutes,
            budget_iterations: budget,
            score_iteration,
            score: curve.iterations[score_iteration - 1].mean_occupied,
        });
    }
    let mut best = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        if row.score > rows[best].score {
            best = i;
        }
    }
    Ok(SelectionReport { selected_m: rows[best].m, rows })
}

// ---------------------------------------------------------------------------
// Output files.

/// Per-variant summary entry of the experiment summary JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub m: usize,
    pub seeds_used: usize,
    pub final_mean_occupied: f64,
    pub final_mean_free: f64,
    pub final_mean_unknown: f64,
    /// First iteration reaching 90% of this variant's own final count.
    pub time_to_coverage_own: Option<usize>,
    /// First iteration reaching 90% of the best variant's final count.
    pub time_to_coverage_cross: Option<usize>,
    pub flight_minutes: f64,
    pub budget_iterations: usize,
    pub score: f64,
}

/// The experiment summary JSON.  Deliberately free of wall-clock numbers so
/// repeated runs serialize byte-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub sense_rate: f64,
    pub variants: Vec<VariantSummary>,
    pub selected_m: usize,
}

/// Assemble the summary from curves and the selection report.
pub fn build_summary(
    curves: &[VariantCurve],
    selection: &SelectionReport,
    config: &ExperimentConfig,
) -> Result<Summary> {
    let cross_threshold = 0.9
        * curves
            .iter()
            .map(VariantCurve::final_mean_occupied)
            .fold(0.0, f64::max);
    let mut variants = Vec::with_capacity(curves.len());
    for curve in curves {
        let row = selection
            .rows
            .iter()
            .find(|r| r.m == curve.m)
            .ok_or_else(|| Error::invalid(format!("selection lacks a row for m={}", curve.m)))?;
        let last = curve
            .iterations
            .last()
            .ok_or_else(|| Error::invalid(format!("curve for m={} is empty", curve.m)))?;
        variants.push(VariantSummary {
            m: curve.m,
            seeds_used: curve.seeds_used,
            final_mean_occupied: last.mean_occupied,
            final_mean_free: last.mean_free,
            final_mean_unknown: last.mean_unknown,
            time_to_coverage_own: time_to_coverage(curve, 0.9)?,
            time_to_coverage_cross: time_to_coverage_at(curve, cross_threshold),
            flight_minutes: row.flight_minutes,
            budget_iterations: row.budget_iterations,
            score: row.score,
        });
    }
    Ok(Summary {
        iterations: config.iterations,
        seeds: config.seeds.clone(),
        sense_rate: config.sense_rate,
        variants,
        selected_m: selection.selected_m,
    })
}

/// Write one variant's coverage curve as CSV.
///
/// The `*_ms` columns are wall-clock means and are the only
/// non-reproducible values in the file.
pub fn write_coverage_csv<W: std::io::Write>(curve: &VariantCurve, w: &mut W) -> Result<()> {
    writeln!(
        w,
        "iteration,mean_occupied,std_occupied,mean_free,mean_unknown,mean_plan_ms,mean_integrate_ms,mean_sense_ms"
    )?;
    for (i, s) in curve.iterations.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{:.3},{:.3},{:.3}",
            i + 1,
            s.mean_occupied,
            s.std_occupied,
            s.mean_free,
            s.mean_unknown,
            s.mean_plan_ms,
            s.mean_integrate_ms,
            s.mean_sense_ms,
        )?;
    }
    Ok(())
}

/// Write one episode's planner diagnostics as CSV.
pub fn write_planner_csv<W: std::io::Write>(episode: &EpisodeResult, w: &mut W) -> Result<()> {
    writeln!(
        w,
        "iteration,tree_size,best_gain,chosen_x,chosen_y,chosen_z,chosen_yaw,recovery_flag"
    )?;
    for p in &episode.plans {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.iteration,
            p.tree_size,
            p.best_gain,
            p.chosen.position.x,
            p.chosen.position.y,
            p.chosen.position.z,
            p.chosen.yaw,
            u8::from(p.recovery),
        )?;
    }
    Ok(())
}

/// Write the full output set of an experiment into a directory:
/// `coverage_m{M}.csv` per variant, `planner_m{M}_seed{S}.csv` per episode,
/// and `summary.json`.
pub fn write_outputs(
    dir: impl AsRef<Path>,
    outcome: &ExperimentOutcome,
    summary: &Summary,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for curve in &outcome.curves {
        let mut f = std::fs::File::create(dir.join(format!("coverage_m{}.csv", curve.m)))?;
        write_coverage_csv(curve, &mut f)?;
    }
    for ep in &outcome.episodes {
        let mut f =
            std::fs::File::create(dir.join(format!("planner_m{}_seed{}.csv", ep.m, ep.seed)))?;
        write_planner_csv(ep, &mut f)?;
    }
    let json = serde_json::to_string_pretty(summary)?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}
