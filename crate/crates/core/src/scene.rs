//! Ground-truth world: labeled axis-aligned boxes with an exact ray-cast
//! oracle, JSON load/save, and a parametric dry-dock generator.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};

/// Ordered set of semantic class names; the index is the class id.
///
/// "No surface" is not a class: an absent ray hit is the sentinel for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
}

impl ClassTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("class table must contain at least one class"));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::invalid("class names must be non-empty"));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::invalid(format!("duplicate class name '{n}'")));
            }
        }
        Ok(ClassTable { names })
    }

    /// Number of known classes.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(|s| s.as_str())
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One axis-aligned box carrying a semantic class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub aabb: Aabb,
    pub class_id: usize,
}

/// A ray-surface intersection: distance along the unit direction plus the
/// class of the box that was hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub class_id: usize,
}

/// Immutable ground-truth world. All query operations are pure and safe to
/// share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    boxes: Vec<LabeledBox>,
    bounds: Aabb,
    classes: ClassTable,
}

/// Maximum allowed deviation of a ray direction from unit length.
pub const DIR_TOLERANCE: f64 = 1e-9;

impl Scene {
    pub fn new(boxes: Vec<LabeledBox>, bounds: Aabb, classes: ClassTable) -> Result<Self> {
        if !bounds.is_valid() {
            return Err(Error::invalid("scene bounds must have positive volume"));
        }
        for (i, b) in boxes.iter().enumerate() {
            if !b.aabb.is_valid() {
                return Err(Error::invalid(format!("box {i}: degenerate box")));
            }
            if b.class_id >= classes.len() {
                return Err(Error::invalid(format!(
                    "box {i}: class id {} out of range (know {} classes)",
                    b.class_id,
                    classes.len()
                )));
            }
            if !b.aabb.intersects(&bounds) {
                return Err(Error::invalid(format!("box {i}: outside scene bounds")));
            }
        }
        Ok(Scene {
            boxes,
            bounds,
            classes,
        })
    }

    pub fn boxes(&self) -> &[LabeledBox] {
        &self.boxes
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn classes(&self) -> &ClassTable {
        &self.classes
    }

    /// Class of the box strictly containing `p`, if any (lowest index wins).
    pub fn contains(&self, p: &Vec3) -> Option<usize> {
        self.boxes
            .iter()
            .find(|b| b.aabb.contains_strict(p))
            .map(|b| b.class_id)
    }

    /// Casts a ray and returns the nearest box-surface intersection with
    /// `0 <= t <= max_range`.
    ///
    /// An origin strictly inside a box reports that box at `t = 0`. Ties
    /// between coincident faces go to the lowest box index. `max_range` may
    /// be infinite.
    pub fn ray_cast(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Result<Option<RayHit>> {
        if !origin.iter().all(|v| v.is_finite()) || !dir.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("ray origin and direction must be finite"));
        }
        if (dir.norm() - 1.0).abs() > DIR_TOLERANCE {
            return Err(Error::invalid(format!(
                "ray direction must be unit length (|d| = {})",
                dir.norm()
            )));
        }
        if max_range <= 0.0 || max_range.is_nan() {
            return Err(Error::invalid("max_range must be positive"));
        }
        Ok(self.ray_cast_unchecked(origin, dir, max_range))
    }

    /// Same as [`Scene::ray_cast`] without input validation; used on the hot
    /// rendering path where directions are normalized by construction.
    pub fn ray_cast_unchecked(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<RayHit> {
        // Inside a box: t = 0 is minimal, lowest index wins, so the first
        // containing box settles it.
        if let Some(class_id) = self.contains(origin) {
            return Some(RayHit { t: 0.0, class_id });
        }
        let mut best: Option<RayHit> = None;
        for b in &self.boxes {
            let Some((entry, exit)) = b.aabb.ray_intersect(origin, dir) else {
                continue;
            };
            if exit < 0.0 {
                continue;
            }
            let t = entry.max(0.0);
            if t > max_range {
                continue;
            }
            // Strict < keeps the lowest box index on exact ties.
            if best.is_none_or(|h| t < h.t) {
                best = Some(RayHit {
                    t,
                    class_id: b.class_id,
                });
            }
        }
        best
    }
}

// Scene JSON schema. Unknown keys are rejected so config typos fail loudly.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    classes: Vec<String>,
    bounds: BoundsFile,
    boxes: Vec<BoxFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxFile {
    min: [f64; 3],
    max: [f64; 3],
    class: String,
}

/// Parses a scene from its JSON representation.
pub fn scene_from_json(json: &str) -> Result<Scene> {
    let file: SceneFile =
        serde_json::from_str(json).map_err(|e| Error::load("scene", e.to_string()))?;
    let classes = ClassTable::new(file.classes)?;
    let mut boxes = Vec::with_capacity(file.boxes.len());
    for (i, b) in file.boxes.iter().enumerate() {
        let class_id = classes.id(&b.class).ok_or_else(|| {
            Error::load(format!("box {i}"), format!("unknown class '{}'", b.class))
        })?;
        boxes.push(LabeledBox {
            aabb: Aabb::new(Vec3::from(b.min), Vec3::from(b.max)),
            class_id,
        });
    }
    let bounds = Aabb::new(Vec3::from(file.bounds.min), Vec3::from(file.bounds.max));
    Scene::new(boxes, bounds, classes)
}

/// Serializes a scene to pretty JSON. Floats round-trip exactly.
pub fn scene_to_json(scene: &Scene) -> String {
    let file = SceneFile {
        classes: scene.classes.names.clone(),
        bounds: BoundsFile {
            min: scene.bounds.min.into(),
            max: scene.bounds.max.into(),
        },
        boxes: scene
            .boxes
            .iter()
            .map(|b| BoxFile {
                min: b.aabb.min.into(),
                max: b.aabb.max.into(),
                class: scene.classes.names[b.class_id].clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("scene serialization cannot fail")
}

/// Loads a scene file, validating every invariant. Errors name the offending
/// entity (file, box index, class name).
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::load(path.display().to_string(), e.to_string()))?;
    scene_from_json(&text).map_err(|e| match e {
        Error::Load { entity, reason } => Error::Load {
            entity: format!("{} ({entity})", path.display()),
            reason,
        },
        Error::InvalidArgument(msg) => Error::load(path.display().to_string(), msg),
        other => other,
    })
}

/// Writes a scene as JSON.
pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scene_to_json(scene))?;
    Ok(())
}

/// Builds a U-shaped dry-dock scene: floor slab, two side walls, one end
/// wall (open at `x = length`), and a low box standing in for a ship hull,
/// all resting on the floor at `z = 0`.
///
/// The class table must contain `floor`, `wall`, and `hull`. Exploration
/// bounds enclose the dock plus a 1 m margin above the walls. The hull spans
/// the central 40% of the footprint at 15% of the dock depth, which keeps
/// the default start pose (bounds center, 1.5 m altitude) clear of it.
pub fn make_drydock(
    length: f64,
    width: f64,
    depth: f64,
    wall_thickness: f64,
    classes: ClassTable,
) -> Result<Scene> {
    for (name, v) in [
        ("length", length),
        ("width", width),
        ("depth", depth),
        ("wall_thickness", wall_thickness),
    ] {
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if wall_thickness >= width / 4.0 {
        return Err(Error::invalid(format!(
            "wall_thickness {wall_thickness} must be below width/4 = {}",
            width / 4.0
        )));
    }
    let floor_id = classes
        .id("floor")
        .ok_or_else(|| Error::invalid("class table must contain 'floor'"))?;
    let wall_id = classes
        .id("wall")
        .ok_or_else(|| Error::invalid("class table must contain 'wall'"))?;
    let hull_id = classes
        .id("hull")
        .ok_or_else(|| Error::invalid("class table must contain 'hull'"))?;

    let (l, w, d, t) = (length, width, depth, wall_thickness);
    let hw = w / 2.0;
    let mk = |min: Vec3, max: Vec3, class_id: usize| LabeledBox {
        aabb: Aabb::new(min, max),
        class_id,
    };
    let boxes = vec![
        // Floor slab under the full footprint.
        mk(
            Vec3::new(-t, -hw - t, -t),
            Vec3::new(l, hw + t, 0.0),
            floor_id,
        ),
        // Closed end wall at x = 0; the dock is open at x = length.
        mk(Vec3::new(-t, -hw - t, 0.0), Vec3::new(0.0, hw + t, d), wall_id),
        // Side walls.
        mk(Vec3::new(0.0, hw, 0.0), Vec3::new(l, hw + t, d), wall_id),
        mk(Vec3::new(0.0, -hw - t, 0.0), Vec3::new(l, -hw, d), wall_id),
        // Hull proxy resting on the floor.
        mk(
            Vec3::new(0.3 * l, -0.2 * w, 0.0),
            Vec3::new(0.7 * l, 0.2 * w, 0.15 * d),
            hull_id,
        ),
    ];
    let bounds = Aabb::new(Vec3::new(-t, -hw - t, -t), Vec3::new(l, hw + t, d + 1.0));
    Scene::new(boxes, bounds, classes)
}

/// The default dry-dock class table: floor, wall, hull.
pub fn drydock_classes() -> ClassTable {
    ClassTable::new(vec!["floor".into(), "wall".into(), "hull".into()])
        .expect("static class table is valid")
}
