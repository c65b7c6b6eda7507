//! Multi-camera rig model: pinhole depth and semantic rendering against a
//! [`Scene`](crate::scene::Scene), plus back-projection into labeled clouds.
//!
//! Rendering is exact ray-cast geometry.  Depth images store camera-frame z
//! (not ray length) with 0 as the no-return sentinel, so back-projection is
//! the exact pinhole inverse.  Pixel centers sit at (u+0.5, v+0.5).

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{normalize_angle, rot_z, Mat3, Vec3};
use crate::mapping::ClassDistribution;
use crate::scene::Scene;

/// Pinhole camera parameters and usable depth range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::invalid("principal point must lie inside the image"));
        }
        if !(self.min_range >= 0.0
            && self.min_range < self.max_range
            && self.max_range.is_finite())
        {
            return Err(Error::invalid(
                "depth range must satisfy 0 <= min_range < max_range < inf",
            ));
        }
        Ok(())
    }
}

/// Scaled-down stand-in for a Zed-class stereo depth camera.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        width: 160,
        height: 120,
        fx: 120.0,
        fy: 120.0,
        cx: 80.0,
        cy: 60.0,
        min_range: 0.3,
        max_range: 8.0,
    }
}

/// One camera rigidly attached to the vehicle body.
///
/// `rotation` columns are the camera axes expressed in the body frame
/// (x right, y down, z optical); `translation` is the camera origin in the
/// body frame.  Body axes: x forward, y left, z up.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraMount {
    pub name: String,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub intrinsics: CameraIntrinsics,
}

impl CameraMount {
    pub fn new(
        name: impl Into<String>,
        rotation: Mat3,
        translation: Vec3,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::invalid("camera mount needs a name"));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mount translation must be finite"));
        }
        check_rotation(&rotation)
            .map_err(|e| Error::invalid(format!("mount '{name}': {e}")))?;
        intrinsics.validate()?;
        Ok(CameraMount { name, rotation, translation, intrinsics })
    }
}

fn check_rotation(r: &Mat3) -> std::result::Result<(), String> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err("rotation has non-finite entries".into());
    }
    let residual = (r.transpose() * r - Mat3::identity()).abs().max();
    if residual > 1e-9 {
        return Err(format!("rotation is not orthonormal (residual {residual:.2e})"));
    }
    if (r.determinant() - 1.0).abs() > 1e-9 {
        return Err("rotation determinant is not +1".into());
    }
    Ok(())
}

/// The full set of cameras carried by the vehicle, in fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    mounts: Vec<CameraMount>,
}

impl Rig {
    pub fn new(mounts: Vec<CameraMount>) -> Result<Self> {
        if mounts.is_empty() || mounts.len() > 5 {
            return Err(Error::invalid(format!(
                "rig must carry between 1 and 5 cameras, got {}",
                mounts.len()
            )));
        }
        for (i, m) in mounts.iter().enumerate() {
            if mounts[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::invalid(format!("duplicate mount name '{}'", m.name)));
            }
        }
        Ok(Rig { mounts })
    }

    pub fn mounts(&self) -> &[CameraMount] {
        &self.mounts
    }

    /// Number of cameras.
    pub fn m(&self) -> usize {
        self.mounts.len()
    }

    /// Largest max_range over the rig's cameras.
    pub fn max_range(&self) -> f64 {
        self.mounts
            .iter()
            .map(|m| m.intrinsics.max_range)
            .fold(0.0, f64::max)
    }

    /// The five-camera reference rig: front, left, right, back, bottom.
    pub fn default_five() -> Rig {
        Rig::preset(5).expect("the built-in rig presets are valid")
    }

    /// The first `m` cameras of the reference rig.  Front-facing only at
    /// m = 1; front/left/right at m = 3; all five at m = 5.
    pub fn preset(m: usize) -> Result<Rig> {
        let intr = default_intrinsics();
        let all = [
            // (name, camera x/y/z axes in body frame, translation)
            ("front", [0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.1, 0.0, 0.0]),
            ("left", [1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [0.0, 0.1, 0.0]),
            ("right", [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, -1.0, 0.0], [0.0, -0.1, 0.0]),
            ("back", [0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [-0.1, 0.0, 0.0]),
            ("bottom", [0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 0.0, -0.1]),
        ];
        if m < 1 || m > all.len() {
            return Err(Error::invalid(format!("no rig preset with {m} cameras")));
        }
        let mounts = all[..m]
            .iter()
            .map(|(name, x, y, z, t)| {
                let rotation = Mat3::from_columns(&[
                    Vec3::new(x[0], x[1], x[2]),
                    Vec3::new(y[0], y[1], y[2]),
                    Vec3::new(z[0], z[1], z[2]),
                ]);
                CameraMount::new(*name, rotation, Vec3::new(t[0], t[1], t[2]), intr)
            })
            .collect::<Result<Vec<_>>>()?;
        Rig::new(mounts)
    }
}

/// 4-DOF vehicle pose: world position plus yaw.  Roll and pitch are assumed
/// zero (near-hover multirotor).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64) -> Result<Self> {
        if position.iter().any(|v| !v.is_finite()) || !yaw.is_finite() {
            return Err(Error::invalid("pose must be finite"));
        }
        Ok(Pose { position, yaw: normalize_angle(yaw) })
    }
}

/// A camera's world-frame placement: rotation columns are the camera axes in
/// world coordinates, `origin` is the optical center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraTransform {
    pub rotation: Mat3,
    pub origin: Vec3,
}

/// World-frame transform of a mounted camera for a given body pose.
pub fn camera_pose(body: &Pose, mount: &CameraMount) -> CameraTransform {
    let rz = rot_z(body.yaw);
    CameraTransform {
        rotation: rz * mount.rotation,
        origin: body.position + rz * mount.translation,
    }
}

/// Per-pixel camera-frame z in meters; 0 marks no return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    z: Vec<f64>,
}

impl DepthImage {
    pub fn new_sentinel(width: u32, height: u32) -> Self {
        DepthImage { width, height, z: vec![0.0; (width * height) as usize] }
    }

    fn idx(&self, u: u32, v: u32) -> usize {
        debug_assert!(u < self.width && v < self.height);
        (v * self.width + u) as usize
    }

    pub fn z(&self, u: u32, v: u32) -> f64 {
        self.z[self.idx(u, v)]
    }

    pub fn set_z(&mut self, u: u32, v: u32, z: f64) {
        let i = self.idx(u, v);
        self.z[i] = z;
    }

    pub fn is_sentinel(&self, u: u32, v: u32) -> bool {
        self.z(u, v) == 0.0
    }

    pub fn pixels(&self) -> &[f64] {
        &self.z
    }
}

/// Per-pixel class distributions, stored flat (row-major, K values/pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticImage {
    pub width: u32,
    pub height: u32,
    num_classes: usize,
    data: Vec<f64>,
}

impl SemanticImage {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn pixel(&self, u: u32, v: u32) -> &[f64] {
        let base = (v * self.width + u) as usize * self.num_classes;
        &self.data[base..base + self.num_classes]
    }
}

/// One back-projected depth sample with its class distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub position: Vec3,
    pub classes: ClassDistribution,
}

/// A semantically labeled cloud from one camera: surface hits plus max-range
/// markers for pixels that saw nothing (used only for free-space carving).
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub origin: Vec3,
    pub hits: Vec<LabeledPoint>,
    pub free_rays: Vec<Vec3>,
}

/// What one camera produced during a sensing step.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraObservation {
    pub mount_name: String,
    pub cloud: PointCloud,
    /// True when the camera origin sits inside scene geometry; the cloud is
    /// then all sentinels and must not be used for free-space carving.
    pub degenerate: bool,
}

/// Depth plus hit-class id per pixel, computed in one ray-cast pass.
fn render_pass(
    scene: &Scene,
    cam: &CameraTransform,
    intr: &CameraIntrinsics,
) -> (DepthImage, Vec<Option<usize>>) {
    let mut depth = DepthImage::new_sentinel(intr.width, intr.height);
    let mut classes = vec![None; (intr.width * intr.height) as usize];
    // Horizontal/vertical tangents are row/column invariant.
    let us: Vec<f64> = (0..intr.width)
        .map(|u| (u as f64 + 0.5 - intr.cx) / intr.fx)
        .collect();
    let vs: Vec<f64> = (0..intr.height)
        .map(|v| (v as f64 + 0.5 - intr.cy) / intr.fy)
        .collect();
    for (v, &b) in vs.iter().enumerate() {
        for (u, &a) in us.iter().enumerate() {
            let norm = (a * a + b * b + 1.0).sqrt();
            let dir_world = cam.rotation * (Vec3::new(a, b, 1.0) / norm);
            // Cap the ray length so the *z-depth* cap is max_range.
            let t_cap = intr.max_range * norm;
            if let Some(hit) = scene.ray_cast_unchecked(&cam.origin, &dir_world, t_cap) {
                let z = hit.t / norm;
                if z >= intr.min_range {
                    depth.set_z(u as u32, v as u32, z);
                    classes[v * intr.width as usize + u] = Some(hit.class_id);
                }
            }
        }
    }
    (depth, classes)
}

/// Render an exact depth image of the scene.
pub fn render_depth(scene: &Scene, cam: &CameraTransform, intr: &CameraIntrinsics) -> Result<DepthImage> {
    intr.validate()?;
    Ok(render_pass(scene, cam, intr).0)
}

/// Render a semantic image: hit pixels put `1 - confusion` on the true class
/// and spread the rest evenly; no-return pixels carry the uniform
/// distribution.
pub fn render_semantics(
    scene: &Scene,
    cam: &CameraTransform,
    intr: &CameraIntrinsics,
    confusion: f64,
) -> Result<SemanticImage> {
    intr.validate()?;
    let (_, classes) = render_pass(scene, cam, intr);
    semantic_image_from_classes(&classes, intr, scene.classes().len(), confusion)
}

fn semantic_image_from_classes(
    classes: &[Option<usize>],
    intr: &CameraIntrinsics,
    num_classes: usize,
    confusion: f64,
) -> Result<SemanticImage> {
    if !(0.0..1.0).contains(&confusion) {
        return Err(Error::invalid(format!(
            "confusion {confusion} must lie in [0, 1)"
        )));
    }
    let uniform = ClassDistribution::uniform(num_classes);
    let peaked: Vec<ClassDistribution> = (0..num_classes)
        .map(|c| ClassDistribution::peaked(c, num_classes, confusion))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(classes.len() * num_classes);
    for c in classes {
        let dist = match c {
            Some(id) => &peaked[*id],
            None => &uniform,
        };
        data.extend_from_slice(dist.probs());
    }
    Ok(SemanticImage {
        width: intr.width,
        height: intr.height,
        num_classes,
        data,
    })
}

/// Back-project depth + semantics into a world-frame labeled cloud.
///
/// Only pixels on the stride lattice contribute.  Non-sentinel pixels become
/// labeled surface points; sentinel pixels become max-range free-ray markers.
pub fn cloud_from_images(
    depth: &DepthImage,
    sem: &SemanticImage,
    intr: &CameraIntrinsics,
    cam: &CameraTransform,
    stride: u32,
) -> Result<PointCloud> {
    if depth.width != sem.width || depth.height != sem.height {
        return Err(Error::invalid(format!(
            "depth image is {}x{} but semantic image is {}x{}",
            depth.width, depth.height, sem.width, sem.height
        )));
    }
    if depth.width != intr.width || depth.height != intr.height {
        return Err(Error::invalid("image dimensions do not match intrinsics"));
    }
    if stride < 1 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let mut hits = Vec::new();
    let mut free_rays = Vec::new();
    let mut v = 0;
    while v < depth.height {
        let mut u = 0;
        while u < depth.width {
            let a = (u as f64 + 0.5 - intr.cx) / intr.fx;
            let b = (v as f64 + 0.5 - intr.cy) / intr.fy;
            let z = depth.z(u, v);
            if z == 0.0 {
                let p_cam = Vec3::new(a * intr.max_range, b * intr.max_range, intr.max_range);
                free_rays.push(cam.origin + cam.rotation * p_cam);
            } else {
                let p_cam = Vec3::new(a * z, b * z, z);
                hits.push(LabeledPoint {
                    position: cam.origin + cam.rotation * p_cam,
                    classes: ClassDistribution::new(sem.pixel(u, v).to_vec())?,
                });
            }
            u += stride;
        }
        v += stride;
    }
    Ok(PointCloud { origin: cam.origin, hits, free_rays })
}

/// Knobs for a sensing step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SenseOptions {
    /// Semantic confusion mass spread over the wrong classes.
    pub confusion: f64,
    /// Pixel stride of the back-projection lattice.
    pub stride: u32,
    /// Multiplicative Gaussian depth noise sigma (0 disables noise).
    pub depth_noise: f64,
}

impl Default for SenseOptions {
    fn default() -> Self {
        SenseOptions { confusion: 0.1, stride: 4, depth_noise: 0.0 }
    }
}

/// Run the full sensing pipeline for every camera of the rig, in mount order.
pub fn sense_all<R: Rng>(
    scene: &Scene,
    body: &Pose,
    rig: &Rig,
    opts: &SenseOptions,
    rng: &mut R,
) -> Result<Vec<CameraObservation>> {
    if !(opts.depth_noise >= 0.0 && opts.depth_noise.is_finite()) {
        return Err(Error::invalid("depth noise sigma must be finite and >= 0"));
    }
    let mut out = Vec::with_capacity(rig.m());
    for mount in rig.mounts() {
        let cam = camera_pose(body, mount);
        let intr = &mount.intrinsics;
        let (mut depth, classes) = render_pass(scene, &cam, intr);
        if opts.depth_noise > 0.0 {
            apply_depth_noise(&mut depth, intr, opts.depth_noise, rng);
        }
        let sem = semantic_image_from_classes(&classes, intr, scene.classes().len(), opts.confusion)?;
        let cloud = cloud_from_images(&depth, &sem, intr, &cam, opts.stride)?;
        out.push(CameraObservation {
            mount_name: mount.name.clone(),
            degenerate: scene.contains(&cam.origin).is_some(),
            cloud,
        });
    }
    Ok(out)
}

fn apply_depth_noise<R: Rng>(depth: &mut DepthImage, intr: &CameraIntrinsics, sigma: f64, rng: &mut R) {
    for v in 0..depth.height {
        for u in 0..depth.width {
            let z = depth.z(u, v);
            if z == 0.0 {
                continue;
            }
            let n: f64 = rng.sample(rand_distr::StandardNormal);
            depth.set_z(u, v, (z * (1.0 + sigma * n)).clamp(intr.min_range, intr.max_range));
        }
    }
}

/// Encode a depth image as a 16-bit binary PGM, millimeter-quantized,
/// 0 = no return.
pub fn depth_to_pgm(depth: &DepthImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", depth.width, depth.height).into_bytes();
    for &z in depth.pixels() {
        let mm = (z * 1000.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&mm.to_be_bytes());
    }
    out
}

// ---------------------------------------------------------------------------
// Rig persistence: JSON with unit-quaternion rotations.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigFile {
    mounts: Vec<MountFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MountFile {
    name: String,
    translation: [f64; 3],
    /// Unit quaternion [w, x, y, z].
    rotation: [f64; 4],
    intrinsics: CameraIntrinsics,
}

/// Parse a rig from its JSON form.
pub fn rig_from_json(json: &str) -> Result<Rig> {
    let file: RigFile = serde_json::from_str(json)?;
    let mounts = file
        .mounts
        .into_iter()
        .map(|m| {
            let [w, x, y, z] = m.rotation;
            let norm = (w * w + x * x + y * y + z * z).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "mount '{}': rotation quaternion has norm {norm}",
                    m.name
                )));
            }
            let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                w, x, y, z,
            ));
            CameraMount::new(
                m.name,
                *q.to_rotation_matrix().matrix(),
                Vec3::new(m.translation[0], m.translation[1], m.translation[2]),
                m.intrinsics,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Rig::new(mounts)
}

/// Serialize a rig to its JSON form.
pub fn rig_to_json(rig: &Rig) -> String {
    let mounts = rig
        .mounts()
        .iter()
        .map(|m| {
            let rot = nalgebra::Rotation3::from_matrix_unchecked(m.rotation);
            let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
            // Canonical sign: w >= 0 keeps saved files deterministic.
            let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
            MountFile {
                name: m.name.clone(),
                translation: [m.translation.x, m.translation.y, m.translation.z],
                rotation: [q.w, q.i, q.j, q.k],
                intrinsics: m.intrinsics,
            }
        })
        .collect();
    serde_json::to_string_pretty(&RigFile { mounts })
        .expect("rig serialization cannot fail")
}

/// Load a rig from a JSON file.
pub fn load_rig(path: impl AsRef<Path>) -> Result<Rig> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path)
        .map_err(|e| Error::load(path.display().to_string(), format!("rig: {e}")))?;
    rig_from_json(&json)
        .map_err(|e| Error::load(path.display().to_string(), format!("rig: {e}")))
}

/// Save a rig to a JSON file.
pub fn save_rig(rig: &Rig, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, rig_to_json(rig))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;
    use crate::scene::{ClassTable, LabeledBox};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn classes4() -> ClassTable {
        ClassTable::new(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap()
    }

    /// A wall slab normal to +x with its near face `dist` meters from the
    /// world origin, wide enough to fill the default frustum.
    fn wall_scene(dist: f64, class_id: usize) -> Scene {
        let wall = LabeledBox {
            aabb: Aabb::new(Vec3::new(dist, -6.0, -6.0), Vec3::new(dist + 0.5, 6.0, 6.0)),
            class_id,
        };
        Scene::new(
            vec![wall],
            Aabb::new(Vec3::new(-1.0, -7.0, -7.0), Vec3::new(10.0, 7.0, 7.0)),
            classes4(),
        )
        .unwrap()
    }

    fn empty_scene() -> Scene {
        Scene::new(
            vec![],
            Aabb::new(Vec3::new(-1.0, -7.0, -7.0), Vec3::new(10.0, 7.0, 7.0)),
            classes4(),
        )
        .unwrap()
    }

    fn front_cam() -> CameraTransform {
        let rig = Rig::preset(1).unwrap();
        let mount = CameraMount {
            translation: Vec3::zeros(),
            ..rig.mounts()[0].clone()
        };
        camera_pose(&Pose::new(Vec3::zeros(), 0.0).unwrap(), &mount)
    }

    #[test]
    fn camera_pose_identity_mount() {
        let body = Pose::new(Vec3::zeros(), 0.0).unwrap();
        let mount = CameraMount::new(
            "probe",
            Mat3::identity(),
            Vec3::zeros(),
            default_intrinsics(),
        )
        .unwrap();
        let cam = camera_pose(&body, &mount);
        assert_eq!(cam.origin, Vec3::zeros());
        assert_eq!(cam.rotation, Mat3::identity());
    }

    #[test]
    fn camera_pose_translates_with_body() {
        let body = Pose::new(Vec3::new(1.0, 2.0, 3.0), 0.0).unwrap();
        let mount = CameraMount::new(
            "probe",
            Mat3::identity(),
            Vec3::new(0.1, 0.0, 0.0),
            default_intrinsics(),
        )
        .unwrap();
        let cam = camera_pose(&body, &mount);
        assert_relative_eq!(cam.origin.x, 1.1, max_relative = 1e-12);
        assert_relative_eq!(cam.origin.y, 2.0, max_relative = 1e-12);
        assert_relative_eq!(cam.origin.z, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn camera_pose_rotates_mount_offset() {
        let body = Pose::new(Vec3::zeros(), std::f64::consts::FRAC_PI_2).unwrap();
        let mount = CameraMount::new(
            "probe",
            Mat3::identity(),
            Vec3::new(0.1, 0.0, 0.0),
            default_intrinsics(),
        )
        .unwrap();
        let cam = camera_pose(&body, &mount);
        assert_relative_eq!(cam.origin.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cam.origin.y, 0.1, max_relative = 1e-12);
        assert_relative_eq!(cam.origin.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn depth_of_face_on_wall_is_uniform_z() {
        let scene = wall_scene(2.0, 2);
        let intr = default_intrinsics();
        let depth = render_depth(&scene, &front_cam(), &intr).unwrap();
        for v in 0..intr.height {
            for u in 0..intr.width {
                assert_relative_eq!(depth.z(u, v), 2.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn empty_scene_renders_all_sentinels() {
        let intr = default_intrinsics();
        let depth = render_depth(&empty_scene(), &front_cam(), &intr).unwrap();
        assert!(depth.pixels().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn wall_below_min_range_renders_sentinels() {
        let scene = wall_scene(1.0, 2);
        let mut intr = default_intrinsics();
        intr.min_range = 1.5;
        let depth = render_depth(&scene, &front_cam(), &intr).unwrap();
        assert!(depth.pixels().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn semantics_noiseless_one_hot() {
        let scene = wall_scene(2.0, 2);
        let intr = default_intrinsics();
        let sem = render_semantics(&scene, &front_cam(), &intr, 0.0).unwrap();
        assert_eq!(sem.pixel(80, 60), &[0.0, 0.0, 1.0, 0.0][..]);
    }

    #[test]
    fn semantics_spread_confusion() {
        let scene = wall_scene(2.0, 0);
        let intr = default_intrinsics();
        let sem = render_semantics(&scene, &front_cam(), &intr, 0.3).unwrap();
        let px = sem.pixel(0, 0);
        assert_relative_eq!(px[0], 0.7, max_relative = 1e-12);
        for &p in &px[1..] {
            assert_relative_eq!(p, 0.1, max_relative = 1e-12);
        }
    }

    #[test]
    fn semantics_sentinel_is_uniform() {
        let intr = default_intrinsics();
        let sem = render_semantics(&empty_scene(), &front_cam(), &intr, 0.3).unwrap();
        assert_eq!(sem.pixel(10, 10), &[0.25, 0.25, 0.25, 0.25][..]);
    }

    #[test]
    fn semantics_rejects_bad_confusion() {
        let intr = default_intrinsics();
        assert!(render_semantics(&empty_scene(), &front_cam(), &intr, 1.0).is_err());
        assert!(render_semantics(&empty_scene(), &front_cam(), &intr, -0.1).is_err());
    }

    #[test]
    fn backproject_center_pixel() {
        let intr = CameraIntrinsics {
            width: 1,
            height: 1,
            fx: 1.0,
            fy: 1.0,
            cx: 0.5,
            cy: 0.5,
            min_range: 0.1,
            max_range: 10.0,
        };
        let mut depth = DepthImage::new_sentinel(1, 1);
        depth.set_z(0, 0, 2.0);
        let sem = semantic_image_from_classes(&[Some(1)], &intr, 4, 0.0).unwrap();
        let cam = CameraTransform { rotation: Mat3::identity(), origin: Vec3::zeros() };
        let cloud = cloud_from_images(&depth, &sem, &intr, &cam, 1).unwrap();
        assert_eq!(cloud.hits.len(), 1);
        assert_eq!(cloud.free_rays.len(), 0);
        let p = &cloud.hits[0];
        assert_relative_eq!(p.position.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.position.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.position.z, 2.0, max_relative = 1e-12);
        assert_eq!(p.classes.argmax(), 1);
    }

    #[test]
    fn all_sentinel_depth_yields_only_markers() {
        let intr = default_intrinsics();
        let depth = DepthImage::new_sentinel(intr.width, intr.height);
        let classes = vec![None; (intr.width * intr.height) as usize];
        let sem = semantic_image_from_classes(&classes, &intr, 4, 0.0).unwrap();
        let cam = CameraTransform { rotation: Mat3::identity(), origin: Vec3::zeros() };
        let cloud = cloud_from_images(&depth, &sem, &intr, &cam, 4).unwrap();
        assert_eq!(cloud.hits.len(), 0);
        assert_eq!(cloud.free_rays.len(), 40 * 30);
    }

    #[test]
    fn cloud_rejects_mismatched_images() {
        let intr = default_intrinsics();
        let depth = DepthImage::new_sentinel(8, 8);
        let classes = vec![None; (intr.width * intr.height) as usize];
        let sem = semantic_image_from_classes(&classes, &intr, 4, 0.0).unwrap();
        let cam = CameraTransform { rotation: Mat3::identity(), origin: Vec3::zeros() };
        assert!(cloud_from_images(&depth, &sem, &intr, &cam, 1).is_err());
    }

    #[test]
    fn sense_all_returns_one_cloud_per_mount() {
        let scene = wall_scene(2.0, 1);
        let body = Pose::new(Vec3::zeros(), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let obs = sense_all(&scene, &body, &Rig::preset(3).unwrap(), &SenseOptions::default(), &mut rng)
            .unwrap();
        assert_eq!(obs.len(), 3);
        assert_eq!(obs[0].mount_name, "front");
        assert!(!obs[0].degenerate);
        assert!(!obs[0].cloud.hits.is_empty());
    }

    #[test]
    fn camera_inside_geometry_is_degenerate() {
        let scene = wall_scene(2.0, 1);
        // Body inside the wall slab: every camera origin is inside the box.
        let body = Pose::new(Vec3::new(2.25, 0.0, 0.0), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let obs = sense_all(&scene, &body, &Rig::default_five(), &SenseOptions::default(), &mut rng)
            .unwrap();
        assert_eq!(obs.len(), 5);
        for o in &obs {
            assert!(o.degenerate, "{} not flagged", o.mount_name);
            assert!(o.cloud.hits.is_empty());
        }
    }

    #[test]
    fn disjoint_frusta_differ_in_asymmetric_scene() {
        let scene = wall_scene(2.0, 1); // wall in front only
        let body = Pose::new(Vec3::zeros(), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let obs = sense_all(&scene, &body, &Rig::preset(4).unwrap(), &SenseOptions::default(), &mut rng)
            .unwrap();
        let front = &obs[0];
        let back = &obs[3];
        assert!(!front.cloud.hits.is_empty());
        assert!(back.cloud.hits.is_empty());
    }

    #[test]
    fn depth_noise_is_seeded_and_bounded() {
        let scene = wall_scene(2.0, 1);
        let body = Pose::new(Vec3::zeros(), 0.0).unwrap();
        let opts = SenseOptions { depth_noise: 0.05, ..SenseOptions::default() };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sense_all(&scene, &body, &Rig::preset(1).unwrap(), &opts, &mut rng).unwrap()
        };
        let a = run(3);
        let b = run(3);
        let c = run(4);
        assert_eq!(a, b, "same seed must reproduce the observation exactly");
        assert_ne!(a, c, "different seeds should perturb depths");
        // Noisy depths stay clamped to the camera's usable range.
        let intr = default_intrinsics();
        let rig = Rig::preset(1).unwrap();
        let cam = camera_pose(&body, &rig.mounts()[0]);
        for p in &a[0].cloud.hits {
            let z = (cam.rotation.transpose() * (p.position - cam.origin)).z;
            assert!(
                (intr.min_range - 1e-9..=intr.max_range + 1e-9).contains(&z),
                "depth {z} escaped the camera range"
            );
        }
    }

    #[test]
    fn pgm_wall_fixture_is_exact() {
        let scene = wall_scene(2.0, 2);
        let intr = default_intrinsics();
        let depth = render_depth(&scene, &front_cam(), &intr).unwrap();
        let pgm = depth_to_pgm(&depth);
        // Independent construction: header plus 160x120 big-endian 2000s.
        let mut want = b"P5\n160 120\n65535\n".to_vec();
        for _ in 0..(160 * 120) {
            want.extend_from_slice(&2000u16.to_be_bytes());
        }
        assert_eq!(pgm, want);
    }

    #[test]
    fn rig_json_round_trip() {
        let rig = Rig::default_five();
        let json = rig_to_json(&rig);
        let back = rig_from_json(&json).unwrap();
        assert_eq!(back.m(), 5);
        for (a, b) in rig.mounts().iter().zip(back.mounts()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.intrinsics, b.intrinsics);
            assert!((a.rotation - b.rotation).abs().max() < 1e-12);
            assert!((a.translation - b.translation).norm() < 1e-12);
        }
    }

    #[test]
    fn rig_json_rejects_bad_quaternion() {
        let json = r#"{
            "mounts": [{
                "name": "front",
                "translation": [0.1, 0.0, 0.0],
                "rotation": [0.9, 0.0, 0.0, 0.0],
                "intrinsics": {
                    "width": 160, "height": 120,
                    "fx": 120.0, "fy": 120.0, "cx": 80.0, "cy": 60.0,
                    "min_range": 0.3, "max_range": 8.0
                }
            }]
        }"#;
        match rig_from_json(json) {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("quaternion")),
            other => panic!("expected quaternion norm rejection, got {other:?}"),
        }
    }

    #[test]
    fn rig_rejects_bad_shapes() {
        assert!(Rig::new(vec![]).is_err());
        let m = Rig::preset(1).unwrap().mounts()[0].clone();
        let dup = Rig::new(vec![m.clone(), m.clone()]);
        assert!(dup.is_err());
        let six: Vec<CameraMount> = (0..6)
            .map(|i| CameraMount { name: format!("m{i}"), ..m.clone() })
            .collect();
        assert!(Rig::new(six).is_err());
    }

    #[test]
    fn mount_rejects_non_rotation() {
        let mut r = Mat3::identity();
        r[(0, 0)] = 2.0;
        assert!(CameraMount::new("bad", r, Vec3::zeros(), default_intrinsics()).is_err());
        // Reflection: orthonormal but determinant -1.
        let refl = Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        assert!(CameraMount::new("refl", refl, Vec3::zeros(), default_intrinsics()).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        let mut i = default_intrinsics();
        i.fx = 0.0;
        assert!(i.validate().is_err());
        let mut i = default_intrinsics();
        i.cx = 200.0;
        assert!(i.validate().is_err());
        let mut i = default_intrinsics();
        i.min_range = 9.0;
        assert!(i.validate().is_err());
    }
}
