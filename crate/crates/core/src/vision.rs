//! Semantic vision for the simulator: a ground-truth segmentation oracle
//! over the world's class grid, the class-to-navigability mapping, and the
//! back-projection that turns a segmented frame into a labeled pointcloud.
//!
//! Real robots run a learned segmentation network here. The simulation
//! substitutes a perfect per-pixel oracle (with an optional label-noise
//! rate) because everything of interest happens downstream of the labels.

use crate::planner::Pose;
use crate::simworld::{raycast, World};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("class {0} is not in the semantic class map")]
    UnknownClass(u8),
}

/// Which semantic classes exist and whether each may be driven on.
/// Class indices in world grids index into these lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticClassMap {
    pub class_names: Vec<String>,
    pub navigable: Vec<bool>,
}

impl SemanticClassMap {
    pub fn new(entries: &[(&str, bool)]) -> SemanticClassMap {
        SemanticClassMap {
            class_names: entries.iter().map(|(n, _)| n.to_string()).collect(),
            navigable: entries.iter().map(|&(_, v)| v).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        if self.class_names.len() != self.navigable.len() {
            return Err(VisionError::InvalidArgument(
                "class_names and navigable must have equal length".into(),
            ));
        }
        Ok(())
    }

    pub fn navigable_for(&self, class: u8) -> Option<bool> {
        self.navigable.get(class as usize).copied()
    }

    /// Check that every class occurring in the world is mapped.
    pub fn covers(&self, world: &World) -> Result<(), VisionError> {
        self.validate()?;
        for c in world.class_inventory() {
            if self.navigable_for(c).is_none() {
                return Err(VisionError::UnknownClass(c));
            }
        }
        Ok(())
    }
}

/// Dense row-major raster; `None` marks a pixel with no usable value
/// (no-return, or unknown).
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Image<T> {
        Image { width, height, data: vec![value; width * height] }
    }

    pub fn at(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    pub fn at_mut(&mut self, u: usize, v: usize) -> &mut T {
        &mut self.data[v * self.width + u]
    }

    /// Plain-text graymap (P2) for eyeballing; `shade` maps each value to
    /// 0..=255.
    pub fn to_pgm(&self, mut shade: impl FnMut(&T) -> u8) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "P2");
        let _ = writeln!(s, "{} {}", self.width, self.height);
        let _ = writeln!(s, "255");
        for v in 0..self.height {
            let row: Vec<String> =
                (0..self.width).map(|u| shade(self.at(u, v)).to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}

pub type ClassImage = Image<Option<u8>>;
pub type DepthImage = Image<Option<f64>>;
/// Binary navigability raster: strictly 0 or 255 where known.
pub type NavImage = Image<Option<u8>>;

/// Labeled points in the robot frame; the label is strictly 0 or 255.
#[derive(Clone, Debug, Default)]
pub struct NavigabilityCloud {
    pub points: Vec<(Vector3<f64>, u8)>,
}

/// Ideal pinhole camera looking along +x of the robot frame, pixels
/// sampled at ray centers. `u` grows to the right (toward -y), `v` grows
/// downward (toward -z).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub horizontal_fov: f64,
    pub vertical_fov: f64,
    /// Longest ray the depth sensor reports, meters.
    pub max_depth: f64,
    /// Optical center in the robot frame.
    pub mount_offset: [f64; 3],
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            width: 160,
            height: 120,
            horizontal_fov: 87f64.to_radians(),
            vertical_fov: 58f64.to_radians(),
            max_depth: 10.0,
            mount_offset: [0.0, 0.0, 0.5],
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), VisionError> {
        if self.width == 0 || self.height == 0 {
            return Err(VisionError::InvalidArgument("image dimensions must be positive".into()));
        }
        let ok_fov = |f: f64| f.is_finite() && f > 0.0 && f < std::f64::consts::PI;
        if !ok_fov(self.horizontal_fov) || !ok_fov(self.vertical_fov) {
            return Err(VisionError::InvalidArgument("fov must lie in (0, pi)".into()));
        }
        if !self.max_depth.is_finite() || self.max_depth <= 0.0 {
            return Err(VisionError::InvalidArgument("max depth must be positive".into()));
        }
        Ok(())
    }

    /// Unit ray through the center of pixel (u, v), in the robot frame.
    pub fn pixel_direction(&self, u: usize, v: usize) -> Vector3<f64> {
        let ndc_u = (u as f64 + 0.5) / self.width as f64 * 2.0 - 1.0;
        let ndc_v = (v as f64 + 0.5) / self.height as f64 * 2.0 - 1.0;
        Vector3::new(
            1.0,
            -ndc_u * (0.5 * self.horizontal_fov).tan(),
            -ndc_v * (0.5 * self.vertical_fov).tan(),
        )
        .normalize()
    }

    /// Angular extents containing every pixel ray, for field-of-view
    /// membership tests. A pixel ray's azimuth never exceeds half the
    /// horizontal fov, and its elevation never exceeds half the vertical.
    pub fn fov_extents(&self) -> crate::surfaces::Extents<f64> {
        crate::surfaces::Extents::new(
            -0.5 * self.horizontal_fov,
            0.5 * self.horizontal_fov,
            -0.5 * self.vertical_fov,
            0.5 * self.vertical_fov,
        )
    }
}

/// Cast one ray per pixel against the terrain. A hit yields the semantic
/// class of the surface under the hit point and the range along the ray;
/// a miss (sky, or off the grid) yields `None` in both images.
pub fn segment_oracle(
    world: &World,
    camera_pose: &Pose,
    camera: &CameraModel,
) -> Result<(ClassImage, DepthImage), VisionError> {
    camera.validate()?;
    let origin = camera_pose.to_world(&Vector3::from(camera.mount_offset));
    if world.height_at(origin.x, origin.y).is_none() {
        return Err(VisionError::InvalidArgument("camera pose outside world bounds".into()));
    }
    let rotation = camera_pose.transform.rotation;
    let mut classes = ClassImage::filled(camera.width, camera.height, None);
    let mut depths = DepthImage::filled(camera.width, camera.height, None);
    for v in 0..camera.height {
        for u in 0..camera.width {
            let dir_robot = camera.pixel_direction(u, v);
            let dir_world = rotation * dir_robot;
            if let Some(t) = raycast(world, &origin, &dir_world, camera.max_depth) {
                let hit = origin + dir_world * t;
                if let Some(c) = world.class_at(hit.x, hit.y) {
                    *classes.at_mut(u, v) = Some(c);
                    *depths.at_mut(u, v) = Some(t);
                }
            }
        }
    }
    Ok((classes, depths))
}

/// Corrupt a class image in place: each labeled pixel is replaced, with
/// probability `rate`, by a different class drawn uniformly from
/// `0..class_count`. Seeded and deterministic; a rate of 0 never touches
/// anything.
pub fn apply_label_noise(
    classes: &mut ClassImage,
    class_count: u8,
    rate: f64,
    seed: u64,
) -> Result<(), VisionError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(VisionError::InvalidArgument("noise rate must lie in [0, 1]".into()));
    }
    if class_count < 2 {
        return Err(VisionError::InvalidArgument(
            "label noise needs at least two classes".into(),
        ));
    }
    if rate == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for px in classes.data.iter_mut() {
        if let Some(c) = px {
            if rng.random::<f64>() < rate {
                let mut swap = rng.random_range(0..class_count - 1);
                if swap >= *c {
                    swap += 1;
                }
                *px = Some(swap);
            }
        }
    }
    Ok(())
}

/// Map classes to the binary navigability raster: 255 where the class map
/// allows driving, 0 where it does not, `None` passed through.
pub fn navigability_image(
    classes: &ClassImage,
    map: &SemanticClassMap,
) -> Result<NavImage, VisionError> {
    map.validate()?;
    let mut nav = NavImage::filled(classes.width, classes.height, None);
    for (dst, src) in nav.data.iter_mut().zip(&classes.data) {
        if let Some(c) = src {
            let ok = map.navigable_for(*c).ok_or(VisionError::UnknownClass(*c))?;
            *dst = Some(if ok { 255 } else { 0 });
        }
    }
    Ok(nav)
}

/// Back-project every pixel that has both a navigability label and a
/// depth into the robot frame. The camera is mounted axis-aligned, so a
/// pixel at range `d` lands at `direction * d + mount_offset`.
pub fn project_navigability(
    nav: &NavImage,
    depth: &DepthImage,
    camera: &CameraModel,
) -> Result<NavigabilityCloud, VisionError> {
    if nav.width != depth.width || nav.height != depth.height {
        return Err(VisionError::InvalidArgument(format!(
            "navigability image is {}x{} but depth image is {}x{}",
            nav.width, nav.height, depth.width, depth.height
        )));
    }
    if nav.width != camera.width || nav.height != camera.height {
        return Err(VisionError::InvalidArgument(
            "image dimensions do not match the camera model".into(),
        ));
    }
    let offset = Vector3::from(camera.mount_offset);
    let mut cloud = NavigabilityCloud::default();
    for v in 0..nav.height {
        for u in 0..nav.width {
            let (Some(label), Some(d)) = (*nav.at(u, v), *depth.at(u, v)) else { continue };
            if label != 0 && label != 255 {
                return Err(VisionError::InvalidArgument(format!(
                    "navigability value {label} is not binary"
                )));
            }
            cloud.points.push((camera.pixel_direction(u, v) * d + offset, label));
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::{flat, grass_mud_hsg, World, CLASS_GRASS, CLASS_MUD};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn level_pose(x: f64, y: f64, heading: f64) -> Pose {
        Pose::new(Vector3::new(x, y, 0.0), heading)
    }

    fn grass_mud_map() -> SemanticClassMap {
        SemanticClassMap::new(&[("grass", true), ("mud", false)])
    }

    #[test]
    fn uniform_world_segments_uniformly() {
        let world = flat(20.0, 0.5).unwrap();
        let camera = CameraModel::default();
        let (classes, depths) = segment_oracle(&world, &level_pose(0.0, 0.0, 0.4), &camera).unwrap();

        let hits = classes.data.iter().flatten().count();
        assert!(hits > 0);
        assert!(classes.data.iter().flatten().all(|&c| c == 0));
        // The upper half of the frame looks at the sky.
        assert!(classes.data.iter().filter(|c| c.is_none()).count() >= hits);
        for u in 0..camera.width {
            // Ground pixels form one contiguous run at the bottom of each
            // column.
            let first_hit = (0..camera.height).find(|&v| classes.at(u, v).is_some());
            if let Some(v0) = first_hit {
                assert!((v0..camera.height).all(|v| classes.at(u, v).is_some()));
                assert!(v0 > camera.height / 2);
            }
            // Class and depth share the exact same support.
            for v in 0..camera.height {
                assert_eq!(classes.at(u, v).is_some(), depths.at(u, v).is_some());
            }
        }
    }

    /// The image of a straight ground boundary must fall where the pinhole
    /// equations put it. For a camera at height h looking along +x, a
    /// pixel with tangents (a, c) hits the ground at y = -h * a / c, so
    /// the class transition in row v sits at the column whose horizontal
    /// tangent equals -y_b * c / h (half-cell shifted for the grid's
    /// nearest-node class lookup).
    #[test]
    fn class_boundary_projects_to_the_predicted_column() {
        let cell = 0.25;
        // On a grid node, so the nearest-node class lookup shifts the
        // effective boundary by exactly half a cell.
        let boundary = -0.75;
        let y_b = boundary - 0.5 * cell;
        let world = World::from_fn(
            161,
            161,
            cell,
            [-20.0, -20.0],
            |_, _| 0.0,
            |_, y| if y >= boundary { 0 } else { 1 },
            vec![],
        )
        .unwrap();
        let camera = CameraModel::default();
        let (classes, _) = segment_oracle(&world, &level_pose(0.0, 0.0, 0.0), &camera).unwrap();

        let tan_u = (0.5 * camera.horizontal_fov).tan();
        let tan_v = (0.5 * camera.vertical_fov).tan();
        let h = camera.mount_offset[2];
        let mut rows_checked = 0;
        for v in 0..camera.height {
            let ndc_v = (v as f64 + 0.5) / camera.height as f64 * 2.0 - 1.0;
            let c = ndc_v * tan_v;
            // Keep rows whose whole width lands within the depth range;
            // the 1.6 covers the ray-length factor at the frame edges.
            if c <= 1.6 * h / camera.max_depth {
                continue;
            }
            // Predicted transition column for this row.
            let ndc_u = -y_b * c / (h * tan_u);
            let u_pred = (ndc_u + 1.0) / 2.0 * camera.width as f64 - 0.5;
            if !(1.0..=(camera.width as f64 - 2.0)).contains(&u_pred) {
                continue;
            }
            let row: Vec<Option<u8>> =
                (0..camera.width).map(|u| *classes.at(u, v)).collect();
            let transition = (1..camera.width)
                .find(|&u| row[u - 1] == Some(0) && row[u] == Some(1))
                .expect("row should contain the class transition");
            let u_obs = transition as f64 - 0.5;
            assert!(
                (u_obs - u_pred).abs() <= 1.0,
                "row {v}: observed {u_obs}, predicted {u_pred}"
            );
            rows_checked += 1;
        }
        assert!(rows_checked > 20, "only {rows_checked} rows had the boundary in view");
    }

    #[test]
    fn out_of_bounds_camera_is_rejected() {
        let world = flat(5.0, 0.5).unwrap();
        let err = segment_oracle(&world, &level_pose(50.0, 0.0, 0.0), &CameraModel::default());
        assert!(err.is_err());
    }

    #[test]
    fn navigability_image_is_binary_and_total() {
        let map = grass_mud_map();
        let classes = ClassImage {
            width: 2,
            height: 2,
            data: vec![Some(0), Some(1), None, Some(0)],
        };
        let nav = navigability_image(&classes, &map).unwrap();
        assert_eq!(nav.data, vec![Some(255), Some(0), None, Some(255)]);

        let bad = ClassImage { width: 1, height: 1, data: vec![Some(7)] };
        assert!(matches!(
            navigability_image(&bad, &map),
            Err(VisionError::UnknownClass(7))
        ));

        let empty = ClassImage { width: 0, height: 0, data: vec![] };
        assert!(navigability_image(&empty, &map).unwrap().data.is_empty());
    }

    #[test]
    fn center_pixel_back_projects_along_the_axis() {
        let camera = CameraModel {
            width: 3,
            height: 3,
            ..Default::default()
        };
        let mut nav = NavImage::filled(3, 3, None);
        let mut depth = DepthImage::filled(3, 3, None);
        *nav.at_mut(1, 1) = Some(255);
        *depth.at_mut(1, 1) = Some(4.2);
        let cloud = project_navigability(&nav, &depth, &camera).unwrap();
        assert_eq!(cloud.points.len(), 1);
        let (p, label) = cloud.points[0];
        assert_eq!(label, 255);
        assert_relative_eq!(p.x, 4.2, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.z, 0.5 + 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_rejects_mismatched_dimensions() {
        let camera = CameraModel { width: 3, height: 3, ..Default::default() };
        let nav = NavImage::filled(3, 3, None);
        let depth = DepthImage::filled(2, 3, None);
        assert!(project_navigability(&nav, &depth, &camera).is_err());
        let depth = DepthImage::filled(3, 3, None);
        let wide = NavImage::filled(4, 3, None);
        assert!(project_navigability(&wide, &depth, &camera).is_err());
    }

    #[test]
    fn cloud_cardinality_equals_valid_pixel_count() {
        let world = grass_mud_hsg().unwrap();
        let pose = level_pose(15.0, -4.0, -PI / 2.0);
        let camera = CameraModel::default();
        let (classes, depths) = segment_oracle(&world, &pose, &camera).unwrap();
        let nav = navigability_image(&classes, &grass_mud_map()).unwrap();
        let cloud = project_navigability(&nav, &depths, &camera).unwrap();
        let valid = depths.data.iter().flatten().count();
        assert!(valid > 1000);
        assert_eq!(cloud.points.len(), valid);
    }

    /// Every cloud point's label must agree with the world's own class
    /// under the point, re-queried independently through the terrain.
    #[test]
    fn labels_are_consistent_with_the_terrain_underneath() {
        let world = grass_mud_hsg().unwrap();
        let map = grass_mud_map();
        // Spawn view includes grass, the mud patch edge, and the ramp.
        let pose = level_pose(10.0, -4.0, -2.0);
        let camera = CameraModel::default();
        let (classes, depths) = segment_oracle(&world, &pose, &camera).unwrap();
        let nav = navigability_image(&classes, &map).unwrap();
        let cloud = project_navigability(&nav, &depths, &camera).unwrap();

        let mut mismatches = 0;
        for (p_robot, label) in &cloud.points {
            let w = pose.to_world(p_robot);
            let class = world.class_at(w.x, w.y).unwrap();
            let expect = if map.navigable_for(class).unwrap() { 255 } else { 0 };
            if *label != expect {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
        // The scene actually contains both labels.
        assert!(cloud.points.iter().any(|&(_, l)| l == 0));
        assert!(cloud.points.iter().any(|&(_, l)| l == 255));
    }

    /// Flipping one class's navigability changes exactly that class's
    /// pixels and nothing else.
    #[test]
    fn remapping_one_class_flips_only_its_pixels() {
        let world = grass_mud_hsg().unwrap();
        let pose = level_pose(10.0, -4.0, -2.0);
        let camera = CameraModel::default();
        let (classes, _) = segment_oracle(&world, &pose, &camera).unwrap();

        let nav_a = navigability_image(&classes, &grass_mud_map()).unwrap();
        let flipped = SemanticClassMap::new(&[("grass", true), ("mud", true)]);
        let nav_b = navigability_image(&classes, &flipped).unwrap();

        for ((a, b), c) in nav_a.data.iter().zip(&nav_b.data).zip(&classes.data) {
            match c {
                Some(c) if *c == CLASS_MUD => {
                    assert_eq!((*a, *b), (Some(0), Some(255)));
                }
                Some(c) => {
                    assert_eq!(*c, CLASS_GRASS);
                    assert_eq!(a, b);
                }
                None => assert_eq!((*a, *b), (None, None)),
            }
        }
    }

    #[test]
    fn label_noise_is_seeded_and_proportional() {
        let world = grass_mud_hsg().unwrap();
        let pose = level_pose(10.0, -4.0, -2.0);
        let camera = CameraModel::default();
        let (clean, _) = segment_oracle(&world, &pose, &camera).unwrap();

        let mut untouched = clean.clone();
        apply_label_noise(&mut untouched, 2, 0.0, 9).unwrap();
        assert_eq!(untouched, clean);

        let mut all_flipped = clean.clone();
        apply_label_noise(&mut all_flipped, 2, 1.0, 9).unwrap();
        for (a, b) in clean.data.iter().zip(&all_flipped.data) {
            match (a, b) {
                (Some(x), Some(y)) => assert_ne!(x, y),
                (None, None) => {}
                other => panic!("support changed: {other:?}"),
            }
        }

        let mut noisy1 = clean.clone();
        apply_label_noise(&mut noisy1, 2, 0.3, 9).unwrap();
        let mut noisy2 = clean.clone();
        apply_label_noise(&mut noisy2, 2, 0.3, 9).unwrap();
        assert_eq!(noisy1, noisy2);
        let labeled = clean.data.iter().flatten().count();
        let changed = clean
            .data
            .iter()
            .zip(&noisy1.data)
            .filter(|(a, b)| a != b)
            .count();
        let fraction = changed as f64 / labeled as f64;
        assert!((0.25..=0.35).contains(&fraction), "noise fraction {fraction}");
    }

    #[test]
    fn pgm_dump_has_the_right_shape() {
        let img = NavImage {
            width: 3,
            height: 2,
            data: vec![Some(255), Some(0), None, Some(0), Some(255), None],
        };
        let pgm = img.to_pgm(|p| p.unwrap_or(128));
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("3 2"));
        assert_eq!(lines.next(), Some("255"));
        let rest: Vec<&str> = lines.collect();
        assert_eq!(rest.len(), 2);
        assert_eq!(rest[0].split_whitespace().count(), 3);
    }

    #[test]
    fn fov_extents_bound_all_pixel_rays() {
        let camera = CameraModel::default();
        let fov = camera.fov_extents();
        for v in (0..camera.height).step_by(7) {
            for u in (0..camera.width).step_by(11) {
                let d = camera.pixel_direction(u, v);
                let s = crate::surfaces::cartesian_to_spherical(&d).unwrap();
                assert!(fov.contains(s.azimuth, s.elevation), "pixel ({u}, {v}) escapes");
            }
        }
    }
}
