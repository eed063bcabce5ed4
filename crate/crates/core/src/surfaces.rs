//! Spherical surface representations of pointclouds and the training sets
//! derived from them.
//!
//! Range returns become an **occupancy surface**: each return direction
//! carries the occupancy `surface_radius - range`, so directions without a
//! return (free space) are simply absent and a zero-mean GP fitted to the
//! surface reverts to occupancy zero there. Segmented camera points become a
//! **visual surface** carrying a navigability label and a depth per
//! direction, which splits into a navigability training set (all points) and
//! a depth training set (points closer than a cutoff).

use crate::gp::{AngleMetric, SgpModel, TrainingSet};
use crate::scalar::{c, Scalar};
use nalgebra::Vector3;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

/// Direction-and-range coordinates: azimuth in [-pi, pi), elevation, radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalPoint<S: Scalar> {
    pub azimuth: S,
    pub elevation: S,
    pub radius: S,
}

/// Convert a Cartesian point (x forward, y left, z up) to spherical
/// coordinates. The zero vector has no direction and is rejected.
pub fn cartesian_to_spherical<S: Scalar>(
    p: &Vector3<S>,
) -> Result<SphericalPoint<S>, SurfaceError> {
    let radius = p.norm();
    if !radius.is_finite() || radius <= S::zero() {
        return Err(SurfaceError::InvalidArgument(
            "cannot project the zero or non-finite vector".into(),
        ));
    }
    let mut azimuth = p.y.atan2(p.x);
    // atan2 returns (-pi, pi]; fold the single closed endpoint to -pi.
    if azimuth >= S::pi() {
        azimuth -= S::two_pi();
    }
    let elevation = (p.z / radius).asin();
    Ok(SphericalPoint { azimuth, elevation, radius })
}

/// Unit vector for a direction given as azimuth (about +z from +x toward
/// +y) and elevation (from the xy-plane toward +z). Inverse of
/// [`cartesian_to_spherical`] up to scale.
pub fn unit_direction<S: Scalar>(azimuth: S, elevation: S) -> Vector3<S> {
    Vector3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    )
}

/// Rectangular angular extents, azimuth by elevation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extents<S: Scalar> {
    pub az_min: S,
    pub az_max: S,
    pub el_min: S,
    pub el_max: S,
}

impl<S: Scalar> Extents<S> {
    pub fn new(az_min: S, az_max: S, el_min: S, el_max: S) -> Self {
        Extents { az_min, az_max, el_min, el_max }
    }

    /// Extents centered on the forward axis from full opening angles,
    /// matching how a camera field of view is quoted.
    pub fn symmetric(az_full: S, el_full: S) -> Self {
        let half = c::<S>(0.5);
        Extents {
            az_min: -az_full * half,
            az_max: az_full * half,
            el_min: -el_full * half,
            el_max: el_full * half,
        }
    }

    pub fn contains(&self, azimuth: S, elevation: S) -> bool {
        azimuth >= self.az_min
            && azimuth <= self.az_max
            && elevation >= self.el_min
            && elevation <= self.el_max
    }
}

/// One direction with a range return, stored as occupancy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OccupancyPoint<S: Scalar> {
    pub azimuth: S,
    pub elevation: S,
    /// surface_radius - range; larger means closer.
    pub occupancy: S,
}

/// Spherical occupancy representation of a range scan.
#[derive(Clone, Debug)]
pub struct OccupancySurface<S: Scalar> {
    pub surface_radius: S,
    pub points: Vec<OccupancyPoint<S>>,
    /// Angular extents of the observed directions; `None` when empty.
    pub span: Option<Extents<S>>,
}

/// Angular bin width used to merge returns in (nearly) the same direction.
const DUP_BIN_DEG: f64 = 0.25;

/// Project a pointcloud onto the sphere and keep, per direction bin, the
/// closest return (the most conservative occupancy). Returns farther than
/// the surface radius are discarded; an empty cloud is a valid empty surface.
pub fn build_occupancy_surface<S: Scalar>(
    cloud: &[Vector3<S>],
    surface_radius: S,
) -> OccupancySurface<S> {
    let bin = DUP_BIN_DEG.to_radians();
    let az_bins = (360.0 / DUP_BIN_DEG) as i64;
    // Keyed map keeps the output ordering deterministic.
    let mut best: BTreeMap<(i64, i64), SphericalPoint<S>> = BTreeMap::new();
    for p in cloud {
        let Ok(s) = cartesian_to_spherical(p) else { continue };
        if s.radius > surface_radius {
            continue;
        }
        let az: f64 = s.azimuth.to_subset().unwrap_or(0.0);
        let el: f64 = s.elevation.to_subset().unwrap_or(0.0);
        let ia = (((az + std::f64::consts::PI) / bin).floor() as i64).rem_euclid(az_bins);
        let ie = (el / bin).floor() as i64;
        best.entry((ia, ie))
            .and_modify(|kept| {
                if s.radius < kept.radius {
                    *kept = s;
                }
            })
            .or_insert(s);
    }
    let mut points = Vec::with_capacity(best.len());
    let mut span: Option<Extents<S>> = None;
    for s in best.values() {
        points.push(OccupancyPoint {
            azimuth: s.azimuth,
            elevation: s.elevation,
            occupancy: surface_radius - s.radius,
        });
        span = Some(match span {
            None => Extents::new(s.azimuth, s.azimuth, s.elevation, s.elevation),
            Some(e) => Extents::new(
                e.az_min.min(s.azimuth),
                e.az_max.max(s.azimuth),
                e.el_min.min(s.elevation),
                e.el_max.max(s.elevation),
            ),
        });
    }
    OccupancySurface { surface_radius, points, span }
}

impl<S: Scalar> OccupancySurface<S> {
    /// Regression data over (azimuth, elevation) with occupancy targets and
    /// the wrapped azimuth metric (the scan covers the full circle). An
    /// optional cap rebins the scan onto a coarser angular grid (see
    /// [`rebin_training`]) so the reduced set still covers the whole span.
    pub fn training_set(&self, noise_variance: S, cap: Option<usize>) -> TrainingSet<S> {
        let mut inputs = Vec::with_capacity(self.points.len());
        let mut targets = Vec::with_capacity(self.points.len());
        for p in &self.points {
            inputs.push([p.azimuth, p.elevation]);
            targets.push(p.occupancy);
        }
        let full =
            TrainingSet { inputs, targets, noise_variance, metric: AngleMetric::WrapAzimuth };
        match cap {
            Some(cap) => rebin_training(full, cap),
            None => full,
        }
    }
}

/// Reduce a training set to at most `cap` points by partitioning its angular
/// bounding box into a grid of at most `cap` cells (shaped to the box's
/// aspect ratio) and keeping, per cell, the sample nearest the cell center.
///
/// Unlike stride decimation this keeps the reduced set spread uniformly over
/// the observed span regardless of the input ordering, so the gaps it
/// introduces stay below the grid pitch instead of aliasing into stripes of
/// missing data that a variance-based free-space test would misread.
pub fn rebin_training<S: Scalar>(train: TrainingSet<S>, cap: usize) -> TrainingSet<S> {
    if cap == 0 || train.inputs.len() <= cap {
        return train;
    }
    let mut az_min = f64::INFINITY;
    let mut az_max = f64::NEG_INFINITY;
    let mut el_min = f64::INFINITY;
    let mut el_max = f64::NEG_INFINITY;
    for p in &train.inputs {
        let az: f64 = p[0].to_subset().unwrap_or(0.0);
        let el: f64 = p[1].to_subset().unwrap_or(0.0);
        az_min = az_min.min(az);
        az_max = az_max.max(az);
        el_min = el_min.min(el);
        el_max = el_max.max(el);
    }
    let az_span = (az_max - az_min).max(1e-9);
    let el_span = (el_max - el_min).max(1e-9);
    let n_az = ((cap as f64 * az_span / el_span).sqrt().floor() as usize).clamp(1, cap);
    let n_el = (cap / n_az).max(1);
    let mut best: BTreeMap<(usize, usize), (usize, f64)> = BTreeMap::new();
    for (idx, p) in train.inputs.iter().enumerate() {
        let az: f64 = p[0].to_subset().unwrap_or(0.0);
        let el: f64 = p[1].to_subset().unwrap_or(0.0);
        let fa = ((az - az_min) / az_span * n_az as f64).floor();
        let fe = ((el - el_min) / el_span * n_el as f64).floor();
        let ia = (fa as usize).min(n_az - 1);
        let ie = (fe as usize).min(n_el - 1);
        let ca = az_min + (ia as f64 + 0.5) / n_az as f64 * az_span;
        let ce = el_min + (ie as f64 + 0.5) / n_el as f64 * el_span;
        let d2 = (az - ca).powi(2) + (el - ce).powi(2);
        best.entry((ia, ie))
            .and_modify(|kept| {
                if d2 < kept.1 {
                    *kept = (idx, d2);
                }
            })
            .or_insert((idx, d2));
    }
    let mut inputs = Vec::with_capacity(best.len());
    let mut targets = Vec::with_capacity(best.len());
    for (idx, _) in best.values() {
        inputs.push(train.inputs[*idx]);
        targets.push(train.targets[*idx]);
    }
    TrainingSet { inputs, targets, noise_variance: train.noise_variance, metric: train.metric }
}

/// One segmented camera point on the sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisualPoint<S: Scalar> {
    pub azimuth: S,
    pub elevation: S,
    pub radius: S,
    /// 255 for navigable, 0 for non-navigable.
    pub navigability: u8,
}

/// Spherical representation of a labeled depth image.
#[derive(Clone, Debug)]
pub struct VisualSurface<S: Scalar> {
    pub surface_radius: S,
    pub points: Vec<VisualPoint<S>>,
    /// The camera field of view the surface was clipped to.
    pub span: Extents<S>,
}

/// Project labeled points onto the sphere, keeping those inside the field of
/// view and closer than the surface radius. Labels normalize to {0, 255}.
pub fn build_visual_surface<S: Scalar>(
    cloud: &[(Vector3<S>, u8)],
    surface_radius: S,
    fov: &Extents<S>,
) -> VisualSurface<S> {
    let mut points = Vec::new();
    for (p, label) in cloud {
        let Ok(s) = cartesian_to_spherical(p) else { continue };
        if s.radius > surface_radius || !fov.contains(s.azimuth, s.elevation) {
            continue;
        }
        points.push(VisualPoint {
            azimuth: s.azimuth,
            elevation: s.elevation,
            radius: s.radius,
            navigability: if *label != 0 { 255 } else { 0 },
        });
    }
    VisualSurface { surface_radius, points, span: *fov }
}

/// Split a visual surface into its two regression problems: navigability
/// over every point (targets 0/1), and depth occupancy over the points
/// closer than `depth_cutoff` (targets `surface_radius - radius`). Both use
/// the plain angle metric since the camera never wraps the circle.
pub fn split_visual_datasets<S: Scalar>(
    surface: &VisualSurface<S>,
    depth_cutoff: S,
    nav_noise: S,
    depth_noise: S,
) -> (TrainingSet<S>, TrainingSet<S>) {
    let mut nav_inputs = Vec::with_capacity(surface.points.len());
    let mut nav_targets = Vec::with_capacity(surface.points.len());
    let mut depth_inputs = Vec::new();
    let mut depth_targets = Vec::new();
    for p in &surface.points {
        nav_inputs.push([p.azimuth, p.elevation]);
        nav_targets.push(if p.navigability != 0 { S::one() } else { S::zero() });
        if p.radius < depth_cutoff {
            depth_inputs.push([p.azimuth, p.elevation]);
            depth_targets.push(surface.surface_radius - p.radius);
        }
    }
    (
        TrainingSet {
            inputs: nav_inputs,
            targets: nav_targets,
            noise_variance: nav_noise,
            metric: AngleMetric::Plain,
        },
        TrainingSet {
            inputs: depth_inputs,
            targets: depth_targets,
            noise_variance: depth_noise,
            metric: AngleMetric::Plain,
        },
    )
}

/// Regular azimuth-by-elevation evaluation grid. Nodes iterate azimuth-major
/// (all elevations of the first azimuth, then the next azimuth).
#[derive(Clone, Debug)]
pub struct Lattice<S: Scalar> {
    azimuths: Vec<S>,
    elevations: Vec<S>,
}

fn linspace<S: Scalar>(lo: S, hi: S, k: usize, half_open: bool) -> Vec<S> {
    if k == 1 {
        return vec![(lo + hi) * c::<S>(0.5)];
    }
    let denom = if half_open { k } else { k - 1 };
    let step = (hi - lo) / c::<S>(denom as f64);
    (0..k).map(|i| lo + step * c::<S>(i as f64)).collect()
}

impl<S: Scalar> Lattice<S> {
    /// `wrap_azimuth` lays the azimuth axis out half-open so a full-circle
    /// lattice does not duplicate the seam node.
    pub fn new(extents: &Extents<S>, n_az: usize, n_el: usize, wrap_azimuth: bool) -> Self {
        assert!(n_az > 0 && n_el > 0, "lattice must have nodes");
        Lattice {
            azimuths: linspace(extents.az_min, extents.az_max, n_az, wrap_azimuth),
            elevations: linspace(extents.el_min, extents.el_max, n_el, false),
        }
    }

    pub fn azimuths(&self) -> &[S] {
        &self.azimuths
    }

    pub fn elevations(&self) -> &[S] {
        &self.elevations
    }

    pub fn len(&self) -> usize {
        self.azimuths.len() * self.elevations.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of the node at azimuth column `i`, elevation row `j`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.elevations.len() + j
    }

    pub fn nodes(&self) -> impl Iterator<Item = (S, S)> + '_ {
        self.azimuths
            .iter()
            .flat_map(move |&a| self.elevations.iter().map(move |&e| (a, e)))
    }
}

/// Posterior variance evaluated over a lattice, in node order.
#[derive(Clone, Debug)]
pub struct VarianceSurface<S: Scalar> {
    pub lattice: Lattice<S>,
    pub variance: Vec<S>,
}

impl<S: Scalar> VarianceSurface<S> {
    pub fn at(&self, i: usize, j: usize) -> S {
        self.variance[self.lattice.index(i, j)]
    }
}

/// Evaluate the model's predictive variance at every lattice node.
pub fn variance_surface<S: Scalar>(
    model: &SgpModel<S>,
    lattice: &Lattice<S>,
) -> VarianceSurface<S> {
    let queries: Vec<[S; 2]> = lattice.nodes().map(|(a, e)| [a, e]).collect();
    let variance = model.predict_many(&queries).into_iter().map(|p| p.variance).collect();
    VarianceSurface { lattice: lattice.clone(), variance }
}

/// Points with an optional navigability label, as stored on disk.
pub type LabeledCloud = Vec<(Vector3<f64>, Option<u8>)>;

/// Read a whitespace-delimited pointcloud: `x y z` or `x y z label` per
/// line, blank lines and `#` comments skipped.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<LabeledCloud, SurfaceError> {
    let file = std::fs::File::open(path)?;
    let mut cloud = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(SurfaceError::Parse(format!(
                "line {}: expected 3 or 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut xyz = [0.0f64; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| {
                SurfaceError::Parse(format!("line {}: bad number {f:?}", lineno + 1))
            })?;
        }
        let label = match fields.get(3) {
            Some(f) => Some(f.parse().map_err(|_| {
                SurfaceError::Parse(format!("line {}: bad label {f:?}", lineno + 1))
            })?),
            None => None,
        };
        cloud.push((Vector3::new(xyz[0], xyz[1], xyz[2]), label));
    }
    Ok(cloud)
}

/// Write a pointcloud in the same text format `read_cloud` accepts.
pub fn write_cloud(
    path: impl AsRef<Path>,
    cloud: &[(Vector3<f64>, Option<u8>)],
) -> Result<(), SurfaceError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for (p, label) in cloud {
        match label {
            Some(l) => writeln!(w, "{} {} {} {}", p.x, p.y, p.z, l)?,
            None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    w.flush()?;
    Ok(())
}
