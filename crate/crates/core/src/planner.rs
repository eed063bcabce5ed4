//! Local navigation: extract steering candidates from the occupancy model's
//! variance surface, blend in visual navigability, score against the goal,
//! and emit unicycle velocity commands.
//!
//! Candidates are "lowest navigable points": per azimuth column of the
//! variance lattice, the lowest elevation whose predictive variance is still
//! at free-space levels. Observed directions (terrain, obstacles) lose their
//! variance, so the first high-variance node above them marks the silhouette
//! edge of traversable space in that direction.

use crate::gp::SgpModel;
use crate::surfaces::{unit_direction, Extents, VarianceSurface};
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Robot localization: planar position plus yaw, with the cached rigid
/// transform from robot frame (x forward, y left, z up) to world frame.
#[derive(Clone, Debug)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub heading: f64,
    pub transform: Isometry3<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, heading: f64) -> Self {
        let transform = Isometry3::from_parts(
            Translation3::from(position),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), heading),
        );
        Pose { position, heading, transform }
    }

    /// Map a point from the robot frame into the world frame.
    pub fn to_world(&self, p_robot: &Vector3<f64>) -> Vector3<f64> {
        (self.transform * nalgebra::Point3::from(*p_robot)).coords
    }

    /// Bearing of a world-frame planar target relative to the heading,
    /// wrapped to [-pi, pi).
    pub fn bearing_to(&self, target: [f64; 2]) -> f64 {
        let world = (target[1] - self.position.y).atan2(target[0] - self.position.x);
        wrap_angle(world - self.heading)
    }
}

/// Wrap an angle to [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r = -PI;
    }
    r
}

/// Visual classification of a candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Navigability {
    Navigable,
    NonNavigable,
    /// Behind or beside the robot, where the camera cannot vouch either way.
    OutsideFov,
}

/// One lowest-navigable-point steering candidate.
#[derive(Clone, Debug)]
pub struct Lnp {
    /// Direction in the robot frame.
    pub azimuth: f64,
    pub elevation: f64,
    /// Predicted free range along the direction, in [0, surface_radius].
    pub range: f64,
    pub world_xyz: Vector3<f64>,
    pub navigability: Navigability,
    /// Mode cost filled in by selection; 1 masks a non-navigable candidate.
    pub cost: f64,
}

/// Velocity command for the unicycle base.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionCommand {
    pub linear: f64,
    pub angular: f64,
}

impl MotionCommand {
    pub const STOP: MotionCommand = MotionCommand { linear: 0.0, angular: 0.0 };
}

/// Which information the planner runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Geometry only.
    G,
    /// Vision only: candidates outside the camera's view are not trusted
    /// and there is no recovery rotation.
    V,
    /// Geometry with visual preference.
    Vg,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::G => "g",
            Mode::V => "v",
            Mode::Vg => "vg",
        }
    }
}

/// All planner parameters. Variance thresholds are absolute values; when a
/// scenario expresses them as fractions of the prior they are resolved
/// before reaching the planner.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Variance above which a lattice node counts as free space.
    pub free_variance_threshold: f64,
    /// Depth-model variance at or above which a candidate's visual depth is
    /// too uncertain to use (vision-only mode).
    pub depth_variance_threshold: f64,
    /// Navigability-model mean above which a direction is navigable.
    pub nav_threshold: f64,
    /// Navigability-model variance at or below which an elevation counts as
    /// visually observed. The assessment scans each candidate's azimuth
    /// column and only trusts means at observed elevations.
    pub visual_support_threshold: f64,
    /// Safe elevation band (min, max), open interval, radians.
    pub elevation_bounds: (f64, f64),
    /// (distance, direction, elevation) weights; must sum to 1.
    pub cost_weights: (f64, f64, f64),
    /// Preference for camera-verified candidates, in [0.5, 1].
    pub nav_preference: f64,
    /// (k_a, k_b, k_c): range gain and heading penalty for the linear
    /// velocity, proportional gain for the angular velocity.
    pub control_gains: (f64, f64, f64),
    pub max_linear_velocity: f64,
    /// Occupancy surface radius; predicted ranges clamp to it.
    pub surface_radius: f64,
    /// Normalizer for the LNP-to-goal distance term, set per trial to
    /// surface_radius + start-to-goal distance.
    pub distance_norm: f64,
    /// Sensor origin in the robot frame (shared by range sensor and camera).
    pub sensor_offset: [f64; 3],
    /// Rotate in place when no viable candidate exists. Disabled for the
    /// vision-only mode, which is expected to dead-end instead.
    pub recovery_enabled: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            free_variance_threshold: 1.0,
            depth_variance_threshold: 1.0,
            nav_threshold: 0.5,
            visual_support_threshold: 1.0,
            elevation_bounds: (-30f64.to_radians(), 5f64.to_radians()),
            cost_weights: (0.6, 0.3, 0.1),
            nav_preference: 0.5,
            control_gains: (0.12, 0.3, 0.9),
            max_linear_velocity: 1.2,
            surface_radius: 20.0,
            distance_norm: 40.0,
            sensor_offset: [0.0, 0.0, 0.5],
            recovery_enabled: true,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let (bmin, bmax) = self.elevation_bounds;
        if bmin >= bmax {
            return Err(PlannerError::InvalidConfig(
                "elevation bounds must satisfy min < max".into(),
            ));
        }
        let (kd, ka, ke) = self.cost_weights;
        if kd < 0.0 || ka < 0.0 || ke < 0.0 {
            return Err(PlannerError::InvalidConfig("cost weights must be non-negative".into()));
        }
        if (kd + ka + ke - 1.0).abs() > 1e-6 {
            return Err(PlannerError::InvalidConfig(format!(
                "cost weights must sum to 1, got {}",
                kd + ka + ke
            )));
        }
        if !(0.5..=1.0).contains(&self.nav_preference) {
            return Err(PlannerError::InvalidConfig(
                "nav preference must lie in [0.5, 1]".into(),
            ));
        }
        let (ga, gb, gc) = self.control_gains;
        if ga <= 0.0 || gb <= 0.0 || gc <= 0.0 {
            return Err(PlannerError::InvalidConfig("control gains must be positive".into()));
        }
        if self.max_linear_velocity <= 0.0
            || self.surface_radius <= 0.0
            || self.distance_norm <= 0.0
            || self.free_variance_threshold <= 0.0
            || self.depth_variance_threshold <= 0.0
            || self.visual_support_threshold <= 0.0
        {
            return Err(PlannerError::InvalidConfig(
                "velocity, radii, and thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}



/// Per azimuth column of the variance surface, find the lowest node inside
/// the safe elevation band whose variance still reads as free space, predict
/// its range from the occupancy model, and place it in the world. Columns
/// with no qualifying node (fully blocked) contribute nothing.
pub fn extract_g_lnps(
    var_surface: &VarianceSurface<f64>,
    occ_model: &SgpModel<f64>,
    cfg: &PlannerConfig,
    robot: &Pose,
) -> Vec<Lnp> {
    let (bmin, bmax) = cfg.elevation_bounds;
    let lattice = &var_surface.lattice;
    let mut picked: Vec<(f64, f64)> = Vec::with_capacity(lattice.azimuths().len());
    for (i, &az) in lattice.azimuths().iter().enumerate() {
        for (j, &el) in lattice.elevations().iter().enumerate() {
            if el <= bmin || el >= bmax {
                continue;
            }
            if var_surface.at(i, j) > cfg.free_variance_threshold {
                picked.push((az, el));
                break;
            }
        }
    }
    let queries: Vec<[f64; 2]> = picked.iter().map(|&(a, e)| [a, e]).collect();
    let preds = occ_model.predict_many(&queries);
    let offset = Vector3::from(cfg.sensor_offset);
    picked
        .into_iter()
        .zip(preds)
        .map(|((az, el), p)| {
            let range = (cfg.surface_radius - p.mean).clamp(0.0, cfg.surface_radius);
            let world_xyz = robot.to_world(&(unit_direction(az, el) * range + offset));
            Lnp {
                azimuth: az,
                elevation: el,
                range,
                world_xyz,
                navigability: Navigability::OutsideFov,
                cost: 0.0,
            }
        })
        .collect()
}

/// Elevation step used when sweeping a candidate's azimuth column through
/// the navigability model.
const ASSESS_EL_STEP: f64 = std::f64::consts::PI / 180.0;

/// Classify each candidate through the camera: inside the field of view the
/// navigability model decides navigable versus not; outside it the candidate
/// is marked as unverified. With a depth model supplied (vision-only mode),
/// in-view candidates whose visual depth is too uncertain are dropped
/// entirely.
///
/// A candidate direction is only navigable when everything the camera can
/// vouch for along it is. The sweep walks the candidate's azimuth from the
/// bottom of the view up to the candidate's elevation and takes the worst
/// navigability mean among visually observed elevations, so mud on the near
/// ground vetoes a direction whose far appearance is benign. A column with
/// no observed elevation at all is unverifiable and counts as non-navigable.
pub fn assess_navigability(
    lnps: Vec<Lnp>,
    nav_model: &SgpModel<f64>,
    depth_model: Option<&SgpModel<f64>>,
    camera_fov: &Extents<f64>,
    cfg: &PlannerConfig,
) -> Vec<Lnp> {
    let mut kept: Vec<(Lnp, bool)> = Vec::with_capacity(lnps.len());
    let mut queries: Vec<[f64; 2]> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for mut lnp in lnps {
        if !camera_fov.contains(lnp.azimuth, lnp.elevation) {
            lnp.navigability = Navigability::OutsideFov;
            kept.push((lnp, false));
            continue;
        }
        if let Some(depth) = depth_model {
            if depth.predict([lnp.azimuth, lnp.elevation]).variance
                >= cfg.depth_variance_threshold
            {
                continue;
            }
        }
        let start = queries.len();
        let top = lnp.elevation.min(camera_fov.el_max);
        let mut el = camera_fov.el_min;
        while el < top {
            queries.push([lnp.azimuth, el]);
            el += ASSESS_EL_STEP;
        }
        queries.push([lnp.azimuth, top]);
        spans.push((start, queries.len()));
        kept.push((lnp, true));
    }

    let preds = nav_model.predict_many(&queries);
    let mut span_iter = spans.into_iter();
    let mut out = Vec::with_capacity(kept.len());
    for (mut lnp, assessed) in kept {
        if assessed {
            let (start, end) = span_iter.next().expect("span per assessed candidate");
            let worst = preds[start..end]
                .iter()
                .filter(|p| p.variance <= cfg.visual_support_threshold)
                .map(|p| p.mean)
                .fold(f64::INFINITY, f64::min);
            lnp.navigability = if worst.is_finite() && worst > cfg.nav_threshold {
                Navigability::Navigable
            } else {
                Navigability::NonNavigable
            };
        }
        out.push(lnp);
    }
    out
}

/// Goal-directed cost: weighted blend of remaining travel distance through
/// the candidate, heading misalignment, and elevation excursion, each
/// normalized to [0, 1]. Weight scaling cancels, so only ratios matter.
pub fn goal_cost(lnp: &Lnp, goal: [f64; 2], cfg: &PlannerConfig) -> f64 {
    let (kd, ka, ke) = cfg.cost_weights;
    let wsum = (kd + ka + ke).max(f64::MIN_POSITIVE);
    let dx = goal[0] - lnp.world_xyz.x;
    let dy = goal[1] - lnp.world_xyz.y;
    let d_tg = lnp.range + (dx * dx + dy * dy).sqrt();
    let d_term = (d_tg / cfg.distance_norm).clamp(0.0, 1.0);
    let a_term = (lnp.azimuth.abs() / PI).clamp(0.0, 1.0);
    let (bmin, bmax) = cfg.elevation_bounds;
    let b_norm = bmin.abs().max(bmax.abs()).max(f64::MIN_POSITIVE);
    let b_term = (lnp.elevation.abs() / b_norm).clamp(0.0, 1.0);
    (kd * d_term + ka * a_term + ke * b_term) / wsum
}

/// Final cost of a candidate under a mode; `None` means the candidate is
/// not admissible in that mode at all.
pub fn mode_cost(lnp: &Lnp, goal: [f64; 2], mode: Mode, cfg: &PlannerConfig) -> Option<f64> {
    let base = goal_cost(lnp, goal, cfg);
    match (mode, lnp.navigability) {
        (Mode::G, _) => Some(base),
        (Mode::V, Navigability::Navigable) => Some(base),
        (Mode::V, Navigability::NonNavigable) => Some(1.0),
        (Mode::V, Navigability::OutsideFov) => None,
        (Mode::Vg, Navigability::Navigable) => Some((1.0 - cfg.nav_preference) * base),
        (Mode::Vg, Navigability::NonNavigable) => Some(1.0),
        (Mode::Vg, Navigability::OutsideFov) => Some(cfg.nav_preference * base),
    }
}

/// Pick the cheapest admissible candidate. Ties break toward the smallest
/// heading change, then the smallest signed azimuth. Returns `None` when no
/// candidate is admissible or every admissible cost sits at the mask value,
/// which signals the caller to run recovery (or, vision-only, to dead-end).
pub fn select_lnp(
    lnps: &[Lnp],
    goal: [f64; 2],
    mode: Mode,
    cfg: &PlannerConfig,
) -> Option<Lnp> {
    let mut best: Option<(f64, f64, f64, &Lnp)> = None;
    for lnp in lnps {
        let Some(cost) = mode_cost(lnp, goal, mode, cfg) else { continue };
        let key = (cost, lnp.azimuth.abs(), lnp.azimuth);
        let better = match &best {
            None => true,
            Some((bc, babs, bsig, _)) => {
                match cost.total_cmp(bc) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => match key.1.total_cmp(babs) {
                        std::cmp::Ordering::Less => true,
                        std::cmp::Ordering::Greater => false,
                        std::cmp::Ordering::Equal => key.2.total_cmp(bsig).is_lt(),
                    },
                }
            }
        };
        if better {
            best = Some((cost, key.1, key.2, lnp));
        }
    }
    let (cost, _, _, lnp) = best?;
    if cost >= 1.0 {
        return None;
    }
    let mut chosen = lnp.clone();
    chosen.cost = cost;
    Some(chosen)
}

/// Velocity toward the selected candidate: linear speed grows with the free
/// range and shrinks with the heading error; angular velocity is a pure
/// proportional turn.
pub fn motion_command(selected: &Lnp, cfg: &PlannerConfig) -> MotionCommand {
    let (k_a, k_b, k_c) = cfg.control_gains;
    MotionCommand {
        linear: (k_a * selected.range - k_b * selected.azimuth.abs())
            .clamp(0.0, cfg.max_linear_velocity),
        angular: k_c * selected.azimuth,
    }
}

/// Rotate in place toward the goal side at half the straight-turn rate,
/// waiting for a viable candidate to appear.
pub fn recovery_command(robot: &Pose, goal: [f64; 2], cfg: &PlannerConfig) -> MotionCommand {
    let (_, _, k_c) = cfg.control_gains;
    let side = if robot.bearing_to(goal) >= 0.0 { 1.0 } else { -1.0 };
    MotionCommand { linear: 0.0, angular: side * k_c * PI / 2.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces::Lattice;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> PlannerConfig {
        PlannerConfig::default()
    }

    fn lnp(az: f64, el: f64, range: f64, nav: Navigability) -> Lnp {
        let world = unit_direction(az, el) * range;
        Lnp { azimuth: az, elevation: el, range, world_xyz: world, navigability: nav, cost: 0.0 }
    }

    #[test]
    fn pose_transform_rotates_and_translates() {
        let pose = Pose::new(Vector3::new(2.0, 1.0, 0.0), std::f64::consts::FRAC_PI_2);
        let w = pose.to_world(&Vector3::new(1.0, 0.0, 0.5));
        assert_relative_eq!(w.x, 2.0, epsilon = 1e-12);
        assert_relative_eq!(w.y, 2.0, epsilon = 1e-12);
        assert_relative_eq!(w.z, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn bearing_wraps_to_half_open_interval() {
        let pose = Pose::new(Vector3::zeros(), 3.0);
        let b = pose.bearing_to([-1.0, -0.5]);
        assert!((-PI..PI).contains(&b));
        assert_relative_eq!(wrap_angle(PI), -PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-PI), -PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(3.0 * PI), -PI, epsilon = 1e-12);
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        assert!(cfg().validate().is_ok());
        let mut c = cfg();
        c.elevation_bounds = (0.1, 0.1);
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.cost_weights = (0.5, 0.3, 0.1);
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.nav_preference = 0.3;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.nav_preference = 1.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn motion_command_substitutions() {
        let mut c = cfg();
        c.control_gains = (0.2, 0.3, 0.9);
        let m = motion_command(&lnp(0.0, 0.0, 5.0, Navigability::Navigable), &c);
        assert_relative_eq!(m.linear, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.angular, 0.0, epsilon = 1e-12);

        c.control_gains = (0.2, 10.0, 0.9);
        let m = motion_command(&lnp(PI, 0.0, 5.0, Navigability::Navigable), &c);
        assert_relative_eq!(m.linear, 0.0, epsilon = 1e-12);
        assert_relative_eq!(m.angular, 0.9 * PI, epsilon = 1e-12);

        let m = motion_command(&lnp(-0.4, 0.0, 5.0, Navigability::Navigable), &c);
        assert!(m.angular < 0.0);
    }

    #[test]
    fn linear_velocity_clamps_to_max() {
        let mut c = cfg();
        c.control_gains = (1.0, 0.3, 0.9);
        c.max_linear_velocity = 1.2;
        let m = motion_command(&lnp(0.0, 0.0, 20.0, Navigability::Navigable), &c);
        assert_relative_eq!(m.linear, 1.2, epsilon = 1e-12);
    }

    #[test]
    fn goal_cost_prefers_aligned_candidates() {
        let c = cfg();
        let goal = [10.0, 0.0];
        let a = lnp(0.0, 0.0, 5.0, Navigability::Navigable);
        let b = lnp(PI / 4.0, 0.0, 5.0, Navigability::Navigable);
        assert!(goal_cost(&a, goal, &c) < goal_cost(&b, goal, &c));
    }

    #[test]
    fn goal_cost_with_distance_only_weights() {
        let mut c = cfg();
        c.cost_weights = (1.0, 0.0, 0.0);
        c.distance_norm = 30.0;
        let l = lnp(0.3, -0.1, 6.0, Navigability::Navigable);
        let dx = 10.0 - l.world_xyz.x;
        let dy = -2.0 - l.world_xyz.y;
        let expect = ((6.0 + (dx * dx + dy * dy).sqrt()) / 30.0).clamp(0.0, 1.0);
        assert_relative_eq!(goal_cost(&l, [10.0, -2.0], &c), expect, epsilon = 1e-12);
    }

    #[test]
    fn weight_scaling_cancels_in_cost() {
        let mut c1 = cfg();
        c1.cost_weights = (0.6, 0.3, 0.1);
        let mut c2 = cfg();
        c2.cost_weights = (1.2, 0.6, 0.2);
        let l = lnp(0.8, -0.2, 7.0, Navigability::Navigable);
        assert_relative_eq!(
            goal_cost(&l, [5.0, 5.0], &c1),
            goal_cost(&l, [5.0, 5.0], &c2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn equal_preference_gives_equal_masked_costs() {
        let mut c = cfg();
        c.nav_preference = 0.5;
        let goal = [10.0, 0.0];
        // Same geometry, one verified navigable, one out of view.
        let inside = lnp(0.2, -0.1, 6.0, Navigability::Navigable);
        let outside = lnp(0.2, -0.1, 6.0, Navigability::OutsideFov);
        let ci = mode_cost(&inside, goal, Mode::Vg, &c).unwrap();
        let co = mode_cost(&outside, goal, Mode::Vg, &c).unwrap();
        assert_relative_eq!(ci, co, epsilon = 1e-12);
        assert_relative_eq!(ci, 0.5 * goal_cost(&inside, goal, &c), epsilon = 1e-12);
    }

    #[test]
    fn higher_preference_favors_camera_verified() {
        let mut c = cfg();
        c.nav_preference = 0.8;
        let goal = [10.0, 0.0];
        let inside = lnp(0.2, -0.1, 6.0, Navigability::Navigable);
        let outside = lnp(-0.2, -0.1, 6.0, Navigability::OutsideFov);
        let picked = select_lnp(&[outside, inside], goal, Mode::Vg, &c).unwrap();
        assert_eq!(picked.navigability, Navigability::Navigable);
    }

    #[test]
    fn vision_mode_dead_ends_when_view_is_blocked() {
        let c = cfg();
        let goal = [10.0, 0.0];
        let candidates = vec![
            lnp(0.1, -0.1, 6.0, Navigability::NonNavigable),
            lnp(-0.3, -0.1, 6.0, Navigability::NonNavigable),
            lnp(2.5, -0.1, 6.0, Navigability::OutsideFov),
        ];
        assert!(select_lnp(&candidates, goal, Mode::V, &c).is_none());
        // Geometry mode still finds a way out through the same set.
        assert!(select_lnp(&candidates, goal, Mode::G, &c).is_some());
    }

    #[test]
    fn empty_candidate_set_selects_nothing() {
        assert!(select_lnp(&[], [1.0, 1.0], Mode::G, &cfg()).is_none());
    }

    #[test]
    fn ties_break_toward_small_heading_change() {
        let mut c = cfg();
        // Kill distance and elevation influence so two mirrored candidates
        // cost exactly the same.
        c.cost_weights = (0.0, 1.0, 0.0);
        let goal = [0.0, 0.0];
        let left = lnp(0.4, -0.1, 6.0, Navigability::Navigable);
        let right = lnp(-0.4, -0.1, 6.0, Navigability::Navigable);
        let near = lnp(0.2, -0.1, 6.0, Navigability::Navigable);
        let picked = select_lnp(&[left.clone(), right.clone(), near], goal, Mode::G, &c).unwrap();
        assert_relative_eq!(picked.azimuth, 0.2);
        // Exact |azimuth| tie: the negative (smaller signed) azimuth wins.
        let picked = select_lnp(&[left, right], goal, Mode::G, &c).unwrap();
        assert_relative_eq!(picked.azimuth, -0.4);
    }

    #[test]
    fn recovery_rotates_toward_goal_side() {
        let c = cfg();
        let pose = Pose::new(Vector3::zeros(), 0.0);
        let m = recovery_command(&pose, [0.0, 5.0], &c);
        assert!(m.angular > 0.0);
        assert_relative_eq!(m.linear, 0.0);
        assert_relative_eq!(m.angular, 0.9 * PI / 2.0, epsilon = 1e-12);
        let m = recovery_command(&pose, [0.0, -5.0], &c);
        assert!(m.angular < 0.0);
    }

    #[test]
    fn command_continuity_under_small_direction_change() {
        let c = cfg();
        let a = motion_command(&lnp(0.30, -0.1, 6.0, Navigability::Navigable), &c);
        let b = motion_command(&lnp(0.30 + 1f64.to_radians(), -0.1, 6.0, Navigability::Navigable), &c);
        assert!((a.angular - b.angular).abs() <= c.control_gains.2 * 1f64.to_radians() + 1e-12);
    }

    /// Hand-built variance surface: a blocked sector keeps low variance at
    /// every admissible elevation, so those columns yield no candidate.
    #[test]
    fn blocked_sector_yields_no_candidates() {
        use crate::gp::{AngleMetric, RqKernelParams, TrainingSet};
        let train = TrainingSet {
            inputs: vec![[2.9, 0.2], [3.0, 0.2]],
            targets: vec![0.0, 0.0],
            noise_variance: 0.01,
            metric: AngleMetric::WrapAzimuth,
        };
        let kernel = RqKernelParams { signal_variance: 4.0, lengthscale: 0.1, alpha: 1.0 };
        let optim = crate::gp::OptimSettings { max_iters: 0, ..Default::default() };
        let occ = crate::gp::fit_svgp(&train, &kernel, 2, &optim).unwrap();

        let lattice = Lattice::new(
            &Extents::new(-PI, PI, -28f64.to_radians(), 4f64.to_radians()),
            36,
            8,
            true,
        );
        let prior = 4.0 + 0.01;
        let mut variance = vec![prior; lattice.len()];
        // Columns 10..14 fully observed: variance collapses everywhere.
        for i in 10..14 {
            for j in 0..8 {
                variance[lattice.index(i, j)] = 0.05;
            }
        }
        // Column 20: only the two lowest elevations observed.
        variance[lattice.index(20, 0)] = 0.05;
        variance[lattice.index(20, 1)] = 0.05;

        let vs = VarianceSurface { lattice: lattice.clone(), variance };
        let mut c = cfg();
        c.free_variance_threshold = 0.5 * prior;
        let pose = Pose::new(Vector3::zeros(), 0.0);
        let lnps = extract_g_lnps(&vs, &occ, &c, &pose);

        // 36 columns minus 4 blocked.
        assert_eq!(lnps.len(), 32);
        for lnp in &lnps {
            let col = lattice
                .azimuths()
                .iter()
                .position(|&a| (a - lnp.azimuth).abs() < 1e-12)
                .unwrap();
            assert!(!(10..14).contains(&col), "blocked column produced a candidate");
            let (bmin, bmax) = c.elevation_bounds;
            assert!(lnp.elevation > bmin && lnp.elevation < bmax);
            if col == 20 {
                // Partially blocked column: candidate climbs above row 1.
                assert!(lnp.elevation > lattice.elevations()[1]);
            } else {
                assert_relative_eq!(lnp.elevation, lattice.elevations()[0]);
            }
            // Far from the training data the occupancy mean is zero, so the
            // predicted range reverts to the surface radius.
            if (lnp.azimuth - 3.0).abs() > 1.0 {
                assert_relative_eq!(lnp.range, c.surface_radius, epsilon = 1e-3);
            }
        }
    }

    proptest! {
        /// A non-navigable candidate is never selected while anything
        /// cheaper than the mask exists.
        #[test]
        fn masking_excludes_non_navigable(
            seed in 0u64..400, n in 1usize..40
        ) {
            let mut c = cfg();
            c.nav_preference = 0.5 + (seed % 6) as f64 * 0.1;
            let mut v = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            let mut next = || {
                v ^= v << 13;
                v ^= v >> 7;
                v ^= v << 17;
                (v % 10_000) as f64 / 10_000.0
            };
            let mut lnps = Vec::new();
            for _ in 0..n {
                let az = -PI + 2.0 * PI * next();
                let el = -0.4 + 0.4 * next();
                let nav = match (next() * 3.0) as u32 {
                    0 => Navigability::Navigable,
                    1 => Navigability::NonNavigable,
                    _ => Navigability::OutsideFov,
                };
                lnps.push(lnp(az, el, 20.0 * next(), nav));
            }
            let goal = [20.0 * next() - 10.0, 20.0 * next() - 10.0];
            for mode in [Mode::G, Mode::V, Mode::Vg] {
                if let Some(sel) = select_lnp(&lnps, goal, mode, &c) {
                    if mode != Mode::G {
                        prop_assert!(sel.navigability != Navigability::NonNavigable);
                    }
                    prop_assert!(sel.cost < 1.0);
                }
            }
        }

        /// Selection agrees with a brute-force pass using the same
        /// tie-break chain.
        #[test]
        fn selection_matches_exhaustive_argmin(seed in 0u64..300, n in 1usize..360) {
            let c = cfg();
            let mut v = seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(7);
            let mut next = || {
                v ^= v << 13;
                v ^= v >> 7;
                v ^= v << 17;
                (v % 10_000) as f64 / 10_000.0
            };
            let mut lnps = Vec::new();
            for _ in 0..n {
                let az = -PI + 2.0 * PI * next();
                let nav = match (next() * 3.0) as u32 {
                    0 => Navigability::Navigable,
                    1 => Navigability::NonNavigable,
                    _ => Navigability::OutsideFov,
                };
                lnps.push(lnp(az, -0.3 + 0.3 * next(), 20.0 * next(), nav));
            }
            let goal = [15.0 * next() - 7.5, 15.0 * next() - 7.5];
            let picked = select_lnp(&lnps, goal, Mode::Vg, &c);
            let mut brute: Option<(f64, f64, f64, usize)> = None;
            for (idx, l) in lnps.iter().enumerate() {
                if let Some(cost) = mode_cost(l, goal, Mode::Vg, &c) {
                    let key = (cost, l.azimuth.abs(), l.azimuth, idx);
                    let replace = match &brute {
                        None => true,
                        Some((bc, ba, bz, _)) => (key.0, key.1, key.2) < (*bc, *ba, *bz),
                    };
                    if replace {
                        brute = Some(key);
                    }
                }
            }
            match (picked, brute) {
                (Some(sel), Some((cost, _, az, _))) => {
                    prop_assert!(cost < 1.0);
                    prop_assert_eq!(sel.azimuth, az);
                    prop_assert!((sel.cost - cost).abs() < 1e-15);
                }
                (None, Some((cost, _, _, _))) => prop_assert!(cost >= 1.0),
                (None, None) => {}
                (Some(_), None) => prop_assert!(false, "selected from empty admissible set"),
            }
        }

        /// Raising the camera preference never flips the choice from an
        /// in-view navigable candidate to an unverified one.
        #[test]
        fn preference_ordering_is_monotone(
            cg_in in 0.01f64..0.99, cg_out in 0.01f64..0.99,
            k1 in 0.5f64..1.0, dk in 0.0f64..0.5
        ) {
            let k2 = (k1 + dk).min(1.0);
            // Direction-only weights make the goal cost exactly |az| / pi,
            // so the two candidates carry prescribed base costs.
            let mut c = cfg();
            c.cost_weights = (0.0, 1.0, 0.0);
            let inside = lnp(cg_in * PI, -0.1, 6.0, Navigability::Navigable);
            let outside = lnp(-cg_out * PI, -0.1, 6.0, Navigability::OutsideFov);
            let goal = [0.0, 0.0];
            let pick = |k: f64| {
                let mut ck = c.clone();
                ck.nav_preference = k;
                select_lnp(&[inside.clone(), outside.clone()], goal, Mode::Vg, &ck)
                    .map(|s| s.navigability)
            };
            if pick(k1) == Some(Navigability::Navigable) {
                prop_assert_eq!(pick(k2), Some(Navigability::Navigable));
            }
        }
    }
}
