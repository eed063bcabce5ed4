//! Deterministic ground-truth environment: a bilinear heightfield with
//! per-node semantic classes, raycast range sensing, unicycle kinematics
//! with a climb limit, and named-region bookkeeping.
//!
//! Everything here is seeded and single-threaded; the same world, commands,
//! and seeds reproduce trajectories and sensor clouds bit for bit.

mod worlds;

pub use worlds::{
    flat, grass_corner_table, grass_mud_hsg, CLASS_ASPHALT, CLASS_GRASS, CLASS_LAWN, CLASS_MUD,
    CLASS_TABLE,
};

use crate::planner::{wrap_angle, MotionCommand, Pose};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

/// A labeled polygon used for metric bookkeeping (mud crossings, slope
/// entries). Vertices are planar world coordinates; the polygon is closed
/// implicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedRegion {
    pub name: String,
    pub polygon: Vec<[f64; 2]>,
}

/// Even-odd containment test. Points exactly on an edge may land on either
/// side; regions are sized so that never matters.
pub fn point_in_polygon(p: [f64; 2], polygon: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (polygon[i][0], polygon[i][1]);
        let (xj, yj) = (polygon[j][0], polygon[j][1]);
        if (yi > p[1]) != (yj > p[1])
            && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Regular-grid terrain. Heights live on grid nodes and are interpolated
/// bilinearly inside each cell; classes live on the same nodes and are
/// looked up by nearest node. The grid spans
/// `[origin, origin + (n - 1) * cell_size]` per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    nx: usize,
    ny: usize,
    cell_size: f64,
    origin: [f64; 2],
    heights: Vec<f64>,
    classes: Vec<u8>,
    pub regions: Vec<NamedRegion>,
}

impl World {
    pub fn new(
        nx: usize,
        ny: usize,
        cell_size: f64,
        origin: [f64; 2],
        heights: Vec<f64>,
        classes: Vec<u8>,
        regions: Vec<NamedRegion>,
    ) -> Result<World, SimError> {
        if nx < 2 || ny < 2 {
            return Err(SimError::InvalidArgument(
                "grid needs at least 2 nodes per axis".into(),
            ));
        }
        if !cell_size.is_finite() || cell_size <= 0.0 {
            return Err(SimError::InvalidArgument("cell size must be positive".into()));
        }
        if heights.len() != nx * ny {
            return Err(SimError::InvalidArgument(format!(
                "height grid has {} values, expected {}",
                heights.len(),
                nx * ny
            )));
        }
        if classes.len() != nx * ny {
            return Err(SimError::InvalidArgument(format!(
                "class grid has {} values, expected {}",
                classes.len(),
                nx * ny
            )));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(SimError::InvalidArgument("heights must be finite".into()));
        }
        Ok(World { nx, ny, cell_size, origin, heights, classes, regions })
    }

    /// Build from closures evaluated at every node position.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        cell_size: f64,
        origin: [f64; 2],
        mut height: impl FnMut(f64, f64) -> f64,
        mut class: impl FnMut(f64, f64) -> u8,
        regions: Vec<NamedRegion>,
    ) -> Result<World, SimError> {
        let mut heights = Vec::with_capacity(nx * ny);
        let mut classes = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = origin[1] + j as f64 * cell_size;
            for i in 0..nx {
                let x = origin[0] + i as f64 * cell_size;
                heights.push(height(x, y));
                classes.push(class(x, y));
            }
        }
        World::new(nx, ny, cell_size, origin, heights, classes, regions)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Planar extent as (min_x, min_y, max_x, max_y).
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.origin[0],
            self.origin[1],
            self.origin[0] + (self.nx - 1) as f64 * self.cell_size,
            self.origin[1] + (self.ny - 1) as f64 * self.cell_size,
        )
    }

    pub fn in_bounds(&self, x: f64, y: f64) -> bool {
        let (x0, y0, x1, y1) = self.bounds();
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    fn node(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.nx + i]
    }

    /// Cell index and fractional offsets for a planar point, or `None`
    /// outside the grid.
    fn locate(&self, x: f64, y: f64) -> Option<(usize, usize, f64, f64)> {
        if !self.in_bounds(x, y) {
            return None;
        }
        let gx = (x - self.origin[0]) / self.cell_size;
        let gy = (y - self.origin[1]) / self.cell_size;
        let i = (gx.floor() as usize).min(self.nx - 2);
        let j = (gy.floor() as usize).min(self.ny - 2);
        Some((i, j, gx - i as f64, gy - j as f64))
    }

    /// Bilinearly interpolated terrain height, `None` outside the grid.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        let (i, j, fx, fy) = self.locate(x, y)?;
        let h00 = self.node(i, j);
        let h10 = self.node(i + 1, j);
        let h01 = self.node(i, j + 1);
        let h11 = self.node(i + 1, j + 1);
        Some(h00 * (1.0 - fx) * (1.0 - fy) + h10 * fx * (1.0 - fy) + h01 * (1.0 - fx) * fy
            + h11 * fx * fy)
    }

    /// Gradient of the interpolated height, piecewise per cell.
    pub fn gradient_at(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let (i, j, fx, fy) = self.locate(x, y)?;
        let h00 = self.node(i, j);
        let h10 = self.node(i + 1, j);
        let h01 = self.node(i, j + 1);
        let h11 = self.node(i + 1, j + 1);
        let dx = ((h10 - h00) * (1.0 - fy) + (h11 - h01) * fy) / self.cell_size;
        let dy = ((h01 - h00) * (1.0 - fx) + (h11 - h10) * fx) / self.cell_size;
        Some([dx, dy])
    }

    /// Semantic class of the nearest grid node, `None` outside the grid.
    pub fn class_at(&self, x: f64, y: f64) -> Option<u8> {
        if !self.in_bounds(x, y) {
            return None;
        }
        let i = (((x - self.origin[0]) / self.cell_size).round() as usize).min(self.nx - 1);
        let j = (((y - self.origin[1]) / self.cell_size).round() as usize).min(self.ny - 1);
        Some(self.classes[j * self.nx + i])
    }

    /// All class indices that occur in the grid, ascending.
    pub fn class_inventory(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &c in &self.classes {
            seen[c as usize] = true;
        }
        (0u16..256).filter(|&c| seen[c as usize]).map(|c| c as u8).collect()
    }

    /// Serialize to the plain-text world format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# terrain world");
        let _ = writeln!(s, "{} {}", self.nx, self.ny);
        let _ = writeln!(s, "{} {} {}", self.cell_size, self.origin[0], self.origin[1]);
        for j in 0..self.ny {
            let row: Vec<String> =
                (0..self.nx).map(|i| self.node(i, j).to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        for j in 0..self.ny {
            let row: Vec<String> =
                (0..self.nx).map(|i| self.classes[j * self.nx + i].to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let _ = writeln!(s, "regions {}", self.regions.len());
        for r in &self.regions {
            let _ = writeln!(s, "{} {}", r.name, r.polygon.len());
            for v in &r.polygon {
                let _ = writeln!(s, "{} {}", v[0], v[1]);
            }
        }
        s
    }

    /// Parse the plain-text world format. `#` starts a comment; region
    /// names must be single tokens.
    pub fn from_text(text: &str) -> Result<World, SimError> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace())
            .peekable();
        let mut next = |what: &str| -> Result<&str, SimError> {
            tokens
                .next()
                .ok_or_else(|| SimError::Parse(format!("unexpected end of input reading {what}")))
        };
        let parse_usize = |tok: &str, what: &str| -> Result<usize, SimError> {
            tok.parse().map_err(|_| SimError::Parse(format!("bad {what}: {tok:?}")))
        };
        let parse_f64 = |tok: &str, what: &str| -> Result<f64, SimError> {
            tok.parse().map_err(|_| SimError::Parse(format!("bad {what}: {tok:?}")))
        };

        let nx = parse_usize(next("nx")?, "nx")?;
        let ny = parse_usize(next("ny")?, "ny")?;
        let cell = parse_f64(next("cell size")?, "cell size")?;
        let ox = parse_f64(next("origin x")?, "origin x")?;
        let oy = parse_f64(next("origin y")?, "origin y")?;
        let count = nx
            .checked_mul(ny)
            .ok_or_else(|| SimError::Parse("grid dimensions overflow".into()))?;
        if count == 0 || count > 16_000_000 {
            return Err(SimError::Parse(format!("implausible grid size {nx}x{ny}")));
        }
        let mut heights = Vec::with_capacity(count);
        for _ in 0..count {
            heights.push(parse_f64(next("height")?, "height")?);
        }
        let mut classes = Vec::with_capacity(count);
        for _ in 0..count {
            classes.push(
                parse_usize(next("class")?, "class")?
                    .try_into()
                    .map_err(|_| SimError::Parse("class index exceeds 255".into()))?,
            );
        }
        let kw = next("regions keyword")?;
        if kw != "regions" {
            return Err(SimError::Parse(format!("expected 'regions', found {kw:?}")));
        }
        let nr = parse_usize(next("region count")?, "region count")?;
        let mut regions = Vec::with_capacity(nr);
        for _ in 0..nr {
            let name = next("region name")?.to_string();
            let nv = parse_usize(next("vertex count")?, "vertex count")?;
            let mut polygon = Vec::with_capacity(nv);
            for _ in 0..nv {
                let x = parse_f64(next("vertex x")?, "vertex x")?;
                let y = parse_f64(next("vertex y")?, "vertex y")?;
                polygon.push([x, y]);
            }
            regions.push(NamedRegion { name, polygon });
        }
        if tokens.peek().is_some() {
            return Err(SimError::Parse("trailing tokens after regions".into()));
        }
        World::new(nx, ny, cell, [ox, oy], heights, classes, regions)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<World, SimError> {
        World::from_text(&std::fs::read_to_string(path)?)
    }
}

/// First intersection of a ray with the terrain, as a distance along the
/// ray, or `None` if the ray leaves the grid or exceeds `max_range` first.
///
/// Fixed-step marching at half a cell, refined by bisection once the ray
/// dips below the surface. Fully deterministic.
pub fn raycast(
    world: &World,
    origin: &Vector3<f64>,
    direction: &Vector3<f64>,
    max_range: f64,
) -> Option<f64> {
    let step = 0.5 * world.cell_size;
    // Signed clearance above the terrain at distance t, None off the grid.
    let clearance = |t: f64| -> Option<f64> {
        let p = origin + direction * t;
        world.height_at(p.x, p.y).map(|h| p.z - h)
    };
    match clearance(0.0) {
        None => return None,
        Some(d) if d <= 0.0 => return Some(0.0),
        Some(_) => {}
    }
    let mut t_prev = 0.0;
    let mut t = step.min(max_range);
    loop {
        match clearance(t) {
            None => return None,
            Some(d) if d <= 0.0 => {
                // Bracketed between t_prev (above) and t (below): bisect.
                let (mut lo, mut hi) = (t_prev, t);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    match clearance(mid) {
                        Some(dm) if dm <= 0.0 => hi = mid,
                        _ => lo = mid,
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            Some(_) => {}
        }
        if t >= max_range {
            return None;
        }
        t_prev = t;
        t = (t + step).min(max_range);
    }
}

/// Spinning range sensor: evenly spaced elevation channels swept through
/// a full turn of azimuth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarModel {
    /// Number of elevation channels spread over the vertical aperture.
    pub channels: usize,
    /// Requested azimuth increment; rounded to an exact divisor of the
    /// full circle so the sweep closes evenly.
    pub azimuth_step: f64,
    pub max_range: f64,
    /// Standard deviation of the Gaussian range noise, meters.
    pub noise_sigma: f64,
    /// Vertical aperture (lowest, highest channel elevation), radians.
    pub elevation_span: (f64, f64),
    /// Sensor origin in the robot frame.
    pub mount_offset: [f64; 3],
}

impl Default for LidarModel {
    fn default() -> Self {
        LidarModel {
            channels: 16,
            azimuth_step: 2f64.to_radians(),
            max_range: 20.0,
            noise_sigma: 0.0,
            elevation_span: (-15f64.to_radians(), 15f64.to_radians()),
            mount_offset: [0.0, 0.0, 0.5],
        }
    }
}

impl LidarModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.channels < 1 {
            return Err(SimError::InvalidArgument("need at least one channel".into()));
        }
        if !self.azimuth_step.is_finite() || self.azimuth_step <= 0.0 || self.azimuth_step > PI {
            return Err(SimError::InvalidArgument("azimuth step must be in (0, pi]".into()));
        }
        if !self.max_range.is_finite() || self.max_range <= 0.0 {
            return Err(SimError::InvalidArgument("max range must be positive".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(SimError::InvalidArgument("noise sigma must be non-negative".into()));
        }
        if self.elevation_span.0 > self.elevation_span.1 {
            return Err(SimError::InvalidArgument("elevation span is inverted".into()));
        }
        Ok(())
    }

    /// Channel elevations, ascending.
    pub fn channel_elevations(&self) -> Vec<f64> {
        let (lo, hi) = self.elevation_span;
        if self.channels == 1 {
            return vec![0.5 * (lo + hi)];
        }
        let d = (hi - lo) / (self.channels - 1) as f64;
        (0..self.channels).map(|i| lo + i as f64 * d).collect()
    }

    /// Sweep azimuths, ascending from -pi.
    pub fn sweep_azimuths(&self) -> Vec<f64> {
        let n = ((2.0 * PI / self.azimuth_step).round() as usize).max(1);
        let d = 2.0 * PI / n as f64;
        (0..n).map(|k| -PI + k as f64 * d).collect()
    }
}

/// One full scan from the robot's current pose. Hits become points in the
/// robot frame with seeded Gaussian range noise; misses are omitted. The
/// same seed always yields the identical cloud.
pub fn simulate_lidar(
    world: &World,
    robot: &RobotState,
    model: &LidarModel,
    seed: u64,
) -> Result<Vec<Vector3<f64>>, SimError> {
    model.validate()?;
    let pos = robot.pose.position;
    if !world.in_bounds(pos.x, pos.y) {
        return Err(SimError::InvalidArgument("robot outside world bounds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, model.noise_sigma)
        .map_err(|e| SimError::InvalidArgument(format!("noise model: {e}")))?;
    let offset = Vector3::from(model.mount_offset);
    let origin_world = robot.pose.to_world(&offset);
    let rotation = robot.pose.transform.rotation;
    let mut points = Vec::new();
    for az in model.sweep_azimuths() {
        for el in model.channel_elevations() {
            let dir_robot = crate::surfaces::unit_direction(az, el);
            let dir_world = rotation * dir_robot;
            if let Some(t) = raycast(world, &origin_world, &dir_world, model.max_range) {
                let noisy = (t + normal.sample(&mut rng)).max(0.0);
                points.push(offset + dir_robot * noisy);
            }
        }
    }
    Ok(points)
}

/// Maximum terrain grade the base can climb, radians.
pub const DEFAULT_CLIMB_LIMIT: f64 = 20.0 * PI / 180.0;

/// The unicycle base: planar pose snapped to the terrain, last commanded
/// velocities, and the permanent stuck latch.
#[derive(Clone, Debug)]
pub struct RobotState {
    pub pose: Pose,
    pub linear_vel: f64,
    pub angular_vel: f64,
    /// Latched when the slope under the robot exceeds the climb limit;
    /// never cleared within a trial.
    pub stuck: bool,
    pub climb_limit: f64,
}

impl RobotState {
    /// Place the robot on the terrain at a planar position and heading.
    pub fn spawn(world: &World, x: f64, y: f64, heading: f64) -> Result<RobotState, SimError> {
        let z = world
            .height_at(x, y)
            .ok_or_else(|| SimError::InvalidArgument("spawn outside world bounds".into()))?;
        Ok(RobotState {
            pose: Pose::new(Vector3::new(x, y, z), heading),
            linear_vel: 0.0,
            angular_vel: 0.0,
            stuck: false,
            climb_limit: DEFAULT_CLIMB_LIMIT,
        })
    }
}

/// Result of one integration step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: RobotState,
    /// The commanded motion carried the robot off the grid; the trial
    /// should end in failure.
    pub out_of_bounds: bool,
}

fn slope_exceeded(world: &World, x: f64, y: f64, heading: f64, limit: f64) -> bool {
    let Some([gx, gy]) = world.gradient_at(x, y) else { return false };
    let (s, c) = heading.sin_cos();
    let pitch = gx * c + gy * s;
    let roll = -gx * s + gy * c;
    let tan_limit = limit.tan();
    pitch > tan_limit || roll.abs() > tan_limit
}

/// Advance the unicycle by one control period: the heading integrates
/// first, then the position advances along the new heading, and the height
/// re-snaps to the terrain. A slope beyond the climb limit (pitch up the
/// grade, or roll across it) latches `stuck`, which forces the linear
/// velocity to zero from then on.
pub fn step_robot(
    state: &RobotState,
    cmd: &MotionCommand,
    dt: f64,
    world: &World,
) -> StepOutcome {
    let heading = wrap_angle(state.pose.heading + cmd.angular * dt);
    let p = state.pose.position;
    let stuck =
        state.stuck || slope_exceeded(world, p.x, p.y, heading, state.climb_limit);
    let v = if stuck { 0.0 } else { cmd.linear };
    let (s, c) = heading.sin_cos();
    let x = p.x + v * dt * c;
    let y = p.y + v * dt * s;
    let (z, out_of_bounds) = match world.height_at(x, y) {
        Some(z) => (z, false),
        None => (p.z, true),
    };
    StepOutcome {
        state: RobotState {
            pose: Pose::new(Vector3::new(x, y, z), heading),
            linear_vel: v,
            angular_vel: cmd.angular,
            stuck,
            climb_limit: state.climb_limit,
        },
        out_of_bounds,
    }
}

/// For each named region, whether any trajectory pose lies inside it.
pub fn region_events(trajectory: &[Pose], world: &World) -> BTreeMap<String, bool> {
    let mut flags = BTreeMap::new();
    for region in &world.regions {
        let hit = trajectory.iter().any(|pose| {
            point_in_polygon([pose.position.x, pose.position.y], &region.polygon)
        });
        flags.insert(region.name.clone(), hit);
    }
    flags
}
