//! Ready-made worlds for trials and tests. Shapes are reconstructions:
//! what matters is the topology (what blocks what), not exact meters.

use super::{NamedRegion, SimError, World};

/// Class legend for [`grass_mud_hsg`]: traversable grass everywhere,
/// including the steep ramp, with a mud patch crossing the direct route.
pub const CLASS_GRASS: u8 = 0;
pub const CLASS_MUD: u8 = 1;

/// Class legend for [`grass_corner_table`].
pub const CLASS_ASPHALT: u8 = 0;
pub const CLASS_LAWN: u8 = 1;
pub const CLASS_TABLE: u8 = 2;

/// Featureless flat square of grass, `[-half_extent, half_extent]` per
/// axis.
pub fn flat(half_extent: f64, cell: f64) -> Result<World, SimError> {
    let n = nodes(2.0 * half_extent, cell)?;
    World::from_fn(n, n, cell, [-half_extent, -half_extent], |_, _| 0.0, |_, _| 0, vec![])
}

/// The grass-mud trial world, 40 x 40 m at 0.25 m resolution.
///
/// A high-slope-grass ramp (30-degree faces, 1.73 m crest) fills
/// `x in [11, 20], y in [-12, -6]`, south of the usual spawn at
/// (15, 2) facing -y so an approach meets its face head on. A flat mud
/// patch fills `x in [-1, 8], y in [-14, -6]`, straddling the straight
/// line to the usual goal at (-4, -16). Both features are registered as
/// named regions ("HSG", "mud"); the mud is visually distinct but
/// geometrically flat.
pub fn grass_mud_hsg() -> Result<World, SimError> {
    let cell = 0.25;
    let n = nodes(40.0, cell)?;
    let grade = 30f64.to_radians().tan();
    let hill = Rect { x0: 11.0, x1: 20.0, y0: -12.0, y1: -6.0 };
    let mud = Rect { x0: -1.0, x1: 8.0, y0: -14.0, y1: -6.0 };
    let crest = grade * 3.0;
    World::from_fn(
        n,
        n,
        cell,
        [-20.0, -20.0],
        |x, y| {
            let inset = hill.inset(x, y);
            if inset > 0.0 { (grade * inset).min(crest) } else { 0.0 }
        },
        |x, y| if mud.contains(x, y) { CLASS_MUD } else { CLASS_GRASS },
        vec![
            NamedRegion { name: "HSG".into(), polygon: hill.corners() },
            NamedRegion { name: "mud".into(), polygon: mud.corners() },
        ],
    )
}

/// The corner-and-table world, 24 x 24 m at 0.25 m resolution.
///
/// Flat asphalt except for a 0.8 m tall table block at `x in [2.5, 4.5],
/// y in [2, 3]`. A lawn to keep off fills `x in [-12, 1], y in [0, 12]`;
/// its southeast corner at (1, 0) and the table pinch the route from a
/// spawn around (-2, -8) to a goal around (2, 8) into a 1.5 m gap.
pub fn grass_corner_table() -> Result<World, SimError> {
    let cell = 0.25;
    let n = nodes(24.0, cell)?;
    let table = Rect { x0: 2.5, x1: 4.5, y0: 2.0, y1: 3.0 };
    let lawn = Rect { x0: -12.0, x1: 1.0, y0: 0.0, y1: 12.0 };
    World::from_fn(
        n,
        n,
        cell,
        [-12.0, -12.0],
        |x, y| if table.contains(x, y) { 0.8 } else { 0.0 },
        |x, y| {
            if table.contains(x, y) {
                CLASS_TABLE
            } else if lawn.contains(x, y) {
                CLASS_LAWN
            } else {
                CLASS_ASPHALT
            }
        },
        vec![
            NamedRegion { name: "grass".into(), polygon: lawn.corners() },
            NamedRegion { name: "table".into(), polygon: table.corners() },
        ],
    )
}

fn nodes(extent: f64, cell: f64) -> Result<usize, SimError> {
    if !cell.is_finite() || cell <= 0.0 || !extent.is_finite() || extent <= 0.0 {
        return Err(SimError::InvalidArgument("extent and cell must be positive".into()));
    }
    Ok((extent / cell).round() as usize + 1)
}

struct Rect {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    /// Distance to the nearest edge from inside, non-positive outside.
    fn inset(&self, x: f64, y: f64) -> f64 {
        (x - self.x0).min(self.x1 - x).min(y - self.y0).min(self.y1 - y)
    }

    fn corners(&self) -> Vec<[f64; 2]> {
        vec![[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]]
    }
}
