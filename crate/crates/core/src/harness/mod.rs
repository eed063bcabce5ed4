//! Scenario runner: wires the simulator, the surface builders, the GP
//! fits, and the planner into a timed sense-plan-act loop, and reports
//! per-cycle traces plus per-trial and per-suite summaries.
//!
//! A scenario is described by [`ScenarioConfig`], usually loaded from
//! JSON. One [`run_trial`] call executes a single seeded trial in one
//! planner mode; [`run_suite`] sweeps every configured mode over a block
//! of consecutive seeds and aggregates the outcomes.
//!
//! Determinism contract: everything the robot does is a pure function of
//! the scenario and the seed. Trace files contain only deterministic
//! columns and are byte-identical across re-runs; wall-clock stage
//! timings go to a separate timing file and to the summary, which is
//! therefore excluded from the byte-identity guarantee.

mod report;
mod trial;

pub use report::{emit_timing, emit_traces, run_suite, ModeAggregate, SuiteReport};
pub use trial::{run_trial, CycleTiming, CycleTrace, SelectedLnp, TrialOutcome, TrialSummary};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{GpError, RqKernelParams};
use crate::planner::{Mode, PlannerConfig, PlannerError};
use crate::simworld::{flat, grass_corner_table, grass_mud_hsg, LidarModel, SimError, World};
use crate::surfaces::SurfaceError;
use crate::vision::{CameraModel, SemanticClassMap, VisionError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> HarnessError {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}

/// Where the trial world comes from: a named built-in generator or a
/// world file in the text format understood by [`World::load`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldSource {
    Generator(GeneratorSpec),
    File(String),
}

/// Parameters for the built-in world generators. `half_extent` and
/// `cell` only matter for the parametric `flat` world; the named
/// scenario worlds ignore them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    #[serde(default = "default_half_extent")]
    pub half_extent: f64,
    #[serde(default = "default_cell")]
    pub cell: f64,
}

fn default_half_extent() -> f64 {
    12.0
}

fn default_cell() -> f64 {
    0.25
}

/// Spherical lattice the planner scans, azimuth always spanning the full
/// circle with wraparound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n_az: usize,
    pub n_el: usize,
    /// Elevation band (low, high), radians.
    pub el_min: f64,
    pub el_max: f64,
}

/// Model sizes, training caps, and the refit cadence for the per-cycle
/// GP fits. Hyperparameters are warm-started from the previous cycle;
/// on cycles that are not a refit cycle the fit runs with zero ascent
/// steps and only rebuilds the posterior on fresh data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSettings {
    pub occupancy_inducing: usize,
    pub nav_inducing: usize,
    pub depth_inducing: usize,
    /// Cap on occupancy training points per cycle (deterministic stride
    /// subsample); absent means uncapped.
    pub occupancy_train_cap: Option<usize>,
    pub visual_train_cap: Option<usize>,
    pub initial_occupancy_kernel: RqKernelParams<f64>,
    pub initial_visual_kernel: RqKernelParams<f64>,
    /// Initial observation-noise variances; the fit refines them.
    pub occupancy_noise: f64,
    pub nav_noise: f64,
    pub depth_noise: f64,
    /// Ascent steps on the very first cycle of a trial.
    pub first_fit_iters: usize,
    /// Ascent steps on later refit cycles.
    pub refit_iters: usize,
    /// Refit hyperparameters every this many cycles (1 = every cycle).
    pub refit_every: usize,
}

impl Default for GpSettings {
    fn default() -> Self {
        GpSettings {
            occupancy_inducing: 96,
            nav_inducing: 64,
            depth_inducing: 64,
            occupancy_train_cap: Some(400),
            visual_train_cap: Some(300),
            initial_occupancy_kernel: RqKernelParams {
                signal_variance: 25.0,
                lengthscale: 0.2,
                alpha: 1.0,
            },
            initial_visual_kernel: RqKernelParams {
                signal_variance: 4.0,
                lengthscale: 0.1,
                alpha: 1.0,
            },
            occupancy_noise: 0.01,
            nav_noise: 0.05,
            depth_noise: 0.01,
            first_fit_iters: 8,
            refit_iters: 1,
            refit_every: 5,
        }
    }
}

/// When a trial ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationRules {
    /// Planar distance to the goal that counts as arrival, meters.
    pub goal_radius: f64,
    /// Seconds the robot may stay physically stuck before the trial
    /// fails.
    pub stuck_timeout: f64,
    /// Simulated-time budget, seconds.
    pub max_time: f64,
}

impl Default for TerminationRules {
    fn default() -> Self {
        TerminationRules { goal_radius: 0.5, stuck_timeout: 10.0, max_time: 300.0 }
    }
}

/// Full description of a repeatable experiment.
///
/// The two variance thresholds inside `planner` are recomputed every
/// cycle from `free_variance_fraction` and `depth_variance_fraction`
/// times the fitted model's prior variance, so the absolute values given
/// there are placeholders. `sensor_offset` and `surface_radius` are
/// likewise stamped per mode: LiDAR offset and `surface_radius` for the
/// geometric pipeline, camera offset and `visual_radius` for the
/// vision-only pipeline. `distance_norm` is stamped to the sensing radius
/// plus the spawn-goal separation, and vision-only trials widen
/// `elevation_bounds` to the camera's vertical aperture since a camera
/// carries no slope veto.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub world: WorldSource,
    /// x, y, heading of the spawn pose.
    pub spawn: [f64; 3],
    /// World-frame goal, planar.
    pub goal: [f64; 2],
    pub modes: Vec<Mode>,
    pub trials: usize,
    pub base_seed: u64,
    /// Control period, seconds.
    pub dt: f64,
    pub lidar: LidarModel,
    pub camera: CameraModel,
    pub class_map: SemanticClassMap,
    /// Fraction of segmentation labels flipped to a wrong class.
    pub label_noise: f64,
    /// Geometric occupancy-surface radius, meters.
    pub surface_radius: f64,
    /// Visual-surface radius, meters.
    pub visual_radius: f64,
    /// Depth targets only use points strictly closer than this, meters.
    pub depth_cutoff: f64,
    pub lattice: LatticeSpec,
    pub gp: GpSettings,
    pub planner: PlannerConfig,
    /// Free-space threshold as a fraction of the occupancy model's prior
    /// variance, in (0, 1).
    pub free_variance_fraction: f64,
    /// Depth-trust threshold as a fraction of the depth model's prior
    /// variance, in (0, 1].
    pub depth_variance_fraction: f64,
    pub termination: TerminationRules,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<ScenarioConfig, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScenarioConfig, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        ScenarioConfig::from_json(&text)
    }

    /// Instantiate the trial world.
    pub fn build_world(&self) -> Result<World, HarnessError> {
        match &self.world {
            WorldSource::Generator(spec) => match spec.name.as_str() {
                "flat" => {
                    if !spec.half_extent.is_finite() || spec.half_extent <= 0.0 {
                        return Err(HarnessError::Config(
                            "flat generator needs a positive half_extent".into(),
                        ));
                    }
                    if !spec.cell.is_finite() || spec.cell <= 0.0 {
                        return Err(HarnessError::Config(
                            "flat generator needs a positive cell".into(),
                        ));
                    }
                    Ok(flat(spec.half_extent, spec.cell)?)
                }
                "grass_mud_hsg" => Ok(grass_mud_hsg()?),
                "grass_corner_table" => Ok(grass_corner_table()?),
                other => {
                    Err(HarnessError::Config(format!("unknown world generator {other:?}")))
                }
            },
            WorldSource::File(path) => Ok(World::load(Path::new(path))?),
        }
    }

    /// Reject bad configurations before any simulation work happens.
    /// Checks everything that does not need the world instantiated; the
    /// world-dependent checks (spawn, goal, class coverage) live in
    /// [`ScenarioConfig::validate_in`].
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.into()));
        if self.modes.is_empty() {
            return bad("modes must not be empty");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return bad("dt must be positive");
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad("label_noise must lie in [0, 1]");
        }
        for (name, v) in [
            ("surface_radius", self.surface_radius),
            ("visual_radius", self.visual_radius),
            ("depth_cutoff", self.depth_cutoff),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(HarnessError::Config(format!("{name} must be positive")));
            }
        }
        if self.depth_cutoff > self.visual_radius {
            return bad("depth_cutoff must not exceed visual_radius");
        }
        if !(self.free_variance_fraction > 0.0 && self.free_variance_fraction < 1.0) {
            return bad("free_variance_fraction must lie in (0, 1)");
        }
        if !(self.depth_variance_fraction > 0.0 && self.depth_variance_fraction <= 1.0) {
            return bad("depth_variance_fraction must lie in (0, 1]");
        }
        let lat = &self.lattice;
        if lat.n_az < 4 || lat.n_el < 2 {
            return bad("lattice must be at least 4 x 2");
        }
        if !lat.el_min.is_finite() || !lat.el_max.is_finite() || lat.el_min >= lat.el_max {
            return bad("lattice elevation band must be a proper interval");
        }
        use std::f64::consts::FRAC_PI_2;
        if lat.el_min <= -FRAC_PI_2 || lat.el_max >= FRAC_PI_2 {
            return bad("lattice elevations must stay strictly between the poles");
        }
        let gp = &self.gp;
        if gp.occupancy_inducing == 0 || gp.nav_inducing == 0 || gp.depth_inducing == 0 {
            return bad("inducing counts must be at least 1");
        }
        if gp.refit_every == 0 {
            return bad("refit_every must be at least 1");
        }
        for (name, v) in [
            ("occupancy_noise", gp.occupancy_noise),
            ("nav_noise", gp.nav_noise),
            ("depth_noise", gp.depth_noise),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(HarnessError::Config(format!("{name} must be positive")));
            }
        }
        let term = &self.termination;
        for (name, v) in [
            ("goal_radius", term.goal_radius),
            ("stuck_timeout", term.stuck_timeout),
            ("max_time", term.max_time),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(HarnessError::Config(format!("{name} must be positive")));
            }
        }
        if !self.spawn.iter().all(|v| v.is_finite()) || !self.goal.iter().all(|v| v.is_finite())
        {
            return bad("spawn and goal must be finite");
        }
        self.lidar.validate()?;
        self.camera.validate()?;
        self.class_map.validate()?;
        self.planner.validate()?;
        Ok(())
    }

    /// World-dependent part of validation.
    pub fn validate_in(&self, world: &World) -> Result<(), HarnessError> {
        if world.height_at(self.spawn[0], self.spawn[1]).is_none() {
            return Err(HarnessError::Config("spawn lies outside the world".into()));
        }
        if world.height_at(self.goal[0], self.goal[1]).is_none() {
            return Err(HarnessError::Config("goal lies outside the world".into()));
        }
        for class in world.class_inventory() {
            if self.class_map.navigable_for(class).is_none() {
                return Err(HarnessError::Config(format!(
                    "world contains class {class} missing from the class map"
                )));
            }
        }
        Ok(())
    }
}
