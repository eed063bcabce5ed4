//! Single-trial execution: the sense, fit, plan, command, step loop.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{HarnessError, ScenarioConfig};
use crate::gp::{fit_svgp, OptimSettings, RqKernelParams, TrainingSet};
use crate::planner::{
    assess_navigability, extract_g_lnps, motion_command, recovery_command, select_lnp, Lnp,
    Mode, MotionCommand, PlannerConfig,
};
use crate::simworld::{region_events, simulate_lidar, step_robot, RobotState};
use crate::surfaces::{
    build_occupancy_surface, build_visual_surface, rebin_training, split_visual_datasets,
    variance_surface, Extents, Lattice,
};
use crate::vision::{apply_label_noise, navigability_image, project_navigability, segment_oracle};
use crate::gp::SgpModel;

/// Wall-clock stage costs for one cycle, milliseconds. Not part of the
/// deterministic trace contract.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct CycleTiming {
    pub fit_g_ms: f64,
    pub predict_g_ms: f64,
    pub fit_v_ms: f64,
    pub predict_v_ms: f64,
    pub total_ms: f64,
}

/// The candidate the planner committed to in one cycle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SelectedLnp {
    pub azimuth: f64,
    pub elevation: f64,
    pub range: f64,
    pub cost: f64,
}

/// One row of the per-cycle record emitted by [`super::emit_traces`].
/// The pose is the one the sensors fired from, before the step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CycleTrace {
    pub cycle: usize,
    /// x, y, z, heading.
    pub pose: [f64; 4],
    pub lnp_total: usize,
    pub lnp_navigable: usize,
    pub lnp_non_navigable: usize,
    pub lnp_outside_fov: usize,
    /// Absent when no viable candidate existed this cycle.
    pub selected: Option<SelectedLnp>,
    /// The fallback rotation kicked in.
    pub recovery: bool,
    pub command: MotionCommand,
    pub stuck: bool,
    pub timing: CycleTiming,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    Reached,
    Stuck,
    Timeout,
    OutOfBounds,
}

impl TrialOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialOutcome::Reached => "reached",
            TrialOutcome::Stuck => "stuck",
            TrialOutcome::Timeout => "timeout",
            TrialOutcome::OutOfBounds => "out_of_bounds",
        }
    }
}

/// End-of-trial report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mode: Mode,
    pub seed: u64,
    pub outcome: TrialOutcome,
    pub cycles: usize,
    /// Simulated seconds elapsed.
    pub sim_time: f64,
    /// Sum of consecutive pose distances, meters.
    pub path_length: f64,
    /// Largest linear velocity the base actually carried, m/s.
    pub max_velocity: f64,
    /// Region name to whether the robot ever entered it.
    pub regions_entered: BTreeMap<String, bool>,
    /// Mean wall-clock cycle cost, ms; excluded from determinism claims.
    pub mean_cycle_ms: f64,
}

/// Carries fitted hyperparameters from cycle to cycle so later fits
/// start where the previous one converged.
struct WarmStart {
    kernel: RqKernelParams<f64>,
    noise: f64,
}

impl WarmStart {
    fn noise_or(&self) -> f64 {
        self.noise
    }
}

fn ascent_iters(cfg: &ScenarioConfig, cycle: usize) -> usize {
    if cycle == 0 {
        cfg.gp.first_fit_iters
    } else if cycle.is_multiple_of(cfg.gp.refit_every) {
        cfg.gp.refit_iters
    } else {
        0
    }
}

/// Deterministic angular rebin down to at most `cap` points.
fn cap_training(train: TrainingSet<f64>, cap: Option<usize>) -> TrainingSet<f64> {
    match cap {
        Some(cap) => rebin_training(train, cap),
        None => train,
    }
}

/// Fit one model stage with warm-started hyperparameters. Returns None
/// when the training set is empty (a sensor that saw nothing).
fn fit_stage(
    mut train: TrainingSet<f64>,
    default_kernel: &RqKernelParams<f64>,
    warm: &mut Option<WarmStart>,
    num_inducing: usize,
    iters: usize,
) -> Result<Option<SgpModel<f64>>, HarnessError> {
    if train.inputs.is_empty() {
        return Ok(None);
    }
    let kernel = match warm {
        Some(w) => {
            train.noise_variance = w.noise_or();
            w.kernel
        }
        None => *default_kernel,
    };
    let optim = OptimSettings { max_iters: iters, ..OptimSettings::default() };
    let m = num_inducing.min(train.inputs.len());
    let model = fit_svgp(&train, &kernel, m, &optim)?;
    *warm = Some(WarmStart { kernel: *model.kernel(), noise: model.noise_variance() });
    Ok(Some(model))
}

/// Per-cycle seed for the LiDAR noise draw, decorrelated across cycles.
fn cycle_seed(trial_seed: u64, cycle: usize, salt: u64) -> u64 {
    trial_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((cycle as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(salt)
}

fn count_lnps(lnps: &[Lnp]) -> (usize, usize, usize) {
    use crate::planner::Navigability::*;
    let mut nav = 0;
    let mut non = 0;
    let mut out = 0;
    for l in lnps {
        match l.navigability {
            Navigable => nav += 1,
            NonNavigable => non += 1,
            OutsideFov => out += 1,
        }
    }
    (nav, non, out)
}

/// Execute one seeded trial in one planner mode.
///
/// The loop each cycle: sense (LiDAR for G and VG, camera for V and VG),
/// rebuild the spherical surfaces, refit the sparse GPs on the fresh
/// data, extract and assess candidates, pick one, convert it to a
/// velocity command (or fall back to recovery where enabled), and step
/// the simulated base. Configuration errors are reported before any
/// simulation starts, and the whole trial is a deterministic function of
/// `(cfg, mode, seed)`.
pub fn run_trial(
    cfg: &ScenarioConfig,
    mode: Mode,
    seed: u64,
) -> Result<(TrialSummary, Vec<CycleTrace>), HarnessError> {
    cfg.validate()?;
    let world = cfg.build_world()?;
    cfg.validate_in(&world)?;

    let mut state = RobotState::spawn(&world, cfg.spawn[0], cfg.spawn[1], cfg.spawn[2])?;
    let mut trajectory = vec![state.pose.clone()];
    let lattice = Lattice::new(
        &Extents::new(
            -std::f64::consts::PI,
            std::f64::consts::PI,
            cfg.lattice.el_min,
            cfg.lattice.el_max,
        ),
        cfg.lattice.n_az,
        cfg.lattice.n_el,
        true,
    );
    let fov = cfg.camera.fov_extents();
    let lidar_offset = Vector3::from(cfg.lidar.mount_offset);
    let camera_offset = Vector3::from(cfg.camera.mount_offset);
    let class_count = cfg.class_map.class_names.len() as u8;
    // Distance costs are normalized by sensing radius plus the start-goal
    // separation, so a candidate straight toward the goal from the spawn
    // scores below the mask value.
    let start_goal = f64::hypot(cfg.spawn[0] - cfg.goal[0], cfg.spawn[1] - cfg.goal[1]);

    let mut warm_g: Option<WarmStart> = None;
    let mut warm_n: Option<WarmStart> = None;
    let mut warm_d: Option<WarmStart> = None;

    let max_cycles = (cfg.termination.max_time / cfg.dt).ceil() as usize;
    let mut traces: Vec<CycleTrace> = Vec::new();
    let mut outcome = TrialOutcome::Timeout;
    let mut stuck_since: Option<f64> = None;
    let mut path_length = 0.0;
    let mut max_velocity: f64 = 0.0;
    let mut sim_time = 0.0;

    for cycle in 0..max_cycles {
        let cycle_start = Instant::now();
        let mut timing = CycleTiming::default();
        let iters = ascent_iters(cfg, cycle);
        let sense_pose = state.pose.clone();

        // Geometric pipeline: LiDAR into an occupancy model over the
        // full sphere band. Skipped entirely in vision-only mode so that
        // V-mode results cannot depend on the LiDAR at all.
        let mut geo: Option<(SgpModel<f64>, PlannerConfig)> = None;
        if mode != Mode::V {
            let t = Instant::now();
            let cloud =
                simulate_lidar(&world, &state, &cfg.lidar, cycle_seed(seed, cycle, 1))?;
            let sensor_cloud: Vec<Vector3<f64>> =
                cloud.iter().map(|p| p - lidar_offset).collect();
            let surface = build_occupancy_surface(&sensor_cloud, cfg.surface_radius);
            let train = cap_training(
                surface.training_set(cfg.gp.occupancy_noise, None),
                cfg.gp.occupancy_train_cap,
            );
            let model = fit_stage(
                train,
                &cfg.gp.initial_occupancy_kernel,
                &mut warm_g,
                cfg.gp.occupancy_inducing,
                iters,
            )?;
            timing.fit_g_ms = t.elapsed().as_secs_f64() * 1e3;
            if let Some(model) = model {
                let mut pcfg = cfg.planner.clone();
                pcfg.free_variance_threshold =
                    cfg.free_variance_fraction * model.prior_variance();
                pcfg.surface_radius = cfg.surface_radius;
                pcfg.distance_norm = cfg.surface_radius + start_goal;
                pcfg.sensor_offset = cfg.lidar.mount_offset;
                geo = Some((model, pcfg));
            }
        }

        // Visual pipeline: segmentation plus depth into a navigability
        // model, and in vision-only mode a depth-occupancy model that
        // replaces the LiDAR surface.
        let mut nav_model: Option<SgpModel<f64>> = None;
        let mut depth_model: Option<(SgpModel<f64>, PlannerConfig)> = None;
        if mode != Mode::G {
            let t = Instant::now();
            let (mut classes, depth) = segment_oracle(&world, &state.pose, &cfg.camera)?;
            if cfg.label_noise > 0.0 {
                apply_label_noise(
                    &mut classes,
                    class_count,
                    cfg.label_noise,
                    cycle_seed(seed, cycle, 2),
                )?;
            }
            let nav_img = navigability_image(&classes, &cfg.class_map)?;
            let cloud = project_navigability(&nav_img, &depth, &cfg.camera)?;
            let sensor_cloud: Vec<(Vector3<f64>, u8)> =
                cloud.points.iter().map(|(p, l)| (p - camera_offset, *l)).collect();
            let surface = build_visual_surface(&sensor_cloud, cfg.visual_radius, &fov);
            let (nav_train, depth_train) = split_visual_datasets(
                &surface,
                cfg.depth_cutoff,
                warm_n.as_ref().map_or(cfg.gp.nav_noise, WarmStart::noise_or),
                warm_d.as_ref().map_or(cfg.gp.depth_noise, WarmStart::noise_or),
            );
            nav_model = fit_stage(
                cap_training(nav_train, cfg.gp.visual_train_cap),
                &cfg.gp.initial_visual_kernel,
                &mut warm_n,
                cfg.gp.nav_inducing,
                iters,
            )?;
            if mode == Mode::V {
                let model = fit_stage(
                    cap_training(depth_train, cfg.gp.visual_train_cap),
                    &cfg.gp.initial_visual_kernel,
                    &mut warm_d,
                    cfg.gp.depth_inducing,
                    iters,
                )?;
                if let Some(model) = model {
                    let mut pcfg = cfg.planner.clone();
                    pcfg.free_variance_threshold =
                        cfg.free_variance_fraction * model.prior_variance();
                    pcfg.depth_variance_threshold =
                        cfg.depth_variance_fraction * model.prior_variance();
                    pcfg.surface_radius = cfg.visual_radius;
                    pcfg.distance_norm = cfg.visual_radius + start_goal;
                    pcfg.sensor_offset = cfg.camera.mount_offset;
                    // Vision-only steering admits any elevation the camera
                    // actually sees: the configured bounds encode a slope
                    // limit the geometric surface can check, but a camera
                    // only reports appearance, which is what lets this mode
                    // drive onto visually benign steep ground.
                    pcfg.elevation_bounds = (fov.el_min, fov.el_max);
                    depth_model = Some((model, pcfg));
                }
            }
            timing.fit_v_ms = t.elapsed().as_secs_f64() * 1e3;
        }

        // Candidate extraction from whichever occupancy model this mode
        // steers by, then the visual assessment where a camera runs.
        let mut lnps: Vec<Lnp> = Vec::new();
        let mut active_cfg = cfg.planner.clone();
        match mode {
            Mode::G | Mode::Vg => {
                if let Some((model, pcfg)) = &geo {
                    let t = Instant::now();
                    let vs = variance_surface(model, &lattice);
                    lnps = extract_g_lnps(&vs, model, pcfg, &sense_pose);
                    timing.predict_g_ms = t.elapsed().as_secs_f64() * 1e3;
                    active_cfg = pcfg.clone();
                }
                if mode == Mode::Vg {
                    let t = Instant::now();
                    if let Some(nav) = &nav_model {
                        active_cfg.visual_support_threshold =
                            cfg.visual_support_fraction * nav.prior_variance();
                        lnps = assess_navigability(lnps, nav, None, &fov, &active_cfg);
                    } else {
                        lnps.clear();
                    }
                    timing.predict_v_ms = t.elapsed().as_secs_f64() * 1e3;
                }
            }
            Mode::V => {
                let t = Instant::now();
                if let (Some((model, pcfg)), Some(nav)) = (&depth_model, &nav_model) {
                    let vs = variance_surface(model, &lattice);
                    let raw = extract_g_lnps(&vs, model, pcfg, &sense_pose);
                    lnps = assess_navigability(raw, nav, Some(model), &fov, pcfg);
                    active_cfg = pcfg.clone();
                }
                timing.predict_v_ms = t.elapsed().as_secs_f64() * 1e3;
            }
        }

        let (n_nav, n_non, n_out) = count_lnps(&lnps);
        let selected = select_lnp(&lnps, cfg.goal, mode, &active_cfg);
        let mut recovery = false;
        let command = match &selected {
            Some(lnp) => motion_command(lnp, &active_cfg),
            None => {
                if mode != Mode::V && active_cfg.recovery_enabled {
                    recovery = true;
                    recovery_command(&sense_pose, cfg.goal, &active_cfg)
                } else {
                    MotionCommand::STOP
                }
            }
        };

        let outcome_step = step_robot(&state, &command, cfg.dt, &world);
        let prev = state.pose.position;
        state = outcome_step.state;
        trajectory.push(state.pose.clone());
        path_length += (state.pose.position - prev).norm();
        max_velocity = max_velocity.max(state.linear_vel);
        sim_time = (cycle + 1) as f64 * cfg.dt;

        timing.total_ms = cycle_start.elapsed().as_secs_f64() * 1e3;
        traces.push(CycleTrace {
            cycle,
            pose: [
                sense_pose.position.x,
                sense_pose.position.y,
                sense_pose.position.z,
                sense_pose.heading,
            ],
            lnp_total: lnps.len(),
            lnp_navigable: n_nav,
            lnp_non_navigable: n_non,
            lnp_outside_fov: n_out,
            selected: selected.as_ref().map(|l| SelectedLnp {
                azimuth: l.azimuth,
                elevation: l.elevation,
                range: l.range,
                cost: l.cost,
            }),
            recovery,
            command,
            stuck: state.stuck,
            timing,
        });

        let goal_dist = (state.pose.position.xy()
            - nalgebra::Vector2::new(cfg.goal[0], cfg.goal[1]))
        .norm();
        if goal_dist < cfg.termination.goal_radius {
            outcome = TrialOutcome::Reached;
            break;
        }
        if outcome_step.out_of_bounds {
            outcome = TrialOutcome::OutOfBounds;
            break;
        }
        if state.stuck {
            let since = *stuck_since.get_or_insert(sim_time);
            if sim_time - since >= cfg.termination.stuck_timeout {
                outcome = TrialOutcome::Stuck;
                break;
            }
        }
    }

    let regions_entered = region_events(&trajectory, &world);
    let mean_cycle_ms = if traces.is_empty() {
        0.0
    } else {
        traces.iter().map(|t| t.timing.total_ms).sum::<f64>() / traces.len() as f64
    };
    let summary = TrialSummary {
        mode,
        seed,
        outcome,
        cycles: traces.len(),
        sim_time,
        path_length,
        max_velocity,
        regions_entered,
        mean_cycle_ms,
    };
    Ok((summary, traces))
}
