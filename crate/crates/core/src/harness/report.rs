//! Trace and summary emission, and the multi-trial suite driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trial::{run_trial, CycleTrace, TrialOutcome, TrialSummary};
use super::{HarnessError, ScenarioConfig};

/// Header of the deterministic trace file, one row per cycle.
pub const TRACE_HEADER: &str = "cycle,x,y,z,heading,lnp_total,lnp_navigable,\
lnp_non_navigable,lnp_outside_fov,viable,sel_azimuth,sel_elevation,sel_range,sel_cost,\
recovery,linear,angular,stuck";

/// Header of the wall-clock timing sidecar file.
pub const TIMING_HEADER: &str = "cycle,fit_g_ms,predict_g_ms,fit_v_ms,predict_v_ms,total_ms";

fn flag(b: bool) -> u8 {
    u8::from(b)
}

/// Render the deterministic per-cycle columns. Identical inputs yield
/// identical bytes; wall-clock timings are deliberately excluded and go
/// through [`render_timing`] instead.
pub fn render_traces(traces: &[CycleTrace]) -> String {
    let mut out = String::with_capacity(64 + traces.len() * 160);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for t in traces {
        let (viable, az, el, range, cost) = match &t.selected {
            Some(s) => (1u8, s.azimuth, s.elevation, s.range, s.cost),
            None => (0u8, 0.0, 0.0, 0.0, 0.0),
        };
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{}",
            t.cycle,
            t.pose[0],
            t.pose[1],
            t.pose[2],
            t.pose[3],
            t.lnp_total,
            t.lnp_navigable,
            t.lnp_non_navigable,
            t.lnp_outside_fov,
            viable,
            az,
            el,
            range,
            cost,
            flag(t.recovery),
            t.command.linear,
            t.command.angular,
            flag(t.stuck),
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Write the deterministic trace file for one trial.
pub fn emit_traces(traces: &[CycleTrace], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    std::fs::write(path, render_traces(traces)).map_err(|e| HarnessError::io(path, e))
}

/// Write the wall-clock stage timings for one trial.
pub fn emit_timing(traces: &[CycleTrace], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let mut out = String::with_capacity(32 + traces.len() * 48);
    out.push_str(TIMING_HEADER);
    out.push('\n');
    for t in traces {
        writeln!(
            out,
            "{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            t.cycle,
            t.timing.fit_g_ms,
            t.timing.predict_g_ms,
            t.timing.fit_v_ms,
            t.timing.predict_v_ms,
            t.timing.total_ms,
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(path, out).map_err(|e| HarnessError::io(path, e))
}

/// Cross-trial statistics for one planner mode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeAggregate {
    pub trials: usize,
    /// Fraction of trials that reached the goal.
    pub success_rate: f64,
    /// Outcome name to occurrence count.
    pub outcomes: BTreeMap<String, usize>,
    pub path_mean: f64,
    pub path_std: f64,
    pub max_velocity_mean: f64,
    pub max_velocity_std: f64,
    /// Region name to the fraction of trials that stayed out of it.
    pub region_avoidance: BTreeMap<String, f64>,
    /// Mean wall-clock cycle cost over all cycles of all trials, ms.
    pub mean_cycle_ms: f64,
}

/// Everything [`run_suite`] learned, serialized as `summary.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenario: String,
    pub trials_per_mode: usize,
    pub modes: BTreeMap<String, ModeAggregate>,
    pub trials: Vec<TrialSummary>,
}

impl SuiteReport {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| HarnessError::io(path, e))
    }
}

/// Mean and sample standard deviation; a single observation reports a
/// deviation of zero.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(mode_trials: &[TrialSummary]) -> ModeAggregate {
    let paths: Vec<f64> = mode_trials.iter().map(|t| t.path_length).collect();
    let vels: Vec<f64> = mode_trials.iter().map(|t| t.max_velocity).collect();
    let (path_mean, path_std) = mean_std(&paths);
    let (vel_mean, vel_std) = mean_std(&vels);
    let mut outcomes: BTreeMap<String, usize> = BTreeMap::new();
    for t in mode_trials {
        *outcomes.entry(t.outcome.as_str().to_string()).or_insert(0) += 1;
    }
    let mut region_avoidance: BTreeMap<String, f64> = BTreeMap::new();
    if let Some(first) = mode_trials.first() {
        for region in first.regions_entered.keys() {
            let stayed_out = mode_trials
                .iter()
                .filter(|t| !t.regions_entered.get(region).copied().unwrap_or(false))
                .count();
            region_avoidance
                .insert(region.clone(), stayed_out as f64 / mode_trials.len() as f64);
        }
    }
    let reached = mode_trials
        .iter()
        .filter(|t| t.outcome == TrialOutcome::Reached)
        .count();
    let cycles: usize = mode_trials.iter().map(|t| t.cycles).sum();
    let cycle_ms: f64 = mode_trials
        .iter()
        .map(|t| t.mean_cycle_ms * t.cycles as f64)
        .sum();
    ModeAggregate {
        trials: mode_trials.len(),
        success_rate: reached as f64 / mode_trials.len().max(1) as f64,
        outcomes,
        path_mean,
        path_std,
        max_velocity_mean: vel_mean,
        max_velocity_std: vel_std,
        region_avoidance,
        mean_cycle_ms: if cycles == 0 { 0.0 } else { cycle_ms / cycles as f64 },
    }
}

/// Run every configured mode over `cfg.trials` consecutive seeds
/// starting at `cfg.base_seed`. With an output directory, each trial
/// writes `trace_<mode>_<seed>.csv` and `timing_<mode>_<seed>.csv`, and
/// the report lands in `summary.json`.
pub fn run_suite(
    cfg: &ScenarioConfig,
    out_dir: Option<&Path>,
) -> Result<SuiteReport, HarnessError> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut trials: Vec<TrialSummary> = Vec::new();
    let mut modes: BTreeMap<String, ModeAggregate> = BTreeMap::new();
    for &mode in &cfg.modes {
        let mut mode_trials: Vec<TrialSummary> = Vec::new();
        for t in 0..cfg.trials {
            let seed = cfg.base_seed + t as u64;
            let (summary, traces) = run_trial(cfg, mode, seed)?;
            if let Some(dir) = out_dir {
                emit_traces(&traces, dir.join(format!("trace_{}_{}.csv", mode.as_str(), seed)))?;
                emit_timing(
                    &traces,
                    dir.join(format!("timing_{}_{}.csv", mode.as_str(), seed)),
                )?;
            }
            mode_trials.push(summary);
        }
        modes.insert(mode.as_str().to_string(), aggregate(&mode_trials));
        trials.extend(mode_trials);
    }
    let report = SuiteReport {
        scenario: cfg.name.clone(),
        trials_per_mode: cfg.trials,
        modes,
        trials,
    };
    if let Some(dir) = out_dir {
        report.save(dir.join("summary.json"))?;
    }
    Ok(report)
}
