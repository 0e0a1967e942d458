//! Inverse parameter estimation: fit material and HVAC parameters so the
//! simulated zone temperature matches an observed trace, plus a watchdog
//! that re-calibrates a deployed model when its rolling discrepancy drifts.
//!
//! Parameters are optimized in log-space under box bounds, which enforces
//! positivity and puts quantities spanning orders of magnitude on a common
//! scale. The descent is plain gradient descent with a backtracking line
//! search, so the recorded objective history is non-increasing by
//! construction. Recovered values agree with the observations, not
//! necessarily with physical truth; only deliberately small parameter
//! spaces are expected to identify true values, and tests treat them that
//! way.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::{
    simulate, simulate_from_state, split_stream, BuildingModel, Simulator, StreamSample,
    SurfaceClass, Trace, WeatherSeries,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaterialField {
    Thickness,
    Conductivity,
    Density,
    SpecificHeat,
}

impl MaterialField {
    fn as_str(&self) -> &'static str {
        match self {
            MaterialField::Thickness => "thickness",
            MaterialField::Conductivity => "conductivity",
            MaterialField::Density => "density",
            MaterialField::SpecificHeat => "specific_heat",
        }
    }
}

/// Address of one scalar in a [`BuildingModel`]. Material paths apply to
/// every surface of their class, mirroring how one material row describes
/// all walls at once.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamPath {
    Material {
        class: SurfaceClass,
        field: MaterialField,
    },
    CoolingCapacity,
    AirFlowRate,
}

fn class_key(class: SurfaceClass) -> &'static str {
    match class {
        SurfaceClass::Wall => "walls",
        SurfaceClass::Window => "windows",
        SurfaceClass::Door => "door",
        SurfaceClass::Roof => "roof",
        SurfaceClass::Floor => "floor",
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamPath::Material { class, field } => {
                write!(f, "{}.{}", class_key(*class), field.as_str())
            }
            ParamPath::CoolingCapacity => write!(f, "hvac.cooling_capacity"),
            ParamPath::AirFlowRate => write!(f, "hvac.air_flow_rate"),
        }
    }
}

impl FromStr for ParamPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<ParamPath> {
        let (head, tail) = s
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("parameter path '{s}' has no '.'")))?;
        if head == "hvac" {
            return match tail {
                "cooling_capacity" => Ok(ParamPath::CoolingCapacity),
                "air_flow_rate" => Ok(ParamPath::AirFlowRate),
                other => Err(Error::Config(format!("unknown hvac parameter '{other}'"))),
            };
        }
        let class = match head {
            "walls" => SurfaceClass::Wall,
            "windows" => SurfaceClass::Window,
            "door" => SurfaceClass::Door,
            "roof" => SurfaceClass::Roof,
            "floor" => SurfaceClass::Floor,
            other => {
                return Err(Error::Config(format!(
                    "unknown parameter group '{other}' in '{s}'"
                )))
            }
        };
        let field = match tail {
            "thickness" => MaterialField::Thickness,
            "conductivity" => MaterialField::Conductivity,
            "density" => MaterialField::Density,
            "specific_heat" => MaterialField::SpecificHeat,
            other => {
                return Err(Error::Config(format!(
                    "unknown material field '{other}' in '{s}'"
                )))
            }
        };
        Ok(ParamPath::Material { class, field })
    }
}

impl ParamPath {
    /// Current value in the model. Material paths read the first surface of
    /// their class (the setter keeps the class uniform).
    pub fn get(&self, model: &BuildingModel) -> Result<f64> {
        match self {
            ParamPath::CoolingCapacity => Ok(model.hvac.cooling_capacity),
            ParamPath::AirFlowRate => Ok(model.hvac.air_flow_rate),
            ParamPath::Material { class, field } => {
                let surface = model
                    .surfaces
                    .iter()
                    .find(|s| s.class == *class)
                    .ok_or_else(|| {
                        Error::Config(format!("path '{self}' matches no surface in the model"))
                    })?;
                let m = &surface.material;
                Ok(match field {
                    MaterialField::Thickness => m.thickness,
                    MaterialField::Conductivity => m.conductivity,
                    MaterialField::Density => m.density,
                    MaterialField::SpecificHeat => m.specific_heat,
                })
            }
        }
    }

    pub fn set(&self, model: &mut BuildingModel, value: f64) -> Result<()> {
        match self {
            ParamPath::CoolingCapacity => {
                model.hvac.cooling_capacity = value;
                Ok(())
            }
            ParamPath::AirFlowRate => {
                model.hvac.air_flow_rate = value;
                Ok(())
            }
            ParamPath::Material { class, field } => {
                let mut touched = false;
                for surface in model.surfaces.iter_mut().filter(|s| s.class == *class) {
                    let m = &mut surface.material;
                    match field {
                        MaterialField::Thickness => m.thickness = value,
                        MaterialField::Conductivity => m.conductivity = value,
                        MaterialField::Density => m.density = value,
                        MaterialField::SpecificHeat => m.specific_heat = value,
                    }
                    touched = true;
                }
                if touched {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "path '{self}' matches no surface in the model"
                    )))
                }
            }
        }
    }
}

/// One free parameter with its box bounds (natural units).
#[derive(Clone, Copy, Debug)]
pub struct ParamEntry {
    pub path: ParamPath,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ParameterSpace {
    pub entries: Vec<ParamEntry>,
}

impl ParameterSpace {
    pub fn new(entries: Vec<ParamEntry>) -> ParameterSpace {
        ParameterSpace { entries }
    }

    /// The default free set: per-element conductivities plus both HVAC
    /// parameters. Thicknesses stay fixed (k and L are confounded through
    /// k/L, so freeing both is unidentifiable).
    pub fn default_free() -> ParameterSpace {
        let conductivity = |class| ParamEntry {
            path: ParamPath::Material {
                class,
                field: MaterialField::Conductivity,
            },
            lower: 0.01,
            upper: 5.0,
        };
        ParameterSpace::new(vec![
            conductivity(SurfaceClass::Wall),
            conductivity(SurfaceClass::Window),
            conductivity(SurfaceClass::Door),
            conductivity(SurfaceClass::Roof),
            ParamEntry {
                path: ParamPath::CoolingCapacity,
                lower: 500.0,
                upper: 50_000.0,
            },
            ParamEntry {
                path: ParamPath::AirFlowRate,
                lower: 0.01,
                upper: 5.0,
            },
        ])
    }

    pub fn validate(&self, model: &BuildingModel) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidInput("parameter space is empty".into()));
        }
        for entry in &self.entries {
            if !(entry.lower > 0.0 && entry.lower < entry.upper) {
                return Err(Error::Config(format!(
                    "bounds for '{}' must satisfy 0 < lower < upper (got {}..{})",
                    entry.path, entry.lower, entry.upper
                )));
            }
            let value = entry.path.get(model)?;
            if value < entry.lower || value > entry.upper {
                return Err(Error::Config(format!(
                    "initial value {value} of '{}' is outside bounds {}..{}",
                    entry.path, entry.lower, entry.upper
                )));
            }
        }
        // Duplicate paths would make the descent fight itself.
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                if a.path == b.path {
                    return Err(Error::Config(format!("duplicate parameter path '{}'", a.path)));
                }
            }
        }
        Ok(())
    }

    fn read_theta(&self, model: &BuildingModel) -> Result<Vec<f64>> {
        self.entries
            .iter()
            .map(|e| Ok(e.path.get(model)?.clamp(e.lower, e.upper).ln()))
            .collect()
    }

    fn apply_theta(&self, base: &BuildingModel, theta: &[f64]) -> Result<BuildingModel> {
        let mut model = base.clone();
        for (entry, &t) in self.entries.iter().zip(theta) {
            entry.path.set(&mut model, t.exp())?;
        }
        Ok(model)
    }

    fn clamp_theta(&self, theta: &mut [f64]) {
        for (entry, t) in self.entries.iter().zip(theta.iter_mut()) {
            *t = t.clamp(entry.lower.ln(), entry.upper.ln());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Initial step length in log-space.
    pub learning_rate: f64,
    /// Relative step for central differences.
    pub fd_rel_step: f64,
    pub max_iterations: usize,
    /// Stop once the RMSE is at or below this, °C.
    pub rmse_threshold: f64,
    /// Stop when an accepted step improves by less than this, °C.
    pub min_improvement: f64,
    /// Step shrink factor of the line search.
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    /// Leading samples excluded from the objective, seconds; washes out the
    /// arbitrary initial condition.
    pub burn_in_s: f64,
    /// Integration step for objective simulations; `None` takes one implicit
    /// step per sample interval, matching how synthetic truths are made.
    pub sim_dt: Option<f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            learning_rate: 0.1,
            fd_rel_step: 1e-4,
            max_iterations: 500,
            rmse_threshold: 0.3,
            min_improvement: 1e-4,
            backtrack_factor: 0.5,
            max_halvings: 10,
            burn_in_s: 3600.0,
            sim_dt: None,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("fd_rel_step", self.fd_rel_step),
            ("rmse_threshold", self.rmse_threshold),
            ("min_improvement", self.min_improvement),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0 (got {v})")));
            }
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::Config(format!(
                "backtrack_factor must be in (0, 1) (got {})",
                self.backtrack_factor
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// RMSE (°C) between the observed trace and a simulation of `model` driven
/// by the observed HVAC schedule, after the burn-in window. The simulation
/// starts from the first observed temperature; the burn-in exists to wash
/// out that arbitrary anchor.
pub fn objective(
    model: &BuildingModel,
    observed: &Trace,
    weather: &WeatherSeries,
    config: &CalibrationConfig,
) -> Result<f64> {
    objective_from(model, observed, weather, config, None)
}

fn objective_from(
    model: &BuildingModel,
    observed: &Trace,
    weather: &WeatherSeries,
    config: &CalibrationConfig,
    initial_state: Option<&[f64]>,
) -> Result<f64> {
    observed.validate()?;
    weather.validate()?;
    if observed.len() != weather.len() {
        return Err(Error::Alignment(format!(
            "observed trace has {} samples, weather has {}",
            observed.len(),
            weather.len()
        )));
    }
    for (a, b) in observed.timestamps.iter().zip(&weather.timestamps) {
        if (a - b).abs() > 1e-6 {
            return Err(Error::Alignment(format!(
                "observed timestamp {a} does not match weather timestamp {b}"
            )));
        }
    }
    let dt = config.sim_dt.unwrap_or(f64::INFINITY);
    let sim = match initial_state {
        Some(state) => simulate_from_state(model, weather, &observed.hvac_on, dt, state)?,
        None => simulate(model, weather, &observed.hvac_on, dt, observed.t_zone[0])?,
    };
    let cutoff = observed.timestamps[0] + config.burn_in_s;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for i in 0..observed.len() {
        if observed.timestamps[i] >= cutoff {
            let e = sim.t_zone[i] - observed.t_zone[i];
            sum_sq += e * e;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Alignment(
            "burn-in window leaves no samples to compare".into(),
        ));
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// Central-difference gradient of `f` at `theta`, step `rel_step·max(|θᵢ|, 1)`
/// per component.
pub fn fd_gradient<F>(mut f: F, theta: &[f64], rel_step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut grad = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        let h = rel_step * theta[i].abs().max(1.0);
        probe[i] = theta[i] + h;
        let plus = f(&probe)?;
        probe[i] = theta[i] - h;
        let minus = f(&probe)?;
        probe[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Gradient { index: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Diagnostics carried by a stall error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StallReport {
    pub initial_rmse_c: f64,
    pub parameters: Vec<String>,
    pub gradient: Vec<f64>,
    pub history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CalibrationResult {
    pub model: BuildingModel,
    pub final_rmse: f64,
    /// Accepted descent steps taken.
    pub iterations: usize,
    /// Objective value at the start and after each accepted step;
    /// non-increasing.
    pub objective_history: Vec<f64>,
}

/// Gradient-descent calibration of `space` against an observed trace.
///
/// Stops when the RMSE reaches the threshold, an accepted step improves by
/// less than `min_improvement`, no descent step is found, or the iteration
/// cap is hit. Failing to descend on the very first iteration while still
/// above threshold is reported as a stall.
pub fn calibrate(
    initial: &BuildingModel,
    space: &ParameterSpace,
    observed: &Trace,
    weather: &WeatherSeries,
    config: &CalibrationConfig,
) -> Result<CalibrationResult> {
    calibrate_from(initial, space, observed, weather, config, None)
}

fn calibrate_from(
    initial: &BuildingModel,
    space: &ParameterSpace,
    observed: &Trace,
    weather: &WeatherSeries,
    config: &CalibrationConfig,
    initial_state: Option<&[f64]>,
) -> Result<CalibrationResult> {
    config.validate()?;
    initial.validate()?;
    space.validate(initial)?;

    let eval = |theta: &[f64]| -> Result<f64> {
        let model = space.apply_theta(initial, theta)?;
        objective_from(&model, observed, weather, config, initial_state)
    };

    let mut theta = space.read_theta(initial)?;
    let mut current = eval(&theta)?;
    let mut history = vec![current];
    let mut iterations = 0usize;

    while iterations < config.max_iterations && current > config.rmse_threshold {
        let gradient = fd_gradient(eval, &theta, config.fd_rel_step)?;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        let mut step = config.learning_rate;
        for _ in 0..=config.max_halvings {
            let mut candidate = theta.clone();
            for (c, g) in candidate.iter_mut().zip(&gradient) {
                *c -= step * g;
            }
            space.clamp_theta(&mut candidate);
            let value = eval(&candidate)?;
            if value < current {
                accepted = Some((candidate, value));
                break;
            }
            step *= config.backtrack_factor;
        }
        let Some((next_theta, next_value)) = accepted else {
            if iterations == 0 {
                return Err(Error::Stall {
                    report: Box::new(StallReport {
                        initial_rmse_c: current,
                        parameters: space.entries.iter().map(|e| e.path.to_string()).collect(),
                        gradient,
                        history,
                    }),
                });
            }
            break;
        };
        let improvement = current - next_value;
        theta = next_theta;
        current = next_value;
        history.push(current);
        iterations += 1;
        if improvement < config.min_improvement {
            break;
        }
    }

    Ok(CalibrationResult {
        model: space.apply_theta(initial, &theta)?,
        final_rmse: current,
        iterations,
        objective_history: history,
    })
}

/// Calibration report rows, written alongside the calibrated model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportParam {
    pub path: String,
    pub initial: f64,
    pub calibrated: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub parameters: Vec<ReportParam>,
    pub final_rmse_c: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub status: String,
}

impl CalibrationReport {
    pub fn from_result(
        initial: &BuildingModel,
        space: &ParameterSpace,
        result: &CalibrationResult,
    ) -> Result<CalibrationReport> {
        let parameters = space
            .entries
            .iter()
            .map(|e| {
                Ok(ReportParam {
                    path: e.path.to_string(),
                    initial: e.path.get(initial)?,
                    calibrated: e.path.get(&result.model)?,
                    lower: e.lower,
                    upper: e.upper,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CalibrationReport {
            parameters,
            final_rmse_c: result.final_rmse,
            iterations: result.iterations,
            history: result.objective_history.clone(),
            status: "converged".into(),
        })
    }

    pub fn from_stall(
        initial: &BuildingModel,
        space: &ParameterSpace,
        report: &StallReport,
    ) -> Result<CalibrationReport> {
        let parameters = space
            .entries
            .iter()
            .map(|e| {
                let value = e.path.get(initial)?;
                Ok(ReportParam {
                    path: e.path.to_string(),
                    initial: value,
                    calibrated: value,
                    lower: e.lower,
                    upper: e.upper,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CalibrationReport {
            parameters,
            final_rmse_c: report.initial_rmse_c,
            iterations: 0,
            history: report.history.clone(),
            status: "stalled".into(),
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("serialize report");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<CalibrationReport> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WatchdogConfig {
    /// Rolling window length, seconds.
    pub window_s: f64,
    /// Rolling RMSE that triggers a re-calibration, °C.
    pub threshold_c: f64,
}

impl Default for WatchdogConfig {
    fn default() -> Self {
        WatchdogConfig {
            window_s: 86_400.0,
            threshold_c: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventStatus {
    Recalibrated,
    /// Calibration stalled; the prior model was kept.
    Degraded,
}

impl EventStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventStatus::Recalibrated => "recalibrated",
            EventStatus::Degraded => "degraded",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RecalEvent {
    pub time_s: f64,
    pub pre_rmse_c: f64,
    pub post_rmse_c: f64,
    pub status: EventStatus,
}

#[derive(Clone, Debug)]
pub struct WatchdogOutcome {
    pub events: Vec<RecalEvent>,
    /// The model in service after the replay.
    pub model: BuildingModel,
}

/// Replay a recorded stream against `model`, re-calibrating whenever the
/// rolling-window RMSE between the model's open-loop prediction and the
/// observations exceeds the threshold.
///
/// The watchdog maintains one continuous simulation anchored only at the
/// first sample, so a healthy model accumulates no spurious discrepancy.
/// When an event fires, the window's data is fit starting from the
/// simulation state at the window's start; the recalibrated model replaces
/// the running one (prediction errors over the window are rewritten under
/// the new model), and further events are suppressed for one window span.
/// A stalled calibration is recorded as degraded and the prior model stays
/// in service.
pub fn watchdog(
    model: &BuildingModel,
    stream: &[StreamSample],
    space: &ParameterSpace,
    cal_config: &CalibrationConfig,
    config: &WatchdogConfig,
) -> Result<WatchdogOutcome> {
    if stream.len() < 2 {
        return Ok(WatchdogOutcome {
            events: Vec::new(),
            model: model.clone(),
        });
    }
    for pair in stream.windows(2) {
        if !(pair[1].time_s > pair[0].time_s) {
            return Err(Error::Alignment(format!(
                "stream timestamps not increasing at {} -> {}",
                pair[0].time_s, pair[1].time_s
            )));
        }
    }

    let mut current = model.clone();
    let mut sim = Simulator::new(&current, stream[0].t_zone_c, stream[0].t_out_c)?;
    // Per-sample nodal states and squared prediction errors of the
    // continuous run; rewritten over the window after a recalibration.
    let mut states: Vec<Vec<f64>> = vec![sim.state().to_vec()];
    let mut sq_err: Vec<f64> = vec![0.0];
    let mut events = Vec::new();
    let mut window_start = 0usize;
    let mut last_event_t = f64::NEG_INFINITY;

    for i in 1..stream.len() {
        let now = stream[i].time_s;
        let span = now - stream[i - 1].time_s;
        sim.step(stream[i - 1].t_out_c, stream[i - 1].hvac_on, span)?;
        states.push(sim.state().to_vec());
        let e = sim.zone_temp() - stream[i].t_zone_c;
        sq_err.push(e * e);

        while stream[window_start].time_s < now - config.window_s {
            window_start += 1;
        }
        if i - window_start < 1 || now < last_event_t + config.window_s {
            continue;
        }
        let window_err = &sq_err[window_start..=i];
        let pre = (window_err.iter().sum::<f64>() / window_err.len() as f64).sqrt();
        if !(pre > config.threshold_c) {
            continue;
        }

        let window = &stream[window_start..=i];
        let (weather, trace) = split_stream(window);
        let mut cal_cfg = cal_config.clone();
        cal_cfg.burn_in_s = 0.0;
        let anchor = states[window_start].clone();
        match calibrate_from(&current, space, &trace, &weather, &cal_cfg, Some(&anchor)) {
            Ok(result) => {
                current = result.model;
                // Rewrite the window's predictions under the new model and
                // continue the live run from its end state.
                sim = Simulator::new(&current, anchor[0], window[0].t_out_c)?;
                sim.set_state(&anchor)?;
                for (k, idx) in (window_start + 1..=i).enumerate() {
                    let prev = &window[k];
                    let step_span = stream[idx].time_s - prev.time_s;
                    sim.step(prev.t_out_c, prev.hvac_on, step_span)?;
                    states[idx] = sim.state().to_vec();
                    let e = sim.zone_temp() - stream[idx].t_zone_c;
                    sq_err[idx] = e * e;
                }
                let window_err = &sq_err[window_start..=i];
                let post = (window_err.iter().sum::<f64>() / window_err.len() as f64).sqrt();
                events.push(RecalEvent {
                    time_s: now,
                    pre_rmse_c: pre,
                    post_rmse_c: post,
                    status: EventStatus::Recalibrated,
                });
            }
            Err(Error::Stall { .. }) => {
                events.push(RecalEvent {
                    time_s: now,
                    pre_rmse_c: pre,
                    post_rmse_c: pre,
                    status: EventStatus::Degraded,
                });
            }
            Err(other) => return Err(other),
        }
        last_event_t = now;
    }
    Ok(WatchdogOutcome {
        events,
        model: current,
    })
}

pub fn write_event_csv(path: &Path, events: &[RecalEvent]) -> Result<()> {
    let mut out = String::from("time_s,pre_rmse_c,post_rmse_c,status\n");
    for e in events {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.time_s,
            e.pre_rmse_c,
            e.post_rmse_c,
            e.status.as_str()
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::{
        build_model, daily_schedule, merge_stream, BuildDefaults, BuildingGeometry, HvacSpec,
        MaterialSet, Simulator,
    };
    use approx::assert_abs_diff_eq;

    fn base_model() -> BuildingModel {
        build_model(
            &BuildingGeometry::default_room(),
            &MaterialSet::default(),
            HvacSpec::default(),
            &BuildDefaults::default(),
        )
        .unwrap()
    }

    fn scenario(model: &BuildingModel, days: f64) -> (WeatherSeries, Trace) {
        let weather = WeatherSeries::sinusoidal_daily(days, 300.0, 32.0, 6.0, 15.0);
        let schedule = daily_schedule(&weather.timestamps, 10.0, 18.0);
        let trace = simulate(model, &weather, &schedule, f64::INFINITY, 26.0).unwrap();
        (weather, trace)
    }

    #[test]
    fn objective_is_zero_on_self_and_offset_on_shifted() {
        let model = base_model();
        let (weather, observed) = scenario(&model, 1.0);
        let config = CalibrationConfig::default();
        let rmse = objective(&model, &observed, &weather, &config).unwrap();
        assert_abs_diff_eq!(rmse, 0.0, epsilon = 1e-9);

        let mut shifted = observed.clone();
        for t in &mut shifted.t_zone {
            *t += 1.0;
        }
        // The simulation re-anchors at the shifted first sample and then
        // relaxes toward the model's own trajectory, so a constant offset
        // shows up as a discrepancy of up to the offset itself.
        let rmse = objective(&model, &shifted, &weather, &config).unwrap();
        assert!(
            rmse > 0.25 && rmse <= 1.0 + 1e-9,
            "offset of 1.0 °C produced rmse {rmse}"
        );
    }

    #[test]
    fn doubled_wall_conductivity_has_a_visible_objective() {
        let model = base_model();
        let (weather, observed) = scenario(&model, 1.0);
        let mut off = model.clone();
        ParamPath::from_str("walls.conductivity")
            .unwrap()
            .set(&mut off, 0.622)
            .unwrap();
        let rmse = objective(&off, &observed, &weather, &CalibrationConfig::default()).unwrap();
        assert!(rmse > 0.0, "conductivity change left the objective at zero");
    }

    #[test]
    fn misaligned_series_are_rejected() {
        let model = base_model();
        let (weather, observed) = scenario(&model, 1.0);
        let mut short = weather.clone();
        short.timestamps.pop();
        short.t_out.pop();
        assert!(matches!(
            objective(&model, &observed, &short, &CalibrationConfig::default()),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn gradient_of_quadratic_is_exact() {
        let f = |x: &[f64]| -> Result<f64> { Ok((x[0] - 2.0) * (x[0] - 2.0)) };
        let g = fd_gradient(f, &[0.0], 1e-4).unwrap();
        assert_abs_diff_eq!(g[0], -4.0, epsilon = 1e-6);

        let constant = |_: &[f64]| -> Result<f64> { Ok(3.5) };
        let g = fd_gradient(constant, &[1.0, -2.0, 0.3], 1e-4).unwrap();
        for v in g {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn gradient_error_names_the_component() {
        let f = |x: &[f64]| -> Result<f64> {
            if x[1] > 1.0 {
                Ok(f64::NAN)
            } else {
                Ok(x[0] + x[1])
            }
        };
        let err = fd_gradient(f, &[0.0, 1.0], 1e-4).unwrap_err();
        assert!(matches!(err, Error::Gradient { index: 1 }), "{err}");
    }

    #[test]
    fn gradient_vanishes_at_the_generating_optimum() {
        let model = base_model();
        let (weather, observed) = scenario(&model, 1.0);
        let space = ParameterSpace::default_free();
        let config = CalibrationConfig::default();
        let theta = space.read_theta(&model).unwrap();
        let g = fd_gradient(
            |t| {
                let m = space.apply_theta(&model, t)?;
                objective(&m, &observed, &weather, &config)
            },
            &theta,
            config.fd_rel_step,
        )
        .unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-3, "gradient norm {norm} at the optimum");
    }

    #[test]
    fn already_optimal_returns_immediately() {
        let model = base_model();
        let (weather, observed) = scenario(&model, 1.0);
        let result = calibrate(
            &model,
            &ParameterSpace::default_free(),
            &observed,
            &weather,
            &CalibrationConfig::default(),
        )
        .unwrap();
        assert_eq!(result.iterations, 0);
        assert!(result.final_rmse < 1e-6);
        assert_eq!(result.objective_history.len(), 1);
    }

    #[test]
    fn empty_space_is_invalid() {
        let model = base_model();
        let (weather, observed) = scenario(&model, 0.5);
        assert!(matches!(
            calibrate(
                &model,
                &ParameterSpace::default(),
                &observed,
                &weather,
                &CalibrationConfig::default()
            ),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn two_parameter_recovery_decreases_monotonically() {
        let truth = base_model();
        let (weather, observed) = scenario(&truth, 1.0);
        let space = ParameterSpace::new(vec![
            ParamEntry {
                path: "walls.conductivity".parse().unwrap(),
                lower: 0.01,
                upper: 5.0,
            },
            ParamEntry {
                path: "hvac.air_flow_rate".parse().unwrap(),
                lower: 0.01,
                upper: 5.0,
            },
        ]);
        let mut initial = truth.clone();
        for entry in &space.entries {
            let v = entry.path.get(&truth).unwrap();
            entry.path.set(&mut initial, v * 1.5).unwrap();
        }
        let result = calibrate(
            &initial,
            &space,
            &observed,
            &weather,
            &CalibrationConfig::default(),
        )
        .unwrap();
        assert!(
            result.final_rmse <= 0.3,
            "rmse {} after {} iterations",
            result.final_rmse,
            result.iterations
        );
        for pair in result.objective_history.windows(2) {
            assert!(pair[1] <= pair[0], "history not monotone: {pair:?}");
        }
        // Accepted iterates stay inside the box.
        for entry in &space.entries {
            let v = entry.path.get(&result.model).unwrap();
            assert!(v >= entry.lower && v <= entry.upper);
        }
    }

    #[test]
    fn calibrate_is_deterministic() {
        let truth = base_model();
        let (weather, observed) = scenario(&truth, 0.5);
        let space = ParameterSpace::new(vec![ParamEntry {
            path: "hvac.air_flow_rate".parse().unwrap(),
            lower: 0.01,
            upper: 5.0,
        }]);
        let mut initial = truth.clone();
        initial.hvac.air_flow_rate *= 1.4;
        let run = || {
            calibrate(
                &initial,
                &space,
                &observed,
                &weather,
                &CalibrationConfig::default(),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.objective_history, b.objective_history);
        assert_eq!(
            a.model.hvac.air_flow_rate.to_bits(),
            b.model.hvac.air_flow_rate.to_bits()
        );
    }

    /// Hot scenario with internal gains so the capacity limit actually binds
    /// during the morning pulldown.
    pub(crate) fn capacity_scenario(model: &BuildingModel, days: f64) -> (WeatherSeries, Trace) {
        let weather = WeatherSeries::sinusoidal_daily(days, 300.0, 38.0, 6.0, 15.0);
        let schedule = daily_schedule(&weather.timestamps, 10.0, 18.0);
        let trace = simulate(model, &weather, &schedule, f64::INFINITY, 36.0).unwrap();
        (weather, trace)
    }

    pub(crate) fn capacity_model() -> BuildingModel {
        let mut model = base_model();
        model.internal_gain = 5200.0;
        model.air_capacitance_multiplier = 10.0;
        model
    }

    #[test]
    fn single_parameter_capacity_recovery() {
        let truth = capacity_model();
        let (weather, observed) = capacity_scenario(&truth, 2.0);
        let space = ParameterSpace::new(vec![ParamEntry {
            path: ParamPath::CoolingCapacity,
            lower: 500.0,
            upper: 50_000.0,
        }]);
        let mut initial = truth.clone();
        initial.hvac.cooling_capacity = 4000.0;
        let mut config = CalibrationConfig::default();
        config.rmse_threshold = 0.02;
        let result = calibrate(&initial, &space, &observed, &weather, &config).unwrap();
        let recovered = result.model.hvac.cooling_capacity;
        assert!(
            (recovered - 8943.0).abs() / 8943.0 <= 0.05,
            "recovered {recovered} W (rmse {})",
            result.final_rmse
        );
    }

    /// Monitoring scenario: a heavily loaded room cooled around the clock,
    /// two cool days followed by a heat wave. On cool days the demand stays
    /// below even the degraded capacity, so pre-drop window data never
    /// contradicts a re-calibrated value; during the heat wave the healthy
    /// unit itself brushes its cap (the objective stays sensitive to
    /// capacity) and a degraded unit falls badly behind.
    pub(crate) fn monitoring_weather(days: f64) -> WeatherSeries {
        let mut weather = WeatherSeries::sinusoidal_daily(days, 300.0, 0.0, 2.0, 15.0);
        for (t, v) in weather.timestamps.iter().zip(weather.t_out.iter_mut()) {
            *v += if *t < 2.0 * 86_400.0 { 10.0 } else { 50.0 };
        }
        weather
    }

    /// Lightweight, heavily glazed server cabin: low thermal mass (the zone
    /// responds within minutes) and a strong envelope coupling, cooled
    /// around the clock against an 8 kW equipment load.
    pub(crate) fn monitoring_model() -> BuildingModel {
        use crate::thermal::{GeomSurface, Material};
        let geometry = BuildingGeometry {
            volume: 60.0,
            surfaces: vec![
                GeomSurface { name: "floor".into(), class: SurfaceClass::Floor, area: 20.0 },
                GeomSurface { name: "roof".into(), class: SurfaceClass::Roof, area: 20.0 },
                GeomSurface { name: "wall_0".into(), class: SurfaceClass::Wall, area: 39.0 },
                GeomSurface { name: "window_0".into(), class: SurfaceClass::Window, area: 15.0 },
                GeomSurface { name: "door_0".into(), class: SurfaceClass::Door, area: 1.8 },
            ],
        };
        let foam = Material {
            thickness: 0.05,
            conductivity: 0.04,
            density: 40.0,
            specific_heat: 1400.0,
        };
        let materials = MaterialSet {
            wall: foam,
            roof: Material { thickness: 0.08, ..foam },
            floor: Material {
                thickness: 0.01,
                conductivity: 1.4,
                density: 500.0,
                specific_heat: 1000.0,
            },
            ..MaterialSet::default()
        };
        let mut model = build_model(
            &geometry,
            &materials,
            HvacSpec::default(),
            &BuildDefaults::default(),
        )
        .unwrap();
        model.internal_gain = 8000.0;
        model
    }

    /// Stream from the monitoring scenario, with the plant's cooling
    /// capacity dropping to `new_capacity` at `drop_day` (f64::INFINITY for
    /// a healthy control stream).
    pub(crate) fn monitoring_stream(
        days: f64,
        drop_day: f64,
        new_capacity: f64,
    ) -> Vec<StreamSample> {
        let truth = monitoring_model();
        let weather = monitoring_weather(days);
        let schedule = vec![true; weather.len()];
        let mut sim = Simulator::new(&truth, 27.0, weather.t_out[0]).unwrap();
        let mut t_zone = vec![27.0];
        for i in 0..weather.len() - 1 {
            if weather.timestamps[i] >= drop_day * 86_400.0 {
                let mut hvac = truth.hvac;
                hvac.cooling_capacity = new_capacity;
                sim.set_hvac(hvac);
            }
            let span = weather.timestamps[i + 1] - weather.timestamps[i];
            sim.step(weather.t_out[i], schedule[i], span).unwrap();
            t_zone.push(sim.zone_temp());
        }
        let trace = Trace {
            timestamps: weather.timestamps.clone(),
            t_zone,
            hvac_on: schedule,
        };
        merge_stream(&weather, &trace).unwrap()
    }

    fn capacity_space() -> ParameterSpace {
        ParameterSpace::new(vec![ParamEntry {
            path: ParamPath::CoolingCapacity,
            lower: 500.0,
            upper: 50_000.0,
        }])
    }

    #[test]
    fn watchdog_stays_quiet_without_drift() {
        let stream = monitoring_stream(7.0, f64::INFINITY, 0.0);
        let outcome = watchdog(
            &monitoring_model(),
            &stream,
            &capacity_space(),
            &CalibrationConfig::default(),
            &WatchdogConfig::default(),
        )
        .unwrap();
        assert!(outcome.events.is_empty(), "events: {:?}", outcome.events);
    }

    #[test]
    fn watchdog_catches_a_capacity_drop_once() {
        let stream = monitoring_stream(7.0, 2.0, 8943.0 * 0.7);
        let space = capacity_space();
        let mut cal = CalibrationConfig::default();
        cal.rmse_threshold = 0.1;
        let outcome = watchdog(
            &monitoring_model(),
            &stream,
            &space,
            &cal,
            &WatchdogConfig::default(),
        )
        .unwrap();
        assert_eq!(outcome.events.len(), 1, "events: {:?}", outcome.events);
        let event = &outcome.events[0];
        assert_eq!(event.status, EventStatus::Recalibrated);
        assert!(event.time_s >= 2.0 * 86_400.0);
        assert!(
            event.time_s <= 3.0 * 86_400.0,
            "event at {} s, more than a window after the drop",
            event.time_s
        );
        assert!(event.post_rmse_c < 1.0, "post rmse {}", event.post_rmse_c);
        let recovered = outcome.model.hvac.cooling_capacity;
        assert!(
            (recovered - 8943.0 * 0.7).abs() / (8943.0 * 0.7) < 0.1,
            "watchdog calibrated capacity to {recovered} W"
        );
    }

    #[test]
    fn infinite_threshold_never_fires() {
        let stream = monitoring_stream(4.0, 1.0, 8943.0 * 0.7);
        let outcome = watchdog(
            &monitoring_model(),
            &stream,
            &ParameterSpace::default_free(),
            &CalibrationConfig::default(),
            &WatchdogConfig {
                window_s: 86_400.0,
                threshold_c: f64::INFINITY,
            },
        )
        .unwrap();
        assert!(outcome.events.is_empty());
    }

    #[test]
    fn out_of_order_stream_is_rejected() {
        let mut stream = monitoring_stream(1.0, 0.5, 6000.0);
        stream.swap(3, 4);
        assert!(matches!(
            watchdog(
                &monitoring_model(),
                &stream,
                &ParameterSpace::default_free(),
                &CalibrationConfig::default(),
                &WatchdogConfig::default()
            ),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn param_paths_parse_and_apply_uniformly() {
        let mut model = base_model();
        let path: ParamPath = "walls.conductivity".parse().unwrap();
        assert_eq!(path.to_string(), "walls.conductivity");
        path.set(&mut model, 0.5).unwrap();
        for s in model.surfaces.iter().filter(|s| s.class == SurfaceClass::Wall) {
            assert_eq!(s.material.conductivity, 0.5);
        }
        assert_eq!(path.get(&model).unwrap(), 0.5);
        assert!(ParamPath::from_str("walls.sheen").is_err());
        assert!(ParamPath::from_str("hvac.fan_speed").is_err());
        assert!(ParamPath::from_str("nonsense").is_err());
    }
}
