//! Lumped-parameter thermal model of a single zone and its deterministic
//! forward simulator.
//!
//! Each surface is a 2R1C element: one capacitance at mid-thickness with a
//! resistance toward its outer boundary (outdoor air for exterior surfaces,
//! the zone for interior ones) and one toward the zone. The zone itself is a
//! single well-mixed air node. Time integration is backward Euler; the
//! coupling topology is a star around the zone node, so each implicit step
//! reduces to a scalar solve for the zone temperature followed by surface
//! back-substitution.

pub mod series;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use series::{
    daily_schedule, merge_stream, read_schedule_csv, read_stream_csv, split_stream,
    write_schedule_csv, write_stream_csv, StreamSample, Trace, WeatherSeries,
};

pub const RHO_AIR: f64 = 1.204; // kg/m³
pub const CP_AIR: f64 = 1005.0; // J/(kg·K)

/// One homogeneous material layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// Layer thickness, meters.
    pub thickness: f64,
    /// Thermal conductivity, W/(m·K).
    pub conductivity: f64,
    /// Density, kg/m³.
    pub density: f64,
    /// Specific heat, J/(kg·K).
    pub specific_heat: f64,
}

impl Material {
    pub fn validate(&self, name: &str) -> Result<()> {
        for (field, value) in [
            ("thickness", self.thickness),
            ("conductivity", self.conductivity),
            ("density", self.density),
            ("specific_heat", self.specific_heat),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Config(format!(
                    "{name}.{field} must be > 0 (got {value})"
                )));
            }
        }
        Ok(())
    }
}

/// Surface role in the zone envelope. Openings detected in walls become
/// `Window`/`Door` surfaces with their own areas and materials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceClass {
    Floor,
    Roof,
    Wall,
    Window,
    Door,
}

impl SurfaceClass {
    pub const ALL: [SurfaceClass; 5] = [
        SurfaceClass::Floor,
        SurfaceClass::Roof,
        SurfaceClass::Wall,
        SurfaceClass::Window,
        SurfaceClass::Door,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SurfaceClass::Floor => "floor",
            SurfaceClass::Roof => "roof",
            SurfaceClass::Wall => "wall",
            SurfaceClass::Window => "window",
            SurfaceClass::Door => "door",
        }
    }
}

/// Area record handed from geometry extraction to model construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeomSurface {
    pub name: String,
    pub class: SurfaceClass,
    pub area: f64,
}

/// Simulation-ready geometry: per-surface areas plus the zone air volume.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildingGeometry {
    pub volume: f64,
    pub surfaces: Vec<GeomSurface>,
}

impl BuildingGeometry {
    /// The canonical 5×4×3 m demo room: four walls, roof, floor, one
    /// 1.2×1.5 m window on a long wall and one 0.9×2.0 m door on a short
    /// wall.
    pub fn default_room() -> BuildingGeometry {
        let (l, w, h) = (5.0, 4.0, 3.0);
        let window = 1.2 * 1.5;
        let door = 0.9 * 2.0;
        BuildingGeometry {
            volume: l * w * h,
            surfaces: vec![
                GeomSurface { name: "floor".into(), class: SurfaceClass::Floor, area: l * w },
                GeomSurface { name: "roof".into(), class: SurfaceClass::Roof, area: l * w },
                GeomSurface { name: "wall_0".into(), class: SurfaceClass::Wall, area: l * h - window },
                GeomSurface { name: "wall_1".into(), class: SurfaceClass::Wall, area: w * h - door },
                GeomSurface { name: "wall_2".into(), class: SurfaceClass::Wall, area: l * h },
                GeomSurface { name: "wall_3".into(), class: SurfaceClass::Wall, area: w * h },
                GeomSurface { name: "window_0".into(), class: SurfaceClass::Window, area: window },
                GeomSurface { name: "door_0".into(), class: SurfaceClass::Door, area: door },
            ],
        }
    }
}

/// Material per surface class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSet {
    pub wall: Material,
    pub window: Material,
    pub door: Material,
    pub roof: Material,
    pub floor: Material,
}

impl MaterialSet {
    pub fn get(&self, class: SurfaceClass) -> Material {
        match class {
            SurfaceClass::Wall => self.wall,
            SurfaceClass::Window => self.window,
            SurfaceClass::Door => self.door,
            SurfaceClass::Roof => self.roof,
            SurfaceClass::Floor => self.floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.wall.validate("wall")?;
        self.window.validate("window")?;
        self.door.validate("door")?;
        self.roof.validate("roof")?;
        self.floor.validate("floor")
    }
}

impl Default for MaterialSet {
    fn default() -> Self {
        // Thickness/conductivity per element follow the shipped default
        // parameter file; density and specific heat are generic values for
        // the respective material families.
        MaterialSet {
            wall: Material { thickness: 0.30, conductivity: 0.311, density: 1400.0, specific_heat: 1000.0 },
            window: Material { thickness: 0.0031, conductivity: 0.85, density: 2500.0, specific_heat: 840.0 },
            door: Material { thickness: 0.0254, conductivity: 0.15, density: 600.0, specific_heat: 1600.0 },
            roof: Material { thickness: 0.1016, conductivity: 0.53, density: 1100.0, specific_heat: 1000.0 },
            floor: Material { thickness: 0.15, conductivity: 1.4, density: 2200.0, specific_heat: 880.0 },
        }
    }
}

/// Cooling unit: delivers at most `cooling_capacity` W of sensible cooling,
/// further limited by what the supply air stream can carry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HvacSpec {
    /// Maximum sensible cooling power, W.
    pub cooling_capacity: f64,
    /// Supply air volume flow, m³/s.
    pub air_flow_rate: f64,
    /// Supply air temperature, °C.
    pub supply_temp: f64,
}

impl Default for HvacSpec {
    fn default() -> Self {
        HvacSpec {
            cooling_capacity: 8943.0,
            air_flow_rate: 0.384,
            supply_temp: 14.0,
        }
    }
}

impl HvacSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.cooling_capacity >= 0.0) {
            return Err(Error::Config(format!(
                "cooling_capacity must be >= 0 (got {})",
                self.cooling_capacity
            )));
        }
        if !(self.air_flow_rate >= 0.0) {
            return Err(Error::Config(format!(
                "air_flow_rate must be >= 0 (got {})",
                self.air_flow_rate
            )));
        }
        Ok(())
    }

    /// Conductance of the supply air stream toward the supply temperature,
    /// W/K.
    pub fn flow_conductance(&self) -> f64 {
        RHO_AIR * CP_AIR * self.air_flow_rate
    }
}

/// Signed HVAC heat input to the zone (negative = cooling): zero when off or
/// when the zone is already at/below the supply temperature, otherwise the
/// smaller of the capacity and the flow-limited sensible transfer.
pub fn hvac_power(hvac: &HvacSpec, t_zone: f64, on: bool) -> f64 {
    if !on || t_zone <= hvac.supply_temp {
        return 0.0;
    }
    let flow_limit = hvac.flow_conductance() * (t_zone - hvac.supply_temp);
    -flow_limit.min(hvac.cooling_capacity)
}

/// One envelope element of the zone model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub name: String,
    pub class: SurfaceClass,
    /// Net area, m².
    pub area: f64,
    pub material: Material,
    /// Exterior surfaces face outdoor air on the far side; interior ones face
    /// the zone on both sides (pure thermal mass).
    pub exterior: bool,
    /// Inside film coefficient, W/(m²·K).
    pub h_in: f64,
    /// Outside film coefficient, W/(m²·K).
    pub h_out: f64,
}

impl SurfaceSpec {
    /// Resistance from the surface node to the zone, K/W: half the
    /// conduction path plus the inside film.
    pub fn r_in(&self) -> f64 {
        let a = self.area;
        self.material.thickness / (2.0 * self.material.conductivity * a) + 1.0 / (self.h_in * a)
    }

    /// Resistance from the surface node to its far boundary, K/W.
    pub fn r_out(&self) -> f64 {
        let a = self.area;
        1.0 / (self.h_out * a) + self.material.thickness / (2.0 * self.material.conductivity * a)
    }

    /// Heat capacity of the element, J/K.
    pub fn capacitance(&self) -> f64 {
        self.material.density * self.material.specific_heat * self.material.thickness * self.area
    }

    fn validate(&self) -> Result<()> {
        if !(self.area > 0.0) {
            return Err(Error::Config(format!(
                "surface {} has non-positive area {}",
                self.name, self.area
            )));
        }
        if !(self.h_in > 0.0) || !(self.h_out > 0.0) {
            return Err(Error::Config(format!(
                "surface {} has non-positive film coefficient",
                self.name
            )));
        }
        self.material.validate(&self.name)
    }
}

/// Film coefficients and zone-level defaults applied when building a model
/// from geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildDefaults {
    pub h_in: f64,
    pub h_out: f64,
    pub air_capacitance_multiplier: f64,
    /// Constant internal heat gain, W.
    pub internal_gain: f64,
}

impl Default for BuildDefaults {
    fn default() -> Self {
        BuildDefaults {
            h_in: 7.7,
            h_out: 25.0,
            air_capacitance_multiplier: 1.0,
            internal_gain: 0.0,
        }
    }
}

/// The calibratable zone model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingModel {
    /// Zone air volume, m³.
    pub zone_volume: f64,
    /// Scales the zone air capacitance to stand in for furniture and other
    /// fast-coupled mass.
    pub air_capacitance_multiplier: f64,
    /// Constant internal heat gain, W.
    pub internal_gain: f64,
    pub surfaces: Vec<SurfaceSpec>,
    pub hvac: HvacSpec,
}

impl BuildingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.zone_volume > 0.0) {
            return Err(Error::Config(format!(
                "zone_volume must be > 0 (got {})",
                self.zone_volume
            )));
        }
        if self.surfaces.is_empty() {
            return Err(Error::Config("model has no surfaces".into()));
        }
        if !(self.air_capacitance_multiplier > 0.0) {
            return Err(Error::Config(
                "air_capacitance_multiplier must be > 0".into(),
            ));
        }
        for s in &self.surfaces {
            s.validate()?;
        }
        self.hvac.validate()
    }

    /// Zone air heat capacity, J/K.
    pub fn zone_capacitance(&self) -> f64 {
        RHO_AIR * CP_AIR * self.zone_volume * self.air_capacitance_multiplier
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("serialize model");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<BuildingModel> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: BuildingModel =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// The element materials, HVAC spec, and build defaults that parameterize
/// model construction; this is the schema of the shipped default parameter
/// file.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub materials: MaterialSet,
    pub hvac: HvacSpec,
    pub defaults: BuildDefaults,
}

impl ModelParams {
    pub fn read_json(path: &Path) -> Result<ModelParams> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("serialize params");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// Build a zone model from extracted geometry: one surface element per
/// geometry surface, materials assigned by class. The floor is treated as
/// adiabatic mass (interior); everything else faces outdoor air.
pub fn build_model(
    geometry: &BuildingGeometry,
    materials: &MaterialSet,
    hvac: HvacSpec,
    defaults: &BuildDefaults,
) -> Result<BuildingModel> {
    materials.validate()?;
    hvac.validate()?;
    if geometry.surfaces.is_empty() {
        return Err(Error::Config("geometry has no surfaces".into()));
    }
    if !(geometry.volume > 0.0) {
        return Err(Error::Config(format!(
            "geometry volume must be > 0 (got {})",
            geometry.volume
        )));
    }
    let surfaces = geometry
        .surfaces
        .iter()
        .map(|g| SurfaceSpec {
            name: g.name.clone(),
            class: g.class,
            area: g.area,
            material: materials.get(g.class),
            exterior: g.class != SurfaceClass::Floor,
            h_in: defaults.h_in,
            h_out: defaults.h_out,
        })
        .collect();
    let model = BuildingModel {
        zone_volume: geometry.volume,
        air_capacitance_multiplier: defaults.air_capacitance_multiplier,
        internal_gain: defaults.internal_gain,
        surfaces,
        hvac,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum HvacRegime {
    Off,
    FlowLimited,
    CapacityLimited,
}

struct SurfNode {
    /// Capacitance, J/K.
    c: f64,
    /// Conductance surface ↔ zone, W/K (both faces for interior surfaces).
    g_zone: f64,
    /// Conductance surface ↔ outdoor air, W/K (zero for interior surfaces).
    g_out: f64,
}

/// Stepwise zone simulator carrying the full nodal state, usable directly
/// when a run needs mid-course model swaps or custom forcing.
pub struct Simulator {
    c_zone: f64,
    gain: f64,
    hvac: HvacSpec,
    nodes: Vec<SurfNode>,
    /// `[t_zone, t_surface...]`, °C.
    state: Vec<f64>,
    steps: usize,
}

impl Simulator {
    /// Initializes the zone at `t_init`; surface nodes start at their static
    /// balance for that zone temperature and `t_out`, so a model started at
    /// its steady state stays there.
    pub fn new(model: &BuildingModel, t_init: f64, t_out: f64) -> Result<Simulator> {
        model.validate()?;
        let nodes: Vec<SurfNode> = model
            .surfaces
            .iter()
            .map(|s| {
                let g_in = 1.0 / s.r_in();
                let g_out = 1.0 / s.r_out();
                if s.exterior {
                    SurfNode { c: s.capacitance(), g_zone: g_in, g_out }
                } else {
                    SurfNode { c: s.capacitance(), g_zone: g_in + g_out, g_out: 0.0 }
                }
            })
            .collect();
        let mut state = Vec::with_capacity(nodes.len() + 1);
        state.push(t_init);
        for n in &nodes {
            let boundary = if n.g_out > 0.0 { t_out } else { t_init };
            state.push((n.g_zone * t_init + n.g_out * boundary) / (n.g_zone + n.g_out));
        }
        Ok(Simulator {
            c_zone: model.zone_capacitance(),
            gain: model.internal_gain,
            hvac: model.hvac,
            nodes,
            state,
            steps: 0,
        })
    }

    pub fn zone_temp(&self) -> f64 {
        self.state[0]
    }

    /// Full nodal state `[t_zone, t_surface...]`.
    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.state.len() {
            return Err(Error::InvalidInput(format!(
                "state has {} entries, model has {} nodes",
                state.len(),
                self.state.len()
            )));
        }
        self.state.copy_from_slice(state);
        Ok(())
    }

    /// Replace the HVAC spec mid-run (used by drift experiments).
    pub fn set_hvac(&mut self, hvac: HvacSpec) {
        self.hvac = hvac;
    }

    /// Backward-Euler solve of one step under a fixed HVAC regime.
    ///
    /// Surface equations are eliminated into the zone equation (the network
    /// is a star), leaving a scalar solve:
    ///   T_s = (a_s + g_z,s · T_z) / b_s
    /// with a_s = (C_s/dt)·T_sⁿ + g_out,s·T_out and b_s the surface diagonal.
    fn solve(&self, regime: HvacRegime, t_out: f64, dt: f64) -> Vec<f64> {
        let g_flow = self.hvac.flow_conductance();
        let (g_hvac, q_hvac) = match regime {
            HvacRegime::Off => (0.0, 0.0),
            HvacRegime::FlowLimited => (g_flow, g_flow * self.hvac.supply_temp),
            HvacRegime::CapacityLimited => (0.0, -self.hvac.cooling_capacity),
        };
        let cz_dt = self.c_zone / dt;
        let mut diag = cz_dt + g_hvac;
        let mut rhs = cz_dt * self.state[0] + q_hvac + self.gain;
        let mut elim = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let a = (n.c / dt) * self.state[i + 1] + n.g_out * t_out;
            let b = n.c / dt + n.g_zone + n.g_out;
            diag += n.g_zone - n.g_zone * n.g_zone / b;
            rhs += n.g_zone * a / b;
            elim.push((a, b));
        }
        let t_zone = rhs / diag;
        let mut next = Vec::with_capacity(self.state.len());
        next.push(t_zone);
        for (n, (a, b)) in self.nodes.iter().zip(&elim) {
            next.push((a + n.g_zone * t_zone) / b);
        }
        next
    }

    /// Advance one implicit step. The HVAC regime is chosen to be consistent
    /// with the end-of-step zone temperature: flow-limited transfer wins when
    /// it stays under capacity, the capacity cap otherwise, and the unit is
    /// idle when off or when the zone would end at/below supply temperature.
    pub fn step(&mut self, t_out: f64, hvac_on: bool, dt: f64) -> Result<StepRecord> {
        let (next, regime) = if !hvac_on {
            (self.solve(HvacRegime::Off, t_out, dt), HvacRegime::Off)
        } else {
            let flow = self.solve(HvacRegime::FlowLimited, t_out, dt);
            if flow[0] <= self.hvac.supply_temp {
                (self.solve(HvacRegime::Off, t_out, dt), HvacRegime::Off)
            } else {
                let flow_power = self.hvac.flow_conductance() * (flow[0] - self.hvac.supply_temp);
                if flow_power <= self.hvac.cooling_capacity {
                    (flow, HvacRegime::FlowLimited)
                } else {
                    let capped = self.solve(HvacRegime::CapacityLimited, t_out, dt);
                    let implied =
                        self.hvac.flow_conductance() * (capped[0] - self.hvac.supply_temp);
                    if implied >= self.hvac.cooling_capacity {
                        (capped, HvacRegime::CapacityLimited)
                    } else {
                        (flow, HvacRegime::FlowLimited)
                    }
                }
            }
        };
        self.steps += 1;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { step: self.steps });
        }
        let hvac_w = match regime {
            HvacRegime::Off => 0.0,
            HvacRegime::FlowLimited => {
                -self.hvac.flow_conductance() * (next[0] - self.hvac.supply_temp)
            }
            HvacRegime::CapacityLimited => -self.hvac.cooling_capacity,
        };
        let record = StepRecord {
            prev: std::mem::replace(&mut self.state, next),
            t_out,
            dt,
            hvac_w,
        };
        Ok(record)
    }

    /// Discrete balance residual of the step that produced `state` from
    /// `record.prev`, with the zone entry optionally overridden (for checking
    /// recorded traces). Returns (max |residual| W, max nodal flux W).
    fn step_residual(&self, record: &StepRecord, zone_override: Option<f64>) -> (f64, f64) {
        let dt = record.dt;
        let t_zone = zone_override.unwrap_or(self.state[0]);
        let mut max_res: f64 = 0.0;
        let mut max_flux: f64 = 0.0;

        // Zone node balance.
        let mut zone_flux_in = record.hvac_w + self.gain;
        let mut zone_flux_abs = record.hvac_w.abs() + self.gain.abs();
        for (i, n) in self.nodes.iter().enumerate() {
            let f = n.g_zone * (self.state[i + 1] - t_zone);
            zone_flux_in += f;
            zone_flux_abs += f.abs();
        }
        let zone_res = self.c_zone / dt * (t_zone - record.prev[0]) - zone_flux_in;
        max_res = max_res.max(zone_res.abs());
        max_flux = max_flux.max(zone_flux_abs);

        // Surface nodes.
        for (i, n) in self.nodes.iter().enumerate() {
            let t_s = self.state[i + 1];
            let f_zone = n.g_zone * (t_zone - t_s);
            let f_out = n.g_out * (record.t_out - t_s);
            let res = n.c / dt * (t_s - record.prev[i + 1]) - f_zone - f_out;
            max_res = max_res.max(res.abs());
            max_flux = max_flux.max(f_zone.abs() + f_out.abs());
        }
        (max_res, max_flux)
    }

    /// Static series conductance of the envelope around the zone node, W/K.
    fn envelope_conductance(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| n.g_out > 0.0)
            .map(|n| n.g_zone * n.g_out / (n.g_zone + n.g_out))
            .sum()
    }
}

/// What one solver step did; consumed by the residual check.
pub struct StepRecord {
    prev: Vec<f64>,
    t_out: f64,
    dt: f64,
    hvac_w: f64,
}

/// Trace plus the full nodal history at the output timestamps.
pub struct SimOutput {
    pub trace: Trace,
    /// `node_temps[i]` is the state `[t_zone, t_surface...]` at timestamp i.
    pub node_temps: Vec<Vec<f64>>,
}

fn substeps(span: f64, dt: f64) -> usize {
    ((span / dt - 1e-9).ceil() as usize).max(1)
}

/// Simulate the zone over the weather horizon.
///
/// Outdoor temperature and the HVAC flag are held constant across each
/// weather interval; intervals longer than `dt` are tiled with equal
/// substeps no longer than `dt`. The trace is sampled at the weather
/// timestamps, starting from `t_init`.
pub fn simulate(
    model: &BuildingModel,
    weather: &WeatherSeries,
    schedule: &[bool],
    dt: f64,
    t_init: f64,
) -> Result<Trace> {
    Ok(simulate_detailed(model, weather, schedule, dt, t_init)?.trace)
}

/// [`simulate`], but also returning the nodal temperature history.
pub fn simulate_detailed(
    model: &BuildingModel,
    weather: &WeatherSeries,
    schedule: &[bool],
    dt: f64,
    t_init: f64,
) -> Result<SimOutput> {
    weather.validate()?;
    let sim = Simulator::new(model, t_init, weather.t_out[0])?;
    run_simulation(sim, weather, schedule, dt)
}

/// Simulate starting from an explicit nodal state `[t_zone, t_surface...]`
/// instead of the default static initialization. Used when continuing a run
/// across a model swap or fitting a window of a longer recording.
pub fn simulate_from_state(
    model: &BuildingModel,
    weather: &WeatherSeries,
    schedule: &[bool],
    dt: f64,
    state: &[f64],
) -> Result<Trace> {
    weather.validate()?;
    let mut sim = Simulator::new(model, state[0], weather.t_out[0])?;
    sim.set_state(state)?;
    Ok(run_simulation(sim, weather, schedule, dt)?.trace)
}

fn run_simulation(
    mut sim: Simulator,
    weather: &WeatherSeries,
    schedule: &[bool],
    dt: f64,
) -> Result<SimOutput> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be > 0 (got {dt})")));
    }
    if schedule.len() != weather.len() {
        return Err(Error::Alignment(format!(
            "schedule has {} entries, weather has {}",
            schedule.len(),
            weather.len()
        )));
    }
    let mut t_zone = Vec::with_capacity(weather.len());
    let mut node_temps = Vec::with_capacity(weather.len());
    t_zone.push(sim.zone_temp());
    node_temps.push(sim.state().to_vec());
    for i in 0..weather.len().saturating_sub(1) {
        let span = weather.timestamps[i + 1] - weather.timestamps[i];
        let n_sub = substeps(span, dt);
        let h = span / n_sub as f64;
        for _ in 0..n_sub {
            sim.step(weather.t_out[i], schedule[i], h)?;
        }
        t_zone.push(sim.zone_temp());
        node_temps.push(sim.state().to_vec());
    }
    Ok(SimOutput {
        trace: Trace {
            timestamps: weather.timestamps.clone(),
            t_zone,
            hvac_on: schedule.to_vec(),
        },
        node_temps,
    })
}

/// Static zone temperature under constant outdoor temperature and constant
/// injected power: `t_out + power / G_envelope`.
pub fn steady_state(model: &BuildingModel, t_out: f64, hvac_power: f64, gains: f64) -> Result<f64> {
    model.validate()?;
    let sim = Simulator::new(model, t_out, t_out)?;
    let g_total = sim.envelope_conductance();
    let power = hvac_power + gains;
    if g_total <= 0.0 {
        if power == 0.0 {
            return Ok(t_out);
        }
        return Err(Error::UnboundedSteadyState);
    }
    Ok(t_out + power / g_total)
}

/// Result of re-checking a trace against the discrete energy balance.
#[derive(Clone, Copy, Debug)]
pub struct ResidualReport {
    /// Largest absolute balance violation found, W.
    pub max_residual_w: f64,
    /// Largest nodal flux encountered, W — the natural scale for the
    /// residual.
    pub peak_flux_w: f64,
}

/// Re-run the integration and evaluate the backward-Euler balance at every
/// substep; at each output timestamp the recorded zone temperature is checked
/// in place of the recomputed one, so a tampered trace shows up as a large
/// residual at that step.
pub fn energy_residual(
    model: &BuildingModel,
    trace: &Trace,
    weather: &WeatherSeries,
    schedule: &[bool],
    dt: f64,
) -> Result<ResidualReport> {
    weather.validate()?;
    trace.validate()?;
    if trace.len() != weather.len() {
        return Err(Error::Alignment(format!(
            "trace has {} samples, weather has {}",
            trace.len(),
            weather.len()
        )));
    }
    if schedule.len() != weather.len() {
        return Err(Error::Alignment("schedule length mismatch".into()));
    }
    let mut sim = Simulator::new(model, trace.t_zone[0], weather.t_out[0])?;
    let mut max_residual: f64 = 0.0;
    let mut peak_flux: f64 = 0.0;
    for i in 0..weather.len().saturating_sub(1) {
        let span = weather.timestamps[i + 1] - weather.timestamps[i];
        let n_sub = substeps(span, dt);
        let h = span / n_sub as f64;
        for k in 0..n_sub {
            let record = sim.step(weather.t_out[i], schedule[i], h)?;
            let (res, flux) = sim.step_residual(&record, None);
            max_residual = max_residual.max(res);
            peak_flux = peak_flux.max(flux);
            if k == n_sub - 1 {
                let (res, _) = sim.step_residual(&record, Some(trace.t_zone[i + 1]));
                max_residual = max_residual.max(res);
            }
        }
    }
    Ok(ResidualReport {
        max_residual_w: max_residual,
        peak_flux_w: peak_flux,
    })
}

/// Hysteresis thermostat for synthetic-data generation: switches on above
/// `setpoint + deadband`, off below `setpoint - deadband`. Returns the
/// schedule it drove, aligned to the weather timestamps.
pub fn thermostat_schedule(
    model: &BuildingModel,
    weather: &WeatherSeries,
    setpoint: f64,
    deadband: f64,
    dt: f64,
    t_init: f64,
) -> Result<Vec<bool>> {
    weather.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be > 0 (got {dt})")));
    }
    let mut sim = Simulator::new(model, t_init, weather.t_out[0])?;
    let mut on = false;
    let mut schedule = Vec::with_capacity(weather.len());
    for i in 0..weather.len() {
        let t = sim.zone_temp();
        if t > setpoint + deadband {
            on = true;
        } else if t < setpoint - deadband {
            on = false;
        }
        schedule.push(on);
        if i + 1 < weather.len() {
            let span = weather.timestamps[i + 1] - weather.timestamps[i];
            let n_sub = substeps(span, dt);
            let h = span / n_sub as f64;
            for _ in 0..n_sub {
                sim.step(weather.t_out[i], on, h)?;
            }
        }
    }
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn default_model() -> BuildingModel {
        build_model(
            &BuildingGeometry::default_room(),
            &MaterialSet::default(),
            HvacSpec::default(),
            &BuildDefaults::default(),
        )
        .unwrap()
    }

    #[test]
    fn build_model_assigns_surfaces_and_conductances() {
        let model = default_model();
        let walls: Vec<_> = model
            .surfaces
            .iter()
            .filter(|s| s.class == SurfaceClass::Wall)
            .collect();
        assert_eq!(walls.len(), 4);
        assert_eq!(
            model.surfaces.iter().filter(|s| s.class == SurfaceClass::Roof).count(),
            1
        );
        assert_eq!(
            model.surfaces.iter().filter(|s| s.class == SurfaceClass::Floor).count(),
            1
        );
        // Wall conduction per unit area, before films: k / L.
        let wall = walls[0];
        assert_abs_diff_eq!(
            wall.material.conductivity / wall.material.thickness,
            1.0367,
            epsilon = 1e-4
        );
        let window = model
            .surfaces
            .iter()
            .find(|s| s.class == SurfaceClass::Window)
            .unwrap();
        assert_abs_diff_eq!(
            window.material.conductivity / window.material.thickness,
            274.2,
            epsilon = 0.05
        );
        // Floor is the one interior (adiabatic-to-ambient) surface.
        assert!(model.surfaces.iter().all(|s| s.exterior ^ (s.class == SurfaceClass::Floor)));
    }

    #[test]
    fn empty_geometry_is_rejected() {
        let geometry = BuildingGeometry { volume: 60.0, surfaces: Vec::new() };
        assert!(matches!(
            build_model(
                &geometry,
                &MaterialSet::default(),
                HvacSpec::default(),
                &BuildDefaults::default()
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hvac_power_flow_and_capacity_limits() {
        let hvac = HvacSpec::default();
        assert_eq!(hvac_power(&hvac, 24.0, false), 0.0);
        assert_eq!(hvac_power(&hvac, 10.0, true), 0.0);
        // Flow-limited: ρ·cp·V̇·ΔT = 1.204·1005·0.384·10.
        let expected = -(RHO_AIR * CP_AIR * 0.384 * 10.0);
        assert_abs_diff_eq!(hvac_power(&hvac, 24.0, true), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(hvac_power(&hvac, 24.0, true), -4646.5, epsilon = 0.05);
        // Capacity-limited at 40 °C: flow could carry 12081 W > 8943 W.
        assert_abs_diff_eq!(hvac_power(&hvac, 40.0, true), -8943.0, epsilon = 1e-9);
    }

    #[test]
    fn hvac_power_magnitude_is_monotone_in_zone_temp() {
        let hvac = HvacSpec::default();
        let mut last = 0.0;
        for i in 0..200 {
            let t = 5.0 + i as f64 * 0.25;
            let mag = hvac_power(&hvac, t, true).abs();
            assert!(mag >= last, "at t={t}");
            last = mag;
        }
    }

    #[test]
    fn equilibrium_inputs_are_a_fixed_point() {
        let model = default_model();
        let weather = WeatherSeries::constant(30.0, 24.0 * 3600.0, 600.0);
        let schedule = vec![false; weather.len()];
        let trace = simulate(&model, &weather, &schedule, 60.0, 30.0).unwrap();
        for &t in &trace.t_zone {
            assert_abs_diff_eq!(t, 30.0, epsilon = 1e-9);
        }

        // Now with internal gains, starting exactly at the static balance.
        let mut warm = model.clone();
        warm.internal_gain = 500.0;
        let t_ss = steady_state(&warm, 30.0, 0.0, 500.0).unwrap();
        let trace = simulate(&warm, &weather, &schedule, 60.0, t_ss).unwrap();
        for &t in &trace.t_zone {
            assert_abs_diff_eq!(t, t_ss, epsilon = 1e-9);
        }
    }

    #[test]
    fn warming_toward_constant_outdoor_is_monotone_and_matches_rk4() {
        let model = default_model();
        let weather = WeatherSeries::constant(35.0, 48.0 * 3600.0, 600.0);
        let schedule = vec![false; weather.len()];
        let trace = simulate(&model, &weather, &schedule, 5.0, 25.0).unwrap();
        for pair in trace.t_zone.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12, "not monotone: {pair:?}");
        }
        assert!(*trace.t_zone.last().unwrap() < 35.0 + 1e-9);

        // Independent oracle: assemble the ODE from the surface formulas and
        // integrate with RK4 at a fine step.
        let reference = rk4_reference(&model, 35.0, 25.0, 48.0 * 3600.0, 0.5);
        let horizon_end = *trace.t_zone.last().unwrap();
        assert_abs_diff_eq!(horizon_end, reference, epsilon = 0.2);
    }

    /// RK4 integration of the same star network, assembled independently
    /// from the material formulas.
    fn rk4_reference(model: &BuildingModel, t_out: f64, t_init: f64, horizon: f64, h: f64) -> f64 {
        let n = model.surfaces.len();
        let cz = model.zone_capacitance();
        let gz: Vec<f64> = model
            .surfaces
            .iter()
            .map(|s| {
                if s.exterior {
                    1.0 / s.r_in()
                } else {
                    1.0 / s.r_in() + 1.0 / s.r_out()
                }
            })
            .collect();
        let go: Vec<f64> = model
            .surfaces
            .iter()
            .map(|s| if s.exterior { 1.0 / s.r_out() } else { 0.0 })
            .collect();
        let cs: Vec<f64> = model.surfaces.iter().map(|s| s.capacitance()).collect();

        let deriv = |x: &[f64]| -> Vec<f64> {
            let mut dx = vec![0.0; n + 1];
            let tz = x[0];
            let mut q_zone = model.internal_gain;
            for i in 0..n {
                q_zone += gz[i] * (x[i + 1] - tz);
                dx[i + 1] = (gz[i] * (tz - x[i + 1]) + go[i] * (t_out - x[i + 1])) / cs[i];
            }
            dx[0] = q_zone / cz;
            dx
        };

        // Same initialization rule as the simulator.
        let mut x = vec![t_init];
        for i in 0..n {
            let boundary = if go[i] > 0.0 { t_out } else { t_init };
            x.push((gz[i] * t_init + go[i] * boundary) / (gz[i] + go[i]));
        }
        let steps = (horizon / h).round() as usize;
        for _ in 0..steps {
            let k1 = deriv(&x);
            let x2: Vec<f64> = x.iter().zip(&k1).map(|(v, d)| v + 0.5 * h * d).collect();
            let k2 = deriv(&x2);
            let x3: Vec<f64> = x.iter().zip(&k2).map(|(v, d)| v + 0.5 * h * d).collect();
            let k3 = deriv(&x3);
            let x4: Vec<f64> = x.iter().zip(&k3).map(|(v, d)| v + h * d).collect();
            let k4 = deriv(&x4);
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        x[0]
    }

    #[test]
    fn long_horizon_reaches_steady_state() {
        let mut model = default_model();
        model.internal_gain = 800.0;
        let t_ss = steady_state(&model, 32.0, 0.0, 800.0).unwrap();
        // The slowest coupled mode has a time constant of roughly three
        // days; forty days leaves no visible transient.
        let weather = WeatherSeries::constant(32.0, 40.0 * 86400.0, 3600.0);
        let schedule = vec![false; weather.len()];
        let trace = simulate(&model, &weather, &schedule, 600.0, 20.0).unwrap();
        assert_abs_diff_eq!(*trace.t_zone.last().unwrap(), t_ss, epsilon = 1e-3);
    }

    #[test]
    fn steady_state_balance_arithmetic() {
        // One exterior surface engineered so 1/(R_in + R_out) = 10 W/K.
        let material = Material {
            thickness: 0.1,
            conductivity: 1.0,
            density: 1000.0,
            specific_heat: 1000.0,
        };
        // Per m²: R = 1/h_out + L/k + 1/h_in = 0.02 + 0.1 + 0.08 = 0.2;
        // with area 2 m² the series conductance is 10 W/K.
        let model = BuildingModel {
            zone_volume: 10.0,
            air_capacitance_multiplier: 1.0,
            internal_gain: 0.0,
            surfaces: vec![SurfaceSpec {
                name: "panel".into(),
                class: SurfaceClass::Wall,
                area: 2.0,
                material,
                exterior: true,
                h_in: 12.5,
                h_out: 50.0,
            }],
            hvac: HvacSpec::default(),
        };
        let t = steady_state(&model, 35.0, -100.0, 0.0).unwrap();
        assert_abs_diff_eq!(t, 25.0, epsilon = 1e-12);
        assert_abs_diff_eq!(steady_state(&model, 35.0, 0.0, 0.0).unwrap(), 35.0, epsilon = 1e-12);
    }

    #[test]
    fn steady_state_matches_dense_linear_solve() {
        use nalgebra::{DMatrix, DVector};
        let model = default_model();
        let t_out = 40.0;
        let power = -4646.5;

        // Independent oracle: assemble the full static conductance matrix
        // and solve it densely.
        let n = model.surfaces.len();
        let mut g = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut b = DVector::<f64>::zeros(n + 1);
        b[0] += power;
        for (i, s) in model.surfaces.iter().enumerate() {
            let g_in = 1.0 / s.r_in();
            let g_out = 1.0 / s.r_out();
            let (g_zone, g_boundary) = if s.exterior {
                (g_in, g_out)
            } else {
                (g_in + g_out, 0.0)
            };
            g[(0, 0)] += g_zone;
            g[(0, i + 1)] -= g_zone;
            g[(i + 1, 0)] -= g_zone;
            g[(i + 1, i + 1)] += g_zone + g_boundary;
            b[i + 1] += g_boundary * t_out;
        }
        let solution = g.lu().solve(&b).expect("static network is invertible");

        let analytic = steady_state(&model, t_out, power, 0.0).unwrap();
        assert_abs_diff_eq!(analytic, solution[0], epsilon = 1e-9);
    }

    #[test]
    fn residual_is_tiny_for_honest_traces_and_large_for_tampered() {
        let model = default_model();
        let weather = WeatherSeries::sinusoidal_daily(1.0, 600.0, 32.0, 6.0, 15.0);
        let schedule = daily_schedule(&weather.timestamps, 10.0, 18.0);
        let trace = simulate(&model, &weather, &schedule, 60.0, 25.0).unwrap();

        let report = energy_residual(&model, &trace, &weather, &schedule, 60.0).unwrap();
        assert!(
            report.max_residual_w <= 1e-6 * report.peak_flux_w,
            "residual {} vs peak flux {}",
            report.max_residual_w,
            report.peak_flux_w
        );

        let mut tampered = trace.clone();
        let mid = tampered.t_zone.len() / 2;
        tampered.t_zone[mid] += 1.0;
        let bad = energy_residual(&model, &tampered, &weather, &schedule, 60.0).unwrap();
        assert!(
            bad.max_residual_w > 1e-3 * bad.peak_flux_w,
            "tampering went unnoticed: {} vs {}",
            bad.max_residual_w,
            bad.peak_flux_w
        );
    }

    #[test]
    fn residual_matches_hand_computed_two_node_step() {
        // One surface, one step of dt = 60 s, solved by hand via the 2x2
        // system. Chosen numbers keep the arithmetic exact to write down.
        let material = Material {
            thickness: 0.2,
            conductivity: 0.5,
            density: 800.0,
            specific_heat: 1000.0,
        };
        let model = BuildingModel {
            zone_volume: 30.0,
            air_capacitance_multiplier: 1.0,
            internal_gain: 0.0,
            surfaces: vec![SurfaceSpec {
                name: "slab".into(),
                class: SurfaceClass::Wall,
                area: 10.0,
                material,
                exterior: true,
                h_in: 10.0,
                h_out: 25.0,
            }],
            hvac: HvacSpec::default(),
        };
        let dt = 60.0;
        let t_out = 35.0;
        let t_init = 20.0;

        let s = &model.surfaces[0];
        let g_in = 1.0 / s.r_in();
        let g_out = 1.0 / s.r_out();
        let cs = s.capacitance();
        let cz = model.zone_capacitance();
        let ts0 = (g_in * t_init + g_out * t_out) / (g_in + g_out);

        // Hand solve of the 2x2 backward-Euler system by direct elimination.
        let b_s = cs / dt + g_in + g_out;
        let a_s = cs / dt * ts0 + g_out * t_out;
        let diag = cz / dt + g_in - g_in * g_in / b_s;
        let rhs = cz / dt * t_init + g_in * a_s / b_s;
        let tz1 = rhs / diag;
        let ts1 = (a_s + g_in * tz1) / b_s;

        let mut sim = Simulator::new(&model, t_init, t_out).unwrap();
        let record = sim.step(t_out, false, dt).unwrap();
        assert_abs_diff_eq!(sim.state()[0], tz1, epsilon = 1e-12);
        assert_abs_diff_eq!(sim.state()[1], ts1, epsilon = 1e-12);
        let (res, _) = sim.step_residual(&record, None);
        assert!(res < 1e-9, "hand-checked step residual {res}");
    }

    #[test]
    fn temperatures_stay_bounded_for_all_step_sizes() {
        let model = default_model();
        let weather = WeatherSeries::sinusoidal_daily(2.0, 300.0, 32.0, 6.0, 15.0);
        let schedule = daily_schedule(&weather.timestamps, 10.0, 18.0);
        let t_init = 25.0;
        let lo = weather
            .t_out
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
            .min(t_init)
            .min(model.hvac.supply_temp);
        let hi = weather
            .t_out
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            .max(t_init)
            .max(model.hvac.supply_temp);
        for dt in [1.0, 60.0, 3600.0] {
            let out = simulate_detailed(&model, &weather, &schedule, dt, t_init).unwrap();
            for state in &out.node_temps {
                for &t in state {
                    assert!(t.is_finite());
                    assert!(
                        t >= lo - 1e-9 && t <= hi + 1e-9,
                        "dt={dt}: node at {t} outside [{lo}, {hi}]"
                    );
                }
            }
        }
    }

    #[test]
    fn halving_dt_halves_the_error() {
        let model = default_model();
        let weather = WeatherSeries::sinusoidal_daily(0.25, 600.0, 30.0, 6.0, 15.0);
        let schedule = vec![false; weather.len()];
        let reference = simulate(&model, &weather, &schedule, 0.1, 25.0).unwrap();
        let max_err = |dt: f64| -> f64 {
            let t = simulate(&model, &weather, &schedule, dt, 25.0).unwrap();
            t.t_zone
                .iter()
                .zip(&reference.t_zone)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let e8 = max_err(8.0);
        let e4 = max_err(4.0);
        let ratio = e8 / e4;
        assert!(
            (1.7..=2.3).contains(&ratio),
            "convergence ratio {ratio} (e8={e8}, e4={e4})"
        );
    }

    #[test]
    fn thermostat_hysteresis_switches_in_band() {
        let model = default_model();
        let weather = WeatherSeries::constant(38.0, 24.0 * 3600.0, 300.0);
        let schedule = thermostat_schedule(&model, &weather, 24.0, 0.5, 60.0, 30.0).unwrap();
        assert!(schedule.iter().any(|&s| s), "hot room never triggered cooling");
        let trace = simulate(&model, &weather, &schedule, 60.0, 30.0).unwrap();
        // After the initial pulldown the zone hovers around the setpoint;
        // the hover band is wider than the deadband because the zone keeps
        // moving between 300-second decisions.
        let half = trace.t_zone.len() / 2;
        let tail = &trace.t_zone[half..];
        for &t in tail {
            assert!(t > 20.0 && t < 30.0, "zone at {t} escaped the thermostat band");
        }
        let tail_schedule = &schedule[half..];
        assert!(tail_schedule.iter().any(|&s| s), "thermostat stopped cycling");
        assert!(tail_schedule.iter().any(|&s| !s), "thermostat stuck on");
    }

    #[test]
    fn model_json_round_trips() {
        let model = default_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.write_json(&path).unwrap();
        let back = BuildingModel::read_json(&path).unwrap();
        assert_eq!(back.surfaces.len(), model.surfaces.len());
        assert_eq!(back.hvac, model.hvac);
        assert_eq!(back.zone_volume, model.zone_volume);
    }
}
