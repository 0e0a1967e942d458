//! Scenario builders shared by the integration suites.

use nalgebra::Vector3;

use roomtherm::plane_fit::FitResult;
use roomtherm::pointcloud::{GroundTruth, SyntheticRoomSpec};
use roomtherm::thermal::{
    build_model, daily_schedule, merge_stream, simulate, BuildDefaults, BuildingGeometry,
    BuildingModel, GeomSurface, HvacSpec, Material, MaterialSet, Simulator, StreamSample,
    SurfaceClass, Trace, WeatherSeries,
};

/// The stock 5x4x3 room (window and door included) with default materials.
pub fn default_room_model() -> BuildingModel {
    build_model(
        &BuildingGeometry::default_room(),
        &MaterialSet::default(),
        HvacSpec::default(),
        &BuildDefaults::default(),
    )
    .unwrap()
}

/// The benchmark scan recipe: noisy, cluttered, no ceiling.
pub fn benchmark_spec(seed: u64) -> SyntheticRoomSpec {
    SyntheticRoomSpec {
        noise_sigma: 0.005,
        outlier_fraction: 0.1,
        density: 200.0,
        seed,
        ..SyntheticRoomSpec::default()
    }
}

/// Match each ground-truth plane to its closest fit; returns
/// (angle error degrees, offset error meters) per truth plane.
pub fn plane_errors(truth: &GroundTruth, fits: &[FitResult]) -> Vec<(f64, f64)> {
    truth
        .planes
        .iter()
        .map(|t| {
            let normal = Vector3::from(t.normal);
            fits.iter()
                .map(|f| {
                    let angle = f.plane.angle_to(&normal).to_degrees();
                    let offset = (f.plane.d - t.d).abs();
                    (angle, offset)
                })
                .min_by(|a, b| {
                    (a.0 + a.1 * 100.0)
                        .partial_cmp(&(b.0 + b.1 * 100.0))
                        .unwrap()
                })
                .unwrap()
        })
        .collect()
}

/// 48-hour recovery scenario matching the default pipeline configuration:
/// sinusoidal weather, daytime cooling, five-minute samples.
pub fn recovery_scenario(model: &BuildingModel) -> (WeatherSeries, Trace) {
    let weather = WeatherSeries::sinusoidal_daily(2.0, 300.0, 32.0, 6.0, 15.0);
    let schedule = daily_schedule(&weather.timestamps, 10.0, 18.0);
    let trace = simulate(model, &weather, &schedule, f64::INFINITY, 26.0).unwrap();
    (weather, trace)
}

/// Hot scenario with internal gains and extra air-side mass so the cooling
/// capacity binds during the morning pulldown and becomes identifiable.
pub fn capacity_model() -> BuildingModel {
    let mut model = default_room_model();
    model.internal_gain = 5200.0;
    model.air_capacitance_multiplier = 10.0;
    model
}

pub fn capacity_scenario(model: &BuildingModel, days: f64) -> (WeatherSeries, Trace) {
    let weather = WeatherSeries::sinusoidal_daily(days, 300.0, 38.0, 6.0, 15.0);
    let schedule = daily_schedule(&weather.timestamps, 10.0, 18.0);
    let trace = simulate(model, &weather, &schedule, f64::INFINITY, 36.0).unwrap();
    (weather, trace)
}

/// Lightweight, heavily glazed server cabin cooled around the clock; reacts
/// within minutes, so capacity faults surface quickly.
pub fn monitoring_model() -> BuildingModel {
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

/// Two cool days, then a severe heat wave.
pub fn monitoring_weather(days: f64) -> WeatherSeries {
    let mut weather = WeatherSeries::sinusoidal_daily(days, 300.0, 0.0, 2.0, 15.0);
    for (t, v) in weather.timestamps.iter().zip(weather.t_out.iter_mut()) {
        *v += if *t < 2.0 * 86_400.0 { 10.0 } else { 50.0 };
    }
    weather
}

/// Monitoring stream with the plant's cooling capacity dropping to
/// `new_capacity` at `drop_day` (infinity for a healthy control stream).
pub fn monitoring_stream(days: f64, drop_day: f64, new_capacity: f64) -> Vec<StreamSample> {
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
