//! Continuous monitoring: replay a week of recorded data through the
//! watchdog while the plant's cooling capacity silently drops 30% on day
//! two, and watch the re-calibration event fire.
//!
//! ```bash
//! cargo run -p roomtherm --example watchdog_drift
//! ```

use roomtherm::calibrate::{
    watchdog, CalibrationConfig, ParamEntry, ParamPath, ParameterSpace, WatchdogConfig,
};
use roomtherm::thermal::{
    build_model, merge_stream, BuildDefaults, BuildingGeometry, GeomSurface, HvacSpec, Material,
    MaterialSet, Simulator, SurfaceClass, Trace, WeatherSeries,
};

fn main() -> roomtherm::Result<()> {
    // A lightweight, heavily glazed server cabin cooled around the clock:
    // low thermal mass, so a capacity fault shows up within minutes.
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
    let foam = Material { thickness: 0.05, conductivity: 0.04, density: 40.0, specific_heat: 1400.0 };
    let materials = MaterialSet {
        wall: foam,
        roof: Material { thickness: 0.08, ..foam },
        floor: Material { thickness: 0.01, conductivity: 1.4, density: 500.0, specific_heat: 1000.0 },
        ..MaterialSet::default()
    };
    let mut model = build_model(&geometry, &materials, HvacSpec::default(), &BuildDefaults::default())?;
    model.internal_gain = 8000.0;

    // Two cool days, then a heat wave; the unit loses 30% of its capacity at
    // the start of day two.
    let mut weather = WeatherSeries::sinusoidal_daily(7.0, 300.0, 0.0, 2.0, 15.0);
    for (t, v) in weather.timestamps.iter().zip(weather.t_out.iter_mut()) {
        *v += if *t < 2.0 * 86_400.0 { 10.0 } else { 50.0 };
    }
    let schedule = vec![true; weather.len()];
    let mut plant = Simulator::new(&model, 27.0, weather.t_out[0])?;
    let mut t_zone = vec![27.0];
    for i in 0..weather.len() - 1 {
        if weather.timestamps[i] >= 2.0 * 86_400.0 {
            let mut hvac = model.hvac;
            hvac.cooling_capacity = model.hvac.cooling_capacity * 0.7;
            plant.set_hvac(hvac);
        }
        let span = weather.timestamps[i + 1] - weather.timestamps[i];
        plant.step(weather.t_out[i], schedule[i], span)?;
        t_zone.push(plant.zone_temp());
    }
    let trace = Trace { timestamps: weather.timestamps.clone(), t_zone, hvac_on: schedule };
    let stream = merge_stream(&weather, &trace)?;

    let space = ParameterSpace::new(vec![ParamEntry {
        path: ParamPath::CoolingCapacity,
        lower: 500.0,
        upper: 50_000.0,
    }]);
    let mut cal = CalibrationConfig::default();
    cal.rmse_threshold = 0.1;
    let outcome = watchdog(&model, &stream, &space, &cal, &WatchdogConfig::default())?;

    println!("replayed {} samples over 7 days", stream.len());
    for event in &outcome.events {
        println!(
            "  day {:.2}: rolling rmse {:.2} °C -> {:.2} °C ({})",
            event.time_s / 86_400.0,
            event.pre_rmse_c,
            event.post_rmse_c,
            event.status.as_str()
        );
    }
    println!(
        "capacity in service afterwards: {:.0} W (plant was degraded to {:.0} W)",
        outcome.model.hvac.cooling_capacity,
        model.hvac.cooling_capacity * 0.7
    );
    Ok(())
}
