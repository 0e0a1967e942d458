//! The whole loop in one program: scan a synthetic room, recognize its
//! geometry, build a thermal model from it, observe its behavior, and
//! calibrate a deliberately wrong copy of the model until the simulated
//! temperature matches.
//!
//! ```bash
//! cargo run -p roomtherm --example full_pipeline
//! ```

use roomtherm::calibrate::{calibrate, CalibrationConfig, ParameterSpace};
use roomtherm::plane_fit::{extract_planes, MsacConfig};
use roomtherm::pointcloud::{generate_room, OpeningSpec, SyntheticRoomSpec};
use roomtherm::room_extract::{extract_room, to_building_geometry, ExtractParams};
use roomtherm::thermal::{
    build_model, daily_schedule, simulate, BuildDefaults, HvacSpec, MaterialSet, WeatherSeries,
};

fn main() -> roomtherm::Result<()> {
    // 1. Capture: a noisy scan of a 5x4x3 room with a window and a door.
    let spec = SyntheticRoomSpec {
        openings: vec![
            OpeningSpec { wall: 0, u: 2.0, v: 1.0, width: 1.2, height: 1.5 },
            OpeningSpec { wall: 1, u: 1.5, v: 0.0, width: 0.9, height: 2.0 },
        ],
        seed: 7,
        ..Default::default()
    };
    let (cloud, _) = generate_room(&spec)?;
    println!("[1/5] scan: {} points", cloud.len());

    // 2. Recognition: planes, labels, dimensions, openings.
    let fits = extract_planes(&cloud, &MsacConfig::default(), 8);
    let room = extract_room(&cloud, &fits, &ExtractParams::default())?;
    println!(
        "[2/5] recognized {:.2} x {:.2} x {:.2} m, {} openings",
        room.length,
        room.width,
        room.height,
        room.openings.len()
    );

    // 3. Model construction from the recognized geometry.
    let geometry = to_building_geometry(&room)?;
    let truth = build_model(
        &geometry,
        &MaterialSet::default(),
        HvacSpec::default(),
        &BuildDefaults::default(),
    )?;
    println!("[3/5] built a model with {} surfaces", truth.surfaces.len());

    // 4. Observation: 48 hours of indoor temperature under daytime cooling.
    let weather = WeatherSeries::sinusoidal_daily(2.0, 300.0, 32.0, 6.0, 15.0);
    let schedule = daily_schedule(&weather.timestamps, 10.0, 18.0);
    let observed = simulate(&truth, &weather, &schedule, f64::INFINITY, 26.0)?;
    println!("[4/5] observed {} samples", observed.len());

    // 5. Inference: start every free parameter 50% high and calibrate.
    let space = ParameterSpace::default_free();
    let mut initial = truth.clone();
    for entry in &space.entries {
        entry.path.set(&mut initial, entry.path.get(&truth)? * 1.5)?;
    }
    let result = calibrate(
        &initial,
        &space,
        &observed,
        &weather,
        &CalibrationConfig::default(),
    )?;
    println!(
        "[5/5] calibrated to {:.3} °C rmse in {} steps:",
        result.final_rmse, result.iterations
    );
    for entry in &space.entries {
        println!(
            "      {:<24} {:>10.4} (truth {:.4})",
            entry.path.to_string(),
            entry.path.get(&result.model)?,
            entry.path.get(&truth)?
        );
    }
    Ok(())
}
