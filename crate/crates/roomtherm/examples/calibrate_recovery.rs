//! Parameter recovery: simulate 48 hours of "observed" data with the stock
//! model, scale every free parameter by 1.5, and let gradient descent pull
//! them back until the simulated trace matches the observation.
//!
//! ```bash
//! cargo run -p roomtherm --example calibrate_recovery
//! ```

use roomtherm::calibrate::{calibrate, CalibrationConfig, ParameterSpace};
use roomtherm::thermal::{
    build_model, daily_schedule, simulate, BuildDefaults, BuildingGeometry, HvacSpec,
    MaterialSet, WeatherSeries,
};

fn main() -> roomtherm::Result<()> {
    let truth = build_model(
        &BuildingGeometry::default_room(),
        &MaterialSet::default(),
        HvacSpec::default(),
        &BuildDefaults::default(),
    )?;

    let weather = WeatherSeries::sinusoidal_daily(2.0, 300.0, 32.0, 6.0, 15.0);
    let schedule = daily_schedule(&weather.timestamps, 10.0, 18.0);
    let observed = simulate(&truth, &weather, &schedule, f64::INFINITY, 26.0)?;

    let space = ParameterSpace::default_free();
    let mut initial = truth.clone();
    for entry in &space.entries {
        let value = entry.path.get(&truth)?;
        entry.path.set(&mut initial, value * 1.5)?;
    }

    let config = CalibrationConfig::default();
    let result = calibrate(&initial, &space, &observed, &weather, &config)?;

    println!(
        "{:<24} {:>10} {:>12} {:>12}",
        "parameter", "truth", "start", "calibrated"
    );
    for entry in &space.entries {
        println!(
            "{:<24} {:>10.4} {:>12.4} {:>12.4}",
            entry.path.to_string(),
            entry.path.get(&truth)?,
            entry.path.get(&initial)?,
            entry.path.get(&result.model)?
        );
    }
    println!(
        "\nobjective: {:.3}°C -> {:.3} °C in {} accepted steps",
        result.objective_history.first().unwrap(),
        result.final_rmse,
        result.iterations
    );
    println!("history: {:?}", result.objective_history);
    Ok(())
}
