//! Simulate a summer day in the stock room: sinusoidal weather, cooling
//! scheduled from 10:00 to 18:00, hourly printout with the HVAC strip.
//!
//! ```bash
//! cargo run -p roomtherm --example simulate_day
//! ```

use roomtherm::thermal::{
    build_model, daily_schedule, simulate, steady_state, BuildDefaults, BuildingGeometry,
    HvacSpec, MaterialSet, WeatherSeries,
};

fn main() -> roomtherm::Result<()> {
    let model = build_model(
        &BuildingGeometry::default_room(),
        &MaterialSet::default(),
        HvacSpec::default(),
        &BuildDefaults::default(),
    )?;
    println!(
        "zone {} m3, {} surfaces, cooling capacity {} W at {} m3/s",
        model.zone_volume,
        model.surfaces.len(),
        model.hvac.cooling_capacity,
        model.hvac.air_flow_rate
    );

    let weather = WeatherSeries::sinusoidal_daily(1.0, 300.0, 32.0, 6.0, 15.0);
    let schedule = daily_schedule(&weather.timestamps, 10.0, 18.0);
    let trace = simulate(&model, &weather, &schedule, 60.0, 26.0)?;

    println!("\n hour  outdoor   zone   hvac");
    for (i, &t) in trace.timestamps.iter().enumerate() {
        if (t / 3600.0).fract() != 0.0 {
            continue;
        }
        println!(
            "  {:2}   {:5.1}   {:5.1}   {}",
            (t / 3600.0) as u32,
            weather.t_out[i],
            trace.t_zone[i],
            if trace.hvac_on[i] { "#### " } else { "     " }
        );
    }

    let idle = steady_state(&model, 32.0, 0.0, 0.0)?;
    println!("\nsteady state with everything off at 32 °C outdoors: {idle:.2} °C");
    Ok(())
}
