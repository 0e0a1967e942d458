//! Segment the surfaces of a noisy synthetic scan with MSAC and compare the
//! fitted planes against the generator's ground truth.
//!
//! ```bash
//! cargo run -p roomtherm --example segment_planes
//! ```

use nalgebra::Vector3;
use roomtherm::plane_fit::{extract_planes, MsacConfig};
use roomtherm::pointcloud::{generate_room, SyntheticRoomSpec};

fn main() -> roomtherm::Result<()> {
    let spec = SyntheticRoomSpec {
        noise_sigma: 0.005,
        outlier_fraction: 0.1,
        density: 200.0,
        seed: 7,
        ..Default::default()
    };
    let (cloud, truth) = generate_room(&spec)?;
    println!("segmenting {} points...", cloud.len());

    let config = MsacConfig::default();
    let fits = extract_planes(&cloud, &config, 8);
    println!("{} planes found (threshold {} m):", fits.len(), config.distance_threshold);
    for (i, fit) in fits.iter().enumerate() {
        // Closest ground-truth plane by normal angle plus offset gap.
        let (name, angle, offset) = truth
            .planes
            .iter()
            .map(|t| {
                let angle = fit.plane.angle_to(&Vector3::from(t.normal)).to_degrees();
                let offset = (fit.plane.d - t.d).abs();
                (t.name.as_str(), angle, offset)
            })
            .min_by(|a, b| (a.1 + a.2 * 100.0).partial_cmp(&(b.1 + b.2 * 100.0)).unwrap())
            .unwrap();
        println!(
            "  plane {i}: {:5} inliers, matches {:8} within {:.3} deg / {:.1} mm",
            fit.inlier_indices.len(),
            name,
            angle,
            offset * 1000.0
        );
    }
    Ok(())
}
