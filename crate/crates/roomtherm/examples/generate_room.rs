//! Generate a synthetic room scan with known ground truth and save it as an
//! ASCII PLY file.
//!
//! ```bash
//! cargo run -p roomtherm --example generate_room
//! ```

use roomtherm::pointcloud::{generate_room, save_cloud, CloudFormat, OpeningSpec, SyntheticRoomSpec};

fn main() -> roomtherm::Result<()> {
    let spec = SyntheticRoomSpec {
        length: 5.0,
        width: 4.0,
        height: 3.0,
        noise_sigma: 0.005,
        outlier_fraction: 0.1,
        density: 200.0,
        openings: vec![
            // A window on the long wall and a door on a short one.
            OpeningSpec { wall: 0, u: 2.0, v: 1.0, width: 1.2, height: 1.5 },
            OpeningSpec { wall: 1, u: 1.5, v: 0.0, width: 0.9, height: 2.0 },
        ],
        seed: 7,
        ..Default::default()
    };
    let (cloud, truth) = generate_room(&spec)?;

    println!(
        "generated {} points: {} on surfaces, {} clutter outliers",
        cloud.len(),
        truth.surface_points,
        truth.outlier_points
    );
    println!("ground-truth planes:");
    for plane in &truth.planes {
        println!(
            "  {:8} normal ({:+.0}, {:+.0}, {:+.0})  d = {:+.1}",
            plane.name, plane.normal[0], plane.normal[1], plane.normal[2], plane.d
        );
    }
    for opening in &truth.openings {
        println!(
            "  opening on wall {}: {:.1} x {:.1} m at (u = {:.1}, v = {:.1})",
            opening.wall, opening.width, opening.height, opening.u, opening.v
        );
    }

    let path = std::env::temp_dir().join("roomtherm_example_room.ply");
    save_cloud(&cloud, &path, CloudFormat::PlyAscii)?;
    println!("cloud written to {}", path.display());
    Ok(())
}
