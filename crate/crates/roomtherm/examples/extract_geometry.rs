//! Recover a full room description from a scan: floor/wall labels, room
//! dimensions, and the window and door openings cut into the walls.
//!
//! ```bash
//! cargo run -p roomtherm --example extract_geometry
//! ```

use roomtherm::plane_fit::{extract_planes, MsacConfig};
use roomtherm::pointcloud::{generate_room, OpeningSpec, SyntheticRoomSpec};
use roomtherm::room_extract::{extract_room, to_building_geometry, ExtractParams};

fn main() -> roomtherm::Result<()> {
    let spec = SyntheticRoomSpec {
        openings: vec![
            OpeningSpec { wall: 0, u: 2.0, v: 1.0, width: 1.2, height: 1.5 },
            OpeningSpec { wall: 1, u: 1.5, v: 0.0, width: 0.9, height: 2.0 },
        ],
        seed: 7,
        ..Default::default()
    };
    let (cloud, _) = generate_room(&spec)?;
    let fits = extract_planes(&cloud, &MsacConfig::default(), 8);
    let room = extract_room(&cloud, &fits, &ExtractParams::default())?;

    println!(
        "room: {:.3} x {:.3} x {:.3} m ({} walls, ceiling scanned: {})",
        room.length,
        room.width,
        room.height,
        room.walls.len(),
        room.ceiling.is_some()
    );
    for opening in &room.openings {
        println!(
            "  {:?} on wall {}: {:.2} x {:.2} m at (u = {:.2}, v = {:.2})",
            opening.kind, opening.wall_index, opening.rect.width, opening.rect.height,
            opening.rect.u, opening.rect.v
        );
    }

    let geometry = to_building_geometry(&room)?;
    println!("surfaces handed to the thermal stage (volume {:.1} m3):", geometry.volume);
    for surface in &geometry.surfaces {
        println!("  {:10} {:7.2} m2 ({:?})", surface.name, surface.area, surface.class);
    }
    Ok(())
}
