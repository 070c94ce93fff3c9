//! Parses a multi-room floor plan, scans it once with full visibility and
//! once by walking through it, then prints the construction benchmark for
//! the three reference rooms.
//!
//!     cargo run --example room_scan [path/to/world.room]

use std::collections::BTreeMap;

use camre::scene::{snapshot_size_bytes, SceneSnapshot};
use camre::synth::{construction_benchmark, parse_rooms, scan_step, walk_scan, ScanState, World};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/rooms/apartment.room").to_string());
    let text = std::fs::read_to_string(&path).expect("readable room file");
    let rooms = parse_rooms(&text).expect("valid room file");
    let world = World::new(rooms).expect("valid world");

    for room in &world.rooms {
        let [l, w, h] = room.dimensions;
        println!("{:<10} {l:.2} x {w:.2} x {h:.2} m, {} platforms, {} doors", room.name, room.platforms.len(), room.doorways.len());
    }

    let full = scan_step(&mut ScanState::full_visibility(1), &world, 0);
    let walked = walk_scan(&world, 1);
    let mut by_category: BTreeMap<&str, usize> = BTreeMap::new();
    for o in &full {
        *by_category.entry(o.category.name()).or_default() += 1;
    }
    println!("full scan: {} objects {:?}", full.len(), by_category);
    let snap = SceneSnapshot::from_objects(0, walked);
    println!("walk scan: {} objects, {} bytes", snap.len(), snapshot_size_bytes(&snap));

    println!("\n{:<10} {:>7} {:>10} {:>10} {:>9} {:>9}", "room", "objects", "build_s", "ref_s", "size_MB", "ref_MB");
    for row in construction_benchmark() {
        println!(
            "{:<10} {:>7} {:>10.6} {:>10.2} {:>9.4} {:>9.2}",
            row.room,
            row.object_count,
            row.build_time_s,
            row.reference_time_s,
            row.size_bytes as f64 / 1e6,
            row.reference_size_mb
        );
    }
}
