//! Renders the mini-map as text for a user turning in place, in both
//! orientation modes, and writes the shared projection test vectors.
//!
//!     cargo run --example minimap [out.json]

use std::collections::BTreeMap;

use nalgebra::Point3;

use camre::nav::{minimap_test_vectors, project_minimap, MapItemKind, MinimapConfig, OrientationMode, UserPose};
use camre::protocol::Pose;
use camre::scene::{SceneCategory, SceneSnapshot};
use camre::synth::{living_room, scan_step, ScanState, World};

const SIZE: usize = 21;

fn render(frame: &camre::nav::MapFrame) -> String {
    let mut grid = vec![vec!['.'; SIZE]; SIZE];
    let cell = |v: f64| (((v + 1.0) / 2.0) * (SIZE - 1) as f64).round() as usize;
    // objects first so avatars stay visible on top
    let mut items: Vec<_> = frame.items.iter().collect();
    items.sort_by_key(|i| matches!(i.kind, MapItemKind::Avatar { .. }));
    for item in items {
        let (c, r) = (cell(item.at.x), SIZE - 1 - cell(item.at.y));
        grid[r][c] = match item.kind {
            MapItemKind::Avatar { is_self: true, .. } => '@',
            MapItemKind::Avatar { .. } => 'A',
            MapItemKind::Object { category: SceneCategory::Wall, .. } => '#',
            MapItemKind::Object { category: SceneCategory::Floor | SceneCategory::Ceiling, .. } => '+',
            MapItemKind::Object { .. } => 'o',
        };
    }
    grid.into_iter().map(|r| r.into_iter().collect::<String>()).collect::<Vec<_>>().join("\n")
}

fn main() {
    let world = World::new(vec![living_room()]).unwrap();
    let snapshot = SceneSnapshot::from_objects(0, scan_step(&mut ScanState::full_visibility(1), &world, 0));
    let c = world.rooms[0].center();
    let peers = BTreeMap::from([(2, Pose { position: [c.x as f32 + 1.5, c.y as f32, 1.6], yaw: 0.0 })]);

    for mode in [OrientationMode::NorthUp, OrientationMode::TrackUp] {
        let cfg = MinimapConfig::new(5.0, 60.0, mode).unwrap();
        for yaw_deg in [0.0f64, -90.0] {
            let pose = UserPose::new(Point3::new(c.x, c.y, 1.6), yaw_deg.to_radians());
            let frame = project_minimap(&pose, 1, &snapshot, &peers, &cfg, 0);
            println!("{mode:?}, yaw {yaw_deg} deg, {} items:\n{}\n", frame.items.len(), render(&frame));
        }
    }

    let out = std::env::args().nth(1).unwrap_or_else(|| "minimap_vectors.json".into());
    let vectors = minimap_test_vectors(64);
    std::fs::write(&out, serde_json::to_string_pretty(&vectors).unwrap() + "\n").unwrap();
    println!("wrote {} vectors to {out}", vectors.len());
}
