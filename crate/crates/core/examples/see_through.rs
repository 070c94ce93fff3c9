//! Walks a user toward the east wall of the living room and back, printing
//! alpha changes and directional sound cues. The hysteresis band keeps the
//! wall from flickering while the user hovers near the threshold.
//!
//!     cargo run --example see_through

use nalgebra::Point3;

use camre::nav::{update_transparency, TransparencyConfig, TransparencyState, UserPose, EYE_HEIGHT_M};
use camre::scene::SceneSnapshot;
use camre::synth::{living_room, scan_step, ScanState, World};

fn main() {
    let world = World::new(vec![living_room()]).unwrap();
    let snapshot = SceneSnapshot::from_objects(0, scan_step(&mut ScanState::full_visibility(1), &world, 0));
    let mut st = TransparencyState::new(TransparencyConfig::default());
    let y = world.rooms[0].center().y;

    // facing north, walking east then back west, with a dither near the band
    let mut xs: Vec<f64> = (0..=60).map(|i| 0.3 + i as f64 * 0.1).collect();
    xs.extend([3.85, 3.9, 3.82, 3.88]);
    xs.extend((0..=60).rev().map(|i| 0.3 + i as f64 * 0.1));
    for x in xs {
        let pose = UserPose::new(Point3::new(x, y, EYE_HEIGHT_M), 0.0);
        let u = update_transparency(&pose, &snapshot, &mut st);
        for (wall, alpha) in &u.changes {
            println!("x={x:.2}  wall {wall:>2} alpha -> {alpha:.2}");
        }
        for c in &u.cues {
            println!("x={x:.2}  cue for wall {:>2} at {:+.1} deg", c.wall_id, c.azimuth_rad.to_degrees());
        }
    }
}
