//! Sweeps an eye-gaze ray across the living room walls and shows where the
//! X-ray window lands, including clamping near wall edges and resizing.
//!
//!     cargo run --example xray_window

use nalgebra::{Point3, Vector3};

use camre::nav::{probe_fixture, XrayState, EYE_HEIGHT_M};

fn main() {
    let (snapshot, pose) = probe_fixture();
    let mut xray = XrayState::default();
    xray.set_enabled(true);
    println!("user at ({:.2}, {:.2}), window half size {} m", pose.position.x, pose.position.y, xray.half_size());

    let mut pose = pose;
    for deg in (-180..180).step_by(30) {
        let a = f64::from(deg).to_radians();
        // counter-clockwise from north, slightly upward
        pose.set_eye_gaze(Vector3::new(-a.sin(), a.cos(), 0.15).normalize()).unwrap();
        match xray.update(&pose, &snapshot, 0) {
            Some(w) => println!(
                "gaze {deg:>4} deg -> wall {:>2}, window center ({:.2}, {:.2}, {:.2})",
                w.target_wall_id, w.center.x, w.center.y, w.center.z
            ),
            None => println!("gaze {deg:>4} deg -> no wall"),
        }
    }

    // looking at a corner: the window is pushed back onto the wall
    pose.position = Point3::new(0.6, 0.6, EYE_HEIGHT_M);
    pose.set_eye_gaze(Vector3::new(-1.0, -1.0, 0.0).normalize()).unwrap();
    for half in [0.1, 0.4, 1.0] {
        xray.set_half_size(half).unwrap();
        let w = xray.update(&pose, &snapshot, 1).unwrap();
        println!("corner, half size {half}: wall {}, center ({:.2}, {:.2}, {:.2})", w.target_wall_id, w.center.x, w.center.y, w.center.z);
    }
    println!("half size 1.5: {:?}", xray.set_half_size(1.5).unwrap_err());
}
