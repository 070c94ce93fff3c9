use camre::nav::{minimap_test_vectors, MinimapVector};

fn load() -> Vec<MinimapVector> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/minimap_vectors.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn checked_in_file_matches_generator() {
    let file = load();
    let fresh = minimap_test_vectors(file.len());
    assert_eq!(file.len(), 64);
    for (a, b) in file.iter().zip(&fresh) {
        assert_eq!(a.mode, b.mode);
        assert_eq!(a.in_footprint, b.in_footprint);
        for (x, y) in a.map.iter().zip(&b.map) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

/// Track-up: map y is the distance ahead of the user, map x the distance to
/// the right, both over the ground half-width. North-up: plain offsets.
#[test]
fn vectors_agree_with_heading_decomposition() {
    let vectors = load();
    assert!(vectors.iter().any(|v| v.in_footprint) && vectors.iter().any(|v| !v.in_footprint));
    for v in vectors {
        let w = v.camera_height * (v.fov_deg.to_radians() / 2.0).tan();
        let d = [v.world[0] - v.user[0], v.world[1] - v.user[1]];
        let expect = match v.mode.as_str() {
            "track_up" => {
                let ahead = [-v.yaw.sin(), v.yaw.cos()];
                let right = [v.yaw.cos(), v.yaw.sin()];
                [(d[0] * right[0] + d[1] * right[1]) / w, (d[0] * ahead[0] + d[1] * ahead[1]) / w]
            }
            "north_up" => [d[0] / w, d[1] / w],
            other => panic!("mode {other}"),
        };
        assert!((v.map[0] - expect[0]).abs() < 1e-9 && (v.map[1] - expect[1]).abs() < 1e-9, "{v:?}");
        assert_eq!(v.in_footprint, expect[0].abs() <= 1.0 && expect[1].abs() <= 1.0);
    }
}
