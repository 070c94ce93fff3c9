//! Navigation aids computed over a scene snapshot: the gaze-driven X-ray
//! window, proximity see-through walls with directional sound cues, and the
//! bird's-eye mini-map.
//!
//! Everything here is a pure function of a snapshot plus a little owned state,
//! so it can run inside a session loop or a benchmark without threads.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Point2, Point3, Rotation2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame;
use crate::protocol::Pose;
use crate::scene::{display_color, ParticipantId, Rgb, SceneCategory, SceneObject, SceneSnapshot};
use crate::synth::{living_room, scan_step, ScanState, World};

pub const DEFAULT_XRAY_HALF_SIZE: f64 = 0.4;
pub const XRAY_HALF_SIZE_RANGE: (f64, f64) = (0.1, 1.0);
pub const SEE_THROUGH_RADIUS_M: f64 = 3.0;
pub const OPAQUE_RADIUS_M: f64 = 3.2;
/// "30% transparent" rendered as 70% opacity.
pub const SEE_THROUGH_ALPHA: f64 = 0.70;
pub const OPAQUE_ALPHA: f64 = 1.0;
pub const EYE_HEIGHT_M: f64 = 1.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("gaze must be a unit vector, |gaze| = {0}")]
    GazeNotUnit(f64),
    #[error("camera height must be positive, got {0}")]
    CameraHeight(f64),
    #[error("mini-map fov must lie in [1, 179] degrees, got {0}")]
    Fov(f64),
    #[error("x-ray half size {0} outside [{lo}, {hi}]", lo = XRAY_HALF_SIZE_RANGE.0, hi = XRAY_HALF_SIZE_RANGE.1)]
    HalfSize(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GazeMode {
    /// Programmable gaze vector standing in for eye tracking.
    Eye,
    /// Gaze follows the head: yaw with zero pitch.
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserPose {
    pub position: Point3<f64>,
    pub yaw: f64,
    gaze: Vector3<f64>,
    pub gaze_mode: GazeMode,
}

impl UserPose {
    /// Head-gaze pose.
    pub fn new(position: Point3<f64>, yaw: f64) -> Self {
        Self { position, yaw, gaze: frame::head_gaze(yaw), gaze_mode: GazeMode::Head }
    }

    pub fn with_eye_gaze(position: Point3<f64>, yaw: f64, gaze: Vector3<f64>) -> Result<Self, NavError> {
        let mut p = Self::new(position, yaw);
        p.set_eye_gaze(gaze)?;
        Ok(p)
    }

    pub fn set_eye_gaze(&mut self, gaze: Vector3<f64>) -> Result<(), NavError> {
        let n = gaze.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(NavError::GazeNotUnit(n));
        }
        self.gaze = gaze;
        self.gaze_mode = GazeMode::Eye;
        Ok(())
    }

    pub fn set_gaze_mode(&mut self, mode: GazeMode) {
        self.gaze_mode = mode;
    }

    /// Direction used for ray casting under the current mode.
    pub fn gaze(&self) -> Vector3<f64> {
        match self.gaze_mode {
            GazeMode::Eye => self.gaze,
            GazeMode::Head => frame::head_gaze(self.yaw),
        }
    }

    pub fn from_wire(pose: &Pose) -> Self {
        let [x, y, z] = pose.position.map(f64::from);
        Self::new(Point3::new(x, y, z), f64::from(pose.yaw))
    }
}

/// A quad viewed as a rectangle in space.
#[derive(Debug, Clone, Copy)]
pub struct Rect3 {
    pub center: Point3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub half: [f64; 2],
}

impl Rect3 {
    pub fn of(obj: &SceneObject) -> Self {
        Self {
            center: obj.center_point(),
            u: obj.axis_u(),
            v: obj.axis_v(),
            normal: obj.normal(),
            half: obj.half_extents.map(f64::from),
        }
    }

    /// Ray parameter and in-plane coordinates of the hit, if the ray meets
    /// the rectangle at a positive distance.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = self.normal.dot(&(self.center - origin)) / denom;
        if t <= 0.0 {
            return None;
        }
        let rel = origin + dir * t - self.center;
        let (a, b) = (rel.dot(&self.u), rel.dot(&self.v));
        const EDGE: f64 = 1e-9;
        (a.abs() <= self.half[0] + EDGE && b.abs() <= self.half[1] + EDGE).then_some((t, a, b))
    }

    pub fn point_at(&self, a: f64, b: f64) -> Point3<f64> {
        self.center + self.u * a + self.v * b
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&(p - self.center))
    }

    pub fn local(&self, p: &Point3<f64>) -> (f64, f64) {
        let rel = p - self.center;
        (rel.dot(&self.u), rel.dot(&self.v))
    }

    pub fn closest_point(&self, p: &Point3<f64>) -> Point3<f64> {
        let (a, b) = self.local(p);
        self.point_at(a.clamp(-self.half[0], self.half[0]), b.clamp(-self.half[1], self.half[1]))
    }
}

// ---------------------------------------------------------------------------
// X-ray window

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XrayWindow {
    pub enabled: bool,
    pub target_wall_id: u32,
    pub center: Point3<f64>,
    pub half_size: f64,
    pub last_update_us: u64,
}

/// Centers a square window of `half_size` on the nearest wall hit by the gaze
/// ray, shifted just enough to keep the window inside the wall.
pub fn place_xray_window(pose: &UserPose, snapshot: &SceneSnapshot, half_size: f64, now_us: u64) -> Option<XrayWindow> {
    let dir = pose.gaze();
    let (wall, rect, _, a, b) = snapshot
        .walls()
        .filter_map(|w| {
            let rect = Rect3::of(w);
            rect.intersect(&pose.position, &dir).map(|(t, a, b)| (w, rect, t, a, b))
        })
        .min_by(|x, y| x.2.total_cmp(&y.2))?;
    let clamp = |coord: f64, half: f64| {
        let room = (half - half_size).max(0.0);
        coord.clamp(-room, room)
    };
    Some(XrayWindow {
        enabled: true,
        target_wall_id: wall.id,
        center: rect.point_at(clamp(a, rect.half[0]), clamp(b, rect.half[1])),
        half_size,
        last_update_us: now_us,
    })
}

/// Toggle, slider and current window.
#[derive(Debug, Clone, PartialEq)]
pub struct XrayState {
    pub enabled: bool,
    half_size: f64,
    pub window: Option<XrayWindow>,
}

impl Default for XrayState {
    fn default() -> Self {
        Self { enabled: false, half_size: DEFAULT_XRAY_HALF_SIZE, window: None }
    }
}

impl XrayState {
    pub fn half_size(&self) -> f64 {
        self.half_size
    }

    pub fn set_half_size(&mut self, half_size: f64) -> Result<(), NavError> {
        let (lo, hi) = XRAY_HALF_SIZE_RANGE;
        if !(lo..=hi).contains(&half_size) {
            return Err(NavError::HalfSize(half_size));
        }
        self.half_size = half_size;
        Ok(())
    }

    pub fn set_enabled(&mut self, enabled: bool) {
        self.enabled = enabled;
        if !enabled {
            self.window = None;
        }
    }

    pub fn update(&mut self, pose: &UserPose, snapshot: &SceneSnapshot, now_us: u64) -> Option<&XrayWindow> {
        self.window = if self.enabled { place_xray_window(pose, snapshot, self.half_size, now_us) } else { None };
        self.window.as_ref()
    }
}

// ---------------------------------------------------------------------------
// See-through walls

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// Distance to the wall's center point.
    Center,
    /// Distance to the closest point of the wall rectangle.
    ClosestPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransparencyConfig {
    pub near_m: f64,
    pub far_m: f64,
    pub seethrough_alpha: f64,
    pub opaque_alpha: f64,
    pub mode: DistanceMode,
}

impl Default for TransparencyConfig {
    fn default() -> Self {
        Self {
            near_m: SEE_THROUGH_RADIUS_M,
            far_m: OPAQUE_RADIUS_M,
            seethrough_alpha: SEE_THROUGH_ALPHA,
            opaque_alpha: OPAQUE_ALPHA,
            mode: DistanceMode::Center,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoundCue {
    /// Bearing of the wall center relative to the user's heading, positive
    /// to the right.
    pub azimuth_rad: f64,
    pub wall_id: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransparencyUpdate {
    pub cues: Vec<SoundCue>,
    /// Walls whose alpha changed, with the new alpha.
    pub changes: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransparencyState {
    pub config: TransparencyConfig,
    see_through: BTreeMap<u32, bool>,
}

impl TransparencyState {
    pub fn new(config: TransparencyConfig) -> Self {
        Self { config, see_through: BTreeMap::new() }
    }

    pub fn alpha(&self, wall_id: u32) -> f64 {
        if self.see_through.get(&wall_id).copied().unwrap_or(false) {
            self.config.seethrough_alpha
        } else {
            self.config.opaque_alpha
        }
    }

    pub fn is_see_through(&self, wall_id: u32) -> bool {
        self.see_through.get(&wall_id).copied().unwrap_or(false)
    }

    pub fn distance(&self, pose: &UserPose, wall: &SceneObject) -> f64 {
        match self.config.mode {
            DistanceMode::Center => (wall.center_point() - pose.position).norm(),
            DistanceMode::ClosestPoint => (Rect3::of(wall).closest_point(&pose.position) - pose.position).norm(),
        }
    }
}

/// Two-state alpha per wall with a hysteresis band; cues fire on the
/// opaque-to-see-through transition only.
pub fn update_transparency(pose: &UserPose, snapshot: &SceneSnapshot, st: &mut TransparencyState) -> TransparencyUpdate {
    let mut out = TransparencyUpdate::default();
    let cfg = st.config;
    let mut next = BTreeMap::new();
    for wall in snapshot.walls() {
        let was = st.is_see_through(wall.id);
        let d = st.distance(pose, wall);
        let now = if d <= cfg.near_m {
            true
        } else if d >= cfg.far_m {
            false
        } else {
            was
        };
        if now != was {
            out.changes.push((wall.id, if now { cfg.seethrough_alpha } else { cfg.opaque_alpha }));
            if now {
                let c = wall.center_point() - pose.position;
                out.cues.push(SoundCue {
                    azimuth_rad: frame::relative_bearing(pose.yaw, Vector2::new(c.x, c.y)),
                    wall_id: wall.id,
                });
            }
        }
        next.insert(wall.id, now);
    }
    st.see_through = next;
    out
}

// ---------------------------------------------------------------------------
// Mini-map

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrientationMode {
    TrackUp,
    NorthUp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimapConfig {
    pub camera_height: f64,
    /// Vertical field of view, degrees.
    pub fov_deg: f64,
    pub orientation_mode: OrientationMode,
}

impl Default for MinimapConfig {
    fn default() -> Self {
        Self { camera_height: 10.0, fov_deg: 60.0, orientation_mode: OrientationMode::TrackUp }
    }
}

impl MinimapConfig {
    pub fn new(camera_height: f64, fov_deg: f64, orientation_mode: OrientationMode) -> Result<Self, NavError> {
        let c = Self { camera_height, fov_deg, orientation_mode };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), NavError> {
        if !(self.camera_height > 0.0) {
            return Err(NavError::CameraHeight(self.camera_height));
        }
        if !(1.0..=179.0).contains(&self.fov_deg) {
            return Err(NavError::Fov(self.fov_deg));
        }
        Ok(())
    }

    /// Ground-plane half-width seen by the downward camera.
    pub fn half_width(&self) -> f64 {
        self.camera_height * (self.fov_deg.to_radians() / 2.0).tan()
    }
}

/// World ground plane to normalized map coordinates and back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapProjection {
    pub origin: Point2<f64>,
    pub half_width: f64,
    /// Rotation applied to world offsets (radians, counter-clockwise).
    pub rotation: f64,
}

impl MapProjection {
    pub fn new(pose: &UserPose, cfg: &MinimapConfig) -> Self {
        Self {
            origin: Point2::new(pose.position.x, pose.position.y),
            half_width: cfg.half_width(),
            rotation: match cfg.orientation_mode {
                OrientationMode::TrackUp => -pose.yaw,
                OrientationMode::NorthUp => 0.0,
            },
        }
    }

    pub fn project(&self, p: &Point2<f64>) -> Point2<f64> {
        Point2::from(Rotation2::new(self.rotation) * (p - self.origin) / self.half_width)
    }

    pub fn unproject(&self, m: &Point2<f64>) -> Point2<f64> {
        self.origin + Rotation2::new(-self.rotation) * (m.coords * self.half_width)
    }

    pub fn in_footprint(m: &Point2<f64>) -> bool {
        m.x.abs() <= 1.0 && m.y.abs() <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapItemKind {
    Object { id: u32, category: SceneCategory, color: Rgb },
    Avatar { participant: ParticipantId, is_self: bool, heading: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapItem {
    pub kind: MapItemKind,
    pub at: Point2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapFrame {
    pub projection: MapProjection,
    pub items: Vec<MapItem>,
    pub computed_at_us: u64,
}

impl MapFrame {
    pub fn avatar(&self, participant: ParticipantId) -> Option<&MapItem> {
        self.items.iter().find(|i| matches!(i.kind, MapItemKind::Avatar { participant: p, .. } if p == participant))
    }
}

/// Projects objects and avatars inside the camera footprint. The user's own
/// avatar sits at the map center; avatar headings are map-relative.
pub fn project_minimap(
    pose: &UserPose,
    viewer: ParticipantId,
    snapshot: &SceneSnapshot,
    peers: &BTreeMap<ParticipantId, Pose>,
    cfg: &MinimapConfig,
    now_us: u64,
) -> MapFrame {
    let projection = MapProjection::new(pose, cfg);
    let mut items = vec![MapItem {
        kind: MapItemKind::Avatar { participant: viewer, is_self: true, heading: frame::wrap_angle(pose.yaw + projection.rotation) },
        at: Point2::origin(),
    }];
    for obj in snapshot.objects() {
        let m = projection.project(&Point2::new(f64::from(obj.center[0]), f64::from(obj.center[1])));
        if MapProjection::in_footprint(&m) {
            items.push(MapItem {
                kind: MapItemKind::Object { id: obj.id, category: obj.category, color: display_color(obj, viewer) },
                at: m,
            });
        }
    }
    for (&id, peer) in peers {
        if id == viewer {
            continue;
        }
        let m = projection.project(&Point2::new(f64::from(peer.position[0]), f64::from(peer.position[1])));
        if MapProjection::in_footprint(&m) {
            items.push(MapItem {
                kind: MapItemKind::Avatar {
                    participant: id,
                    is_self: false,
                    heading: frame::wrap_angle(f64::from(peer.yaw) + projection.rotation),
                },
                at: m,
            });
        }
    }
    MapFrame { projection, items, computed_at_us: now_us }
}

// ---------------------------------------------------------------------------
// Latency probes

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    XrayDisplay,
    XrayMove,
    MinimapRotate,
}

impl std::str::FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xray-display" => Ok(Feature::XrayDisplay),
            "xray-move" => Ok(Feature::XrayMove),
            "minimap" | "minimap-rotate" => Ok(Feature::MinimapRotate),
            _ => Err(format!("unknown feature `{s}` (xray-display|xray-move|minimap)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub samples_ms: Vec<f64>,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: Vec<f64>) -> Self {
        let n = samples_ms.len().max(1) as f64;
        let mean = samples_ms.iter().sum::<f64>() / n;
        let var = samples_ms.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self { mean_ms: mean, std_ms: var.sqrt(), samples_ms }
    }
}

/// Living room snapshot plus a user standing at its center facing north.
pub fn probe_fixture() -> (SceneSnapshot, UserPose) {
    let room = living_room();
    let center = room.center();
    let world = World::new(vec![room]).expect("canonical room is valid");
    let objects = scan_step(&mut ScanState::full_visibility(1), &world, 0);
    let pose = UserPose::new(Point3::new(center.x, center.y, EYE_HEIGHT_M), 0.0);
    (SceneSnapshot::from_objects(0, objects), pose)
}

fn gaze_at(yaw: f64) -> Vector3<f64> {
    frame::head_gaze(yaw)
}

/// Times the response to the triggering input for `reps` repetitions:
/// enabling the X-ray window until a window exists, a 45 degree left-to-right
/// gaze sweep until the window has moved, or a 180 degree turn until the
/// track-up mini-map frame carries the new rotation.
pub fn feature_latency_probe(feature: Feature, reps: usize) -> LatencyStats {
    let (snapshot, mut pose) = probe_fixture();
    let cfg = MinimapConfig::default();
    let mut xray = XrayState::default();
    let half_sweep = 22.5_f64.to_radians();
    let mut samples = Vec::with_capacity(reps);
    for rep in 0..reps {
        let elapsed = match feature {
            Feature::XrayDisplay => {
                xray.set_enabled(false);
                let start = Instant::now();
                xray.set_enabled(true);
                let shown = xray.update(&pose, &snapshot, rep as u64).is_some();
                let e = start.elapsed();
                assert!(shown, "fixture gaze must hit a wall");
                e
            }
            Feature::XrayMove => {
                // sweep left-to-right, then back for the next repetition
                let (from, to) = if rep % 2 == 0 { (half_sweep, -half_sweep) } else { (-half_sweep, half_sweep) };
                pose.set_eye_gaze(gaze_at(from)).unwrap();
                xray.set_enabled(true);
                let before = xray.update(&pose, &snapshot, rep as u64).copied();
                let start = Instant::now();
                pose.set_eye_gaze(gaze_at(to)).unwrap();
                let after = xray.update(&pose, &snapshot, rep as u64).copied();
                let e = start.elapsed();
                assert_ne!(before.map(|w| w.center), after.map(|w| w.center), "window must move");
                e
            }
            Feature::MinimapRotate => {
                let before = project_minimap(&pose, 1, &snapshot, &BTreeMap::new(), &cfg, 0);
                let start = Instant::now();
                pose.yaw = frame::wrap_angle(pose.yaw + std::f64::consts::PI);
                let after = project_minimap(&pose, 1, &snapshot, &BTreeMap::new(), &cfg, 0);
                let e = start.elapsed();
                assert!((after.projection.rotation + pose.yaw).abs() < 1e-12);
                assert_ne!(before.projection.rotation, after.projection.rotation);
                e
            }
        };
        samples.push(elapsed.as_secs_f64() * 1e3);
    }
    LatencyStats::from_samples(samples)
}

// ---------------------------------------------------------------------------
// Shared mini-map vectors

/// One projection case for cross-checking other mini-map implementations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimapVector {
    pub camera_height: f64,
    pub fov_deg: f64,
    /// "track_up" or "north_up".
    pub mode: String,
    pub user: [f64; 2],
    /// Radians, counter-clockwise from north.
    pub yaw: f64,
    pub world: [f64; 2],
    /// Normalized map coordinates, +y up on screen.
    pub map: [f64; 2],
    pub in_footprint: bool,
}

/// Deterministic projection cases over both orientation modes.
pub fn minimap_test_vectors(count: usize) -> Vec<MinimapVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x006D_6170);
    (0..count)
        .map(|i| {
            let (mode, name) =
                if i % 2 == 0 { (OrientationMode::TrackUp, "track_up") } else { (OrientationMode::NorthUp, "north_up") };
            let cfg = MinimapConfig {
                camera_height: rng.gen_range(2.0..20.0),
                fov_deg: rng.gen_range(20.0..120.0),
                orientation_mode: mode,
            };
            let user = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let yaw = rng.gen_range(-PI..PI);
            let pose = UserPose::new(Point3::new(user[0], user[1], EYE_HEIGHT_M), yaw);
            let reach = cfg.half_width() * 1.5;
            let world = [user[0] + rng.gen_range(-reach..reach), user[1] + rng.gen_range(-reach..reach)];
            let m = MapProjection::new(&pose, &cfg).project(&Point2::new(world[0], world[1]));
            MinimapVector {
                camera_height: cfg.camera_height,
                fov_deg: cfg.fov_deg,
                mode: name.to_string(),
                user,
                yaw,
                world,
                map: [m.x, m.y],
                in_footprint: MapProjection::in_footprint(&m),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::quat_to_array;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
    use std::f64::consts::FRAC_PI_2;

    /// Wall in the plane x = `x`, spanning y in [y0, y1] and z in [0, h],
    /// facing -x.
    pub(crate) fn wall_x(id: u32, x: f64, y0: f64, y1: f64, h: f64) -> SceneObject {
        let n = -Vector3::x();
        let v = Vector3::z();
        let u = v.cross(&n);
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[u, v, n])));
        SceneObject {
            id,
            version: 1,
            category: SceneCategory::Wall,
            center: [x as f32, ((y0 + y1) / 2.0) as f32, (h / 2.0) as f32],
            half_extents: [((y1 - y0) / 2.0) as f32, (h / 2.0) as f32],
            orientation: quat_to_array(&q),
            created_us: 0,
            creator: 1,
        }
    }

    fn east_gaze_pose(z: f64) -> UserPose {
        UserPose::with_eye_gaze(Point3::new(0.0, 0.0, z), -FRAC_PI_2, Vector3::x()).unwrap()
    }

    #[test]
    fn axis_aligned_hit() {
        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 3.0, -2.0, 2.0, 2.4)]);
        let w = place_xray_window(&east_gaze_pose(1.2), &snap, 0.4, 7).unwrap();
        assert_eq!(w.target_wall_id, 1);
        assert_abs_diff_eq!(w.center, Point3::new(3.0, 0.0, 1.2), epsilon = 1e-6);
        assert_eq!(w.last_update_us, 7);
    }

    #[test]
    fn nearest_wall_wins() {
        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 7.0, -2.0, 2.0, 2.4), wall_x(2, 3.0, -2.0, 2.0, 2.4)]);
        let w = place_xray_window(&east_gaze_pose(1.2), &snap, 0.4, 0).unwrap();
        assert_eq!(w.target_wall_id, 2);
    }

    #[test]
    fn window_is_clamped_inside_wall() {
        // gaze hits 0.1 m below the top edge (z = 2.3 on a 2.4 m wall)
        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 3.0, -2.0, 2.0, 2.4)]);
        let w = place_xray_window(&east_gaze_pose(2.3), &snap, 0.5, 0).unwrap();
        assert_abs_diff_eq!(w.center.z, 2.4 - 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(w.center.y, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn miss_is_none() {
        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 3.0, -2.0, 2.0, 2.4)]);
        let away = UserPose::with_eye_gaze(Point3::new(0.0, 0.0, 1.2), FRAC_PI_2, -Vector3::x()).unwrap();
        assert!(place_xray_window(&away, &snap, 0.4, 0).is_none());
        assert!(place_xray_window(&east_gaze_pose(3.0), &snap, 0.4, 0).is_none());
    }

    #[test]
    fn head_mode_ignores_eye_vector() {
        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 3.0, -2.0, 2.0, 2.4)]);
        let mut pose = UserPose::with_eye_gaze(Point3::new(0.0, 0.0, 1.2), -FRAC_PI_2, -Vector3::x()).unwrap();
        assert!(place_xray_window(&pose, &snap, 0.4, 0).is_none());
        pose.set_gaze_mode(GazeMode::Head);
        assert!(place_xray_window(&pose, &snap, 0.4, 0).is_some());
    }

    #[test]
    fn gaze_must_be_unit() {
        assert!(matches!(
            UserPose::with_eye_gaze(Point3::origin(), 0.0, Vector3::new(1.0, 1.0, 0.0)),
            Err(NavError::GazeNotUnit(_))
        ));
    }

    #[test]
    fn xray_slider_bounds() {
        let mut s = XrayState::default();
        assert_eq!(s.half_size(), DEFAULT_XRAY_HALF_SIZE);
        assert!(s.set_half_size(0.05).is_err());
        assert!(s.set_half_size(1.0).is_ok());
        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 3.0, -2.0, 2.0, 2.4)]);
        assert!(s.update(&east_gaze_pose(1.2), &snap, 0).is_none());
        s.set_enabled(true);
        assert_eq!(s.update(&east_gaze_pose(1.2), &snap, 0).unwrap().half_size, 1.0);
    }

    fn north_user() -> UserPose {
        UserPose::new(Point3::new(0.0, 0.0, 1.2), 0.0)
    }

    #[test]
    fn three_meter_rule_with_hysteresis() {
        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 2.9, -1.0, 1.0, 2.4)]);
        let mut st = TransparencyState::default();
        let up = update_transparency(&north_user(), &snap, &mut st);
        assert_eq!(st.alpha(1), SEE_THROUGH_ALPHA);
        assert_eq!(up.cues.len(), 1);

        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 3.1, -1.0, 1.0, 2.4)]);
        let mut fresh = TransparencyState::default();
        update_transparency(&north_user(), &snap, &mut fresh);
        assert_eq!(fresh.alpha(1), OPAQUE_ALPHA);
        // already see-through: 3.1 m holds the state
        let up = update_transparency(&north_user(), &snap, &mut st);
        assert!(up.changes.is_empty());
        assert_eq!(st.alpha(1), SEE_THROUGH_ALPHA);
    }

    #[test]
    fn retreat_restores_opacity_without_cue() {
        let mut st = TransparencyState::default();
        let near = SceneSnapshot::from_objects(0, [wall_x(1, 2.9, -1.0, 1.0, 2.4)]);
        update_transparency(&north_user(), &near, &mut st);
        let far = SceneSnapshot::from_objects(0, [wall_x(1, 3.3, -1.0, 1.0, 2.4)]);
        let up = update_transparency(&north_user(), &far, &mut st);
        assert_eq!(up.changes, vec![(1, OPAQUE_ALPHA)]);
        assert!(up.cues.is_empty());
    }

    #[test]
    fn cue_azimuth_is_positive_to_the_right() {
        // facing north, wall due east at 2 m (same height as the user)
        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 2.0, -1.0, 1.0, 2.4)]);
        let mut st = TransparencyState::default();
        let up = update_transparency(&north_user(), &snap, &mut st);
        assert_abs_diff_eq!(up.cues[0].azimuth_rad, FRAC_PI_2, epsilon = 1e-6);
        // facing south the same wall is on the left
        let mut st = TransparencyState::default();
        let south = UserPose::new(Point3::new(0.0, 0.0, 1.2), PI);
        let up = update_transparency(&south, &snap, &mut st);
        assert_abs_diff_eq!(up.cues[0].azimuth_rad, -FRAC_PI_2, epsilon = 1e-6);
    }

    #[test]
    fn closest_point_mode_sees_long_walls() {
        // 20 m wall whose center is far but whose surface is 1 m away
        let snap = SceneSnapshot::from_objects(0, [wall_x(1, 1.0, 0.0, 20.0, 2.4)]);
        let mut center = TransparencyState::default();
        update_transparency(&north_user(), &snap, &mut center);
        assert!(!center.is_see_through(1));
        let mut closest = TransparencyState::new(TransparencyConfig { mode: DistanceMode::ClosestPoint, ..Default::default() });
        update_transparency(&north_user(), &snap, &mut closest);
        assert!(closest.is_see_through(1));
    }

    #[test]
    fn minimap_half_width() {
        let cfg = MinimapConfig::new(10.0, 60.0, OrientationMode::NorthUp).unwrap();
        assert_abs_diff_eq!(cfg.half_width(), 5.773_502_691_896_258, epsilon = 1e-9);
        assert!(MinimapConfig::new(0.0, 60.0, OrientationMode::NorthUp).is_err());
        assert!(MinimapConfig::new(1.0, 180.0, OrientationMode::NorthUp).is_err());
    }

    #[test]
    fn peer_positions_north_up_and_track_up() {
        let peers = BTreeMap::from([(2, Pose { position: [0.0, 2.0, 1.6], yaw: 0.0 })]);
        let mut cfg = MinimapConfig::new(10.0, 60.0, OrientationMode::NorthUp).unwrap();
        let user = north_user();
        let f = project_minimap(&user, 1, &SceneSnapshot::new(0), &peers, &cfg, 0);
        assert_abs_diff_eq!(f.avatar(2).unwrap().at, Point2::new(0.0, 0.346_410_161_513_775_4), epsilon = 1e-9);
        assert_eq!(f.avatar(1).unwrap().at, Point2::origin());

        cfg.orientation_mode = OrientationMode::TrackUp;
        let turned = UserPose::new(user.position, PI);
        let f = project_minimap(&turned, 1, &SceneSnapshot::new(0), &peers, &cfg, 0);
        assert_abs_diff_eq!(f.avatar(2).unwrap().at, Point2::new(0.0, -0.346_410_161_513_775_4), epsilon = 1e-9);
    }

    #[test]
    fn track_up_puts_facing_direction_up() {
        let cfg = MinimapConfig::default();
        for yaw in [-2.0, -0.3, 0.0, 1.1, 3.0] {
            let user = UserPose::new(Point3::new(1.0, -2.0, 1.6), yaw);
            let p = MapProjection::new(&user, &cfg);
            let ahead = frame::facing(yaw) * 2.0;
            let m = p.project(&Point2::new(1.0 + ahead.x, -2.0 + ahead.y));
            assert_abs_diff_eq!(m.x, 0.0, epsilon = 1e-12);
            assert!(m.y > 0.0);
        }
    }

    #[test]
    fn footprint_filters_objects_and_grays_received() {
        let mut own = wall_x(1, 3.0, -1.0, 1.0, 2.4);
        own.creator = 1;
        let mut theirs = wall_x(2, -4.0, -1.0, 1.0, 2.4);
        theirs.creator = 9;
        let far = wall_x(3, 30.0, -1.0, 1.0, 2.4);
        let snap = SceneSnapshot::from_objects(0, [own, theirs, far]);
        let cfg = MinimapConfig::new(10.0, 60.0, OrientationMode::NorthUp).unwrap();
        let f = project_minimap(&north_user(), 1, &snap, &BTreeMap::new(), &cfg, 42);
        assert_eq!(f.computed_at_us, 42);
        let colors: BTreeMap<u32, Rgb> = f
            .items
            .iter()
            .filter_map(|i| match i.kind {
                MapItemKind::Object { id, color, .. } => Some((id, color)),
                _ => None,
            })
            .collect();
        assert_eq!(colors.len(), 2);
        assert_eq!(colors[&1], SceneCategory::Wall.color());
        assert_eq!(colors[&2], crate::scene::RECEIVED_GRAY);
    }

    #[test]
    fn probes_run() {
        for f in [Feature::XrayDisplay, Feature::XrayMove, Feature::MinimapRotate] {
            let s = feature_latency_probe(f, 10);
            assert_eq!(s.samples_ms.len(), 10);
            assert!(s.std_ms >= 0.0);
        }
    }
}
