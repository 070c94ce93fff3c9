//! Synthetic scene understanding.
//!
//! Declarative floor plans ([`RoomSpec`]) are turned into classified planar
//! quads, and a simulated Leader "scans" them: only objects whose center falls
//! inside the Leader's visibility wedge are emitted, each exactly once, gated by
//! the manual/auto update policy.
//!
//! Room files are line oriented:
//!
//! ```text
//! # comment
//! room living 0 0 0 7x3.92x2.97
//! platform 1.2 0.8 0.45 0.3 0.25 15 medium
//! door S 1.0 0.9 2.0
//! ```
//!
//! `room <name> <origin x y z> <LxWxH>` opens a room; following `platform`
//! lines give a room-relative center, half extents along the platform's local
//! x/y, yaw in degrees and an optional `medium|large` class; `door` lines cut
//! an opening into the wall on side N/S/E/W at `offset` meters from the wall's
//! low-coordinate end.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector2, Vector3};
use thiserror::Error;

use crate::frame;
use crate::scene::{
    quat_to_array, snapshot_size_bytes, ParticipantId, SceneCategory, SceneObject, SceneSnapshot,
};

/// Longest half extent at or above which a platform counts as large.
pub const LARGE_PLATFORM_HALF_EXTENT: f64 = 0.75;
pub const DEFAULT_AUTO_INTERVAL_S: f64 = 5.0;
/// Handheld-style scan view used by walk-throughs and the gateway Leader.
pub const WALK_SCAN_RADIUS_M: f64 = 4.0;
pub const WALK_SCAN_FOV_DEG: f64 = 90.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("room `{room}`: {msg}")]
    InvalidSpec { room: String, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn invalid(room: &str, msg: impl Into<String>) -> SpecError {
    SpecError::InvalidSpec {
        room: room.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WallSide {
    North,
    South,
    East,
    West,
}

impl WallSide {
    pub const ALL: [WallSide; 4] = [WallSide::South, WallSide::East, WallSide::North, WallSide::West];

    fn letter(self) -> char {
        match self {
            WallSide::North => 'N',
            WallSide::South => 'S',
            WallSide::East => 'E',
            WallSide::West => 'W',
        }
    }

    fn from_letter(s: &str) -> Option<Self> {
        match s {
            "N" => Some(WallSide::North),
            "S" => Some(WallSide::South),
            "E" => Some(WallSide::East),
            "W" => Some(WallSide::West),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlatformClass {
    Medium,
    Large,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformSpec {
    /// Room-relative center.
    pub center: [f64; 3],
    pub half_extents: [f64; 2],
    /// Radians.
    pub yaw: f64,
    pub class: Option<PlatformClass>,
}

impl PlatformSpec {
    pub fn category(&self) -> SceneCategory {
        let class = self.class.unwrap_or({
            if self.half_extents[0].max(self.half_extents[1]) < LARGE_PLATFORM_HALF_EXTENT {
                PlatformClass::Medium
            } else {
                PlatformClass::Large
            }
        });
        match class {
            PlatformClass::Medium => SceneCategory::PlatformMedium,
            PlatformClass::Large => SceneCategory::PlatformLarge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Doorway {
    pub wall: WallSide,
    pub offset: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    pub name: String,
    /// Minimum corner (floor level).
    pub origin: [f64; 3],
    /// Length along x, width along y, height along z.
    pub dimensions: [f64; 3],
    pub platforms: Vec<PlatformSpec>,
    pub doorways: Vec<Doorway>,
}

impl RoomSpec {
    pub fn new(name: impl Into<String>, origin: [f64; 3], dimensions: [f64; 3]) -> Self {
        Self {
            name: name.into(),
            origin,
            dimensions,
            platforms: Vec::new(),
            doorways: Vec::new(),
        }
    }

    pub fn wall_length(&self, side: WallSide) -> f64 {
        match side {
            WallSide::North | WallSide::South => self.dimensions[0],
            WallSide::East | WallSide::West => self.dimensions[1],
        }
    }

    pub fn center(&self) -> Point3<f64> {
        let [x, y, z] = self.origin;
        let [l, w, h] = self.dimensions;
        Point3::new(x + l / 2.0, y + w / 2.0, z + h / 2.0)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let [l, w, h] = self.dimensions;
        if !(l > 0.0 && w > 0.0 && h > 0.0) {
            return Err(invalid(&self.name, "dimensions must be positive"));
        }
        for (i, p) in self.platforms.iter().enumerate() {
            if !(p.half_extents[0] > 0.0 && p.half_extents[1] > 0.0) {
                return Err(invalid(&self.name, format!("platform {i}: half extents must be positive")));
            }
            let [cx, cy, cz] = p.center;
            if !(0.0..=h).contains(&cz) {
                return Err(invalid(&self.name, format!("platform {i}: height outside room")));
            }
            let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), p.yaw);
            for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let corner = rot * Vector3::new(sx * p.half_extents[0], sy * p.half_extents[1], 0.0);
                let (x, y) = (cx + corner.x, cy + corner.y);
                if x < -1e-9 || x > l + 1e-9 || y < -1e-9 || y > w + 1e-9 {
                    return Err(invalid(&self.name, format!("platform {i}: footprint leaves the room")));
                }
            }
        }
        for side in WallSide::ALL {
            let mut doors: Vec<&Doorway> = self.doorways.iter().filter(|d| d.wall == side).collect();
            doors.sort_by(|a, b| a.offset.total_cmp(&b.offset));
            let len = self.wall_length(side);
            let mut end = 0.0;
            for d in doors {
                if !(d.width > 0.0 && d.height > 0.0) {
                    return Err(invalid(&self.name, "doorway width and height must be positive"));
                }
                if d.offset < end - 1e-9 {
                    return Err(invalid(&self.name, format!("doorways overlap on wall {}", side.letter())));
                }
                if d.offset + d.width > len + 1e-9 || d.height > h + 1e-9 {
                    return Err(invalid(&self.name, format!("doorway exceeds wall {}", side.letter())));
                }
                end = d.offset + d.width;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let [x, y, z] = self.origin;
        let [l, w, h] = self.dimensions;
        writeln!(out, "room {} {x} {y} {z} {l}x{w}x{h}", self.name).unwrap();
        for p in &self.platforms {
            let [cx, cy, cz] = p.center;
            let class = match p.class {
                Some(PlatformClass::Medium) => " medium",
                Some(PlatformClass::Large) => " large",
                None => "",
            };
            writeln!(
                out,
                "platform {cx} {cy} {cz} {} {} {}{class}",
                p.half_extents[0],
                p.half_extents[1],
                p.yaw.to_degrees()
            )
            .unwrap();
        }
        for d in &self.doorways {
            writeln!(out, "door {} {} {} {}", d.wall.letter(), d.offset, d.width, d.height).unwrap();
        }
        out
    }
}

pub fn parse_rooms(text: &str) -> Result<Vec<RoomSpec>, SpecError> {
    let mut rooms: Vec<RoomSpec> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| SpecError::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split_whitespace().collect();
        let nums = |fields: &[&str]| -> Result<Vec<f64>, SpecError> {
            fields
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`"))))
                .collect()
        };
        match f[0] {
            "room" => {
                if f.len() != 6 {
                    return Err(err("expected `room <name> <x> <y> <z> <LxWxH>`".into()));
                }
                let o = nums(&f[2..5])?;
                let dims: Vec<&str> = f[5].split('x').collect();
                if dims.len() != 3 {
                    return Err(err(format!("bad dimensions `{}`", f[5])));
                }
                let d = nums(&dims)?;
                rooms.push(RoomSpec::new(f[1], [o[0], o[1], o[2]], [d[0], d[1], d[2]]));
            }
            "platform" => {
                if !(7..=8).contains(&f.len()) {
                    return Err(err("expected `platform <x> <y> <z> <hx> <hy> <yaw> [medium|large]`".into()));
                }
                let v = nums(&f[1..7])?;
                let class = match f.get(7) {
                    None => None,
                    Some(&"medium") => Some(PlatformClass::Medium),
                    Some(&"large") => Some(PlatformClass::Large),
                    Some(other) => return Err(err(format!("bad platform class `{other}`"))),
                };
                let room = rooms.last_mut().ok_or_else(|| err("platform before any room".into()))?;
                room.platforms.push(PlatformSpec {
                    center: [v[0], v[1], v[2]],
                    half_extents: [v[3], v[4]],
                    yaw: v[5].to_radians(),
                    class,
                });
            }
            "door" => {
                if f.len() != 5 {
                    return Err(err("expected `door <N|S|E|W> <offset> <w> <h>`".into()));
                }
                let wall = WallSide::from_letter(f[1]).ok_or_else(|| err(format!("bad wall `{}`", f[1])))?;
                let v = nums(&f[2..5])?;
                let room = rooms.last_mut().ok_or_else(|| err("door before any room".into()))?;
                room.doorways.push(Doorway {
                    wall,
                    offset: v[0],
                    width: v[1],
                    height: v[2],
                });
            }
            other => return Err(err(format!("unknown directive `{other}`"))),
        }
    }
    for r in &rooms {
        r.validate()?;
    }
    Ok(rooms)
}

pub fn rooms_to_text(rooms: &[RoomSpec]) -> String {
    rooms.iter().map(RoomSpec::to_text).collect::<Vec<_>>().join("\n")
}

// ---------------------------------------------------------------------------
// Quad construction

/// Rotation whose local axes map to (u, v, n).
fn basis_quat(u: Vector3<f64>, v: Vector3<f64>, n: Vector3<f64>) -> UnitQuaternion<f64> {
    let m = Matrix3::from_columns(&[u, v, n]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

fn quad(
    id: u32,
    category: SceneCategory,
    center: Point3<f64>,
    half: [f64; 2],
    rot: &UnitQuaternion<f64>,
) -> SceneObject {
    SceneObject {
        id,
        version: 1,
        category,
        center: [center.x as f32, center.y as f32, center.z as f32],
        half_extents: [half[0] as f32, half[1] as f32],
        orientation: quat_to_array(rot),
        created_us: 0,
        creator: 0,
    }
}

/// Rectangles `[s0, s1] x [t0, t1]` (along-wall, height) covering a wall of
/// `len` x `height` minus its doorway cutouts: for every opening, the strip
/// left of it, and the lintel above it; plus the strip after the last opening.
pub fn wall_pieces(len: f64, height: f64, doors: &[Doorway]) -> Vec<[f64; 4]> {
    let mut doors: Vec<&Doorway> = doors.iter().collect();
    doors.sort_by(|a, b| a.offset.total_cmp(&b.offset));
    let mut pieces = Vec::new();
    let mut cursor = 0.0;
    const EPS: f64 = 1e-9;
    for d in doors {
        if d.offset - cursor > EPS {
            pieces.push([cursor, d.offset, 0.0, height]);
        }
        if height - d.height > EPS {
            pieces.push([d.offset, d.offset + d.width, d.height, height]);
        }
        cursor = d.offset + d.width;
    }
    if len - cursor > EPS {
        pieces.push([cursor, len, 0.0, height]);
    }
    pieces
}

/// Hands out fresh object ids.
#[derive(Debug, Clone)]
pub struct IdAllocator {
    next: u32,
}

impl Default for IdAllocator {
    fn default() -> Self {
        Self { next: 1 }
    }
}

impl IdAllocator {
    pub fn starting_at(next: u32) -> Self {
        Self { next }
    }

    pub fn fresh(&mut self) -> u32 {
        let id = self.next;
        self.next += 1;
        id
    }
}

/// Builds the quads of one room: walls (split around doorways), floor,
/// ceiling, then one quad per platform. All at version 1 with zero
/// timestamp and creator; the scanner stamps those on emission.
pub fn generate_room(spec: &RoomSpec, ids: &mut IdAllocator) -> Result<Vec<SceneObject>, SpecError> {
    spec.validate()?;
    let [x0, y0, z0] = spec.origin;
    let [l, w, h] = spec.dimensions;
    let up = Vector3::z();
    let mut out = Vec::new();

    for side in WallSide::ALL {
        // interior-facing normal and the world point at along-wall coordinate s
        let (normal, base, along): (Vector3<f64>, Vector3<f64>, Vector3<f64>) = match side {
            WallSide::South => (Vector3::y(), Vector3::new(x0, y0, z0), Vector3::x()),
            WallSide::North => (-Vector3::y(), Vector3::new(x0, y0 + w, z0), Vector3::x()),
            WallSide::West => (Vector3::x(), Vector3::new(x0, y0, z0), Vector3::y()),
            WallSide::East => (-Vector3::x(), Vector3::new(x0 + l, y0, z0), Vector3::y()),
        };
        let rot = basis_quat(up.cross(&normal), up, normal);
        let doors: Vec<Doorway> = spec.doorways.iter().copied().filter(|d| d.wall == side).collect();
        for [s0, s1, t0, t1] in wall_pieces(spec.wall_length(side), h, &doors) {
            let c = base + along * ((s0 + s1) / 2.0) + up * ((t0 + t1) / 2.0);
            out.push(quad(
                ids.fresh(),
                SceneCategory::Wall,
                Point3::from(c),
                [(s1 - s0) / 2.0, (t1 - t0) / 2.0],
                &rot,
            ));
        }
    }

    let mid = Point3::new(x0 + l / 2.0, y0 + w / 2.0, z0);
    out.push(quad(
        ids.fresh(),
        SceneCategory::Floor,
        mid,
        [l / 2.0, w / 2.0],
        &UnitQuaternion::identity(),
    ));
    let ceiling_rot = basis_quat(Vector3::x(), -Vector3::y(), -Vector3::z());
    out.push(quad(
        ids.fresh(),
        SceneCategory::Ceiling,
        mid + up * h,
        [l / 2.0, w / 2.0],
        &ceiling_rot,
    ));

    for p in &spec.platforms {
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), p.yaw);
        let c = Point3::new(x0 + p.center[0], y0 + p.center[1], z0 + p.center[2]);
        out.push(quad(ids.fresh(), p.category(), c, p.half_extents, &rot));
    }
    Ok(out)
}

/// All rooms of a floor plan with their quads, ids assigned in room order.
#[derive(Debug, Clone)]
pub struct World {
    pub rooms: Vec<RoomSpec>,
    objects: Vec<SceneObject>,
}

impl World {
    pub fn new(rooms: Vec<RoomSpec>) -> Result<Self, SpecError> {
        let mut ids = IdAllocator::default();
        let mut objects = Vec::new();
        for r in &rooms {
            objects.extend(generate_room(r, &mut ids)?);
        }
        Ok(Self { rooms, objects })
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Scanning

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdatePolicy {
    /// Emit only when [`ScanState::trigger_update`] has been called.
    Manual,
    /// Emit at most once per interval (seconds).
    Auto { interval_s: f64 },
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        UpdatePolicy::Auto {
            interval_s: DEFAULT_AUTO_INTERVAL_S,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderPose {
    pub position: Point3<f64>,
    pub yaw: f64,
}

#[derive(Debug, Clone)]
pub struct ScanState {
    pub leader_pose: LeaderPose,
    pub visibility_radius: f64,
    pub fov_deg: f64,
    pub emitted: BTreeSet<u32>,
    pub update_policy: UpdatePolicy,
    pub creator: ParticipantId,
    trigger: bool,
    last_update_us: Option<u64>,
}

impl ScanState {
    pub fn new(
        leader_pose: LeaderPose,
        visibility_radius: f64,
        fov_deg: f64,
        update_policy: UpdatePolicy,
        creator: ParticipantId,
    ) -> Result<Self, SpecError> {
        if !(fov_deg > 0.0 && fov_deg <= 360.0) {
            return Err(invalid("scan", format!("fov {fov_deg} outside (0, 360]")));
        }
        if !(visibility_radius > 0.0) {
            return Err(invalid("scan", "visibility radius must be positive"));
        }
        if let UpdatePolicy::Auto { interval_s } = update_policy {
            if !(interval_s > 0.0) {
                return Err(invalid("scan", "auto interval must be positive"));
            }
        }
        Ok(Self {
            leader_pose,
            visibility_radius,
            fov_deg,
            emitted: BTreeSet::new(),
            update_policy,
            creator,
            trigger: false,
            last_update_us: None,
        })
    }

    /// Infinite radius, 360 degree wedge, manual policy with the trigger armed.
    pub fn full_visibility(creator: ParticipantId) -> Self {
        let mut s = Self::new(
            LeaderPose {
                position: Point3::origin(),
                yaw: 0.0,
            },
            f64::INFINITY,
            360.0,
            UpdatePolicy::Manual,
            creator,
        )
        .expect("static parameters are valid");
        s.trigger_update();
        s
    }

    /// The "update scene" button.
    pub fn trigger_update(&mut self) {
        self.trigger = true;
    }

    pub fn set_policy(&mut self, policy: UpdatePolicy) {
        self.update_policy = policy;
        self.last_update_us = None;
    }

    /// Whether `p` lies inside the visibility radius and horizontal wedge.
    pub fn sees(&self, p: &Point3<f64>) -> bool {
        let offset = p - self.leader_pose.position;
        if offset.norm() > self.visibility_radius {
            return false;
        }
        if self.fov_deg >= 360.0 {
            return true;
        }
        let flat = Vector2::new(offset.x, offset.y);
        if flat.norm() < 1e-9 {
            return true;
        }
        frame::relative_bearing(self.leader_pose.yaw, flat).abs() <= self.fov_deg.to_radians() / 2.0
    }
}

/// Emits not-yet-emitted visible objects, stamped with `now_us` and the
/// scanner's creator id, and records them as emitted.
pub fn scan_step(state: &mut ScanState, world: &World, now_us: u64) -> Vec<SceneObject> {
    match state.update_policy {
        UpdatePolicy::Manual => {
            if !state.trigger {
                return Vec::new();
            }
            state.trigger = false;
        }
        UpdatePolicy::Auto { interval_s } => {
            if let Some(last) = state.last_update_us {
                if (now_us.saturating_sub(last) as f64) < interval_s * 1e6 {
                    return Vec::new();
                }
            }
        }
    }
    state.last_update_us = Some(now_us);
    let mut out = Vec::new();
    for obj in world.objects() {
        if state.emitted.contains(&obj.id) || !state.sees(&obj.center_point()) {
            continue;
        }
        state.emitted.insert(obj.id);
        out.push(SceneObject {
            created_us: now_us,
            creator: state.creator,
            ..*obj
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Canonical rooms

/// Lays `count` platforms on a grid over the room footprint, cycling through
/// three working heights.
fn grid_platforms(count: usize, length: f64, width: f64, height: f64) -> Vec<PlatformSpec> {
    let cols = ((count as f64 * length / width).sqrt().ceil() as usize).max(1);
    let rows = count.div_ceil(cols);
    let (cell_x, cell_y) = (length / cols as f64, width / rows as f64);
    let heights = [0.45_f64, 0.75, 1.05];
    (0..count)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            PlatformSpec {
                center: [
                    (c as f64 + 0.5) * cell_x,
                    (r as f64 + 0.5) * cell_y,
                    heights[i % heights.len()].min(height * 0.9),
                ],
                half_extents: [cell_x * 0.4, cell_y * 0.4],
                yaw: 0.0,
                class: None,
            }
        })
        .collect()
}

fn canonical(name: &str, dims: [f64; 3], objects: usize) -> RoomSpec {
    let mut room = RoomSpec::new(name, [0.0, 0.0, 0.0], dims);
    room.platforms = grid_platforms(objects - 6, dims[0], dims[1], dims[2]);
    room
}

/// 3.81 m x 3.02 m x 2.40 m, 30 objects.
pub fn personal_room() -> RoomSpec {
    canonical("personal", [3.81, 3.02, 2.40], 30)
}

/// 7 m x 3.92 m x 2.97 m, 90 objects.
pub fn living_room() -> RoomSpec {
    canonical("living", [7.0, 3.92, 2.97], 90)
}

/// 13 m x 9.2 m x 3 m, 130 objects.
pub fn classroom() -> RoomSpec {
    canonical("classroom", [13.0, 9.2, 3.0], 130)
}

pub fn canonical_room(name: &str) -> Option<RoomSpec> {
    match name {
        "personal" => Some(personal_room()),
        "living" => Some(living_room()),
        "classroom" => Some(classroom()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionRow {
    pub room: String,
    pub object_count: usize,
    pub build_time_s: f64,
    pub size_bytes: usize,
    /// Construction time reported for the physical capture of the same room.
    pub reference_time_s: f64,
    /// Serialized size reported for the physical capture, megabytes.
    pub reference_size_mb: f64,
}

impl ConstructionRow {
    pub fn within_reference(&self) -> bool {
        self.build_time_s < self.reference_time_s
            && self.size_bytes as f64 <= self.reference_size_mb * 1e6
    }
}

/// Times trigger-to-last-object for a full-visibility scan of each canonical
/// room and measures the serialized snapshot.
pub fn construction_benchmark() -> Vec<ConstructionRow> {
    let rooms = [
        (personal_room(), 0.96, 0.18),
        (living_room(), 2.53, 0.33),
        (classroom(), 3.69, 0.75),
    ];
    rooms
        .into_iter()
        .map(|(spec, ref_time, ref_size)| {
            let start = Instant::now();
            let world = World::new(vec![spec.clone()]).expect("canonical room is valid");
            let mut scan = ScanState::full_visibility(1);
            let emitted = scan_step(&mut scan, &world, 0);
            let build_time_s = start.elapsed().as_secs_f64();
            let snap = SceneSnapshot::from_objects(0, emitted);
            ConstructionRow {
                room: spec.name,
                object_count: snap.len(),
                build_time_s,
                size_bytes: snapshot_size_bytes(&snap),
                reference_time_s: ref_time,
                reference_size_mb: ref_size,
            }
        })
        .collect()
}

/// Walks through every room: at each room center the Leader turns a full
/// circle in 45 degree steps with a 4 m, 90 degree view; one auto-update
/// interval passes per step.
pub fn walk_scan(world: &World, creator: ParticipantId) -> Vec<SceneObject> {
    let mut state = ScanState::new(
        LeaderPose {
            position: Point3::origin(),
            yaw: 0.0,
        },
        WALK_SCAN_RADIUS_M,
        WALK_SCAN_FOV_DEG,
        UpdatePolicy::default(),
        creator,
    )
    .expect("static parameters are valid");
    let step_us = (DEFAULT_AUTO_INTERVAL_S * 1e6) as u64;
    let mut now = 0;
    let mut out = Vec::new();
    for room in &world.rooms {
        let mut c = room.center();
        c.z = room.origin[2] + 1.6_f64.min(room.dimensions[2]);
        for k in 0..8 {
            state.leader_pose = LeaderPose {
                position: c,
                yaw: f64::from(k) * std::f64::consts::FRAC_PI_4,
            };
            out.extend(scan_step(&mut state, world, now));
            now += step_us;
        }
    }
    out
}
