//! Scene objects: classified planar quads, the snapshot that groups them, and
//! the fixed-size binary record every other layer ships around.
//!
//! Record layout (56 bytes, little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | id (u32)                       |
//! | 4      | 4    | version (u32)                  |
//! | 8      | 1    | category tag (0..=5)           |
//! | 9      | 1    | flags (reserved, 0)            |
//! | 10     | 12   | center x, y, z (f32)           |
//! | 22     | 8    | half extents w, h (f32)        |
//! | 30     | 16   | orientation x, y, z, w (f32)   |
//! | 46     | 8    | created_us (u64)               |
//! | 54     | 2    | creator (u16)                  |
//!
//! Snapshot header (16 bytes): epoch_us (u64), object count (u32),
//! snapshot version (u32).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

pub const RECORD_SIZE: usize = 56;
pub const SNAPSHOT_HEADER_SIZE: usize = 16;

/// Participant identifier assigned by the relay.
pub type ParticipantId = u16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("record must be {RECORD_SIZE} bytes, got {0}")]
    WrongLength(usize),
    #[error("unknown category tag {0}")]
    BadCategory(u8),
    #[error("non-finite float in field {0}")]
    NonFinite(&'static str),
    #[error("orientation quaternion has zero norm")]
    ZeroQuaternion,
    #[error("snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvalidObject {
    #[error("half extents must be positive, got {0:?}")]
    NonPositiveExtents([f32; 2]),
    #[error("orientation norm {0} is not within 1e-6 of 1")]
    NotUnit(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SceneCategory {
    Wall,
    Floor,
    Ceiling,
    PlatformMedium,
    PlatformLarge,
    Unclassified,
}

/// 8-bit RGB display color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }
}

/// Color used for objects received from another participant.
pub const RECEIVED_GRAY: Rgb = Rgb(128, 128, 128);

impl SceneCategory {
    pub const ALL: [SceneCategory; 6] = [
        SceneCategory::Wall,
        SceneCategory::Floor,
        SceneCategory::Ceiling,
        SceneCategory::PlatformMedium,
        SceneCategory::PlatformLarge,
        SceneCategory::Unclassified,
    ];

    pub fn tag(self) -> u8 {
        match self {
            SceneCategory::Wall => 0,
            SceneCategory::Floor => 1,
            SceneCategory::Ceiling => 2,
            SceneCategory::PlatformMedium => 3,
            SceneCategory::PlatformLarge => 4,
            SceneCategory::Unclassified => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    /// Category display color as captured by the Leader.
    pub fn color(self) -> Rgb {
        match self {
            SceneCategory::Wall => Rgb(255, 221, 0),           // yellow
            SceneCategory::Floor => Rgb(0, 150, 255),          // bright blue
            SceneCategory::Ceiling => Rgb(0, 0, 128),          // navy
            SceneCategory::PlatformMedium => Rgb(220, 20, 20), // red
            SceneCategory::PlatformLarge => Rgb(86, 176, 0),   // grass green
            SceneCategory::Unclassified => Rgb(0, 160, 150),   // blue-green
        }
    }

    pub fn color_name(self) -> &'static str {
        match self {
            SceneCategory::Wall => "yellow",
            SceneCategory::Floor => "bright-blue",
            SceneCategory::Ceiling => "navy",
            SceneCategory::PlatformMedium => "red",
            SceneCategory::PlatformLarge => "grass-green",
            SceneCategory::Unclassified => "blue-green",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SceneCategory::Wall => "wall",
            SceneCategory::Floor => "floor",
            SceneCategory::Ceiling => "ceiling",
            SceneCategory::PlatformMedium => "platform-medium",
            SceneCategory::PlatformLarge => "platform-large",
            SceneCategory::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for SceneCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// Display color of an object for a given viewer: the category color for the
/// viewer's own objects, gray for everything received from someone else.
pub fn display_color(obj: &SceneObject, viewer: ParticipantId) -> Rgb {
    if obj.creator == viewer {
        obj.category.color()
    } else {
        RECEIVED_GRAY
    }
}

/// One classified planar quad. The quad lies in the local XY plane of
/// `orientation`; local +Z is the surface normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub id: u32,
    pub version: u32,
    pub category: SceneCategory,
    pub center: [f32; 3],
    pub half_extents: [f32; 2],
    /// Quaternion as (x, y, z, w).
    pub orientation: [f32; 4],
    pub created_us: u64,
    pub creator: ParticipantId,
}

impl SceneObject {
    pub fn validate(&self) -> Result<(), InvalidObject> {
        if !self.center.iter().all(|v| v.is_finite()) {
            return Err(InvalidObject::NonFinite("center"));
        }
        if !self.orientation.iter().all(|v| v.is_finite()) {
            return Err(InvalidObject::NonFinite("orientation"));
        }
        if !(self.half_extents[0] > 0.0 && self.half_extents[1] > 0.0) {
            return Err(InvalidObject::NonPositiveExtents(self.half_extents));
        }
        let norm = self
            .orientation
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(InvalidObject::NotUnit(norm));
        }
        Ok(())
    }

    pub fn center_point(&self) -> Point3<f64> {
        Point3::new(
            f64::from(self.center[0]),
            f64::from(self.center[1]),
            f64::from(self.center[2]),
        )
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [x, y, z, w] = self.orientation.map(f64::from);
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    /// Local X axis (half_extents[0] direction) in world space.
    pub fn axis_u(&self) -> Vector3<f64> {
        self.rotation() * Vector3::x()
    }

    /// Local Y axis (half_extents[1] direction) in world space.
    pub fn axis_v(&self) -> Vector3<f64> {
        self.rotation() * Vector3::y()
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.rotation() * Vector3::z()
    }

    pub fn area(&self) -> f64 {
        4.0 * f64::from(self.half_extents[0]) * f64::from(self.half_extents[1])
    }
}

/// Packs a unit quaternion into the (x, y, z, w) storage order, normalizing in
/// f64 first so the f32 result keeps its norm within 1e-6 of one.
pub fn quat_to_array(q: &UnitQuaternion<f64>) -> [f32; 4] {
    let c = q.as_ref().coords;
    [c.x as f32, c.y as f32, c.z as f32, c.w as f32]
}

pub fn encode_object(obj: &SceneObject) -> [u8; RECORD_SIZE] {
    let mut out = [0u8; RECORD_SIZE];
    out[0..4].copy_from_slice(&obj.id.to_le_bytes());
    out[4..8].copy_from_slice(&obj.version.to_le_bytes());
    out[8] = obj.category.tag();
    out[9] = 0;
    let mut at = 10;
    for v in obj
        .center
        .iter()
        .chain(obj.half_extents.iter())
        .chain(obj.orientation.iter())
    {
        out[at..at + 4].copy_from_slice(&v.to_le_bytes());
        at += 4;
    }
    debug_assert_eq!(at, 46);
    out[46..54].copy_from_slice(&obj.created_us.to_le_bytes());
    out[54..56].copy_from_slice(&obj.creator.to_le_bytes());
    out
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode_object(bytes: &[u8]) -> Result<SceneObject, RecordError> {
    if bytes.len() != RECORD_SIZE {
        return Err(RecordError::WrongLength(bytes.len()));
    }
    let id = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let category = SceneCategory::from_tag(bytes[8]).ok_or(RecordError::BadCategory(bytes[8]))?;
    let center = [f32_at(bytes, 10), f32_at(bytes, 14), f32_at(bytes, 18)];
    let half_extents = [f32_at(bytes, 22), f32_at(bytes, 26)];
    let orientation = [
        f32_at(bytes, 30),
        f32_at(bytes, 34),
        f32_at(bytes, 38),
        f32_at(bytes, 42),
    ];
    if !center.iter().all(|v| v.is_finite()) {
        return Err(RecordError::NonFinite("center"));
    }
    if !half_extents.iter().all(|v| v.is_finite()) {
        return Err(RecordError::NonFinite("half_extents"));
    }
    if !orientation.iter().all(|v| v.is_finite()) {
        return Err(RecordError::NonFinite("orientation"));
    }
    if orientation.iter().all(|&v| v == 0.0) {
        return Err(RecordError::ZeroQuaternion);
    }
    let created_us = u64::from_le_bytes(bytes[46..54].try_into().unwrap());
    let creator = u16::from_le_bytes(bytes[54..56].try_into().unwrap());
    Ok(SceneObject {
        id,
        version,
        category,
        center,
        half_extents,
        orientation,
        created_us,
        creator,
    })
}

/// Versioned collection of scene objects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneSnapshot {
    pub epoch_us: u64,
    objects: BTreeMap<u32, SceneObject>,
}

impl SceneSnapshot {
    pub fn new(epoch_us: u64) -> Self {
        Self {
            epoch_us,
            objects: BTreeMap::new(),
        }
    }

    pub fn from_objects(epoch_us: u64, objects: impl IntoIterator<Item = SceneObject>) -> Self {
        let mut snap = Self::new(epoch_us);
        for o in objects {
            snap.upsert(o);
        }
        snap
    }

    /// Inserts or replaces an object if its version is newer than the one held.
    /// Returns whether the snapshot changed.
    pub fn upsert(&mut self, obj: SceneObject) -> bool {
        match self.objects.get(&obj.id) {
            Some(existing) if existing.version >= obj.version => false,
            _ => {
                self.objects.insert(obj.id, obj);
                true
            }
        }
    }

    pub fn get(&self, id: u32) -> Option<&SceneObject> {
        self.objects.get(&id)
    }

    pub fn remove(&mut self, id: u32) -> Option<SceneObject> {
        self.objects.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Objects in ascending id order.
    pub fn objects(&self) -> impl Iterator<Item = &SceneObject> + '_ {
        self.objects.values()
    }

    pub fn walls(&self) -> impl Iterator<Item = &SceneObject> + '_ {
        self.objects
            .values()
            .filter(|o| o.category == SceneCategory::Wall)
    }

    pub fn snapshot_version(&self) -> u32 {
        self.objects.values().map(|o| o.version).max().unwrap_or(0)
    }
}

pub fn snapshot_size_bytes(snap: &SceneSnapshot) -> usize {
    SNAPSHOT_HEADER_SIZE + RECORD_SIZE * snap.len()
}

pub fn encode_snapshot(snap: &SceneSnapshot) -> Vec<u8> {
    let mut out = Vec::with_capacity(snapshot_size_bytes(snap));
    out.extend_from_slice(&snap.epoch_us.to_le_bytes());
    out.extend_from_slice(&(snap.len() as u32).to_le_bytes());
    out.extend_from_slice(&snap.snapshot_version().to_le_bytes());
    for o in snap.objects() {
        out.extend_from_slice(&encode_object(o));
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<SceneSnapshot, RecordError> {
    if bytes.len() < SNAPSHOT_HEADER_SIZE {
        return Err(RecordError::Snapshot("truncated header".into()));
    }
    let epoch_us = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let version = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let body = &bytes[SNAPSHOT_HEADER_SIZE..];
    if body.len() != count * RECORD_SIZE {
        return Err(RecordError::Snapshot(format!(
            "header says {count} objects, body holds {} bytes",
            body.len()
        )));
    }
    let mut snap = SceneSnapshot::new(epoch_us);
    for chunk in body.chunks_exact(RECORD_SIZE) {
        let obj = decode_object(chunk)?;
        if snap.get(obj.id).is_some() {
            return Err(RecordError::Snapshot(format!("duplicate id {}", obj.id)));
        }
        snap.upsert(obj);
    }
    if snap.snapshot_version() != version {
        return Err(RecordError::Snapshot(format!(
            "header version {version} != max object version {}",
            snap.snapshot_version()
        )));
    }
    Ok(snap)
}

// ---------------------------------------------------------------------------
// Text dump: `epoch <us>` followed by one object per line, fields in
// declaration order. Floats use Rust's shortest round-trip formatting.

pub fn object_to_line(o: &SceneObject) -> String {
    let c = o.center;
    let h = o.half_extents;
    let q = o.orientation;
    format!(
        "{} {} {} {} {} {} {} {} {} {} {} {} {} {}",
        o.id,
        o.version,
        o.category,
        c[0],
        c[1],
        c[2],
        h[0],
        h[1],
        q[0],
        q[1],
        q[2],
        q[3],
        o.created_us,
        o.creator
    )
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {msg}")]
pub struct DumpError {
    pub line: usize,
    pub msg: String,
}

pub fn object_from_line(line: &str) -> Result<SceneObject, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 14 {
        return Err(format!("expected 14 fields, got {}", f.len()));
    }
    fn num<T: FromStr>(s: &str, what: &str) -> Result<T, String> {
        s.parse().map_err(|_| format!("bad {what} `{s}`"))
    }
    let obj = SceneObject {
        id: num(f[0], "id")?,
        version: num(f[1], "version")?,
        category: f[2].parse()?,
        center: [num(f[3], "x")?, num(f[4], "y")?, num(f[5], "z")?],
        half_extents: [num(f[6], "half-width")?, num(f[7], "half-height")?],
        orientation: [
            num(f[8], "qx")?,
            num(f[9], "qy")?,
            num(f[10], "qz")?,
            num(f[11], "qw")?,
        ],
        created_us: num(f[12], "created_us")?,
        creator: num(f[13], "creator")?,
    };
    obj.validate().map_err(|e| e.to_string())?;
    Ok(obj)
}

pub fn dump_snapshot(snap: &SceneSnapshot) -> String {
    let mut out = format!("epoch {}\n", snap.epoch_us);
    for o in snap.objects() {
        out.push_str(&object_to_line(o));
        out.push('\n');
    }
    out
}

pub fn parse_dump(text: &str) -> Result<SceneSnapshot, DumpError> {
    let mut snap = SceneSnapshot::new(0);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| DumpError { line: i + 1, msg };
        if let Some(rest) = line.strip_prefix("epoch ") {
            snap.epoch_us = rest.trim().parse().map_err(|_| err("bad epoch".into()))?;
            continue;
        }
        let obj = object_from_line(line).map_err(err)?;
        if snap.get(obj.id).is_some() {
            return Err(err(format!("duplicate id {}", obj.id)));
        }
        snap.upsert(obj);
    }
    Ok(snap)
}
