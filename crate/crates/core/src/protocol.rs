//! Leader-Follower wire protocol.
//!
//! Every datagram starts with the magic `CAMR` (0x43414D52, big-endian on the
//! wire) and one type byte whose high nibble is the protocol version (1) and
//! low nibble the message kind. Bodies are little-endian:
//!
//! | kind | message      | body                                                        |
//! |------|--------------|-------------------------------------------------------------|
//! | 1    | Hello        | role u8, room code 6 x ASCII                                |
//! | 2    | Welcome      | participant u16, session epoch u64, leader-stream base u32  |
//! | 3    | ObjectUpdate | seq u32, count u8, count x 56-byte records (count <= 20)    |
//! | 4    | PoseUpdate   | participant u16, position 3 x f32, yaw f32                  |
//! | 5    | Ack          | cumulative seq u32, selective bitmap u32                    |
//! | 6    | Heartbeat    | send time u64 (sender clock, microseconds)                  |
//! | 7    | Reject       | reason u8                                                   |
//!
//! Under [`FramingProfile::Framed`] the header is followed by the body length
//! (u32), a 16-byte tag, and the body XORed with a keystream. That is exactly
//! 20 bytes more than [`FramingProfile::Plain`] for every message. The framed
//! profile reproduces the size cost of an encrypted transport; it is not a
//! secure channel.
//!
//! Sequence numbers live in two streams told apart by the top bit: Leader
//! updates use `1..2^31`, relay catch-up batches set [`CATCHUP_FLAG`]. Acks
//! carry the flag of the stream they acknowledge.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scene::{decode_object, encode_object, ParticipantId, RecordError, SceneObject, SceneSnapshot, RECORD_SIZE};

pub const MAGIC: u32 = 0x4341_4D52;
pub const PROTOCOL_VERSION: u8 = 1;
pub const PLAIN_HEADER: usize = 5;
pub const FRAMED_OVERHEAD: usize = 20;
pub const TAG_SIZE: usize = 16;
pub const MAX_DATAGRAM: usize = 1400;
pub const MAX_RECORDS_PER_UPDATE: usize = 20;

pub const CATCHUP_FLAG: u32 = 0x8000_0000;
const INDEX_MASK: u32 = !CATCHUP_FLAG;

pub const MIN_RTO_US: u64 = 50_000;
pub const MAX_RTO_US: u64 = 2_000_000;
pub const GIVE_UP_US: u64 = 30_000_000;
/// RTT assumed before the first sample arrives.
pub const INITIAL_RTT_US: u64 = 100_000;
pub const HEARTBEAT_INTERVAL_US: u64 = 1_000_000;
pub const HELLO_RETRY_US: u64 = 500_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("datagram too short")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("length field {declared} does not match body {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("authentication tag mismatch")]
    AuthFailure,
    #[error("datagram of {0} bytes exceeds {MAX_DATAGRAM}")]
    TooLarge(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("malformed body: {0}")]
    Body(String),
    #[error("malformed record: {0}")]
    Record(#[from] RecordError),
    #[error("nothing to publish")]
    EmptyPublish,
    #[error("only the Leader may publish")]
    NotLeader,
    #[error("invalid room code `{0}`")]
    BadRoomCode(String),
}

// ---------------------------------------------------------------------------
// Message types

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Leader,
    Follower,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Leader => "leader",
            Role::Follower => "follower",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "leader" => Ok(Role::Leader),
            "follower" => Ok(Role::Follower),
            _ => Err(format!("unknown role `{s}`")),
        }
    }
}

/// Six ASCII alphanumeric characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoomCode([u8; 6]);

impl RoomCode {
    pub fn new(code: &str) -> Result<Self, ProtocolError> {
        let bytes = code.as_bytes();
        if bytes.len() != 6 || !bytes.iter().all(u8::is_ascii_alphanumeric) {
            return Err(ProtocolError::BadRoomCode(code.to_string()));
        }
        Ok(Self(bytes.try_into().unwrap()))
    }

    /// Validates raw bytes as received off the wire.
    pub fn from_bytes(bytes: [u8; 6]) -> Option<Self> {
        bytes.iter().all(u8::is_ascii_alphanumeric).then_some(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8; 6] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("validated ASCII")
    }
}

impl fmt::Display for RoomCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    LeaderExists,
    SessionFull,
    BadRoomCode,
}

impl RejectReason {
    fn code(self) -> u8 {
        match self {
            RejectReason::LeaderExists => 1,
            RejectReason::SessionFull => 2,
            RejectReason::BadRoomCode => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(RejectReason::LeaderExists),
            2 => Some(RejectReason::SessionFull),
            3 => Some(RejectReason::BadRoomCode),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RejectReason::LeaderExists => "LeaderExists",
            RejectReason::SessionFull => "SessionFull",
            RejectReason::BadRoomCode => "BadRoomCode",
        }
    }
}

/// One encoded scene object as carried in an update. Decoding is deferred so
/// that a receiver can reject a whole datagram before applying any record.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct ObjectRecord(pub [u8; RECORD_SIZE]);

impl ObjectRecord {
    pub fn encode(obj: &SceneObject) -> Self {
        Self(encode_object(obj))
    }

    pub fn decode(&self) -> Result<SceneObject, RecordError> {
        decode_object(&self.0)
    }
}

impl fmt::Debug for ObjectRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = u32::from_le_bytes(self.0[0..4].try_into().unwrap());
        let version = u32::from_le_bytes(self.0[4..8].try_into().unwrap());
        write!(f, "ObjectRecord(id={id}, v={version})")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: [f32; 3],
    pub yaw: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Hello { role: Role, room_code: RoomCode },
    Welcome { participant_id: ParticipantId, session_epoch_us: u64, base_seq: u32 },
    ObjectUpdate { seq: u32, records: Vec<ObjectRecord> },
    PoseUpdate { participant_id: ParticipantId, pose: Pose },
    Ack { cumulative_seq: u32, selective: u32 },
    Heartbeat { send_time_us: u64 },
    Reject { reason: RejectReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Hello = 1,
    Welcome = 2,
    ObjectUpdate = 3,
    PoseUpdate = 4,
    Ack = 5,
    Heartbeat = 6,
    Reject = 7,
}

impl MessageKind {
    fn from_nibble(n: u8) -> Option<Self> {
        Some(match n {
            1 => MessageKind::Hello,
            2 => MessageKind::Welcome,
            3 => MessageKind::ObjectUpdate,
            4 => MessageKind::PoseUpdate,
            5 => MessageKind::Ack,
            6 => MessageKind::Heartbeat,
            7 => MessageKind::Reject,
            _ => return None,
        })
    }

    fn type_byte(self) -> u8 {
        (PROTOCOL_VERSION << 4) | self as u8
    }
}

/// Message kind from the unauthenticated header, without decoding the body.
pub fn peek_kind(datagram: &[u8]) -> Option<MessageKind> {
    if datagram.len() < PLAIN_HEADER || datagram[..4] != MAGIC.to_be_bytes() {
        return None;
    }
    MessageKind::from_nibble(datagram[4] & 0x0F)
}

impl WireMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            WireMessage::Hello { .. } => MessageKind::Hello,
            WireMessage::Welcome { .. } => MessageKind::Welcome,
            WireMessage::ObjectUpdate { .. } => MessageKind::ObjectUpdate,
            WireMessage::PoseUpdate { .. } => MessageKind::PoseUpdate,
            WireMessage::Ack { .. } => MessageKind::Ack,
            WireMessage::Heartbeat { .. } => MessageKind::Heartbeat,
            WireMessage::Reject { .. } => MessageKind::Reject,
        }
    }

    pub fn encode_body(&self) -> Vec<u8> {
        let mut b = Vec::new();
        match self {
            WireMessage::Hello { role, room_code } => {
                b.push(match role {
                    Role::Leader => 0,
                    Role::Follower => 1,
                });
                b.extend_from_slice(room_code.as_bytes());
            }
            WireMessage::Welcome { participant_id, session_epoch_us, base_seq } => {
                b.extend_from_slice(&participant_id.to_le_bytes());
                b.extend_from_slice(&session_epoch_us.to_le_bytes());
                b.extend_from_slice(&base_seq.to_le_bytes());
            }
            WireMessage::ObjectUpdate { seq, records } => {
                b.extend_from_slice(&seq.to_le_bytes());
                b.push(records.len() as u8);
                for r in records {
                    b.extend_from_slice(&r.0);
                }
            }
            WireMessage::PoseUpdate { participant_id, pose } => {
                b.extend_from_slice(&participant_id.to_le_bytes());
                for v in pose.position.iter().chain(std::iter::once(&pose.yaw)) {
                    b.extend_from_slice(&v.to_le_bytes());
                }
            }
            WireMessage::Ack { cumulative_seq, selective } => {
                b.extend_from_slice(&cumulative_seq.to_le_bytes());
                b.extend_from_slice(&selective.to_le_bytes());
            }
            WireMessage::Heartbeat { send_time_us } => b.extend_from_slice(&send_time_us.to_le_bytes()),
            WireMessage::Reject { reason } => b.push(reason.code()),
        }
        b
    }

    pub fn decode_body(kind: MessageKind, b: &[u8]) -> Result<Self, ProtocolError> {
        let need = |n: usize| {
            if b.len() == n {
                Ok(())
            } else {
                Err(ProtocolError::Body(format!("{kind:?} body must be {n} bytes, got {}", b.len())))
            }
        };
        let u16_at = |i: usize| u16::from_le_bytes(b[i..i + 2].try_into().unwrap());
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let f32_at = |i: usize| f32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        Ok(match kind {
            MessageKind::Hello => {
                need(7)?;
                let role = match b[0] {
                    0 => Role::Leader,
                    1 => Role::Follower,
                    r => return Err(ProtocolError::Body(format!("bad role {r}"))),
                };
                let code = RoomCode::from_bytes(b[1..7].try_into().unwrap())
                    .ok_or_else(|| ProtocolError::BadRoomCode(String::from_utf8_lossy(&b[1..7]).into_owned()))?;
                WireMessage::Hello { role, room_code: code }
            }
            MessageKind::Welcome => {
                need(14)?;
                WireMessage::Welcome {
                    participant_id: u16_at(0),
                    session_epoch_us: u64_at(2),
                    base_seq: u32_at(10),
                }
            }
            MessageKind::ObjectUpdate => {
                if b.len() < 5 {
                    return Err(ProtocolError::Body("truncated update header".into()));
                }
                let count = b[4] as usize;
                if count > MAX_RECORDS_PER_UPDATE {
                    return Err(ProtocolError::Body(format!("{count} records exceed batch limit")));
                }
                need(5 + count * RECORD_SIZE)?;
                let records = b[5..]
                    .chunks_exact(RECORD_SIZE)
                    .map(|c| ObjectRecord(c.try_into().unwrap()))
                    .collect();
                WireMessage::ObjectUpdate { seq: u32_at(0), records }
            }
            MessageKind::PoseUpdate => {
                need(18)?;
                let pose = Pose {
                    position: [f32_at(2), f32_at(6), f32_at(10)],
                    yaw: f32_at(14),
                };
                if !pose.position.iter().all(|v| v.is_finite()) || !pose.yaw.is_finite() {
                    return Err(ProtocolError::Body("non-finite pose".into()));
                }
                WireMessage::PoseUpdate { participant_id: u16_at(0), pose }
            }
            MessageKind::Ack => {
                need(8)?;
                WireMessage::Ack { cumulative_seq: u32_at(0), selective: u32_at(4) }
            }
            MessageKind::Heartbeat => {
                need(8)?;
                WireMessage::Heartbeat { send_time_us: u64_at(0) }
            }
            MessageKind::Reject => {
                need(1)?;
                let reason = RejectReason::from_code(b[0])
                    .ok_or_else(|| ProtocolError::Body(format!("bad reject reason {}", b[0])))?;
                WireMessage::Reject { reason }
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Framing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FramingProfile {
    /// Direct transfer: header + body.
    Plain,
    /// Header + length + tag + keystream-masked body.
    Framed,
}

impl FromStr for FramingProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(FramingProfile::Plain),
            "framed" => Ok(FramingProfile::Framed),
            _ => Err(format!("unknown framing `{s}` (plain|framed)")),
        }
    }
}

impl fmt::Display for FramingProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FramingProfile::Plain => "plain",
            FramingProfile::Framed => "framed",
        })
    }
}

const DEFAULT_KEY: [u8; 16] = *b"camre-shared-key";

/// Frames and deframes datagrams under one profile and session key.
#[derive(Clone, PartialEq, Eq)]
pub struct Framer {
    pub profile: FramingProfile,
    key: [u8; 16],
}

impl fmt::Debug for Framer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Framer").field("profile", &self.profile).finish_non_exhaustive()
    }
}

impl Framer {
    pub fn new(profile: FramingProfile) -> Self {
        Self { profile, key: DEFAULT_KEY }
    }

    pub fn with_key(profile: FramingProfile, key: [u8; 16]) -> Self {
        Self { profile, key }
    }

    fn tag(&self, header: &[u8], body: &[u8]) -> [u8; TAG_SIZE] {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(header);
        h.update(body);
        h.finalize()[..TAG_SIZE].try_into().unwrap()
    }

    fn apply_keystream(&self, tag: &[u8], body: &mut [u8]) {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(tag);
        let seed: [u8; 32] = h.finalize().into();
        let mut ks = vec![0u8; body.len()];
        ChaCha20Rng::from_seed(seed).fill_bytes(&mut ks);
        for (b, k) in body.iter_mut().zip(ks) {
            *b ^= k;
        }
    }

    /// Frames an already-encoded message body.
    pub fn seal(&self, kind: MessageKind, body: &[u8]) -> Result<Vec<u8>, FrameError> {
        let mut out = Vec::with_capacity(PLAIN_HEADER + FRAMED_OVERHEAD + body.len());
        out.extend_from_slice(&MAGIC.to_be_bytes());
        out.push(kind.type_byte());
        match self.profile {
            FramingProfile::Plain => out.extend_from_slice(body),
            FramingProfile::Framed => {
                out.extend_from_slice(&(body.len() as u32).to_le_bytes());
                let tag = self.tag(&out, body);
                out.extend_from_slice(&tag);
                let start = out.len();
                out.extend_from_slice(body);
                self.apply_keystream(&tag, &mut out[start..]);
            }
        }
        if out.len() > MAX_DATAGRAM {
            return Err(FrameError::TooLarge(out.len()));
        }
        Ok(out)
    }

    /// Validates the envelope and returns the kind and plaintext body.
    pub fn open(&self, datagram: &[u8]) -> Result<(MessageKind, Vec<u8>), FrameError> {
        if datagram.len() > MAX_DATAGRAM {
            return Err(FrameError::TooLarge(datagram.len()));
        }
        if datagram.len() < PLAIN_HEADER {
            return Err(FrameError::Truncated);
        }
        if datagram[0..4] != MAGIC.to_be_bytes() {
            return Err(FrameError::BadMagic);
        }
        let type_byte = datagram[4];
        if type_byte >> 4 != PROTOCOL_VERSION {
            return Err(FrameError::BadVersion(type_byte >> 4));
        }
        let kind = MessageKind::from_nibble(type_byte & 0x0f).ok_or(FrameError::UnknownKind(type_byte & 0x0f))?;
        match self.profile {
            FramingProfile::Plain => Ok((kind, datagram[PLAIN_HEADER..].to_vec())),
            FramingProfile::Framed => {
                let body_at = PLAIN_HEADER + FRAMED_OVERHEAD;
                if datagram.len() < body_at {
                    return Err(FrameError::Truncated);
                }
                let declared = u32::from_le_bytes(datagram[5..9].try_into().unwrap()) as usize;
                let actual = datagram.len() - body_at;
                if declared != actual {
                    return Err(FrameError::LengthMismatch { declared, actual });
                }
                let tag = &datagram[9..body_at];
                let mut body = datagram[body_at..].to_vec();
                self.apply_keystream(tag, &mut body);
                if self.tag(&datagram[..9], &body) != tag {
                    return Err(FrameError::AuthFailure);
                }
                Ok((kind, body))
            }
        }
    }

    pub fn frame(&self, msg: &WireMessage) -> Result<Vec<u8>, FrameError> {
        self.seal(msg.kind(), &msg.encode_body())
    }

    pub fn deframe(&self, datagram: &[u8]) -> Result<WireMessage, ProtocolError> {
        let (kind, body) = self.open(datagram)?;
        WireMessage::decode_body(kind, &body)
    }

    /// Datagram size for a body of `body_len` bytes under this profile.
    pub fn datagram_len(&self, body_len: usize) -> usize {
        PLAIN_HEADER
            + body_len
            + match self.profile {
                FramingProfile::Plain => 0,
                FramingProfile::Framed => FRAMED_OVERHEAD,
            }
    }
}

// ---------------------------------------------------------------------------
// Sequencing and acknowledgement

pub fn is_catchup(seq: u32) -> bool {
    seq & CATCHUP_FLAG != 0
}

/// Snapshot of what a receiver holds: everything up to `cum` plus the bits
/// of `bits` (bit i = `cum + 1 + i`). Sequence values here exclude the
/// stream flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AckView {
    pub cum: u32,
    pub bits: u32,
}

impl AckView {
    pub fn has(&self, index: u32) -> bool {
        if index <= self.cum {
            return true;
        }
        let off = index - self.cum - 1;
        off < 32 && self.bits & (1 << off) != 0
    }

    /// Union of two views.
    pub fn merge(&self, other: &AckView) -> AckView {
        let cum = self.cum.max(other.cum);
        let mut out = AckView { cum, bits: 0 };
        for i in 0..32u32 {
            let idx = cum + 1 + i;
            if self.has(idx) || other.has(idx) {
                out.bits |= 1 << i;
            }
        }
        out.normalize()
    }

    /// Intersection of several views.
    pub fn intersect<'a>(views: impl IntoIterator<Item = &'a AckView>) -> Option<AckView> {
        let views: Vec<&AckView> = views.into_iter().collect();
        let cum = views.iter().map(|v| v.cum).min()?;
        let mut out = AckView { cum, bits: 0 };
        for i in 0..32u32 {
            if views.iter().all(|v| v.has(cum + 1 + i)) {
                out.bits |= 1 << i;
            }
        }
        Some(out.normalize())
    }

    fn normalize(mut self) -> Self {
        while self.bits & 1 == 1 {
            self.cum += 1;
            self.bits >>= 1;
        }
        self
    }

    pub fn to_message(self, stream_flag: u32) -> WireMessage {
        WireMessage::Ack { cumulative_seq: stream_flag | self.cum, selective: self.bits }
    }

    /// Splits an Ack into its stream flag and view.
    pub fn from_message(cumulative_seq: u32, selective: u32) -> (u32, AckView) {
        (cumulative_seq & CATCHUP_FLAG, AckView { cum: cumulative_seq & INDEX_MASK, bits: selective })
    }
}

/// Receiver-side record of which sequence indices have arrived.
#[derive(Debug, Clone, Default)]
pub struct AckTracker {
    cum: u32,
    above: BTreeSet<u32>,
}

impl AckTracker {
    pub fn with_base(base: u32) -> Self {
        Self { cum: base, above: BTreeSet::new() }
    }

    /// Treats everything up to `base` as received.
    pub fn advance_to(&mut self, base: u32) {
        if base > self.cum {
            self.cum = base;
            self.above = self.above.split_off(&(base + 1));
            self.compact();
        }
    }

    /// Records an index; returns false for duplicates.
    pub fn record(&mut self, index: u32) -> bool {
        if index <= self.cum || !self.above.insert(index) {
            return false;
        }
        self.compact();
        true
    }

    fn compact(&mut self) {
        while self.above.remove(&(self.cum + 1)) {
            self.cum += 1;
        }
    }

    pub fn view(&self) -> AckView {
        let mut bits = 0u32;
        for &i in self.above.range(self.cum + 1..=self.cum.saturating_add(32)) {
            bits |= 1 << (i - self.cum - 1);
        }
        AckView { cum: self.cum, bits }
    }

    pub fn has(&self, index: u32) -> bool {
        index <= self.cum || self.above.contains(&index)
    }
}

#[derive(Debug, Clone)]
struct InFlight {
    msg: WireMessage,
    first_sent_us: u64,
    last_sent_us: u64,
    rto_us: u64,
    retransmits: u32,
}

/// Sender side of one sequenced stream: assigns sequence numbers, keeps
/// unacknowledged updates, and decides when to resend them.
#[derive(Debug, Clone)]
pub struct ReliableSender {
    stream_flag: u32,
    next_index: u32,
    in_flight: BTreeMap<u32, InFlight>,
    srtt_us: Option<f64>,
    degraded: bool,
    retransmissions: u64,
}

impl ReliableSender {
    pub fn leader_stream() -> Self {
        Self::new(0)
    }

    pub fn catchup_stream() -> Self {
        Self::new(CATCHUP_FLAG)
    }

    fn new(stream_flag: u32) -> Self {
        Self {
            stream_flag,
            next_index: 1,
            in_flight: BTreeMap::new(),
            srtt_us: None,
            degraded: false,
            retransmissions: 0,
        }
    }

    /// Continues numbering after `base` if nothing has been sent yet, so a
    /// re-joining Leader never reuses sequence numbers the relay has seen.
    pub fn resume_after(&mut self, base: u32) {
        if self.next_index == 1 && self.in_flight.is_empty() {
            self.next_index = base + 1;
        }
    }

    /// Highest sequence index handed out so far.
    pub fn last_index(&self) -> u32 {
        self.next_index - 1
    }

    pub fn srtt_us(&self) -> Option<f64> {
        self.srtt_us
    }

    /// `max(50 ms, 2 x smoothed RTT)`, capped at the backoff ceiling.
    pub fn rto_us(&self) -> u64 {
        let srtt = self.srtt_us.unwrap_or(INITIAL_RTT_US as f64);
        ((2.0 * srtt).round() as u64).clamp(MIN_RTO_US, MAX_RTO_US)
    }

    pub fn observe_rtt(&mut self, sample_us: u64) {
        let s = sample_us as f64;
        self.srtt_us = Some(match self.srtt_us {
            None => s,
            Some(prev) => prev * 7.0 / 8.0 + s / 8.0,
        });
    }

    pub fn is_degraded(&self) -> bool {
        self.degraded
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn retransmissions(&self) -> u64 {
        self.retransmissions
    }

    /// Assigns the next sequence number to a batch and retains it.
    pub fn push(&mut self, records: Vec<ObjectRecord>, now_us: u64) -> WireMessage {
        assert!(records.len() <= MAX_RECORDS_PER_UPDATE);
        let index = self.next_index;
        self.next_index += 1;
        let msg = WireMessage::ObjectUpdate { seq: self.stream_flag | index, records };
        self.in_flight.insert(
            index,
            InFlight {
                msg: msg.clone(),
                first_sent_us: now_us,
                last_sent_us: now_us,
                rto_us: self.rto_us(),
                retransmits: 0,
            },
        );
        msg
    }

    /// Drops everything the view covers; returns the number acknowledged.
    /// First transmissions yield RTT samples.
    pub fn on_ack(&mut self, view: &AckView, now_us: u64) -> usize {
        let acked: Vec<u32> = self.in_flight.keys().copied().filter(|&i| view.has(i)).collect();
        for i in &acked {
            let f = self.in_flight.remove(i).unwrap();
            if f.retransmits == 0 {
                self.observe_rtt(now_us.saturating_sub(f.first_sent_us));
            }
        }
        acked.len()
    }

    /// Updates whose timer expired, with their timers backed off.
    pub fn retransmit_due(&mut self, now_us: u64) -> Vec<WireMessage> {
        let mut out = Vec::new();
        let mut gave_up = Vec::new();
        for (&i, f) in self.in_flight.iter_mut() {
            if now_us.saturating_sub(f.first_sent_us) > GIVE_UP_US {
                gave_up.push(i);
                continue;
            }
            if now_us.saturating_sub(f.last_sent_us) >= f.rto_us {
                f.last_sent_us = now_us;
                f.rto_us = (f.rto_us * 2).min(MAX_RTO_US);
                f.retransmits += 1;
                out.push(f.msg.clone());
            }
        }
        if !gave_up.is_empty() {
            self.degraded = true;
            for i in gave_up {
                self.in_flight.remove(&i);
            }
        }
        self.retransmissions += out.len() as u64;
        out
    }

    /// Earliest time any retained update becomes due.
    pub fn next_due_us(&self) -> Option<u64> {
        self.in_flight.values().map(|f| f.last_sent_us + f.rto_us).min()
    }
}

/// Splits objects into consecutive ObjectUpdate batches of at most 20 records
/// and retains them for retransmission.
pub fn leader_publish(
    objects: &[SceneObject],
    sender: &mut ReliableSender,
    now_us: u64,
) -> Result<Vec<WireMessage>, ProtocolError> {
    if objects.is_empty() {
        return Err(ProtocolError::EmptyPublish);
    }
    Ok(objects
        .chunks(MAX_RECORDS_PER_UPDATE)
        .map(|chunk| sender.push(chunk.iter().map(ObjectRecord::encode).collect(), now_us))
        .collect())
}

/// Resends unacknowledged batches whose retransmission timer expired.
pub fn retransmit_tick(sender: &mut ReliableSender, now_us: u64) -> Vec<WireMessage> {
    sender.retransmit_due(now_us)
}

// ---------------------------------------------------------------------------
// Follower

#[derive(Debug, Clone, PartialEq)]
pub enum FollowerEvent {
    /// A record replaced or introduced an object.
    ObjectApplied { object: SceneObject, received_us: u64 },
    PeerPose { participant_id: ParticipantId, pose: Pose },
    RttSample { rtt_us: u64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Applied {
    pub ack: Option<WireMessage>,
    pub events: Vec<FollowerEvent>,
}

#[derive(Debug, Clone, Default)]
pub struct FollowerState {
    pub snapshot: SceneSnapshot,
    pub highest_applied_version: HashMap<u32, u32>,
    pub last_ack_sent: Option<WireMessage>,
    pub peer_poses: BTreeMap<ParticipantId, Pose>,
    /// First local receive time per object id.
    pub first_received_us: HashMap<u32, u64>,
    leader_stream: AckTracker,
    catchup_stream: AckTracker,
    duplicates: u64,
}

impl FollowerState {
    pub fn new(epoch_us: u64) -> Self {
        Self { snapshot: SceneSnapshot::new(epoch_us), ..Default::default() }
    }

    /// Adopts the session epoch and leader-stream base announced by Welcome.
    pub fn on_welcome(&mut self, epoch_us: u64, base_seq: u32) {
        self.snapshot.epoch_us = epoch_us;
        self.leader_stream.advance_to(base_seq);
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// Current acks for every stream that has delivered something.
    pub fn standing_acks(&self) -> Vec<WireMessage> {
        [(&self.leader_stream, 0), (&self.catchup_stream, CATCHUP_FLAG)]
            .into_iter()
            .map(|(t, flag)| (t.view(), flag))
            .filter(|(v, _)| v.cum > 0 || v.bits != 0)
            .map(|(v, flag)| v.to_message(flag))
            .collect()
    }

    /// Applies one message. ObjectUpdate records are decoded up front and the
    /// datagram is rejected whole if any record is malformed; otherwise each
    /// record whose version beats the held one is applied, and an Ack for the
    /// batch's stream is returned (also for duplicates).
    pub fn apply(&mut self, msg: &WireMessage, now_us: u64) -> Result<Applied, ProtocolError> {
        let mut out = Applied::default();
        match msg {
            WireMessage::ObjectUpdate { seq, records } => {
                let objects = records.iter().map(ObjectRecord::decode).collect::<Result<Vec<_>, _>>()?;
                let tracker = if is_catchup(*seq) { &mut self.catchup_stream } else { &mut self.leader_stream };
                if !tracker.record(seq & INDEX_MASK) {
                    self.duplicates += 1;
                }
                let ack = tracker.view().to_message(seq & CATCHUP_FLAG);
                for obj in objects {
                    let held = self.highest_applied_version.get(&obj.id).copied().unwrap_or(0);
                    if obj.version <= held {
                        continue;
                    }
                    self.highest_applied_version.insert(obj.id, obj.version);
                    self.snapshot.upsert(obj);
                    self.first_received_us.entry(obj.id).or_insert(now_us);
                    out.events.push(FollowerEvent::ObjectApplied { object: obj, received_us: now_us });
                }
                self.last_ack_sent = Some(ack.clone());
                out.ack = Some(ack);
            }
            WireMessage::PoseUpdate { participant_id, pose } => {
                self.peer_poses.insert(*participant_id, *pose);
                out.events.push(FollowerEvent::PeerPose { participant_id: *participant_id, pose: *pose });
            }
            WireMessage::Heartbeat { send_time_us } => {
                out.events.push(FollowerEvent::RttSample { rtt_us: now_us.saturating_sub(*send_time_us) });
            }
            _ => {}
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Participant endpoint

#[derive(Debug, Clone, PartialEq)]
pub enum ClientEvent {
    Joined { participant_id: ParticipantId, epoch_us: u64 },
    Rejected(RejectReason),
    Follower(FollowerEvent),
    Acked { count: usize },
}

/// A participant's protocol endpoint: join handshake, heartbeats, and either
/// the Leader's reliable publisher or the Follower's apply loop. Sans-io; the
/// caller moves datagrams and supplies the local clock.
#[derive(Debug, Clone)]
pub struct Client {
    pub framer: Framer,
    pub role: Role,
    pub room_code: RoomCode,
    participant_id: Option<ParticipantId>,
    epoch_us: u64,
    rejected: Option<RejectReason>,
    last_hello_us: Option<u64>,
    last_heartbeat_us: Option<u64>,
    pub sender: ReliableSender,
    /// The Leader's authoritative copy of everything it published.
    pub authority: SceneSnapshot,
    pub follower: FollowerState,
    pose: Pose,
}

impl Client {
    pub fn new(framer: Framer, role: Role, room_code: RoomCode) -> Self {
        Self {
            framer,
            role,
            room_code,
            participant_id: None,
            epoch_us: 0,
            rejected: None,
            last_hello_us: None,
            last_heartbeat_us: None,
            sender: ReliableSender::leader_stream(),
            authority: SceneSnapshot::new(0),
            follower: FollowerState::new(0),
            pose: Pose { position: [0.0; 3], yaw: 0.0 },
        }
    }

    pub fn participant_id(&self) -> Option<ParticipantId> {
        self.participant_id
    }

    pub fn epoch_us(&self) -> u64 {
        self.epoch_us
    }

    pub fn rejected(&self) -> Option<RejectReason> {
        self.rejected
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    fn frame(&self, msg: &WireMessage) -> Vec<u8> {
        self.framer.frame(msg).expect("protocol messages fit in a datagram")
    }

    pub fn hello(&mut self, now_us: u64) -> Vec<u8> {
        self.last_hello_us = Some(now_us);
        self.frame(&WireMessage::Hello { role: self.role, room_code: self.room_code })
    }

    /// Handles one inbound datagram; returns datagrams to send back and events.
    pub fn handle_datagram(&mut self, datagram: &[u8], now_us: u64) -> Result<(Vec<Vec<u8>>, Vec<ClientEvent>), ProtocolError> {
        let msg = self.framer.deframe(datagram)?;
        let mut send = Vec::new();
        let mut events = Vec::new();
        match &msg {
            WireMessage::Welcome { participant_id, session_epoch_us, base_seq } => {
                if self.participant_id.is_none() {
                    self.participant_id = Some(*participant_id);
                    self.epoch_us = *session_epoch_us;
                    self.authority.epoch_us = *session_epoch_us;
                    self.follower.on_welcome(*session_epoch_us, *base_seq);
                    if self.role == Role::Leader {
                        self.sender.resume_after(*base_seq);
                    }
                    events.push(ClientEvent::Joined { participant_id: *participant_id, epoch_us: *session_epoch_us });
                }
            }
            WireMessage::Reject { reason } => {
                if self.participant_id.is_none() {
                    self.rejected = Some(*reason);
                    events.push(ClientEvent::Rejected(*reason));
                }
            }
            WireMessage::Ack { cumulative_seq, selective } => {
                let (flag, view) = AckView::from_message(*cumulative_seq, *selective);
                if flag == 0 && self.role == Role::Leader {
                    let count = self.sender.on_ack(&view, now_us);
                    if count > 0 {
                        events.push(ClientEvent::Acked { count });
                    }
                }
            }
            WireMessage::Heartbeat { send_time_us } => {
                let rtt = now_us.saturating_sub(*send_time_us);
                self.sender.observe_rtt(rtt);
                events.push(ClientEvent::Follower(FollowerEvent::RttSample { rtt_us: rtt }));
            }
            WireMessage::ObjectUpdate { .. } | WireMessage::PoseUpdate { .. } => {
                let applied = self.follower.apply(&msg, now_us)?;
                if let Some(ack) = applied.ack {
                    send.push(self.frame(&ack));
                }
                events.extend(applied.events.into_iter().map(ClientEvent::Follower));
            }
            WireMessage::Hello { .. } => {}
        }
        Ok((send, events))
    }

    /// Publishes objects (Leader only): records them in the authority
    /// snapshot and returns the framed batches.
    pub fn publish(&mut self, objects: &[SceneObject], now_us: u64) -> Result<Vec<Vec<u8>>, ProtocolError> {
        if self.role != Role::Leader {
            return Err(ProtocolError::NotLeader);
        }
        let msgs = leader_publish(objects, &mut self.sender, now_us)?;
        for o in objects {
            self.authority.upsert(*o);
        }
        Ok(msgs.iter().map(|m| self.frame(m)).collect())
    }

    pub fn set_pose(&mut self, pose: Pose) -> Option<Vec<u8>> {
        self.pose = pose;
        let id = self.participant_id?;
        Some(self.frame(&WireMessage::PoseUpdate { participant_id: id, pose }))
    }

    /// Timers: Hello retries before joining, heartbeats and retransmissions
    /// after.
    pub fn tick(&mut self, now_us: u64) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        if self.rejected.is_some() {
            return out;
        }
        if self.participant_id.is_none() {
            if self.last_hello_us.is_some_and(|t| now_us.saturating_sub(t) >= HELLO_RETRY_US) {
                out.push(self.hello(now_us));
            }
            return out;
        }
        if self.last_heartbeat_us.is_none_or(|t| now_us.saturating_sub(t) >= HEARTBEAT_INTERVAL_US) {
            self.last_heartbeat_us = Some(now_us);
            out.push(self.frame(&WireMessage::Heartbeat { send_time_us: now_us }));
            // a lost ack would otherwise wait for the next retransmission
            for ack in self.follower.standing_acks() {
                out.push(self.frame(&ack));
            }
        }
        for m in retransmit_tick(&mut self.sender, now_us) {
            out.push(self.frame(&m));
        }
        out
    }

    /// Nothing left to (re)send on the Leader stream.
    pub fn quiescent(&self) -> bool {
        self.sender.in_flight() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{SceneCategory, SceneObject};

    pub(crate) fn obj(id: u32, version: u32) -> SceneObject {
        SceneObject {
            id,
            version,
            category: SceneCategory::Wall,
            center: [id as f32, 0.5, 1.2],
            half_extents: [1.0, 1.2],
            orientation: [0.0, 0.0, 0.0, 1.0],
            created_us: 1000 + u64::from(id),
            creator: 1,
        }
    }

    fn update(seq: u32, objs: &[SceneObject]) -> WireMessage {
        WireMessage::ObjectUpdate { seq, records: objs.iter().map(ObjectRecord::encode).collect() }
    }

    fn all_messages() -> Vec<WireMessage> {
        vec![
            WireMessage::Hello { role: Role::Follower, room_code: RoomCode::new("ABC123").unwrap() },
            WireMessage::Welcome { participant_id: 4, session_epoch_us: 99, base_seq: 7 },
            update(3, &[obj(1, 1), obj(2, 1)]),
            WireMessage::PoseUpdate { participant_id: 2, pose: Pose { position: [1.0, 2.0, 1.6], yaw: 0.5 } },
            WireMessage::Ack { cumulative_seq: 5, selective: 0b101 },
            WireMessage::Heartbeat { send_time_us: 123 },
            WireMessage::Reject { reason: RejectReason::SessionFull },
        ]
    }

    #[test]
    fn round_trip_under_both_profiles() {
        for profile in [FramingProfile::Plain, FramingProfile::Framed] {
            let f = Framer::new(profile);
            for m in all_messages() {
                let d = f.frame(&m).unwrap();
                assert_eq!(f.deframe(&d).unwrap(), m);
            }
        }
    }

    #[test]
    fn header_layout() {
        let d = Framer::new(FramingProfile::Plain).frame(&WireMessage::Heartbeat { send_time_us: 1 }).unwrap();
        assert_eq!(&d[0..4], b"CAMR");
        assert_eq!(d[4], 0x16);
        assert_eq!(d.len(), 5 + 8);
    }

    #[test]
    fn framed_overhead_is_twenty_bytes() {
        let plain = Framer::new(FramingProfile::Plain);
        let framed = Framer::new(FramingProfile::Framed);
        for m in all_messages() {
            assert_eq!(framed.frame(&m).unwrap().len(), plain.frame(&m).unwrap().len() + 20);
        }
    }

    #[test]
    fn tampering_is_detected() {
        let f = Framer::new(FramingProfile::Framed);
        let m = update(1, &[obj(1, 1)]);
        let d = f.frame(&m).unwrap();
        for at in [10, 20, 30, d.len() - 1] {
            let mut t = d.clone();
            t[at] ^= 0x01;
            assert!(matches!(f.deframe(&t), Err(ProtocolError::Frame(FrameError::AuthFailure))), "byte {at}");
        }
        let other_key = Framer::with_key(FramingProfile::Framed, [7; 16]);
        assert!(matches!(other_key.deframe(&d), Err(ProtocolError::Frame(FrameError::AuthFailure))));
    }

    #[test]
    fn framed_body_is_masked() {
        let f = Framer::new(FramingProfile::Framed);
        let m = update(1, &[obj(1, 1)]);
        let d = f.frame(&m).unwrap();
        assert_ne!(&d[25..], &m.encode_body()[..]);
    }

    #[test]
    fn envelope_errors() {
        let f = Framer::new(FramingProfile::Plain);
        assert_eq!(f.open(b"CAM"), Err(FrameError::Truncated));
        assert_eq!(f.open(b"XAMR\x16"), Err(FrameError::BadMagic));
        assert_eq!(f.open(b"CAMR\x26"), Err(FrameError::BadVersion(2)));
        assert_eq!(f.open(b"CAMR\x19"), Err(FrameError::UnknownKind(9)));
        assert_eq!(f.open(&vec![0u8; 1401]), Err(FrameError::TooLarge(1401)));
        let mut d = Framer::new(FramingProfile::Framed).frame(&WireMessage::Heartbeat { send_time_us: 1 }).unwrap();
        d.push(0);
        assert!(matches!(
            Framer::new(FramingProfile::Framed).open(&d),
            Err(FrameError::LengthMismatch { declared: 8, actual: 9 })
        ));
    }

    #[test]
    fn full_batch_fits_comfortably() {
        let objs: Vec<_> = (1..=20).map(|i| obj(i, 1)).collect();
        let m = update(1, &objs);
        let framed = Framer::new(FramingProfile::Framed).frame(&m).unwrap();
        assert_eq!(framed.len(), 5 + 20 + 5 + 20 * 56);
        assert!(framed.len() < 1200);
    }

    #[test]
    fn room_codes() {
        assert!(RoomCode::new("ABC123").is_ok());
        assert!(RoomCode::new("ABC12").is_err());
        assert!(RoomCode::new("ABC-12").is_err());
        let hello = {
            let mut b = vec![1u8];
            b.extend_from_slice(b"AB C12");
            b
        };
        assert!(matches!(
            WireMessage::decode_body(MessageKind::Hello, &hello),
            Err(ProtocolError::BadRoomCode(_))
        ));
    }

    #[test]
    fn publish_partitions_into_batches() {
        let mut s = ReliableSender::leader_stream();
        let one = leader_publish(&[obj(1, 1)], &mut s, 0).unwrap();
        assert_eq!(one.len(), 1);
        let objs: Vec<_> = (1..=50).map(|i| obj(i, 1)).collect();
        let msgs = leader_publish(&objs, &mut s, 0).unwrap();
        let sizes: Vec<usize> = msgs
            .iter()
            .map(|m| match m {
                WireMessage::ObjectUpdate { records, .. } => records.len(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(sizes, vec![20, 20, 10]);
        let seqs: Vec<u32> = msgs
            .iter()
            .map(|m| match m {
                WireMessage::ObjectUpdate { seq, .. } => *seq,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(seqs, vec![2, 3, 4]);
        assert_eq!(s.in_flight(), 4);
        assert_eq!(leader_publish(&[], &mut s, 0), Err(ProtocolError::EmptyPublish));
    }

    #[test]
    fn rto_follows_smoothed_rtt() {
        let mut s = ReliableSender::leader_stream();
        s.observe_rtt(100_000);
        assert_eq!(s.rto_us(), 200_000);
        let mut s = ReliableSender::leader_stream();
        s.observe_rtt(5_000);
        assert_eq!(s.rto_us(), MIN_RTO_US);
        for _ in 0..40 {
            s.observe_rtt(5_000_000);
        }
        assert_eq!(s.rto_us(), MAX_RTO_US);
    }

    #[test]
    fn retransmit_backoff_and_give_up() {
        let mut s = ReliableSender::leader_stream();
        s.observe_rtt(100_000);
        leader_publish(&[obj(1, 1)], &mut s, 0).unwrap();
        assert!(retransmit_tick(&mut s, 199_999).is_empty());
        assert_eq!(retransmit_tick(&mut s, 200_000).len(), 1);
        // backed off to 400 ms
        assert!(retransmit_tick(&mut s, 599_999).is_empty());
        assert_eq!(retransmit_tick(&mut s, 600_000).len(), 1);
        let mut now = 600_000;
        let mut gaps = Vec::new();
        let mut last = now;
        while now < 29_000_000 {
            now += 10_000;
            if !retransmit_tick(&mut s, now).is_empty() {
                gaps.push(now - last);
                last = now;
            }
        }
        assert!(gaps.iter().all(|&g| g <= MAX_RTO_US + 10_000));
        assert_eq!(*gaps.last().unwrap(), MAX_RTO_US);
        assert!(!s.is_degraded());
        retransmit_tick(&mut s, 30_000_001);
        assert!(s.is_degraded());
        assert_eq!(s.in_flight(), 0);
    }

    #[test]
    fn ack_clears_in_flight() {
        let mut s = ReliableSender::leader_stream();
        let objs: Vec<_> = (1..=60).map(|i| obj(i, 1)).collect();
        leader_publish(&objs, &mut s, 0).unwrap();
        assert_eq!(s.on_ack(&AckView { cum: 1, bits: 0b10 }, 30_000), 2);
        assert_eq!(s.in_flight(), 1);
        assert_eq!(s.srtt_us(), Some(30_000.0));
        assert!(retransmit_tick(&mut s, 1_000_000).len() == 1);
        assert_eq!(s.on_ack(&AckView { cum: 3, bits: 0 }, 1_100_000), 1);
        assert!(retransmit_tick(&mut s, 5_000_000).is_empty());
    }

    #[test]
    fn tracker_and_views() {
        let mut t = AckTracker::default();
        assert!(t.record(1));
        assert!(t.record(3));
        assert!(!t.record(3));
        assert_eq!(t.view(), AckView { cum: 1, bits: 0b10 });
        assert!(t.record(2));
        assert_eq!(t.view(), AckView { cum: 3, bits: 0 });
        t.advance_to(10);
        assert!(!t.record(9));
        assert_eq!(t.view().cum, 10);

        let a = AckView { cum: 2, bits: 0b1010 }; // 1,2,4,6
        let b = AckView { cum: 4, bits: 0b1 }; // 1..5
        assert_eq!(a.merge(&b), AckView { cum: 6, bits: 0 });
        assert_eq!(AckView::intersect([&a, &b]), Some(AckView { cum: 2, bits: 0b10 }));
        assert_eq!(AckView::intersect(std::iter::empty()), None);
    }

    #[test]
    fn follower_duplicate_is_reacked_not_reapplied() {
        let mut st = FollowerState::new(0);
        let m = update(1, &[obj(1, 3)]);
        let first = st.apply(&m, 10).unwrap();
        assert_eq!(first.events.len(), 1);
        let snap = st.snapshot.clone();
        let again = st.apply(&m, 20).unwrap();
        assert!(again.events.is_empty());
        assert_eq!(again.ack, first.ack);
        assert_eq!(st.snapshot, snap);
        assert_eq!(st.duplicates(), 1);
    }

    #[test]
    fn follower_discards_stale_version() {
        let mut st = FollowerState::new(0);
        st.apply(&update(1, &[obj(1, 3)]), 0).unwrap();
        st.apply(&update(2, &[obj(1, 2)]), 0).unwrap();
        assert_eq!(st.snapshot.get(1).unwrap().version, 3);
    }

    #[test]
    fn corrupt_record_rejects_whole_datagram() {
        let mut st = FollowerState::new(0);
        let mut records: Vec<ObjectRecord> = [obj(1, 1), obj(2, 1)].iter().map(ObjectRecord::encode).collect();
        records[1].0[8] = 9;
        let err = st.apply(&WireMessage::ObjectUpdate { seq: 1, records }, 0).unwrap_err();
        assert!(matches!(err, ProtocolError::Record(RecordError::BadCategory(9))));
        assert!(st.snapshot.is_empty());
        assert!(st.last_ack_sent.is_none());
    }

    #[test]
    fn catchup_acks_carry_stream_flag() {
        let mut st = FollowerState::new(0);
        let a = st.apply(&update(CATCHUP_FLAG | 1, &[obj(1, 1)]), 0).unwrap();
        assert_eq!(a.ack, Some(WireMessage::Ack { cumulative_seq: CATCHUP_FLAG | 1, selective: 0 }));
        let b = st.apply(&update(5, &[obj(2, 1)]), 0).unwrap();
        assert_eq!(b.ack, Some(WireMessage::Ack { cumulative_seq: 0, selective: 1 << 4 }));
        st.on_welcome(0, 4);
        let c = st.apply(&update(5, &[obj(2, 1)]), 0).unwrap();
        assert_eq!(c.ack, Some(WireMessage::Ack { cumulative_seq: 5, selective: 0 }));
    }

    #[test]
    fn pose_and_heartbeat() {
        let mut st = FollowerState::new(0);
        let pose = Pose { position: [1.0, 2.0, 0.0], yaw: 0.25 };
        let a = st.apply(&WireMessage::PoseUpdate { participant_id: 3, pose }, 0).unwrap();
        assert_eq!(a.events, vec![FollowerEvent::PeerPose { participant_id: 3, pose }]);
        assert_eq!(st.peer_poses[&3], pose);
        let h = st.apply(&WireMessage::Heartbeat { send_time_us: 100 }, 350).unwrap();
        assert_eq!(h.events, vec![FollowerEvent::RttSample { rtt_us: 250 }]);
    }

    #[test]
    fn client_handshake_and_publish() {
        let framer = Framer::new(FramingProfile::Framed);
        let code = RoomCode::new("ROOM01").unwrap();
        let mut leader = Client::new(framer.clone(), Role::Leader, code);
        let hello = framer.deframe(&leader.hello(0)).unwrap();
        assert_eq!(hello, WireMessage::Hello { role: Role::Leader, room_code: code });
        assert!(leader.tick(100).is_empty());
        assert_eq!(leader.tick(HELLO_RETRY_US).len(), 1);
        let welcome = framer.frame(&WireMessage::Welcome { participant_id: 1, session_epoch_us: 5, base_seq: 0 }).unwrap();
        let (_, ev) = leader.handle_datagram(&welcome, 10).unwrap();
        assert_eq!(ev, vec![ClientEvent::Joined { participant_id: 1, epoch_us: 5 }]);
        let sent = leader.publish(&[obj(1, 1)], 20).unwrap();
        assert_eq!(sent.len(), 1);
        assert_eq!(leader.authority.len(), 1);
        let mut follower = Client::new(framer.clone(), Role::Follower, code);
        assert_eq!(follower.publish(&[obj(1, 1)], 0), Err(ProtocolError::NotLeader));
        let (acks, _) = follower.handle_datagram(&sent[0], 30).unwrap();
        let (_, ev) = leader.handle_datagram(&acks[0], 40).unwrap();
        assert_eq!(ev, vec![ClientEvent::Acked { count: 1 }]);
        assert!(leader.quiescent());
    }

    #[test]
    fn heartbeat_carries_standing_acks() {
        let framer = Framer::new(FramingProfile::Plain);
        let mut f = Client::new(framer.clone(), Role::Follower, RoomCode::new("ROOM01").unwrap());
        let welcome = framer.frame(&WireMessage::Welcome { participant_id: 2, session_epoch_us: 0, base_seq: 0 }).unwrap();
        f.handle_datagram(&welcome, 0).unwrap();
        assert_eq!(f.tick(1).len(), 1);
        f.handle_datagram(&framer.frame(&update(1, &[obj(1, 1)])).unwrap(), 2).unwrap();
        f.handle_datagram(&framer.frame(&update(CATCHUP_FLAG | 1, &[obj(2, 1)])).unwrap(), 3).unwrap();
        let out: Vec<_> = f.tick(HEARTBEAT_INTERVAL_US + 1).iter().map(|d| framer.deframe(d).unwrap()).collect();
        assert_eq!(out.len(), 3);
        assert!(out.contains(&WireMessage::Ack { cumulative_seq: 1, selective: 0 }));
        assert!(out.contains(&WireMessage::Ack { cumulative_seq: CATCHUP_FLAG | 1, selective: 0 }));
    }
}
