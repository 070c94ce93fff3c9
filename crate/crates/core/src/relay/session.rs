//! Session bookkeeping and the relay's datagram handling.
//!
//! The relay is sans-io: [`Relay::handle_datagram`] and [`Relay::tick`] take
//! the current time and return the datagrams to send. Addresses are opaque,
//! so the same code serves UDP peers, gateway connections and simulated
//! nodes.
//!
//! Reliability on the Leader stream is end to end: Followers ack the Leader's
//! sequence numbers, and the relay answers the Leader with the intersection
//! of what every current Follower (and the relay itself) holds. Catch-up
//! batches for late joiners are the relay's own stream, retransmitted by the
//! relay until the joining Follower acks them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use log::{debug, info, warn};

use crate::protocol::{
    is_catchup, AckTracker, AckView, Framer, FramingProfile, ObjectRecord, Pose, ProtocolError, RejectReason,
    ReliableSender, Role, RoomCode, WireMessage, CATCHUP_FLAG, MAX_RECORDS_PER_UPDATE,
};
use crate::scene::ParticipantId;

pub const EVICTION_US: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LimitProfile {
    /// Up to 20 Followers.
    PhotonLike,
    /// Up to 50 Followers.
    NetcodeLike,
}

impl LimitProfile {
    pub fn max_followers(self) -> usize {
        match self {
            LimitProfile::PhotonLike => 20,
            LimitProfile::NetcodeLike => 50,
        }
    }
}

impl FromStr for LimitProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "photon" | "photon-like" | "PhotonLike" => Ok(LimitProfile::PhotonLike),
            "netcode" | "netcode-like" | "NetcodeLike" => Ok(LimitProfile::NetcodeLike),
            _ => Err(format!("unknown limit profile `{s}` (photon|netcode)")),
        }
    }
}

impl fmt::Display for LimitProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitProfile::PhotonLike => "photon",
            LimitProfile::NetcodeLike => "netcode",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RelayConfig {
    pub framer: Framer,
    pub limit: LimitProfile,
    pub eviction_us: u64,
}

impl RelayConfig {
    pub fn new(framing: FramingProfile, limit: LimitProfile) -> Self {
        Self { framer: Framer::new(framing), limit, eviction_us: EVICTION_US }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing<A> {
    pub to: A,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkCounters {
    pub datagrams_in: u64,
    pub bytes_in: u64,
    pub datagrams_out: u64,
    pub bytes_out: u64,
}

#[derive(Debug, Clone)]
pub struct Participant<A> {
    pub id: ParticipantId,
    pub addr: A,
    pub role: Role,
    pub join_time_us: u64,
    pub last_seen_us: u64,
    pub pose: Option<Pose>,
    pub counters: LinkCounters,
    /// Leader-stream index this Follower joined at.
    pub base_seq: u32,
    /// Union of this Follower's Leader-stream acks.
    pub leader_view: AckView,
    pub catchup: ReliableSender,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HelloOutcome {
    Welcome { participant_id: ParticipantId, catchup_batches: usize },
    Reject(RejectReason),
}

#[derive(Debug, Clone)]
pub struct Session<A> {
    pub room_code: RoomCode,
    pub framer: Framer,
    pub limit: LimitProfile,
    pub epoch_us: u64,
    pub leader: Option<ParticipantId>,
    participants: BTreeMap<ParticipantId, Participant<A>>,
    next_id: ParticipantId,
    /// Latest record per object id seen from the Leader.
    cache: BTreeMap<u32, (u32, ObjectRecord)>,
    leader_rx: AckTracker,
    pub violations: u64,
    pub forwarded_updates: u64,
}

impl<A: Clone + Eq + Hash + fmt::Debug> Session<A> {
    pub fn new(room_code: RoomCode, framer: Framer, limit: LimitProfile, epoch_us: u64) -> Self {
        Self {
            room_code,
            framer,
            limit,
            epoch_us,
            leader: None,
            participants: BTreeMap::new(),
            next_id: 1,
            cache: BTreeMap::new(),
            leader_rx: AckTracker::default(),
            violations: 0,
            forwarded_updates: 0,
        }
    }

    pub fn participants(&self) -> impl Iterator<Item = &Participant<A>> + '_ {
        self.participants.values()
    }

    pub fn participant(&self, id: ParticipantId) -> Option<&Participant<A>> {
        self.participants.get(&id)
    }

    pub fn follower_count(&self) -> usize {
        self.participants.values().filter(|p| p.role == Role::Follower).count()
    }

    pub fn cached_objects(&self) -> usize {
        self.cache.len()
    }

    fn frame(&self, msg: &WireMessage) -> Vec<u8> {
        self.framer.frame(msg).expect("relay messages fit in a datagram")
    }

    fn send(&mut self, id: ParticipantId, bytes: Vec<u8>, out: &mut Vec<Outgoing<A>>) {
        if let Some(p) = self.participants.get_mut(&id) {
            p.counters.datagrams_out += 1;
            p.counters.bytes_out += bytes.len() as u64;
            out.push(Outgoing { to: p.addr.clone(), bytes });
        }
    }

    fn welcome_for(&self, p: &Participant<A>) -> Vec<u8> {
        self.frame(&WireMessage::Welcome {
            participant_id: p.id,
            session_epoch_us: self.epoch_us,
            base_seq: p.base_seq,
        })
    }

    /// Admits or rejects a joining participant. Accepted Followers get the
    /// current snapshot as catch-up batches and the known poses of everyone
    /// else.
    pub fn handle_hello(&mut self, role: Role, src: A, now_us: u64, out: &mut Vec<Outgoing<A>>) -> HelloOutcome {
        match role {
            Role::Leader if self.leader.is_some() => {
                out.push(Outgoing { to: src, bytes: self.frame(&WireMessage::Reject { reason: RejectReason::LeaderExists }) });
                return HelloOutcome::Reject(RejectReason::LeaderExists);
            }
            Role::Follower if self.follower_count() >= self.limit.max_followers() => {
                out.push(Outgoing { to: src, bytes: self.frame(&WireMessage::Reject { reason: RejectReason::SessionFull }) });
                return HelloOutcome::Reject(RejectReason::SessionFull);
            }
            _ => {}
        }
        let id = self.next_id;
        self.next_id = self.next_id.wrapping_add(1).max(1);
        // only the contiguous prefix counts as delivered; anything above it
        // reaches the Follower through catch-up or the Leader's retransmission
        let base_seq = self.leader_rx.view().cum;
        let p = Participant {
            id,
            addr: src,
            role,
            join_time_us: now_us,
            last_seen_us: now_us,
            pose: None,
            counters: LinkCounters::default(),
            base_seq,
            leader_view: AckView { cum: base_seq, bits: 0 },
            catchup: ReliableSender::catchup_stream(),
        };
        let welcome = self.welcome_for(&p);
        self.participants.insert(id, p);
        if role == Role::Leader {
            self.leader = Some(id);
        }
        self.send(id, welcome, out);

        let mut batches = 0;
        if role == Role::Follower {
            let records: Vec<ObjectRecord> = self.cache.values().map(|(_, r)| *r).collect();
            for chunk in records.chunks(MAX_RECORDS_PER_UPDATE) {
                let msg = self.participants.get_mut(&id).unwrap().catchup.push(chunk.to_vec(), now_us);
                let bytes = self.frame(&msg);
                self.send(id, bytes, out);
                batches += 1;
            }
        }
        let poses: Vec<Vec<u8>> = self
            .participants
            .values()
            .filter(|p| p.id != id)
            .filter_map(|p| p.pose.map(|pose| self.frame(&WireMessage::PoseUpdate { participant_id: p.id, pose })))
            .collect();
        for bytes in poses {
            self.send(id, bytes, out);
        }
        info!("session {}: participant {id} joined as {role}", self.room_code);
        HelloOutcome::Welcome { participant_id: id, catchup_batches: batches }
    }

    fn leader_ack(&self) -> Option<WireMessage> {
        // the relay vouches only for its contiguous prefix so that a Follower
        // admitted behind a hole can still be served by Leader retransmission
        let relay_view = AckView { cum: self.leader_rx.view().cum, bits: 0 };
        let views: Vec<AckView> = std::iter::once(relay_view)
            .chain(self.participants.values().filter(|p| p.role == Role::Follower).map(|p| p.leader_view))
            .collect();
        AckView::intersect(views.iter()).map(|v| v.to_message(0))
    }

    fn ack_leader(&mut self, out: &mut Vec<Outgoing<A>>) {
        if let (Some(leader), Some(ack)) = (self.leader, self.leader_ack()) {
            let bytes = self.frame(&ack);
            self.send(leader, bytes, out);
        }
    }

    /// Routes one decoded message from a member. `raw` is forwarded verbatim.
    pub fn forward(&mut self, from: ParticipantId, msg: &WireMessage, raw: &[u8], now_us: u64, out: &mut Vec<Outgoing<A>>) {
        let Some(sender) = self.participants.get_mut(&from) else { return };
        sender.last_seen_us = now_us;
        sender.counters.datagrams_in += 1;
        sender.counters.bytes_in += raw.len() as u64;
        let role = sender.role;
        match msg {
            WireMessage::ObjectUpdate { seq, records } => {
                if role != Role::Leader || is_catchup(*seq) {
                    self.violations += 1;
                    warn!("session {}: dropped ObjectUpdate from non-Leader {from}", self.room_code);
                    return;
                }
                let mut decoded = Vec::with_capacity(records.len());
                for r in records {
                    match r.decode() {
                        Ok(o) => decoded.push((o, *r)),
                        Err(e) => {
                            warn!("session {}: malformed record from Leader: {e}", self.room_code);
                            return;
                        }
                    }
                }
                for (o, r) in decoded {
                    if self.cache.get(&o.id).is_none_or(|(v, _)| o.version > *v) {
                        self.cache.insert(o.id, (o.version, r));
                    }
                }
                self.leader_rx.record(*seq);
                self.forwarded_updates += 1;
                let followers: Vec<ParticipantId> =
                    self.participants.values().filter(|p| p.role == Role::Follower).map(|p| p.id).collect();
                for f in followers {
                    self.send(f, raw.to_vec(), out);
                }
                self.ack_leader(out);
            }
            WireMessage::PoseUpdate { participant_id, pose } => {
                if *participant_id != from {
                    self.violations += 1;
                    return;
                }
                self.participants.get_mut(&from).unwrap().pose = Some(*pose);
                let others: Vec<ParticipantId> = self.participants.keys().copied().filter(|&id| id != from).collect();
                for id in others {
                    self.send(id, raw.to_vec(), out);
                }
            }
            WireMessage::Heartbeat { .. } => self.send(from, raw.to_vec(), out),
            WireMessage::Ack { cumulative_seq, selective } => {
                if role != Role::Follower {
                    return;
                }
                let (flag, view) = AckView::from_message(*cumulative_seq, *selective);
                let p = self.participants.get_mut(&from).unwrap();
                if flag == CATCHUP_FLAG {
                    p.catchup.on_ack(&view, now_us);
                } else {
                    p.leader_view = p.leader_view.merge(&view);
                    self.ack_leader(out);
                }
            }
            WireMessage::Hello { .. } => {
                // duplicate Hello: the Welcome was probably lost
                let welcome = self.welcome_for(&self.participants[&from]);
                self.send(from, welcome, out);
            }
            WireMessage::Welcome { .. } | WireMessage::Reject { .. } => self.violations += 1,
        }
    }

    pub fn remove(&mut self, id: ParticipantId, out: &mut Vec<Outgoing<A>>) -> Option<Participant<A>> {
        let p = self.participants.remove(&id)?;
        if self.leader == Some(id) {
            self.leader = None;
        } else {
            // a departed Follower may have been the one holding up the Leader
            self.ack_leader(out);
        }
        info!("session {}: participant {id} left", self.room_code);
        Some(p)
    }

    /// Catch-up retransmissions and eviction of silent participants.
    pub fn tick(&mut self, now_us: u64, eviction_us: u64, out: &mut Vec<Outgoing<A>>) -> Vec<Participant<A>> {
        let ids: Vec<ParticipantId> = self.participants.keys().copied().collect();
        for id in &ids {
            let msgs = self.participants.get_mut(id).unwrap().catchup.retransmit_due(now_us);
            for m in msgs {
                let bytes = self.frame(&m);
                self.send(*id, bytes, out);
            }
        }
        let stale: Vec<ParticipantId> = self
            .participants
            .values()
            .filter(|p| now_us.saturating_sub(p.last_seen_us) > eviction_us)
            .map(|p| p.id)
            .collect();
        stale.into_iter().filter_map(|id| self.remove(id, out)).collect()
    }

    /// No catch-up batch awaits an ack.
    pub fn quiescent(&self) -> bool {
        self.participants.values().all(|p| p.catchup.in_flight() == 0)
    }
}

/// All sessions hosted by one relay, keyed by room code.
#[derive(Debug)]
pub struct Relay<A> {
    pub config: RelayConfig,
    sessions: BTreeMap<RoomCode, Session<A>>,
    routes: HashMap<A, (RoomCode, ParticipantId)>,
    pub malformed: u64,
}

impl<A: Clone + Eq + Hash + fmt::Debug> Relay<A> {
    pub fn new(config: RelayConfig) -> Self {
        Self { config, sessions: BTreeMap::new(), routes: HashMap::new(), malformed: 0 }
    }

    pub fn session(&self, code: &RoomCode) -> Option<&Session<A>> {
        self.sessions.get(code)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session<A>> + '_ {
        self.sessions.values()
    }

    pub fn route(&self, addr: &A) -> Option<(RoomCode, ParticipantId)> {
        self.routes.get(addr).copied()
    }

    pub fn handle_datagram(&mut self, src: A, datagram: &[u8], now_us: u64) -> Vec<Outgoing<A>> {
        let mut out = Vec::new();
        let msg = match self.config.framer.deframe(datagram) {
            Ok(m) => m,
            Err(ProtocolError::BadRoomCode(code)) => {
                debug!("rejecting bad room code {code:?} from {src:?}");
                let bytes = self.config.framer.frame(&WireMessage::Reject { reason: RejectReason::BadRoomCode }).unwrap();
                out.push(Outgoing { to: src, bytes });
                return out;
            }
            Err(e) => {
                self.malformed += 1;
                debug!("dropping malformed datagram from {src:?}: {e}");
                return out;
            }
        };
        if let Some((code, id)) = self.routes.get(&src).copied() {
            if let Some(s) = self.sessions.get_mut(&code) {
                s.forward(id, &msg, datagram, now_us, &mut out);
            }
            return out;
        }
        if let WireMessage::Hello { role, room_code } = msg {
            let framer = self.config.framer.clone();
            let limit = self.config.limit;
            let session = self
                .sessions
                .entry(room_code)
                .or_insert_with(|| Session::new(room_code, framer, limit, now_us));
            if let HelloOutcome::Welcome { participant_id, .. } = session.handle_hello(role, src.clone(), now_us, &mut out) {
                self.routes.insert(src, (room_code, participant_id));
            }
        }
        out
    }

    pub fn remove_participant(&mut self, addr: &A) -> Vec<Outgoing<A>> {
        let mut out = Vec::new();
        if let Some((code, id)) = self.routes.remove(addr) {
            if let Some(s) = self.sessions.get_mut(&code) {
                s.remove(id, &mut out);
            }
        }
        out
    }

    pub fn tick(&mut self, now_us: u64) -> Vec<Outgoing<A>> {
        let mut out = Vec::new();
        let eviction = self.config.eviction_us;
        for s in self.sessions.values_mut() {
            for gone in s.tick(now_us, eviction, &mut out) {
                self.routes.remove(&gone.addr);
            }
        }
        out
    }

    pub fn quiescent(&self) -> bool {
        self.sessions.values().all(Session::quiescent)
    }
}
