use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::clock::{best_offset, Exchange};
use super::link::{Delivery, Link, LinkCounters, LinkProfile};
use super::{normalized_room_transfer, NetsimError};
use crate::protocol::{peek_kind, Client, ClientEvent, FollowerEvent, Framer, FramingProfile, MessageKind, Role, RoomCode};
use crate::relay::{LimitProfile, Relay, RelayConfig};
use crate::scene::{SceneObject, SceneSnapshot};
use crate::synth::{canonical_room, parse_rooms, scan_step, RoomSpec, ScanState, World};

/// First object is created this long after the run starts.
pub const SPAWN_START_US: u64 = 250_000;
/// The Leader creates one object per interval, publishing each at once.
pub const SPAWN_INTERVAL_US: u64 = 10_000;
pub const SIM_TICK_US: u64 = 10_000;
pub const SIM_TIMEOUT_US: u64 = 600_000_000;
pub const CALIBRATION_EXCHANGES: usize = 8;
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const CLOCK_BASE_US: i64 = 1_000_000_000;
const ROOM_CODE: &str = "BENCH1";

/// Scenario file contents. `link` describes the Leader-to-Follower path:
/// its delay and jitter are split evenly between the Leader's and each
/// Follower's access hop, and its loss is split so the two-hop path loses
/// `loss` of its datagrams. `primary_link`, when present, replaces the path
/// to the first Follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Leader included.
    pub participants: usize,
    pub link: LinkProfile,
    /// `plain`, `framed` or `both`.
    pub framing: String,
    pub limit_profile: String,
    /// Canonical room name or a room file path relative to the scenario file.
    pub world: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_link: Option<LinkProfile>,
    /// Overrides the bandwidth of the Leader's access hop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_bandwidth_kbps: Option<f64>,
    /// Per participant, Leader first; missing entries are 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clock_offsets_ms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Scenario {
    pub fn new(name: &str, participants: usize, link: LinkProfile, world: &str) -> Self {
        Self {
            name: name.to_string(),
            participants,
            link,
            framing: "plain".into(),
            limit_profile: "photon".into(),
            world: world.to_string(),
            primary_link: None,
            leader_bandwidth_kbps: None,
            clock_offsets_ms: Vec::new(),
            note: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, NetsimError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| NetsimError::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Reads a scenario file and resolves its world.
    pub fn load(path: &Path) -> Result<(Self, Vec<RoomSpec>), NetsimError> {
        let text = std::fs::read_to_string(path).map_err(|e| NetsimError::Io(format!("{}: {e}", path.display())))?;
        let sc = Self::from_json(&text)?;
        let rooms = sc.resolve_world(path.parent())?;
        Ok((sc, rooms))
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        if self.participants < 2 {
            return Err(NetsimError::Scenario("need a Leader and at least one Follower".into()));
        }
        self.link.validate()?;
        if let Some(p) = &self.primary_link {
            p.validate()?;
        }
        if self.leader_bandwidth_kbps.is_some_and(|b| !(b >= 0.0 && b.is_finite())) {
            return Err(NetsimError::Scenario("leader_bandwidth_kbps must be finite and non-negative".into()));
        }
        if self.clock_offsets_ms.len() > self.participants || self.clock_offsets_ms.iter().any(|o| !o.is_finite()) {
            return Err(NetsimError::Scenario("clock_offsets_ms: at most one finite value per participant".into()));
        }
        self.framings()?;
        self.limit()?;
        Ok(())
    }

    pub fn framings(&self) -> Result<Vec<FramingProfile>, NetsimError> {
        match self.framing.as_str() {
            "both" => Ok(vec![FramingProfile::Plain, FramingProfile::Framed]),
            s => s.parse().map(|f| vec![f]).map_err(NetsimError::Scenario),
        }
    }

    pub fn limit(&self) -> Result<LimitProfile, NetsimError> {
        self.limit_profile.parse().map_err(NetsimError::Scenario)
    }

    pub fn resolve_world(&self, base: Option<&Path>) -> Result<Vec<RoomSpec>, NetsimError> {
        if let Some(room) = canonical_room(&self.world) {
            return Ok(vec![room]);
        }
        let mut path = PathBuf::from(&self.world);
        if path.is_relative() {
            if let Some(b) = base {
                path = b.join(path);
            }
        }
        let text = std::fs::read_to_string(&path).map_err(|e| NetsimError::Io(format!("{}: {e}", path.display())))?;
        parse_rooms(&text).map_err(|e| NetsimError::Scenario(e.to_string()))
    }

    fn hop_profiles(&self, node: usize, repeat_seed: u64) -> (LinkProfile, LinkProfile) {
        let leader_hop = split(&self.link, None);
        let p = if node == 0 {
            LinkProfile { bandwidth_kbps: self.leader_bandwidth_kbps.unwrap_or(leader_hop.bandwidth_kbps), ..leader_hop }
        } else if let (1, Some(primary)) = (node, &self.primary_link) {
            split(primary, Some(&leader_hop))
        } else {
            split(&self.link, None)
        };
        let seeded = |dir: u64| LinkProfile { seed: mix(p.seed, repeat_seed, node as u64, dir), ..p };
        (seeded(0), seeded(1))
    }
}

/// One access hop of a two-hop path; `other` is the hop already carved out
/// of it, if any.
fn split(path: &LinkProfile, other: Option<&LinkProfile>) -> LinkProfile {
    let (delay_ms, jitter_ms) = match other {
        Some(o) => ((path.delay_ms - o.delay_ms).max(0.0), (path.jitter_ms - o.jitter_ms).max(0.0)),
        None => (path.delay_ms / 2.0, path.jitter_ms / 2.0),
    };
    LinkProfile { delay_ms, jitter_ms, loss: 1.0 - (1.0 - path.loss).sqrt(), ..*path }
}

fn mix(base: u64, repeat: u64, node: u64, dir: u64) -> u64 {
    let mut x = base ^ repeat.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (node << 8 | dir).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 31;
    x.wrapping_mul(0x94D0_49BB_1331_11EB)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficTotals {
    /// Participants to relay, as offered to the links.
    pub up_datagrams: u64,
    pub up_bytes: u64,
    /// Relay to participants.
    pub down_datagrams: u64,
    pub down_bytes: u64,
}

impl TrafficTotals {
    pub fn datagrams(&self) -> u64 {
        self.up_datagrams + self.down_datagrams
    }

    pub fn bytes(&self) -> u64 {
        self.up_bytes + self.down_bytes
    }
}

/// Everything measured in one seeded run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub framing: FramingProfile,
    pub object_count: usize,
    /// Per object at the primary Follower, from calibrated local clocks.
    pub latencies_ms: Vec<f64>,
    /// Same objects, from the emulator's virtual clock.
    pub true_latencies_ms: Vec<f64>,
    pub room50_s: f64,
    pub throughput_bytes_per_s: f64,
    pub packet_loss_fraction: f64,
    pub links: LinkCounters,
    pub totals: TrafficTotals,
    pub retransmissions: u64,
    /// Estimated server-minus-local offsets, Leader first.
    pub clock_offsets_us: Vec<f64>,
    pub leader_snapshot: SceneSnapshot,
    pub follower_snapshots: Vec<SceneSnapshot>,
    pub rejected_followers: usize,
    pub finished_us: u64,
}

struct Node {
    client: Client,
    up: Link,
    down: Link,
    theta_us: i64,
    offset_us: f64,
}

impl Node {
    fn local(&self, t: u64) -> u64 {
        (t as i64 + CLOCK_BASE_US + self.theta_us) as u64
    }
}

const RELAY: usize = usize::MAX;

/// (delivery time, tie-break sequence, to, from, datagram)
type InTransit = (u64, u64, usize, usize, Vec<u8>);

struct Sim {
    nodes: Vec<Node>,
    relay: Relay<usize>,
    queue: BinaryHeap<Reverse<InTransit>>,
    seq: u64,
    totals: TrafficTotals,
}

impl Sim {
    fn send_up(&mut self, from: usize, bytes: Vec<u8>, t: u64) {
        self.totals.up_datagrams += 1;
        self.totals.up_bytes += bytes.len() as u64;
        if let Delivery::At(at) = self.nodes[from].up.transmit(bytes.len(), t) {
            self.seq += 1;
            self.queue.push(Reverse((at, self.seq, RELAY, from, bytes)));
        }
    }

    fn send_down(&mut self, to: usize, bytes: Vec<u8>, t: u64) {
        self.totals.down_datagrams += 1;
        self.totals.down_bytes += bytes.len() as u64;
        if let Delivery::At(at) = self.nodes[to].down.transmit(bytes.len(), t) {
            self.seq += 1;
            self.queue.push(Reverse((at, self.seq, to, RELAY, bytes)));
        }
    }

    fn relay_in(&mut self, from: usize, bytes: &[u8], t: u64) {
        for o in self.relay.handle_datagram(from, bytes, t) {
            self.send_down(o.to, o.bytes, t);
        }
    }
}

/// Eight request/response exchanges against the relay clock over copies of
/// the node's access links; keeps the minimum round trip.
fn calibrate(node: &Node) -> Result<f64, NetsimError> {
    let mut up = Link::new(LinkProfile { seed: node.up.profile.seed ^ 0xC10C, ..node.up.profile })?;
    let mut down = Link::new(LinkProfile { seed: node.down.profile.seed ^ 0xC10C, ..node.down.profile })?;
    let mut exchanges = Vec::new();
    let mut t = 0u64;
    let mut attempts = 0;
    while exchanges.len() < CALIBRATION_EXCHANGES {
        attempts += 1;
        if attempts > 10_000 {
            return Err(NetsimError::ScenarioTimeout("clock calibration never completed".into()));
        }
        t += 10_000;
        let t0 = node.local(t);
        let Delivery::At(at_server) = up.transmit(48, t) else { continue };
        let Delivery::At(back) = down.transmit(48, at_server) else { continue };
        exchanges.push(Exchange { t0: t0 as i64, t1: at_server as i64, t2: at_server as i64, t3: node.local(back) as i64 });
        t = back;
    }
    best_offset(&exchanges)
}

/// Objects the Leader will create, in creation order.
pub fn world_objects(rooms: &[RoomSpec]) -> Result<Vec<SceneObject>, NetsimError> {
    let world = World::new(rooms.to_vec()).map_err(|e| NetsimError::Scenario(e.to_string()))?;
    Ok(scan_step(&mut ScanState::full_visibility(1), &world, 0))
}

/// One seeded run in virtual time.
pub fn run_once(sc: &Scenario, rooms: &[RoomSpec], framing: FramingProfile, seed: u64) -> Result<RunResult, NetsimError> {
    sc.validate()?;
    let objects = world_objects(rooms)?;
    if objects.is_empty() {
        return Err(NetsimError::ZeroObjects);
    }
    let framer = Framer::new(framing);
    let code = RoomCode::new(ROOM_CODE).expect("constant code");
    let mut nodes = Vec::with_capacity(sc.participants);
    for i in 0..sc.participants {
        let (up, down) = sc.hop_profiles(i, seed);
        let role = if i == 0 { Role::Leader } else { Role::Follower };
        let theta_ms = sc.clock_offsets_ms.get(i).copied().unwrap_or(0.0);
        let mut node = Node {
            client: Client::new(framer.clone(), role, code),
            up: Link::new(up)?,
            down: Link::new(down)?,
            theta_us: (theta_ms * 1e3).round() as i64,
            offset_us: 0.0,
        };
        node.offset_us = calibrate(&node)?;
        nodes.push(node);
    }
    let mut sim = Sim {
        nodes,
        relay: Relay::new(RelayConfig::new(framing, sc.limit()?)),
        queue: BinaryHeap::new(),
        seq: 0,
        totals: TrafficTotals::default(),
    };

    // Leader says hello first so it holds participant id 1.
    for i in 0..sim.nodes.len() {
        let t = i as u64 * 1_000;
        let local = sim.nodes[i].local(t);
        let hello = sim.nodes[i].client.hello(local);
        sim.send_up(i, hello, t);
    }

    let mut truth_create: HashMap<u32, u64> = HashMap::new();
    let mut latencies = Vec::new();
    let mut true_latencies = Vec::new();
    let (mut first_rx, mut last_rx): (Option<u64>, u64) = (None, 0);
    let mut primary_update_bytes = 0u64;
    let mut spawned = 0usize;
    let mut next_spawn = SPAWN_START_US;
    let mut next_tick = 0u64;

    loop {
        let next_delivery = sim.queue.peek().map(|Reverse(e)| e.0);
        if next_delivery.is_some_and(|d| d <= next_tick) {
            let Reverse((t, _, to, from, bytes)) = sim.queue.pop().expect("peeked");
            if to == RELAY {
                sim.relay_in(from, &bytes, t);
                continue;
            }
            let local = sim.nodes[to].local(t);
            let Ok((replies, events)) = sim.nodes[to].client.handle_datagram(&bytes, local) else { continue };
            if to == 1 && peek_kind(&bytes) == Some(MessageKind::ObjectUpdate) {
                primary_update_bytes += bytes.len() as u64;
            }
            for e in events {
                if let (1, ClientEvent::Follower(FollowerEvent::ObjectApplied { object, received_us })) = (to, &e) {
                    let node = &sim.nodes[1];
                    let epoch = node.client.epoch_us() as f64;
                    let session_rx = *received_us as f64 + node.offset_us - epoch;
                    latencies.push((session_rx - object.created_us as f64) / 1e3);
                    if let Some(c) = truth_create.get(&object.id) {
                        true_latencies.push((t - c) as f64 / 1e3);
                    }
                    first_rx.get_or_insert(t);
                    last_rx = t;
                }
            }
            for r in replies {
                sim.send_up(to, r, t);
            }
            continue;
        }

        let t = next_tick;
        if t > SIM_TIMEOUT_US {
            return Err(NetsimError::ScenarioTimeout(format!("{} not quiescent after {} s", sc.name, t / 1_000_000)));
        }
        next_tick += SIM_TICK_US;
        for o in sim.relay.tick(t) {
            sim.send_down(o.to, o.bytes, t);
        }
        for i in 0..sim.nodes.len() {
            let local = sim.nodes[i].local(t);
            for d in sim.nodes[i].client.tick(local) {
                sim.send_up(i, d, t);
            }
        }
        let leader_id = sim.nodes[0].client.participant_id();
        if spawned < objects.len() && t >= next_spawn && leader_id.is_some() {
            let node = &sim.nodes[0];
            let local = node.local(t);
            let session_now = (local as f64 + node.offset_us - node.client.epoch_us() as f64).round().max(0.0) as u64;
            let obj = SceneObject { created_us: session_now, creator: leader_id.unwrap_or(1), ..objects[spawned] };
            truth_create.insert(obj.id, t);
            let datagrams = sim.nodes[0].client.publish(&[obj], local).map_err(|e| NetsimError::Scenario(e.to_string()))?;
            for d in datagrams {
                sim.send_up(0, d, t);
            }
            spawned += 1;
            next_spawn = t + SPAWN_INTERVAL_US;
        }

        if sim.nodes[0].client.sender.is_degraded()
            || sim.relay.sessions().flat_map(|s| s.participants()).any(|p| p.catchup.is_degraded())
        {
            return Err(NetsimError::ScenarioTimeout(format!("{}: a sender gave up (degraded session)", sc.name)));
        }
        let settled = |n: &Node| n.client.participant_id().is_some() || n.client.rejected().is_some();
        if spawned == objects.len()
            && sim.nodes.iter().all(settled)
            && sim.nodes[0].client.quiescent()
            && sim.relay.quiescent()
        {
            let followers: Vec<&Node> = sim.nodes[1..].iter().collect();
            let rejected = followers.iter().filter(|n| n.client.rejected().is_some()).count();
            let links = sim.nodes.iter().fold(LinkCounters::default(), |mut acc, n| {
                for c in [n.up.counters, n.down.counters] {
                    acc.sent += c.sent;
                    acc.delivered += c.delivered;
                    acc.dropped += c.dropped;
                    acc.bytes_sent += c.bytes_sent;
                    acc.bytes_delivered += c.bytes_delivered;
                }
                acc
            });
            let window_us = first_rx.map_or(0, |f| last_rx - f);
            let received = latencies.len();
            return Ok(RunResult {
                seed,
                framing,
                object_count: objects.len(),
                latencies_ms: latencies,
                true_latencies_ms: true_latencies,
                room50_s: if received == 0 { 0.0 } else { normalized_room_transfer(window_us as f64 / 1e6, received)? },
                throughput_bytes_per_s: if window_us == 0 { 0.0 } else { primary_update_bytes as f64 / (window_us as f64 / 1e6) },
                packet_loss_fraction: if links.sent == 0 { 0.0 } else { 1.0 - links.delivered as f64 / links.sent as f64 },
                links,
                totals: sim.totals,
                retransmissions: sim.nodes[0].client.sender.retransmissions(),
                clock_offsets_us: sim.nodes.iter().map(|n| n.offset_us).collect(),
                leader_snapshot: sim.nodes[0].client.authority.clone(),
                follower_snapshots: followers
                    .iter()
                    .filter(|n| n.client.rejected().is_none())
                    .map(|n| n.client.follower.snapshot.clone())
                    .collect(),
                rejected_followers: rejected,
                finished_us: t,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::encode_snapshot;
    use crate::synth::personal_room;

    fn sd(participants: usize) -> Scenario {
        let link = LinkProfile { delay_ms: 2.5, jitter_ms: 0.25, loss: 0.0, bandwidth_kbps: 240_000.0, seed: 7 };
        Scenario::new("SD", participants, link, "personal")
    }

    #[test]
    fn hop_split_recombines() {
        let mut sc = sd(3);
        sc.link.loss = 0.5;
        sc.primary_link = Some(LinkProfile { delay_ms: 60.0, jitter_ms: 6.0, ..sc.link });
        let (l, _) = sc.hop_profiles(0, 1);
        let (p, _) = sc.hop_profiles(1, 1);
        let (o, _) = sc.hop_profiles(2, 1);
        assert_eq!(l.delay_ms + o.delay_ms, 2.5);
        assert_eq!(l.delay_ms + p.delay_ms, 60.0);
        assert!(((1.0 - l.loss) * (1.0 - o.loss) - 0.5).abs() < 1e-12);
        assert_ne!(l.seed, o.seed);
    }

    #[test]
    fn small_run_converges() {
        let r = run_once(&sd(2), &[personal_room()], FramingProfile::Plain, 1).unwrap();
        assert_eq!(r.object_count, 30);
        assert_eq!(r.latencies_ms.len(), 30);
        assert_eq!(r.packet_loss_fraction, 0.0);
        assert_eq!(encode_snapshot(&r.follower_snapshots[0]), encode_snapshot(&r.leader_snapshot));
    }

    #[test]
    fn over_limit_followers_are_rejected() {
        let mut sc = sd(23);
        sc.limit_profile = "photon".into();
        let r = run_once(&sc, &[personal_room()], FramingProfile::Plain, 1).unwrap();
        assert_eq!(r.rejected_followers, 2);
        assert_eq!(r.follower_snapshots.len(), 20);
    }

    #[test]
    fn scenario_json_round_trip() {
        let mut sc = sd(4);
        sc.framing = "both".into();
        let text = serde_json::to_string_pretty(&sc).unwrap();
        assert!(!text.contains("primary_link"));
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(back, sc);
        assert_eq!(back.framings().unwrap().len(), 2);
        assert!(Scenario::from_json(&text.replace("\"both\"", "\"zip\"")).is_err());
    }
}
