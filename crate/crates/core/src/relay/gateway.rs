//! Browser gateway: one JSON object per line in, one per line out.
//!
//! A [`GatewayAgent`] is a full protocol participant owned by the relay on
//! behalf of a browser connection. Commands become native datagrams; native
//! traffic becomes events. It also runs the see-through wall logic for its
//! avatar so the console can draw alphas and cue flashes.

use std::collections::BTreeMap;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::nav::{update_transparency, TransparencyState, UserPose, EYE_HEIGHT_M};
use crate::protocol::{Client, ClientEvent, FollowerEvent, Framer, Pose, Role, RoomCode};
use crate::relay::LimitProfile;
use crate::scene::{display_color, ParticipantId, SceneObject, SceneSnapshot};
use crate::synth::{
    parse_rooms, scan_step, LeaderPose, RoomSpec, ScanState, UpdatePolicy, World, WALK_SCAN_FOV_DEG,
    WALK_SCAN_RADIUS_M,
};

pub const METRICS_INTERVAL_US: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Join { role: String, room_code: String },
    /// Displacement in meters (east, north) and absolute heading in degrees.
    Move { dx: f64, dy: f64, yaw: f64 },
    /// Room file text.
    PublishRoom { spec: String },
    ToggleUpdate { mode: String },
    TriggerUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionInfo {
        participant_id: ParticipantId,
        role: String,
        room_code: String,
        epoch_us: u64,
        follower_limit: usize,
    },
    ObjectUpsert {
        id: u32,
        version: u32,
        category: String,
        color: String,
        center: [f32; 3],
        half_extents: [f32; 2],
        orientation: [f32; 4],
        created_us: u64,
        creator: ParticipantId,
    },
    Pose {
        participant_id: ParticipantId,
        position: [f32; 3],
        /// Degrees.
        yaw: f32,
    },
    MetricsTick {
        objects: usize,
        peers: usize,
        rtt_ms: Option<f64>,
        in_flight: usize,
        retransmissions: u64,
        datagrams_in: u64,
        datagrams_out: u64,
    },
    Alpha {
        wall_id: u32,
        alpha: f64,
    },
    SoundCue {
        wall_id: u32,
        /// Degrees, positive to the right.
        azimuth: f64,
    },
    Error {
        message: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

impl Event {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }

    fn error(message: impl Into<String>) -> Self {
        Event::Error { message: message.into(), reason: None }
    }

    fn upsert(obj: &SceneObject, viewer: ParticipantId) -> Self {
        Event::ObjectUpsert {
            id: obj.id,
            version: obj.version,
            category: obj.category.name().to_string(),
            color: display_color(obj, viewer).hex(),
            center: obj.center,
            half_extents: obj.half_extents,
            orientation: obj.orientation,
            created_us: obj.created_us,
            creator: obj.creator,
        }
    }

    fn pose(participant_id: ParticipantId, pose: &Pose) -> Self {
        Event::Pose { participant_id, position: pose.position, yaw: pose.yaw.to_degrees() }
    }
}

/// What one input produced: datagrams for the relay core and events for the
/// browser.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct AgentOutput {
    pub datagrams: Vec<Vec<u8>>,
    pub events: Vec<Event>,
}

impl AgentOutput {
    fn event(e: Event) -> Self {
        Self { datagrams: Vec::new(), events: vec![e] }
    }

    fn extend(&mut self, other: AgentOutput) {
        self.datagrams.extend(other.datagrams);
        self.events.extend(other.events);
    }
}

#[derive(Debug)]
pub struct GatewayAgent {
    framer: Framer,
    limit: LimitProfile,
    client: Option<Client>,
    rooms: Vec<RoomSpec>,
    world: Option<World>,
    scan: Option<ScanState>,
    avatar: UserPose,
    transparency: TransparencyState,
    last_metrics_us: Option<u64>,
    rtt_ms: Option<f64>,
    datagrams_in: u64,
    datagrams_out: u64,
}

impl GatewayAgent {
    pub fn new(framer: Framer, limit: LimitProfile) -> Self {
        Self {
            framer,
            limit,
            client: None,
            rooms: Vec::new(),
            world: None,
            scan: None,
            avatar: UserPose::new(Point3::new(0.0, 0.0, EYE_HEIGHT_M), 0.0),
            transparency: TransparencyState::default(),
            last_metrics_us: None,
            rtt_ms: None,
            datagrams_in: 0,
            datagrams_out: 0,
        }
    }

    pub fn client(&self) -> Option<&Client> {
        self.client.as_ref()
    }

    pub fn avatar(&self) -> &UserPose {
        &self.avatar
    }

    fn joined_id(&self) -> Option<ParticipantId> {
        self.client.as_ref().and_then(Client::participant_id)
    }

    /// The agent's view of the scene: everything it published as Leader or
    /// received as Follower.
    pub fn snapshot(&self) -> Option<&SceneSnapshot> {
        self.client.as_ref().map(|c| if c.role == Role::Leader { &c.authority } else { &c.follower.snapshot })
    }

    /// Parses and applies one line. Malformed input yields an error event;
    /// the agent stays usable.
    pub fn handle_line(&mut self, line: &str, now_us: u64) -> AgentOutput {
        let line = line.trim();
        if line.is_empty() {
            return AgentOutput::default();
        }
        match serde_json::from_str::<Command>(line) {
            Ok(cmd) => self.handle_command(cmd, now_us),
            Err(e) => AgentOutput::event(Event::error(format!("malformed command: {e}"))),
        }
    }

    pub fn handle_command(&mut self, cmd: Command, now_us: u64) -> AgentOutput {
        let out = match cmd {
            Command::Join { role, room_code } => self.join(&role, &room_code, now_us),
            Command::Move { dx, dy, yaw } => self.move_by(dx, dy, yaw, now_us),
            Command::PublishRoom { spec } => self.publish_room(&spec, now_us),
            Command::ToggleUpdate { mode } => self.toggle_update(&mode),
            Command::TriggerUpdate => self.trigger_update(now_us),
        };
        self.count_out(out)
    }

    fn count_out(&mut self, out: AgentOutput) -> AgentOutput {
        self.datagrams_out += out.datagrams.len() as u64;
        out
    }

    fn join(&mut self, role: &str, room_code: &str, now_us: u64) -> AgentOutput {
        if self.joined_id().is_some() {
            return AgentOutput::event(Event::error("already joined"));
        }
        let role: Role = match role.parse() {
            Ok(r) => r,
            Err(e) => return AgentOutput::event(Event::error(e)),
        };
        let code = match RoomCode::new(room_code) {
            Ok(c) => c,
            Err(e) => {
                return AgentOutput::event(Event::Error {
                    message: e.to_string(),
                    reason: Some(crate::protocol::RejectReason::BadRoomCode.name().to_string()),
                })
            }
        };
        let mut client = Client::new(self.framer.clone(), role, code);
        let hello = client.hello(now_us);
        self.client = Some(client);
        AgentOutput { datagrams: vec![hello], events: Vec::new() }
    }

    fn leader(&mut self) -> Result<(&mut Client, ParticipantId), AgentOutput> {
        let Some(client) = self.client.as_mut() else {
            return Err(AgentOutput::event(Event::error("not joined")));
        };
        let Some(id) = client.participant_id() else {
            return Err(AgentOutput::event(Event::error("join pending")));
        };
        if client.role != Role::Leader {
            return Err(AgentOutput::event(Event::error("only the Leader can do that")));
        }
        Ok((client, id))
    }

    fn move_by(&mut self, dx: f64, dy: f64, yaw_deg: f64, now_us: u64) -> AgentOutput {
        if ![dx, dy, yaw_deg].iter().all(|v| v.is_finite()) {
            return AgentOutput::event(Event::error("move values must be finite"));
        }
        let Some(id) = self.joined_id() else {
            return AgentOutput::event(Event::error("not joined"));
        };
        self.avatar.position.x += dx;
        self.avatar.position.y += dy;
        self.avatar.yaw = crate::frame::wrap_angle(yaw_deg.to_radians());
        let mut out = self.send_pose(id);
        if let Some(scan) = self.scan.as_mut() {
            scan.leader_pose = LeaderPose { position: self.avatar.position, yaw: self.avatar.yaw };
            out.extend(self.scan_and_publish(now_us));
        }
        out.extend(self.refresh_transparency());
        out
    }

    fn send_pose(&mut self, id: ParticipantId) -> AgentOutput {
        let p = &self.avatar.position;
        let pose = Pose { position: [p.x as f32, p.y as f32, p.z as f32], yaw: self.avatar.yaw as f32 };
        let client = self.client.as_mut().expect("joined");
        AgentOutput { datagrams: client.set_pose(pose).into_iter().collect(), events: vec![Event::pose(id, &pose)] }
    }

    fn publish_room(&mut self, spec: &str, now_us: u64) -> AgentOutput {
        let id = match self.leader() {
            Ok((_, id)) => id,
            Err(out) => return out,
        };
        let new_rooms = match parse_rooms(spec) {
            Ok(r) if r.is_empty() => return AgentOutput::event(Event::error("spec contains no rooms")),
            Ok(r) => r,
            Err(e) => return AgentOutput::event(Event::error(e.to_string())),
        };
        // appended rooms keep earlier ids stable
        let mut rooms = self.rooms.clone();
        rooms.extend(new_rooms);
        let world = match World::new(rooms.clone()) {
            Ok(w) => w,
            Err(e) => return AgentOutput::event(Event::error(e.to_string())),
        };
        let mut out = AgentOutput::default();
        if self.scan.is_none() {
            let mut c = rooms[0].center();
            c.z = rooms[0].origin[2] + EYE_HEIGHT_M.min(rooms[0].dimensions[2]);
            self.avatar.position = c;
            let scan = ScanState::new(
                LeaderPose { position: c, yaw: self.avatar.yaw },
                WALK_SCAN_RADIUS_M,
                WALK_SCAN_FOV_DEG,
                UpdatePolicy::default(),
                id,
            )
            .expect("static parameters are valid");
            self.scan = Some(scan);
            out.extend(self.send_pose(id));
        }
        self.rooms = rooms;
        self.world = Some(world);
        out.extend(self.scan_and_publish(now_us));
        out.extend(self.refresh_transparency());
        out
    }

    fn toggle_update(&mut self, mode: &str) -> AgentOutput {
        let policy = match mode {
            "auto" => UpdatePolicy::default(),
            "manual" => UpdatePolicy::Manual,
            other => return AgentOutput::event(Event::error(format!("unknown update mode `{other}`"))),
        };
        if let Err(out) = self.leader() {
            return out;
        }
        match self.scan.as_mut() {
            Some(scan) => {
                scan.set_policy(policy);
                AgentOutput::default()
            }
            None => AgentOutput::event(Event::error("no room published")),
        }
    }

    fn trigger_update(&mut self, now_us: u64) -> AgentOutput {
        if let Err(out) = self.leader() {
            return out;
        }
        let Some(scan) = self.scan.as_mut() else {
            return AgentOutput::event(Event::error("no room published"));
        };
        scan.trigger_update();
        let mut out = self.scan_and_publish(now_us);
        out.extend(self.refresh_transparency());
        out
    }

    fn scan_and_publish(&mut self, now_us: u64) -> AgentOutput {
        let (Some(scan), Some(world), Some(client)) = (self.scan.as_mut(), self.world.as_ref(), self.client.as_mut())
        else {
            return AgentOutput::default();
        };
        let Some(id) = client.participant_id() else {
            return AgentOutput::default();
        };
        let objects = scan_step(scan, world, now_us);
        if objects.is_empty() {
            return AgentOutput::default();
        }
        let datagrams = client.publish(&objects, now_us).expect("Leader publishes non-empty batches");
        AgentOutput { datagrams, events: objects.iter().map(|o| Event::upsert(o, id)).collect() }
    }

    fn refresh_transparency(&mut self) -> AgentOutput {
        let Some(client) = self.client.as_ref() else {
            return AgentOutput::default();
        };
        let snapshot = if client.role == Role::Leader { &client.authority } else { &client.follower.snapshot };
        let update = update_transparency(&self.avatar, snapshot, &mut self.transparency);
        let mut events: Vec<Event> =
            update.changes.into_iter().map(|(wall_id, alpha)| Event::Alpha { wall_id, alpha }).collect();
        events.extend(
            update.cues.into_iter().map(|c| Event::SoundCue { wall_id: c.wall_id, azimuth: c.azimuth_rad.to_degrees() }),
        );
        AgentOutput { datagrams: Vec::new(), events }
    }

    /// Feeds one datagram from the relay core.
    pub fn handle_datagram(&mut self, bytes: &[u8], now_us: u64) -> AgentOutput {
        self.datagrams_in += 1;
        let Some(client) = self.client.as_mut() else {
            return AgentOutput::default();
        };
        let (datagrams, client_events) = match client.handle_datagram(bytes, now_us) {
            Ok(r) => r,
            Err(e) => return AgentOutput::event(Event::error(format!("dropped datagram: {e}"))),
        };
        let role = client.role;
        let code = client.room_code;
        let viewer = client.participant_id().unwrap_or(0);
        let mut out = AgentOutput { datagrams, events: Vec::new() };
        let mut scene_changed = false;
        for ev in client_events {
            match ev {
                ClientEvent::Joined { participant_id, epoch_us } => out.events.push(Event::SessionInfo {
                    participant_id,
                    role: role.to_string(),
                    room_code: code.as_str().to_string(),
                    epoch_us,
                    follower_limit: self.limit.max_followers(),
                }),
                ClientEvent::Rejected(reason) => {
                    let message = match reason {
                        crate::protocol::RejectReason::SessionFull => {
                            format!("session full ({} followers max)", self.limit.max_followers())
                        }
                        other => other.name().to_string(),
                    };
                    out.events.push(Event::Error { message, reason: Some(reason.name().to_string()) });
                }
                ClientEvent::Follower(FollowerEvent::ObjectApplied { object, .. }) => {
                    scene_changed = true;
                    out.events.push(Event::upsert(&object, viewer));
                }
                ClientEvent::Follower(FollowerEvent::PeerPose { participant_id, pose }) => {
                    out.events.push(Event::pose(participant_id, &pose));
                }
                ClientEvent::Follower(FollowerEvent::RttSample { rtt_us }) => self.rtt_ms = Some(rtt_us as f64 / 1e3),
                ClientEvent::Acked { .. } => {}
            }
        }
        if scene_changed {
            out.extend(self.refresh_transparency());
        }
        self.count_out(out)
    }

    /// Timers: protocol retries and heartbeats, auto-update scans and the
    /// once-per-second metrics event.
    pub fn tick(&mut self, now_us: u64) -> AgentOutput {
        let Some(client) = self.client.as_mut() else {
            return AgentOutput::default();
        };
        let mut out = AgentOutput { datagrams: client.tick(now_us), events: Vec::new() };
        if matches!(self.scan.as_ref().map(|s| s.update_policy), Some(UpdatePolicy::Auto { .. })) {
            let published = self.scan_and_publish(now_us);
            if !published.events.is_empty() {
                out.extend(published);
                out.extend(self.refresh_transparency());
            }
        }
        if self.joined_id().is_some()
            && self.last_metrics_us.is_none_or(|t| now_us.saturating_sub(t) >= METRICS_INTERVAL_US)
        {
            self.last_metrics_us = Some(now_us);
            out.events.push(self.metrics());
        }
        self.count_out(out)
    }

    pub fn metrics(&self) -> Event {
        let client = self.client.as_ref();
        let peers: BTreeMap<_, _> = client.map(|c| c.follower.peer_poses.clone()).unwrap_or_default();
        Event::MetricsTick {
            objects: self.snapshot().map_or(0, SceneSnapshot::len),
            peers: peers.len(),
            rtt_ms: self.rtt_ms,
            in_flight: client.map_or(0, |c| c.sender.in_flight()),
            retransmissions: client.map_or(0, |c| c.sender.retransmissions()),
            datagrams_in: self.datagrams_in,
            datagrams_out: self.datagrams_out,
        }
    }
}
