use std::net::{SocketAddr, TcpStream, UdpSocket};
use std::time::{Duration, Instant};

use camre::protocol::{Client, ClientEvent, Framer, FramingProfile, Role, RoomCode};
use camre::relay::server::{RelayServer, ServerConfig};
use camre::relay::{LimitProfile, RelayConfig};
use camre::scene::encode_snapshot;
use camre::synth::{personal_room, scan_step, ScanState, World};
use serde_json::Value;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

fn start(framing: FramingProfile) -> RelayServer {
    RelayServer::start(ServerConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        gateway: Some("127.0.0.1:0".parse().unwrap()),
        relay: RelayConfig::new(framing, LimitProfile::PhotonLike),
    })
    .unwrap()
}

struct UdpPeer {
    socket: UdpSocket,
    relay: SocketAddr,
    client: Client,
    start: Instant,
}

impl UdpPeer {
    fn new(relay: SocketAddr, framing: FramingProfile, role: Role) -> Self {
        let socket = UdpSocket::bind("127.0.0.1:0").unwrap();
        socket.set_read_timeout(Some(Duration::from_millis(20))).unwrap();
        let client = Client::new(Framer::new(framing), role, RoomCode::new("LAB001").unwrap());
        Self { socket, relay, client, start: Instant::now() }
    }

    fn now(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    fn send_all(&self, ds: Vec<Vec<u8>>) {
        for d in ds {
            self.socket.send_to(&d, self.relay).unwrap();
        }
    }

    /// Receives and handles datagrams until `done` or the deadline.
    fn pump(&mut self, deadline: Duration, mut done: impl FnMut(&Client) -> bool) -> Vec<ClientEvent> {
        let end = Instant::now() + deadline;
        let mut events = Vec::new();
        let mut buf = [0u8; 2048];
        while Instant::now() < end && !done(&self.client) {
            if let Ok((n, _)) = self.socket.recv_from(&mut buf) {
                let now = self.now();
                let (replies, ev) = self.client.handle_datagram(&buf[..n], now).unwrap();
                self.send_all(replies);
                events.extend(ev);
            }
            let now = self.now();
            let timers = self.client.tick(now);
            self.send_all(timers);
        }
        events
    }

    fn join(&mut self) {
        let h = self.client.hello(self.now());
        self.send_all(vec![h]);
        self.pump(Duration::from_secs(5), |c| c.participant_id().is_some() || c.rejected().is_some());
    }
}

type Ws = WebSocket<MaybeTlsStream<TcpStream>>;

fn ws_connect(addr: SocketAddr) -> Ws {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
    }
    ws
}

fn ws_send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string())).unwrap();
}

/// Collects events until `pred` matches one or the deadline passes.
fn ws_until(ws: &mut Ws, deadline: Duration, pred: impl Fn(&Value) -> bool) -> (Vec<Value>, bool) {
    let end = Instant::now() + deadline;
    let mut seen = Vec::new();
    while Instant::now() < end {
        match ws.read() {
            Ok(Message::Text(t)) => {
                let v: Value = serde_json::from_str(&t).unwrap();
                let hit = pred(&v);
                seen.push(v);
                if hit {
                    return (seen, true);
                }
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => panic!("websocket: {e}"),
        }
    }
    (seen, false)
}

#[test]
fn udp_leader_to_udp_follower_over_sockets() {
    for framing in [FramingProfile::Plain, FramingProfile::Framed] {
        let server = start(framing);
        let mut leader = UdpPeer::new(server.udp_addr(), framing, Role::Leader);
        leader.join();
        assert_eq!(leader.client.participant_id(), Some(1));

        let world = World::new(vec![personal_room()]).unwrap();
        let objects = scan_step(&mut ScanState::full_visibility(1), &world, 0);
        let now = leader.now();
        let ds = leader.client.publish(&objects, now).unwrap();
        leader.send_all(ds);

        let mut follower = UdpPeer::new(server.udp_addr(), framing, Role::Follower);
        follower.join();
        follower.pump(Duration::from_secs(5), |c| c.follower.snapshot.len() == objects.len());
        leader.pump(Duration::from_secs(5), Client::quiescent);
        assert_eq!(encode_snapshot(&follower.client.follower.snapshot), encode_snapshot(&leader.client.authority));
        assert!(leader.client.quiescent());
        server.shutdown();
    }
}

#[test]
fn gateway_follower_sees_udp_leader_objects_and_moves() {
    let server = start(FramingProfile::Framed);
    let mut leader = UdpPeer::new(server.udp_addr(), FramingProfile::Framed, Role::Leader);
    leader.join();
    let world = World::new(vec![personal_room()]).unwrap();
    let objects = scan_step(&mut ScanState::full_visibility(1), &world, 0);
    let now = leader.now();
    let ds = leader.client.publish(&objects, now).unwrap();
    leader.send_all(ds);
    leader.pump(Duration::from_secs(5), Client::quiescent);

    let mut ws = ws_connect(server.gateway_addr().unwrap());
    // garbage first: error event, connection stays open
    ws.send(Message::Text("{not json".into())).unwrap();
    let (ev, ok) = ws_until(&mut ws, Duration::from_secs(5), |v| v["event"] == "error");
    assert!(ok, "{ev:?}");

    ws_send(&mut ws, serde_json::json!({"cmd": "join", "role": "follower", "room_code": "LAB001"}));
    let want = objects.len();
    let count = std::cell::Cell::new(0);
    let (ev, ok) = ws_until(&mut ws, Duration::from_secs(5), |v| {
        if v["event"] == "object_upsert" {
            count.set(count.get() + 1);
        }
        count.get() == want
    });
    assert!(ok, "got {} of {want}", count.get());
    assert_eq!(ev.iter().find(|v| v["event"] == "session_info").unwrap()["participant_id"], 2);

    ws_send(&mut ws, serde_json::json!({"cmd": "move", "dx": 1.0, "dy": 1.0, "yaw": 45.0}));
    let events = leader.pump(Duration::from_secs(5), |c| c.follower.peer_poses.contains_key(&2));
    assert!(events.iter().any(|e| matches!(e, ClientEvent::Follower(_))));
    let pose = leader.client.follower.peer_poses[&2];
    assert!((pose.position[0] - 1.0).abs() < 1e-6);

    // a second Leader through the gateway is refused
    let mut ws2 = ws_connect(server.gateway_addr().unwrap());
    ws_send(&mut ws2, serde_json::json!({"cmd": "join", "role": "leader", "room_code": "LAB001"}));
    let (ev, ok) = ws_until(&mut ws2, Duration::from_secs(5), |v| v["event"] == "error");
    assert!(ok);
    assert_eq!(ev.last().unwrap()["reason"], "LeaderExists");

    let (_, ok) = ws_until(&mut ws, Duration::from_secs(3), |v| v["event"] == "metrics_tick");
    assert!(ok);
    drop(ws);
    drop(ws2);
    server.shutdown();
}
