//! Real sockets: starts the relay on loopback (or uses one given on the
//! command line), then a Leader publishes the living room over UDP and a
//! Follower receives it. Prints wall-clock delivery latency.
//!
//!     cargo run --example udp_relay
//!     cargo run --example udp_relay -- 192.168.1.20:7777 framed

use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use camre::protocol::{Client, ClientEvent, FollowerEvent, Framer, FramingProfile, Role, RoomCode};
use camre::relay::server::{RelayServer, ServerConfig};
use camre::relay::{LimitProfile, RelayConfig};
use camre::scene::encode_snapshot;
use camre::synth::{living_room, scan_step, ScanState, World};

struct Peer {
    socket: UdpSocket,
    client: Client,
}

impl Peer {
    fn new(framing: FramingProfile, role: Role) -> Self {
        let socket = UdpSocket::bind("0.0.0.0:0").unwrap();
        socket.set_nonblocking(true).unwrap();
        Self { socket, client: Client::new(Framer::new(framing), role, RoomCode::new("UDP001").unwrap()) }
    }

    fn send(&self, relay: SocketAddr, ds: Vec<Vec<u8>>) {
        for d in ds {
            self.socket.send_to(&d, relay).unwrap();
        }
    }

    fn poll(&mut self, relay: SocketAddr, now_us: u64) -> Vec<ClientEvent> {
        let mut buf = [0u8; 2048];
        let mut events = Vec::new();
        while let Ok((n, _)) = self.socket.recv_from(&mut buf) {
            if let Ok((replies, ev)) = self.client.handle_datagram(&buf[..n], now_us) {
                self.send(relay, replies);
                events.extend(ev);
            }
        }
        let timers = self.client.tick(now_us);
        self.send(relay, timers);
        events
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let framing: FramingProfile = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(FramingProfile::Plain);
    let server = match args.get(1) {
        Some(_) => None,
        None => Some(
            RelayServer::start(ServerConfig {
                bind: "127.0.0.1:0".parse().unwrap(),
                gateway: None,
                relay: RelayConfig::new(framing, LimitProfile::PhotonLike),
            })
            .unwrap(),
        ),
    };
    let relay: SocketAddr = match (&server, args.get(1)) {
        (Some(s), _) => s.udp_addr(),
        (None, Some(a)) => a.parse().expect("relay address"),
        _ => unreachable!(),
    };
    println!("relay at {relay}, {framing} framing");

    let start = Instant::now();
    let now = || start.elapsed().as_micros() as u64;
    let mut leader = Peer::new(framing, Role::Leader);
    let mut follower = Peer::new(framing, Role::Follower);
    for peer in [&mut leader, &mut follower] {
        let hello = peer.client.hello(now());
        peer.send(relay, vec![hello]);
    }
    while leader.client.participant_id().is_none() || follower.client.participant_id().is_none() {
        leader.poll(relay, now());
        follower.poll(relay, now());
        if start.elapsed() > Duration::from_secs(5) {
            eprintln!("no Welcome from {relay}");
            std::process::exit(1);
        }
        std::thread::sleep(Duration::from_millis(1));
    }

    let world = World::new(vec![living_room()]).unwrap();
    let mut objects = scan_step(&mut ScanState::full_visibility(1), &world, 0);
    // both clients share one clock here, so session time is just local time
    // minus the epoch
    let epoch = leader.client.epoch_us();
    for o in &mut objects {
        o.created_us = now().saturating_sub(epoch);
    }
    let sent_at = now();
    let ds = leader.client.publish(&objects, sent_at).unwrap();
    leader.send(relay, ds);

    let mut latencies = Vec::new();
    while follower.client.follower.snapshot.len() < objects.len() || !leader.client.quiescent() {
        leader.poll(relay, now());
        for e in follower.poll(relay, now()) {
            if let ClientEvent::Follower(FollowerEvent::ObjectApplied { received_us, .. }) = e {
                latencies.push((received_us - sent_at) as f64 / 1e3);
            }
        }
        if start.elapsed() > Duration::from_secs(10) {
            eprintln!("transfer stalled");
            std::process::exit(1);
        }
        std::thread::sleep(Duration::from_micros(200));
    }
    let mean = latencies.iter().sum::<f64>() / latencies.len() as f64;
    let max = latencies.iter().cloned().fold(0.0, f64::max);
    println!("{} objects delivered, mean {mean:.3} ms, max {max:.3} ms", latencies.len());
    println!(
        "snapshots identical: {}",
        encode_snapshot(&follower.client.follower.snapshot) == encode_snapshot(&leader.client.authority)
    );
    if let Some(s) = server {
        let stats = s.stats();
        println!("relay stats: {stats:?}");
        s.shutdown();
    }
}
