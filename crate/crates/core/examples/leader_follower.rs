//! A Leader, the relay and two Followers wired together in memory, with a
//! crude lossy "network" in between. The second Follower joins late and is
//! brought up to date by catch-up batches.
//!
//!     cargo run --example leader_follower

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use camre::protocol::{Client, Framer, FramingProfile, Role, RoomCode};
use camre::relay::{LimitProfile, Relay, RelayConfig};
use camre::scene::encode_snapshot;
use camre::synth::{personal_room, scan_step, LeaderPose, ScanState, UpdatePolicy, World};

const LOSS: f64 = 0.2;
const RELAY: usize = usize::MAX;

struct Net {
    queue: VecDeque<(usize, usize, Vec<u8>)>,
    rng: ChaCha8Rng,
    dropped: usize,
}

impl Net {
    fn send(&mut self, from: usize, to: usize, d: Vec<u8>) {
        if self.rng.gen_bool(LOSS) {
            self.dropped += 1;
        } else {
            self.queue.push_back((from, to, d));
        }
    }
}

fn main() {
    let framer = Framer::new(FramingProfile::Framed);
    let code = RoomCode::new("DEMO01").unwrap();
    let mut relay: Relay<usize> = Relay::new(RelayConfig::new(FramingProfile::Framed, LimitProfile::PhotonLike));
    let mut clients = [
        Client::new(framer.clone(), Role::Leader, code),
        Client::new(framer.clone(), Role::Follower, code),
        Client::new(framer, Role::Follower, code),
    ];
    let mut net = Net { queue: VecDeque::new(), rng: ChaCha8Rng::seed_from_u64(3), dropped: 0 };

    let world = World::new(vec![personal_room()]).unwrap();
    let center = world.rooms[0].center();
    let pose = LeaderPose { position: center, yaw: 0.0 };
    let mut scan = ScanState::new(pose, 4.0, 90.0, UpdatePolicy::Auto { interval_s: 0.5 }, 1).unwrap();

    for (i, c) in clients.iter_mut().enumerate().take(2) {
        let h = c.hello(0);
        net.send(i, RELAY, h);
    }
    let mut t = 0u64;
    while t < 20_000_000 {
        t += 10_000;
        // the Leader turns slowly while scanning
        scan.leader_pose.yaw = (t as f64 / 1e6 * 0.6) % std::f64::consts::TAU;
        if clients[0].participant_id().is_some() {
            let found = scan_step(&mut scan, &world, t);
            if !found.is_empty() {
                println!("{:>6} ms  leader scanned {} new objects", t / 1000, found.len());
                for d in clients[0].publish(&found, t).unwrap() {
                    net.send(0, RELAY, d);
                }
            }
        }
        if t == 3_000_000 {
            println!("{:>6} ms  second follower joins", t / 1000);
            let h = clients[2].hello(t);
            net.send(2, RELAY, h);
        }
        for o in relay.tick(t) {
            net.send(RELAY, o.to, o.bytes);
        }
        for (i, c) in clients.iter_mut().enumerate() {
            for d in c.tick(t) {
                net.send(i, RELAY, d);
            }
        }
        while let Some((from, to, d)) = net.queue.pop_front() {
            if to == RELAY {
                for o in relay.handle_datagram(from, &d, t) {
                    net.send(RELAY, o.to, o.bytes);
                }
            } else if let Ok((replies, _)) = clients[to].handle_datagram(&d, t) {
                for r in replies {
                    net.send(to, RELAY, r);
                }
            }
        }
        if scan.emitted.len() == world.len() && clients[0].quiescent() && relay.quiescent() && t > 3_500_000 {
            break;
        }
    }

    let want = encode_snapshot(&clients[0].authority);
    for (i, c) in clients.iter().enumerate().skip(1) {
        println!(
            "follower {i}: {} objects, identical to leader: {}",
            c.follower.snapshot.len(),
            encode_snapshot(&c.follower.snapshot) == want
        );
    }
    println!(
        "finished at {} ms, {} datagrams dropped, {} leader retransmissions",
        t / 1000,
        net.dropped,
        clients[0].sender.retransmissions()
    );
}
