//! Headless console: two WebSocket clients drive the gateway the way the
//! browser UI would. One joins as Leader and publishes a room file, the
//! other joins as Follower, receives the scene and watches the Leader move.
//!
//!     cargo run --example gateway_client
//!     cargo run --example gateway_client -- 127.0.0.1:7778

use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use camre::protocol::FramingProfile;
use camre::relay::server::{RelayServer, ServerConfig};
use camre::relay::{LimitProfile, RelayConfig};

type Ws = WebSocket<MaybeTlsStream<TcpStream>>;

fn connect(addr: SocketAddr) -> Ws {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).expect("gateway reachable");
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
    }
    ws
}

fn send(ws: &mut Ws, v: Value) {
    println!(">> {v}");
    ws.send(Message::Text(v.to_string())).unwrap();
}

/// Reads events until one matches `stop` or `secs` pass.
fn read_until(ws: &mut Ws, who: &str, secs: u64, stop: impl Fn(&Value) -> bool) -> Vec<Value> {
    let end = Instant::now() + Duration::from_secs(secs);
    let mut seen = Vec::new();
    while Instant::now() < end {
        match ws.read() {
            Ok(Message::Text(t)) => {
                let v: Value = serde_json::from_str(&t).unwrap();
                if v["event"] != "object_upsert" && v["event"] != "metrics_tick" {
                    println!("{who} << {v}");
                }
                let hit = stop(&v);
                seen.push(v);
                if hit {
                    break;
                }
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => panic!("{who}: {e}"),
        }
    }
    seen
}

fn main() {
    let server = match std::env::args().nth(1) {
        Some(_) => None,
        None => Some(
            RelayServer::start(ServerConfig {
                bind: "127.0.0.1:0".parse().unwrap(),
                gateway: Some("127.0.0.1:0".parse().unwrap()),
                relay: RelayConfig::new(FramingProfile::Plain, LimitProfile::PhotonLike),
            })
            .unwrap(),
        ),
    };
    let gateway: SocketAddr = match &server {
        Some(s) => s.gateway_addr().unwrap(),
        None => std::env::args().nth(1).unwrap().parse().expect("gateway address"),
    };
    println!("gateway at ws://{gateway}");

    let mut leader = connect(gateway);
    send(&mut leader, json!({"cmd": "join", "role": "leader", "room_code": "GATE01"}));
    read_until(&mut leader, "leader", 5, |v| v["event"] == "session_info");
    let room = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/rooms/apartment.room")).unwrap();
    send(&mut leader, json!({"cmd": "publish_room", "spec": room}));
    send(&mut leader, json!({"cmd": "toggle_update", "mode": "manual"}));
    let upserts = read_until(&mut leader, "leader", 2, |_| false).iter().filter(|v| v["event"] == "object_upsert").count();
    println!("leader sees {upserts} objects after the first scan");

    let mut follower = connect(gateway);
    send(&mut follower, json!({"cmd": "join", "role": "follower", "room_code": "GATE01"}));
    let seen = read_until(&mut follower, "follower", 3, |_| false);
    let colors: std::collections::BTreeSet<String> =
        seen.iter().filter(|v| v["event"] == "object_upsert").map(|v| v["color"].as_str().unwrap().to_string()).collect();
    println!("follower received {} objects, colors {colors:?}", seen.iter().filter(|v| v["event"] == "object_upsert").count());

    let mut ids: std::collections::BTreeSet<u64> =
        seen.iter().filter(|v| v["event"] == "object_upsert").map(|v| v["id"].as_u64().unwrap()).collect();

    // the Leader walks east and scans on demand; the Follower sees the
    // avatar move and the new objects arrive
    for _ in 0..3 {
        send(&mut leader, json!({"cmd": "move", "dx": 0.8, "dy": 0.0, "yaw": -90.0}));
        send(&mut leader, json!({"cmd": "trigger_update"}));
        for v in read_until(&mut follower, "follower", 1, |_| false) {
            if v["event"] == "object_upsert" {
                ids.insert(v["id"].as_u64().unwrap());
            }
        }
    }
    println!("follower now holds {} objects", ids.len());
    let mut second_leader = connect(gateway);
    send(&mut second_leader, json!({"cmd": "join", "role": "leader", "room_code": "GATE01"}));
    read_until(&mut second_leader, "second leader", 3, |v| v["event"] == "error");
    read_until(&mut follower, "follower", 2, |v| v["event"] == "metrics_tick");

    if let Some(s) = server {
        println!("relay stats: {:?}", s.stats());
        s.shutdown();
    }
}
