//! Offset estimation from request/response timestamps. A client clock runs
//! 37.5 ms behind the server; exchanges travel over an asymmetric jittery
//! path and the minimum-round-trip exchange is used.
//!
//!     cargo run --example clock_calibration

use camre::netsim::{best_offset, calibrate_clock, Delivery, Exchange, Link, LinkProfile};

fn main() {
    let true_offset_us: i64 = 37_500;
    let client = |t: u64| t as i64 - true_offset_us;

    let mut up = Link::new(LinkProfile { delay_ms: 12.0, jitter_ms: 4.0, loss: 0.1, bandwidth_kbps: 0.0, seed: 1 }).unwrap();
    let mut down = Link::new(LinkProfile { delay_ms: 12.0, jitter_ms: 4.0, loss: 0.1, bandwidth_kbps: 0.0, seed: 2 }).unwrap();

    let mut exchanges = Vec::new();
    let mut t = 0u64;
    while exchanges.len() < 8 {
        t += 50_000;
        let Delivery::At(at_server) = up.transmit(48, t) else { continue };
        let reply = at_server + 100;
        let Delivery::At(back) = down.transmit(48, reply) else { continue };
        let ex = Exchange { t0: client(t), t1: at_server as i64, t2: reply as i64, t3: client(back) };
        println!(
            "rtt {:>6.2} ms  offset {:>8.3} ms",
            ex.round_trip() as f64 / 1e3,
            calibrate_clock(ex).unwrap() / 1e3
        );
        exchanges.push(ex);
    }
    let est = best_offset(&exchanges).unwrap();
    println!("true offset {:.3} ms, estimate {:.3} ms", true_offset_us as f64 / 1e3, est / 1e3);
}
