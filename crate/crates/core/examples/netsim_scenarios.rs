//! Runs the bundled network scenarios in the deterministic emulator and
//! prints the aggregate table, then a loss sweep on the long-distance path.
//!
//!     cargo run --release --example netsim_scenarios

use std::path::Path;

use camre::netsim::{render_report, run_scenario, LinkProfile, Scenario};
use camre::protocol::FramingProfile;
use camre::synth::living_room;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/scenarios");
    let mut reports = Vec::new();
    for name in ["SD1", "SD2", "LD1", "LD2", "MD1", "MD2", "MD3", "MD4", "MD5", "MD6"] {
        let (sc, rooms) = Scenario::load(&dir.join(format!("{name}.json"))).unwrap();
        for framing in sc.framings().unwrap() {
            reports.push(run_scenario(&sc, &rooms, framing, 5).unwrap());
        }
    }
    print!("{}", render_report(&reports).unwrap());

    println!("\nloss sweep, 60 ms path, 1 Leader + 3 Followers:");
    println!("{:>6} {:>12} {:>10} {:>8} {:>8}", "loss", "latency_ms", "room50_s", "retx", "link_loss");
    for loss in [0.0, 0.05, 0.1, 0.2, 0.3] {
        let link = LinkProfile { delay_ms: 60.0, jitter_ms: 6.0, loss, bandwidth_kbps: 0.0, seed: 9 };
        let sc = Scenario::new("sweep", 4, link, "living");
        let r = run_scenario(&sc, &[living_room()], FramingProfile::Plain, 5).unwrap();
        println!(
            "{loss:>6.2} {:>12.2} {:>10.3} {:>8} {:>8.4}",
            r.latency_mean_ms, r.room50_s, r.retransmissions, r.packet_loss_fraction
        );
    }
}
