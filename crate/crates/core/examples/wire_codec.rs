//! Encodes a scanned room into 56-byte records, packs them into ObjectUpdate
//! datagrams under both framing profiles and decodes them again.
//!
//!     cargo run --example wire_codec

use camre::protocol::{Framer, FramingProfile, ObjectRecord, WireMessage, MAX_RECORDS_PER_UPDATE};
use camre::scene::{decode_object, encode_object, encode_snapshot, SceneSnapshot, RECORD_SIZE};
use camre::synth::{living_room, scan_step, ScanState, World};

fn main() {
    let world = World::new(vec![living_room()]).unwrap();
    let objects = scan_step(&mut ScanState::full_visibility(1), &world, 0);

    let first = &objects[0];
    let bytes = encode_object(first);
    println!("object {} ({}) -> {} bytes", first.id, first.category.name(), bytes.len());
    println!("  {}", bytes.iter().map(|b| format!("{b:02x}")).collect::<String>());
    assert_eq!(decode_object(&bytes).unwrap(), *first);

    for profile in [FramingProfile::Plain, FramingProfile::Framed] {
        let framer = Framer::new(profile);
        let mut total = 0;
        let mut datagrams = 0;
        for (i, chunk) in objects.chunks(MAX_RECORDS_PER_UPDATE).enumerate() {
            let msg = WireMessage::ObjectUpdate { seq: i as u32 + 1, records: chunk.iter().map(ObjectRecord::encode).collect() };
            let d = framer.frame(&msg).unwrap();
            assert_eq!(framer.deframe(&d).unwrap(), msg);
            total += d.len();
            datagrams += 1;
        }
        println!("{profile:>6}: {} objects in {datagrams} datagrams, {total} bytes", objects.len());
    }

    let snap = SceneSnapshot::from_objects(0, objects);
    println!(
        "snapshot: {} bytes ({} records x {RECORD_SIZE} + header)",
        encode_snapshot(&snap).len(),
        snap.len()
    );

    // tampering is caught by the framed profile only
    let framer = Framer::new(FramingProfile::Framed);
    let mut d = framer.frame(&WireMessage::Heartbeat { send_time_us: 42 }).unwrap();
    let last = d.len() - 1;
    d[last] ^= 1;
    println!("flipped bit under framed profile: {:?}", framer.deframe(&d).unwrap_err());
}
