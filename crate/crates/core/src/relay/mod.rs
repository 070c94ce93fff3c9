//! Rendezvous and forwarding.
//!
//! [`session`] holds the sans-io relay: sessions keyed by room code, the
//! single-Leader rule, Follower limits, verbatim fan-out and late-join
//! catch-up. [`gateway`] translates the browser console's line-delimited JSON
//! into native protocol traffic, and [`server`] runs both over real sockets.

pub mod gateway;
pub mod server;
pub mod session;

pub use session::{
    HelloOutcome, LimitProfile, LinkCounters, Outgoing, Participant, Relay, RelayConfig, Session, EVICTION_US,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{
        Client, ClientEvent, Framer, FramingProfile, ObjectRecord, Pose, RejectReason, Role, RoomCode, WireMessage,
    };
    use crate::scene::{SceneCategory, SceneObject};

    type Addr = u32;

    fn code() -> RoomCode {
        RoomCode::new("ROOM42").unwrap()
    }

    fn relay(limit: LimitProfile) -> Relay<Addr> {
        Relay::new(RelayConfig::new(FramingProfile::Plain, limit))
    }

    fn framer() -> Framer {
        Framer::new(FramingProfile::Plain)
    }

    fn hello(role: Role) -> Vec<u8> {
        framer().frame(&WireMessage::Hello { role, room_code: code() }).unwrap()
    }

    fn decode(o: &Outgoing<Addr>) -> WireMessage {
        framer().deframe(&o.bytes).unwrap()
    }

    fn obj(id: u32) -> SceneObject {
        SceneObject {
            id,
            version: 1,
            category: SceneCategory::Floor,
            center: [0.0, 0.0, id as f32],
            half_extents: [1.0, 1.0],
            orientation: [0.0, 0.0, 0.0, 1.0],
            created_us: 0,
            creator: 1,
        }
    }

    fn update(seq: u32, ids: std::ops::RangeInclusive<u32>) -> Vec<u8> {
        framer()
            .frame(&WireMessage::ObjectUpdate { seq, records: ids.map(|i| ObjectRecord::encode(&obj(i))).collect() })
            .unwrap()
    }

    #[test]
    fn first_leader_wins() {
        let mut r = relay(LimitProfile::PhotonLike);
        let out = r.handle_datagram(1, &hello(Role::Leader), 0);
        assert!(matches!(decode(&out[0]), WireMessage::Welcome { participant_id: 1, .. }));
        let out = r.handle_datagram(2, &hello(Role::Leader), 0);
        assert_eq!(decode(&out[0]), WireMessage::Reject { reason: RejectReason::LeaderExists });
        assert_eq!(r.session(&code()).unwrap().leader, Some(1));
    }

    fn fill_followers(r: &mut Relay<Addr>, n: u32) -> Vec<Vec<Outgoing<Addr>>> {
        (0..n).map(|i| r.handle_datagram(100 + i, &hello(Role::Follower), 0)).collect()
    }

    #[test]
    fn photon_limit_rejects_follower_21() {
        let mut r = relay(LimitProfile::PhotonLike);
        let outs = fill_followers(&mut r, 21);
        for o in &outs[..20] {
            assert!(matches!(decode(&o[0]), WireMessage::Welcome { .. }));
        }
        assert_eq!(decode(&outs[20][0]), WireMessage::Reject { reason: RejectReason::SessionFull });
    }

    #[test]
    fn netcode_limit_rejects_follower_51() {
        let mut r = relay(LimitProfile::NetcodeLike);
        let outs = fill_followers(&mut r, 51);
        assert!(matches!(decode(&outs[49][0]), WireMessage::Welcome { .. }));
        assert_eq!(decode(&outs[50][0]), WireMessage::Reject { reason: RejectReason::SessionFull });
        assert_eq!(r.session(&code()).unwrap().follower_count(), 50);
    }

    #[test]
    fn bad_room_code_rejected() {
        let mut r = relay(LimitProfile::PhotonLike);
        let mut d = hello(Role::Follower);
        d[7] = b'!';
        let out = r.handle_datagram(1, &d, 0);
        assert_eq!(decode(&out[0]), WireMessage::Reject { reason: RejectReason::BadRoomCode });
    }

    #[test]
    fn fan_out_is_verbatim_and_counted() {
        let mut r = relay(LimitProfile::PhotonLike);
        r.handle_datagram(1, &hello(Role::Leader), 0);
        fill_followers(&mut r, 3);
        let d = update(1, 1..=5);
        let out = r.handle_datagram(1, &d, 10);
        let to_followers: Vec<_> = out.iter().filter(|o| o.to >= 100).collect();
        assert_eq!(to_followers.len(), 3);
        assert!(to_followers.iter().all(|o| o.bytes == d));
        // plus the aggregated ack back to the Leader
        assert!(out.iter().any(|o| o.to == 1 && matches!(decode(o), WireMessage::Ack { .. })));
        let s = r.session(&code()).unwrap();
        for p in s.participants().filter(|p| p.role == Role::Follower) {
            assert_eq!(p.counters.datagrams_out, 2); // welcome + update
            assert_eq!(p.counters.bytes_out as usize, d.len() + 19);
        }
    }

    #[test]
    fn follower_updates_are_dropped() {
        let mut r = relay(LimitProfile::PhotonLike);
        r.handle_datagram(1, &hello(Role::Leader), 0);
        fill_followers(&mut r, 2);
        let out = r.handle_datagram(100, &update(1, 1..=1), 0);
        assert!(out.is_empty());
        assert_eq!(r.session(&code()).unwrap().violations, 1);
    }

    #[test]
    fn pose_fans_out_to_everyone_else() {
        let mut r = relay(LimitProfile::PhotonLike);
        r.handle_datagram(1, &hello(Role::Leader), 0);
        fill_followers(&mut r, 3);
        let id = r.route(&100).unwrap().1;
        let pose = framer()
            .frame(&WireMessage::PoseUpdate { participant_id: id, pose: Pose { position: [1.0, 2.0, 1.6], yaw: 0.0 } })
            .unwrap();
        let out = r.handle_datagram(100, &pose, 0);
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|o| o.to != 100 && o.bytes == pose));
        // spoofed participant id is a violation
        let spoof = framer()
            .frame(&WireMessage::PoseUpdate { participant_id: 1, pose: Pose { position: [0.0; 3], yaw: 0.0 } })
            .unwrap();
        assert!(r.handle_datagram(100, &spoof, 0).is_empty());
    }

    #[test]
    fn late_join_gets_catchup_batches() {
        let mut r = relay(LimitProfile::NetcodeLike);
        r.handle_datagram(1, &hello(Role::Leader), 0);
        r.handle_datagram(1, &update(1, 1..=20), 0);
        r.handle_datagram(1, &update(2, 21..=30), 0);
        let out = r.handle_datagram(200, &hello(Role::Follower), 5);
        let msgs: Vec<_> = out.iter().map(decode).collect();
        assert_eq!(msgs[0], WireMessage::Welcome { participant_id: 2, session_epoch_us: 0, base_seq: 2 });
        let batches: Vec<usize> = msgs[1..]
            .iter()
            .filter_map(|m| match m {
                WireMessage::ObjectUpdate { records, .. } => Some(records.len()),
                _ => None,
            })
            .collect();
        assert_eq!(batches, vec![20, 10]);
    }

    #[test]
    fn catchup_is_retransmitted_until_acked() {
        let mut r = relay(LimitProfile::NetcodeLike);
        r.handle_datagram(1, &hello(Role::Leader), 0);
        r.handle_datagram(1, &update(1, 1..=3), 0);
        r.handle_datagram(2, &hello(Role::Follower), 0);
        assert!(!r.quiescent());
        let out = r.tick(300_000);
        assert_eq!(out.len(), 1);
        let mut client = Client::new(framer(), Role::Follower, code());
        let (acks, _) = client.handle_datagram(&out[0].bytes, 300_100).unwrap();
        r.handle_datagram(2, &acks[0], 300_200);
        assert!(r.quiescent());
        assert!(r.tick(5_000_000).is_empty());
    }

    #[test]
    fn leader_ack_waits_for_every_follower() {
        let mut r = relay(LimitProfile::PhotonLike);
        r.handle_datagram(1, &hello(Role::Leader), 0);
        fill_followers(&mut r, 2);
        let d = update(1, 1..=1);
        let out = r.handle_datagram(1, &d, 0);
        let ack = out.iter().find(|o| o.to == 1).map(decode).unwrap();
        assert_eq!(ack, WireMessage::Ack { cumulative_seq: 0, selective: 0 });

        let ack_from = |seq: u32| framer().frame(&WireMessage::Ack { cumulative_seq: seq, selective: 0 }).unwrap();
        let out = r.handle_datagram(100, &ack_from(1), 1);
        assert_eq!(decode(&out[0]), WireMessage::Ack { cumulative_seq: 0, selective: 0 });
        let out = r.handle_datagram(101, &ack_from(1), 2);
        assert_eq!(decode(&out[0]), WireMessage::Ack { cumulative_seq: 1, selective: 0 });
    }

    #[test]
    fn late_join_behind_a_hole() {
        let mut r = relay(LimitProfile::PhotonLike);
        r.handle_datagram(1, &hello(Role::Leader), 0);
        r.handle_datagram(100, &hello(Role::Follower), 0);
        let ack_from = |seq: u32, bits: u32| framer().frame(&WireMessage::Ack { cumulative_seq: seq, selective: bits }).unwrap();
        r.handle_datagram(1, &update(1, 1..=1), 1);
        r.handle_datagram(100, &ack_from(1, 0), 2);
        // seq 2 is lost on the way to the relay, seq 3 arrives and is acked
        r.handle_datagram(1, &update(3, 3..=3), 3);
        let out = r.handle_datagram(100, &ack_from(1, 0b10), 4);
        assert_eq!(decode(&out[0]), WireMessage::Ack { cumulative_seq: 1, selective: 0 });

        let out = r.handle_datagram(101, &hello(Role::Follower), 5);
        assert!(matches!(decode(&out[0]), WireMessage::Welcome { base_seq: 1, .. }));
        r.handle_datagram(1, &update(2, 2..=2), 6);
        r.handle_datagram(100, &ack_from(3, 0), 7);
        let out = r.handle_datagram(101, &ack_from(2, 0), 8);
        assert_eq!(decode(&out[0]), WireMessage::Ack { cumulative_seq: 2, selective: 0 });
        let out = r.handle_datagram(101, &ack_from(3, 0), 9);
        assert_eq!(decode(&out[0]), WireMessage::Ack { cumulative_seq: 3, selective: 0 });
    }

    #[test]
    fn silent_participants_are_evicted() {
        let mut r = relay(LimitProfile::PhotonLike);
        r.handle_datagram(1, &hello(Role::Leader), 0);
        r.handle_datagram(2, &hello(Role::Follower), 0);
        let hb = framer().frame(&WireMessage::Heartbeat { send_time_us: 1 }).unwrap();
        let echo = r.handle_datagram(2, &hb, 9_000_000);
        assert_eq!(echo[0].bytes, hb);
        r.tick(10_500_000);
        let s = r.session(&code()).unwrap();
        assert_eq!(s.leader, None);
        assert_eq!(s.follower_count(), 1);
        // the Leader slot is free again
        let out = r.handle_datagram(3, &hello(Role::Leader), 10_600_000);
        assert!(matches!(decode(&out[0]), WireMessage::Welcome { .. }));
    }

    #[test]
    fn duplicate_hello_resends_welcome() {
        let mut r = relay(LimitProfile::PhotonLike);
        let a = r.handle_datagram(7, &hello(Role::Follower), 0);
        let b = r.handle_datagram(7, &hello(Role::Follower), 1);
        assert_eq!(a[0].bytes, b[0].bytes);
        assert_eq!(r.session(&code()).unwrap().follower_count(), 1);
    }

    #[test]
    fn end_to_end_clients() {
        let mut r = relay(LimitProfile::PhotonLike);
        let mut leader = Client::new(framer(), Role::Leader, code());
        let mut follower = Client::new(framer(), Role::Follower, code());
        let h = leader.hello(0);
        let w = r.handle_datagram(1, &h, 0);
        leader.handle_datagram(&w[0].bytes, 0).unwrap();
        let sent = leader.publish(&(1..=25).map(obj).collect::<Vec<_>>(), 1).unwrap();
        for d in &sent {
            for o in r.handle_datagram(1, d, 2) {
                leader.handle_datagram(&o.bytes, 2).unwrap();
            }
        }
        let h = follower.hello(3);
        let mut inbox = r.handle_datagram(2, &h, 3);
        let mut joined = false;
        while let Some(o) = inbox.pop() {
            let (replies, events) = if o.to == 2 {
                follower.handle_datagram(&o.bytes, 4).unwrap()
            } else {
                leader.handle_datagram(&o.bytes, 4).unwrap()
            };
            joined |= events.iter().any(|e| matches!(e, ClientEvent::Joined { .. }));
            let src = if o.to == 2 { 2 } else { 1 };
            for d in replies {
                inbox.extend(r.handle_datagram(src, &d, 5));
            }
        }
        assert!(joined);
        assert_eq!(follower.follower.snapshot.len(), 25);
        assert_eq!(
            crate::scene::encode_snapshot(&follower.follower.snapshot),
            crate::scene::encode_snapshot(&leader.authority)
        );
        assert!(r.quiescent());
        assert!(leader.quiescent());
    }
}
