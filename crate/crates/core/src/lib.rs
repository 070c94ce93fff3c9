//! Leader-Follower shared mixed-reality environment without the headset.
//!
//! A single Leader turns its surroundings into a compact set of classified
//! planar quads and streams them through a datagram relay to any number of
//! Followers. Around that core sit a deterministic network emulator that
//! measures transfer latency under controlled link conditions, and the
//! geometry behind three navigation aids: a gaze-following X-ray window,
//! proximity see-through walls with directional cues, and a bird's-eye
//! mini-map.
//!
//! Module map:
//!
//! - [`scene`]: scene objects, snapshots, the 56-byte record codec
//! - [`synth`]: room specs, synthetic scene generation and scanning
//! - [`protocol`]: wire messages, framing profiles, reliable Leader/Follower machines
//! - [`relay`]: sessions, fan-out, catch-up, the UDP/WebSocket runtime and gateway
//! - [`netsim`]: link emulation, clock calibration, the scenario harness and reports
//! - [`nav`]: X-ray window, see-through transparency, mini-map projection

pub mod frame;
pub mod scene;
pub mod protocol;
pub mod relay;
pub mod synth;
pub mod nav;
pub mod netsim;
