use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetsimError;

/// One direction of an emulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    pub delay_ms: f64,
    /// Uniform, plus or minus.
    pub jitter_ms: f64,
    pub loss: f64,
    /// 0 means unlimited.
    pub bandwidth_kbps: f64,
    pub seed: u64,
}

impl LinkProfile {
    pub fn ideal(delay_ms: f64) -> Self {
        Self { delay_ms, jitter_ms: 0.0, loss: 0.0, bandwidth_kbps: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        let bad = |msg: &str| Err(NetsimError::InvalidProfile(msg.to_string()));
        if !(self.delay_ms >= 0.0 && self.delay_ms.is_finite()) {
            return bad("delay must be finite and non-negative");
        }
        if !(self.jitter_ms >= 0.0 && self.jitter_ms.is_finite()) {
            return bad("jitter must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.loss) {
            return bad("loss must lie in [0, 1)");
        }
        if !(self.bandwidth_kbps >= 0.0 && self.bandwidth_kbps.is_finite()) {
            return bad("bandwidth must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    At(u64),
    Dropped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes_sent: u64,
    pub bytes_delivered: u64,
}

/// Stateful link: seeded loss and jitter, a pacing token bucket, FIFO
/// delivery.
#[derive(Debug, Clone)]
pub struct Link {
    pub profile: LinkProfile,
    rng: ChaCha8Rng,
    next_free_us: f64,
    last_delivery_us: u64,
    pub counters: LinkCounters,
}

impl Link {
    pub fn new(profile: LinkProfile) -> Result<Self, NetsimError> {
        profile.validate()?;
        Ok(Self {
            profile,
            rng: ChaCha8Rng::seed_from_u64(profile.seed),
            next_free_us: 0.0,
            last_delivery_us: 0,
            counters: LinkCounters::default(),
        })
    }

    /// Schedules one datagram of `len` bytes offered at `now_us`.
    pub fn transmit(&mut self, len: usize, now_us: u64) -> Delivery {
        let p = self.profile;
        // both draws happen for every datagram so schedules stay aligned
        let lost = self.rng.gen::<f64>() < p.loss;
        let jitter_us = if p.jitter_ms > 0.0 { self.rng.gen_range(-p.jitter_ms..=p.jitter_ms) * 1e3 } else { 0.0 };
        self.counters.sent += 1;
        self.counters.bytes_sent += len as u64;

        let now = now_us as f64;
        let depart = if p.bandwidth_kbps > 0.0 {
            let start = now.max(self.next_free_us);
            let d = start + len as f64 * 8e3 / p.bandwidth_kbps;
            self.next_free_us = d;
            d
        } else {
            now
        };
        if lost {
            self.counters.dropped += 1;
            return Delivery::Dropped;
        }
        let at = (depart + p.delay_ms * 1e3 + jitter_us).round().max(now).max(self.last_delivery_us as f64) as u64;
        self.last_delivery_us = at;
        self.counters.delivered += 1;
        self.counters.bytes_delivered += len as u64;
        Delivery::At(at)
    }
}

pub fn emulate_link(link: &mut Link, datagram: &[u8], now_us: u64) -> Delivery {
    link.transmit(datagram.len(), now_us)
}
