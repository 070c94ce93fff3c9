use super::NetsimError;

/// One request/response: client send, server receive, server send, client
/// receive. Client stamps are on the client clock, server stamps on the
/// server clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exchange {
    pub t0: i64,
    pub t1: i64,
    pub t2: i64,
    pub t3: i64,
}

impl Exchange {
    pub fn round_trip(&self) -> i64 {
        (self.t3 - self.t0) - (self.t2 - self.t1)
    }
}

/// Server clock minus client clock, microseconds.
pub fn calibrate_clock(ex: Exchange) -> Result<f64, NetsimError> {
    if ex.t3 < ex.t0 || ex.t2 < ex.t1 {
        return Err(NetsimError::InvalidExchange);
    }
    Ok(((ex.t1 - ex.t0) + (ex.t2 - ex.t3)) as f64 / 2.0)
}

/// Offset from the exchange with the smallest round trip.
pub fn best_offset(exchanges: &[Exchange]) -> Result<f64, NetsimError> {
    let best = exchanges.iter().min_by_key(|e| e.round_trip()).ok_or(NetsimError::InvalidExchange)?;
    calibrate_clock(*best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_exchange() {
        let ex = Exchange { t0: 100_000, t1: 160_000, t2: 165_000, t3: 130_000 };
        assert_eq!(calibrate_clock(ex).unwrap(), 47_500.0);
    }

    #[test]
    fn symmetric_zero_offset() {
        let ex = Exchange { t0: 0, t1: 5_000, t2: 5_100, t3: 10_100 };
        assert_eq!(calibrate_clock(ex).unwrap(), 0.0);
    }

    #[test]
    fn invalid_orderings() {
        assert_eq!(calibrate_clock(Exchange { t0: 10, t1: 0, t2: 0, t3: 5 }), Err(NetsimError::InvalidExchange));
        assert_eq!(calibrate_clock(Exchange { t0: 0, t1: 10, t2: 5, t3: 20 }), Err(NetsimError::InvalidExchange));
        assert!(best_offset(&[]).is_err());
    }

    #[test]
    fn minimum_round_trip_wins() {
        let slow = Exchange { t0: 0, t1: 90_000, t2: 90_000, t3: 100_000 };
        let fast = Exchange { t0: 0, t1: 30_000, t2: 30_000, t3: 10_000 };
        assert_eq!(best_offset(&[slow, fast]).unwrap(), calibrate_clock(fast).unwrap());
    }
}
