use crate::clock::SimTime;

use super::BusError;

/// Publisher throttle: at most one emission per period. The boundary is
/// inclusive, so a 0.5 s gate fed on a 0.5 s grid passes every request.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGate {
    period: SimTime,
    last_emit: Option<SimTime>,
}

impl RateGate {
    pub fn new(period_secs: f64) -> Result<Self, BusError> {
        let period = SimTime::from_secs(period_secs);
        if !(period_secs > 0.0) || period == SimTime::ZERO {
            return Err(BusError::InvalidPeriod(period_secs));
        }
        Ok(Self { period, last_emit: None })
    }

    pub fn period(&self) -> SimTime {
        self.period
    }

    pub fn last_emit(&self) -> Option<SimTime> {
        self.last_emit
    }

    pub fn allow(&mut self, now: SimTime) -> bool {
        let open = match self.last_emit {
            None => true,
            Some(last) => now.saturating_sub(last) >= self.period,
        };
        if open {
            self.last_emit = Some(now);
        }
        open
    }

    /// Forgets the last emission so the next request passes.
    pub fn reset(&mut self) {
        self.last_emit = None;
    }
}
