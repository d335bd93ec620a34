//! Integer time base. Every duration in a scenario is an exact multiple of the tick.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Sub};

/// A point or span on the simulation clock, counted in ticks.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn ticks(self) -> u64 {
        self.0
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}t", self.0)
    }
}

/// Tick resolution of a run, fixed when the scenario is loaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBase {
    tick_ns: u64,
}

impl Default for TimeBase {
    fn default() -> Self {
        TimeBase { tick_ns: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimeError {
    #[error("tick resolution must be at least 1 ns")]
    ZeroTick,
    #[error("{0} ns is not a multiple of the {1} ns tick")]
    NotMultiple(u64, u64),
}

impl TimeBase {
    pub fn new(tick_ns: u64) -> Result<Self, TimeError> {
        if tick_ns == 0 {
            return Err(TimeError::ZeroTick);
        }
        Ok(TimeBase { tick_ns })
    }

    pub fn tick_ns(&self) -> u64 {
        self.tick_ns
    }

    /// Converts a duration in ns, rejecting values that do not land on a tick.
    pub fn from_ns(&self, ns: u64) -> Result<SimTime, TimeError> {
        if ns % self.tick_ns != 0 {
            return Err(TimeError::NotMultiple(ns, self.tick_ns));
        }
        Ok(SimTime(ns / self.tick_ns))
    }

    pub fn to_ns(&self, t: SimTime) -> u64 {
        t.0 * self.tick_ns
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_requires_exact_multiples() {
        let tb = TimeBase::new(2).unwrap();
        assert_eq!(tb.from_ns(10).unwrap(), SimTime(5));
        assert_eq!(tb.to_ns(SimTime(5)), 10);
        assert_eq!(tb.from_ns(11), Err(TimeError::NotMultiple(11, 2)));
        assert_eq!(TimeBase::new(0), Err(TimeError::ZeroTick));
    }
}
