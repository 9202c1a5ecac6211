use std::collections::VecDeque;

use crate::pktmodel::{wire_size, Packet, SimTime};

use super::ConfigError;

/// One direction of a point-to-point link with store-and-forward
/// serialization.
#[derive(Clone, Debug)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    bandwidth_bps: f64,
    prop_delay: SimTime,
    busy_until: SimTime,
    /// Max packets waiting or in transmission; `None` is unbounded.
    buffer: Option<usize>,
    finish_times: VecDeque<SimTime>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkDrop;

impl Link {
    pub fn new(from: usize, to: usize, bandwidth_bps: f64, prop_delay: SimTime, buffer: Option<usize>) -> Result<Self, ConfigError> {
        if !(bandwidth_bps.is_finite() && bandwidth_bps > 0.0) {
            return Err(ConfigError::Invalid(format!("link bandwidth must be positive, got {bandwidth_bps}")));
        }
        Ok(Link {
            from,
            to,
            bandwidth_bps,
            prop_delay,
            busy_until: SimTime::ZERO,
            buffer,
            finish_times: VecDeque::new(),
        })
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn serialization(&self, bytes: usize) -> SimTime {
        SimTime::from_nanos(((bytes * 8) as f64 * 1e9 / self.bandwidth_bps).round() as u64)
    }

    /// Queues `p` for transmission and returns its arrival time at the far
    /// end.
    pub fn transmit(&mut self, p: &Packet, now: SimTime) -> Result<SimTime, LinkDrop> {
        while self.finish_times.front().is_some_and(|&t| t <= now) {
            self.finish_times.pop_front();
        }
        if let Some(cap) = self.buffer {
            if self.finish_times.len() >= cap {
                return Err(LinkDrop);
            }
        }
        let start = now.max(self.busy_until);
        let done = start + self.serialization(wire_size(p));
        self.busy_until = done;
        self.finish_times.push_back(done);
        Ok(done + self.prop_delay)
    }
}
