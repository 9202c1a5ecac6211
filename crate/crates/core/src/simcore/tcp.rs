//! Reno-style congestion control in whole segments.
//!
//! No SACK and no delayed ACKs. Congestion avoidance counts ACKs and opens
//! the window by one segment per window's worth of ACKs. After a fast
//! retransmit, partial ACKs retransmit the next hole until the recovery
//! point is acknowledged.

use crate::pktmodel::SimTime;

pub const INITIAL_CWND: u32 = 1;
pub const INITIAL_SSTHRESH: u32 = 64;
/// Smoothing gain for the RTT estimator.
pub const SRTT_GAIN: f64 = 0.125;
pub const MIN_RTO: SimTime = SimTime(1_000_000);
/// RTO before the first RTT sample.
pub const INITIAL_RTO: SimTime = SimTime(1_000_000_000);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossSignal {
    TripleDupAck,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AckAction {
    /// New data acknowledged; the window may have opened.
    Advanced { acked: u64 },
    /// Partial ACK during recovery: resend this segment.
    PartialAck { retransmit: u64 },
    /// Third duplicate ACK: resend this segment.
    FastRetransmit { retransmit: u64 },
    Duplicate,
    Stale,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcpState {
    pub cwnd: u32,
    pub ssthresh: u32,
    ca_acks: u32,
    pub srtt_us: Option<f64>,
    pub dup_acks: u32,
    /// Oldest unacknowledged segment.
    pub snd_una: u64,
    /// Next segment to transmit.
    pub snd_nxt: u64,
    recover: Option<u64>,
}

impl Default for TcpState {
    fn default() -> Self {
        Self::new()
    }
}

impl TcpState {
    pub fn new() -> Self {
        TcpState {
            cwnd: INITIAL_CWND,
            ssthresh: INITIAL_SSTHRESH,
            ca_acks: 0,
            srtt_us: None,
            dup_acks: 0,
            snd_una: 0,
            snd_nxt: 0,
            recover: None,
        }
    }

    pub fn in_flight(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    /// New segments the window allows right now.
    pub fn credits(&self) -> u64 {
        (self.cwnd as u64).saturating_sub(self.in_flight())
    }

    pub fn in_recovery(&self) -> bool {
        self.recover.is_some()
    }

    /// Window growth for one acknowledgement.
    pub fn grow(&mut self) {
        if self.cwnd < self.ssthresh {
            self.cwnd += 1;
        } else {
            self.ca_acks += 1;
            if self.ca_acks >= self.cwnd {
                self.ca_acks = 0;
                self.cwnd += 1;
            }
        }
    }

    pub fn on_loss(&mut self, signal: LossSignal) {
        self.ssthresh = (self.cwnd / 2).max(2);
        self.ca_acks = 0;
        self.dup_acks = 0;
        match signal {
            LossSignal::TripleDupAck => {
                self.cwnd = self.ssthresh;
                self.recover = Some(self.snd_nxt);
            }
            LossSignal::Timeout => {
                self.cwnd = 1;
                self.recover = None;
                // go back N
                self.snd_nxt = self.snd_una;
            }
        }
    }

    /// Processes a cumulative ACK for everything below `ack`.
    pub fn on_ack(&mut self, ack: u64) -> AckAction {
        if ack > self.snd_una {
            let acked = ack - self.snd_una;
            self.snd_una = ack;
            self.snd_nxt = self.snd_nxt.max(ack);
            self.dup_acks = 0;
            if let Some(r) = self.recover {
                if ack < r {
                    return AckAction::PartialAck { retransmit: ack };
                }
                self.recover = None;
            }
            self.grow();
            AckAction::Advanced { acked }
        } else if ack == self.snd_una && self.in_flight() > 0 {
            self.dup_acks += 1;
            if self.dup_acks == 3 && self.recover.is_none() {
                self.on_loss(LossSignal::TripleDupAck);
                AckAction::FastRetransmit { retransmit: self.snd_una }
            } else {
                AckAction::Duplicate
            }
        } else {
            AckAction::Stale
        }
    }

    pub fn observe_rtt(&mut self, sample: SimTime) {
        let s = sample.as_micros();
        self.srtt_us = Some(match self.srtt_us {
            Some(prev) => (1.0 - SRTT_GAIN) * prev + SRTT_GAIN * s,
            None => s,
        });
    }

    /// `max(2 * srtt, 1 ms)`, or the initial RTO before any sample.
    pub fn rto(&self) -> SimTime {
        match self.srtt_us {
            Some(srtt) => SimTime::from_micros(2.0 * srtt).max(MIN_RTO),
            None => INITIAL_RTO,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slow_start_step() {
        let mut s = TcpState { cwnd: 4, ..TcpState::new() };
        s.snd_nxt = 4;
        assert_eq!(s.on_ack(1), AckAction::Advanced { acked: 1 });
        assert_eq!(s.cwnd, 5);
    }

    #[test]
    fn congestion_avoidance_over_one_window() {
        let mut s = TcpState {
            cwnd: 64,
            ssthresh: 64,
            ..TcpState::new()
        };
        s.snd_nxt = 64;
        for ack in 1..=64 {
            s.on_ack(ack);
        }
        assert_eq!(s.cwnd, 65);
    }

    #[test]
    fn timeout_halves_threshold() {
        let mut s = TcpState { cwnd: 10, ..TcpState::new() };
        s.snd_nxt = 10;
        s.on_loss(LossSignal::Timeout);
        assert_eq!((s.ssthresh, s.cwnd, s.snd_nxt), (5, 1, 0));
        let mut tiny = TcpState { cwnd: 3, ..TcpState::new() };
        tiny.on_loss(LossSignal::Timeout);
        assert_eq!(tiny.ssthresh, 2);
    }

    #[test]
    fn triple_dup_ack_fast_retransmit() {
        let mut s = TcpState { cwnd: 8, ..TcpState::new() };
        s.snd_nxt = 8;
        assert_eq!(s.on_ack(2), AckAction::Advanced { acked: 2 });
        assert_eq!(s.on_ack(2), AckAction::Duplicate);
        assert_eq!(s.on_ack(2), AckAction::Duplicate);
        assert_eq!(s.on_ack(2), AckAction::FastRetransmit { retransmit: 2 });
        assert_eq!((s.cwnd, s.ssthresh), (4, 4));
        // further dup acks do not re-trigger
        assert_eq!(s.on_ack(2), AckAction::Duplicate);
        assert_eq!(s.on_ack(5), AckAction::PartialAck { retransmit: 5 });
        assert!(s.in_recovery());
        assert_eq!(s.on_ack(8), AckAction::Advanced { acked: 3 });
        assert!(!s.in_recovery());
    }

    #[test]
    fn rto_floor_and_smoothing() {
        let mut s = TcpState::new();
        assert_eq!(s.rto(), INITIAL_RTO);
        s.observe_rtt(SimTime::from_micros(200.0));
        assert_eq!(s.rto(), MIN_RTO);
        s.observe_rtt(SimTime::from_micros(10_200.0));
        // 0.875 * 200 + 0.125 * 10200 = 1450
        assert_eq!(s.srtt_us, Some(1450.0));
        assert_eq!(s.rto(), SimTime::from_micros(2900.0));
    }

    #[test]
    fn credits_respect_window() {
        let mut s = TcpState { cwnd: 3, ..TcpState::new() };
        assert_eq!(s.credits(), 3);
        s.snd_nxt = 2;
        assert_eq!(s.credits(), 1);
        assert_eq!(s.on_ack(0), AckAction::Duplicate);
        assert_eq!(s.on_ack(7), AckAction::Advanced { acked: 7 });
        assert_eq!(s.in_flight(), 0);
    }
}
