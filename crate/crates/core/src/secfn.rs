//! The security function of the VNF node.
//!
//! In IDS mode the function sits on a tap: it sees a copy of each packet,
//! logs alerts, and never delays or alters the forwarded original. In IPS
//! mode every packet waits in a bounded netfilter-style queue until the
//! inspection engine hands back a verdict.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::pktmodel::{Packet, SimTime};
use crate::ruleset::{match_packet, verdict, AlertRecord, FlowState, RuleAction, RuleError, RuleSet, RuleVars};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SecMode {
    Ids,
    Ips,
}

impl SecMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SecMode::Ids => "ids",
            SecMode::Ips => "ips",
        }
    }
}

impl fmt::Display for SecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SecMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ids" => Ok(SecMode::Ids),
            "ips" => Ok(SecMode::Ips),
            other => Err(format!("unknown mode {other:?} (expected ids|ips)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Forward,
    Drop,
    AlertForward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServiceDist {
    Exponential,
    Deterministic,
}

impl FromStr for ServiceDist {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(ServiceDist::Exponential),
            "deterministic" | "det" | "constant" => Ok(ServiceDist::Deterministic),
            other => Err(format!("unknown service distribution {other:?}")),
        }
    }
}

/// Per-packet processing time with a given mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceTime {
    mean_us: f64,
    dist: ServiceDist,
}

impl ServiceTime {
    pub fn new(mean_us: f64, dist: ServiceDist) -> Self {
        assert!(mean_us >= 0.0 && mean_us.is_finite(), "service mean must be finite and >= 0");
        ServiceTime { mean_us, dist }
    }

    pub fn constant(mean_us: f64) -> Self {
        Self::new(mean_us, ServiceDist::Deterministic)
    }

    pub fn mean_us(&self) -> f64 {
        self.mean_us
    }

    pub fn dist(&self) -> ServiceDist {
        self.dist
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        if self.mean_us == 0.0 {
            return SimTime::ZERO;
        }
        match self.dist {
            ServiceDist::Deterministic => SimTime::from_micros(self.mean_us),
            ServiceDist::Exponential => {
                let exp = Exp::new(1.0 / self.mean_us).expect("positive rate");
                SimTime::from_micros(exp.sample(rng))
            }
        }
    }
}

/// Alert records for every alert or drop rule in `matches`. Drop is only
/// recorded as such when the function runs inline.
fn alerts_for(matches: &[(&crate::ruleset::Rule, RuleAction)], p: &Packet, mode: SecMode, at: SimTime) -> Vec<AlertRecord> {
    matches
        .iter()
        .filter(|(_, a)| *a != RuleAction::Pass)
        .map(|(r, a)| AlertRecord {
            sid: r.options.sid,
            msg: r.options.msg.clone(),
            time: at,
            tuple: p.tuple,
            action_taken: match (mode, a) {
                (SecMode::Ips, RuleAction::Drop) => RuleAction::Drop,
                _ => RuleAction::Alert,
            },
        })
        .collect()
}

/// Inspects a mirrored copy of `p` at time `now`. Never affects forwarding.
pub fn ids_observe(
    p: &Packet,
    rs: &RuleSet,
    vars: &RuleVars,
    flow_state: &mut FlowState,
    now: SimTime,
) -> Result<Vec<AlertRecord>, RuleError> {
    flow_state.observe(p);
    let matches = match_packet(rs, p, vars, flow_state)?;
    Ok(alerts_for(&matches, p, SecMode::Ids, now))
}

/// Off-path IDS engine with its own CPU budget: alerts are stamped with
/// the time the engine finishes inspecting the mirrored copy.
#[derive(Clone, Debug)]
pub struct IdsTap {
    service: ServiceTime,
    rng: ChaCha8Rng,
    busy_until: SimTime,
    flow_state: FlowState,
    observed: u64,
}

impl IdsTap {
    pub fn new(service: ServiceTime, rng: ChaCha8Rng) -> Self {
        IdsTap {
            service,
            rng,
            busy_until: SimTime::ZERO,
            flow_state: FlowState::new(),
            observed: 0,
        }
    }

    pub fn observed(&self) -> u64 {
        self.observed
    }

    /// Samples an inspection time from the tap's own stream.
    pub fn sample_service(&mut self) -> SimTime {
        self.service.sample(&mut self.rng)
    }

    pub fn observe(&mut self, p: &Packet, rs: &RuleSet, vars: &RuleVars, now: SimTime) -> Result<Vec<AlertRecord>, RuleError> {
        let start = now.max(self.busy_until);
        let done = start + self.sample_service();
        self.busy_until = done;
        self.observed += 1;
        ids_observe(p, rs, vars, &mut self.flow_state, done)
    }

    /// Inspects `p` without the tap's own CPU; the caller charges the
    /// inspection time elsewhere. Alerts are stamped at `at`.
    pub fn observe_inline(&mut self, p: &Packet, rs: &RuleSet, vars: &RuleVars, at: SimTime) -> Result<Vec<AlertRecord>, RuleError> {
        self.observed += 1;
        ids_observe(p, rs, vars, &mut self.flow_state, at)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Enqueued,
    OverflowDrop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueueCounters {
    pub offered: u64,
    pub enqueued: u64,
    pub overflow_drops: u64,
    pub serviced: u64,
    pub ips_rule_drops: u64,
}

/// Bounded FIFO of packets awaiting a verdict. Occupancy counts the packet
/// currently being inspected, which stays queued until its verdict.
#[derive(Clone, Debug)]
pub struct InspectionQueue {
    pub queue_id: u16,
    capacity: usize,
    pub service_time: ServiceTime,
    items: VecDeque<Packet>,
    counters: QueueCounters,
}

pub const DEFAULT_QUEUE_ID: u16 = 4;
pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

impl InspectionQueue {
    pub fn new(queue_id: u16, capacity: usize, service_time: ServiceTime) -> Self {
        InspectionQueue {
            queue_id,
            capacity,
            service_time,
            items: VecDeque::with_capacity(capacity.min(4096)),
            counters: QueueCounters::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn occupancy(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn counters(&self) -> QueueCounters {
        self.counters
    }

    pub fn head(&self) -> Option<&Packet> {
        self.items.front()
    }

    pub fn ips_enqueue(&mut self, p: Packet, _now: SimTime) -> EnqueueOutcome {
        self.counters.offered += 1;
        if self.items.len() >= self.capacity {
            self.counters.overflow_drops += 1;
            EnqueueOutcome::OverflowDrop
        } else {
            self.items.push_back(p);
            self.counters.enqueued += 1;
            EnqueueOutcome::Enqueued
        }
    }

    /// Removes the head without inspecting it.
    pub fn dequeue(&mut self) -> Option<Packet> {
        let p = self.items.pop_front()?;
        self.counters.serviced += 1;
        Some(p)
    }

    /// Dequeues the head and decides its fate under IPS semantics.
    pub fn ips_service(
        &mut self,
        rs: &RuleSet,
        vars: &RuleVars,
        flow_state: &mut FlowState,
        now: SimTime,
    ) -> Result<Option<(Packet, Verdict, Vec<AlertRecord>)>, RuleError> {
        let Some(p) = self.dequeue() else {
            return Ok(None);
        };
        flow_state.observe(&p);
        let matches = match_packet(rs, &p, vars, flow_state)?;
        let v = verdict(&matches, SecMode::Ips);
        let alerts = alerts_for(&matches, &p, SecMode::Ips, now);
        if v == Verdict::Drop {
            self.counters.ips_rule_drops += 1;
        }
        Ok(Some((p, v, alerts)))
    }

    pub fn drain(&mut self) -> impl Iterator<Item = Packet> + '_ {
        self.items.drain(..)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pktmodel::{FiveTuple, Proto, TransportKind};
    use crate::ruleset::{parse_ruleset, sample_ruleset};
    use crate::simcore::topology::{CLIENT_ADDR, SERVER_ADDR};
    use rand::SeedableRng;

    fn packet(proto: Proto, dport: u16) -> Packet {
        let kind = if proto == Proto::Tcp { TransportKind::TcpClosedLoop } else { TransportKind::UdpOpenLoop };
        Packet::new(7, FiveTuple::new(proto, CLIENT_ADDR, 40000, SERVER_ADDR, dport), kind, 512, SimTime::ZERO)
    }

    #[test]
    fn ids_alerts_for_icmp() {
        let rs = sample_ruleset();
        let mut fs = FlowState::new();
        let alerts = ids_observe(&packet(Proto::Icmp, 0), &rs, &RuleVars::default(), &mut fs, SimTime::from_micros(5.0)).unwrap();
        let sids: Vec<u32> = alerts.iter().map(|a| a.sid).collect();
        assert_eq!(sids, vec![1000004, 1000001]);
        assert!(alerts.iter().all(|a| a.time == SimTime::from_micros(5.0)));
        let none = ids_observe(&packet(Proto::Udp, 9000), &rs, &RuleVars::default(), &mut fs, SimTime::ZERO).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn ids_never_records_drop() {
        let rs = parse_ruleset("drop udp any any -> any any (sid:3;)", &RuleVars::default()).unwrap();
        let a = ids_observe(&packet(Proto::Udp, 1), &rs, &RuleVars::default(), &mut FlowState::new(), SimTime::ZERO).unwrap();
        assert_eq!(a[0].action_taken, RuleAction::Alert);
    }

    #[test]
    fn tap_stamps_inspection_completion() {
        let rs = sample_ruleset();
        let mut tap = IdsTap::new(ServiceTime::constant(10.0), ChaCha8Rng::seed_from_u64(1));
        let a = tap.observe(&packet(Proto::Icmp, 0), &rs, &RuleVars::default(), SimTime::from_micros(100.0)).unwrap();
        assert_eq!(a[0].time, SimTime::from_micros(110.0));
        // Second packet arrives while the engine is busy.
        let b = tap.observe(&packet(Proto::Icmp, 0), &rs, &RuleVars::default(), SimTime::from_micros(105.0)).unwrap();
        assert_eq!(b[0].time, SimTime::from_micros(120.0));
    }

    #[test]
    fn enqueue_limits() {
        let st = ServiceTime::constant(1.0);
        let mut q = InspectionQueue::new(DEFAULT_QUEUE_ID, DEFAULT_QUEUE_CAPACITY, st);
        assert_eq!(q.ips_enqueue(packet(Proto::Udp, 1), SimTime::ZERO), EnqueueOutcome::Enqueued);
        for _ in 1..1024 {
            q.ips_enqueue(packet(Proto::Udp, 1), SimTime::ZERO);
        }
        assert_eq!(q.occupancy(), 1024);
        assert_eq!(q.ips_enqueue(packet(Proto::Udp, 1), SimTime::ZERO), EnqueueOutcome::OverflowDrop);

        let mut zero = InspectionQueue::new(4, 0, st);
        for _ in 0..5 {
            assert_eq!(zero.ips_enqueue(packet(Proto::Udp, 1), SimTime::ZERO), EnqueueOutcome::OverflowDrop);
        }
        assert_eq!(zero.counters().overflow_drops, 5);
    }

    #[test]
    fn service_verdicts() {
        let rules = "alert tcp any any -> any 80 (msg:\"web\"; sid:1;)\ndrop tcp any any -> any 23 (msg:\"telnet\"; sid:2;)\nalert tcp any any -> any 23 (sid:3;)";
        let rs = parse_ruleset(rules, &RuleVars::default()).unwrap();
        let vars = RuleVars::default();
        let mut fs = FlowState::new();
        let mut q = InspectionQueue::new(4, 8, ServiceTime::constant(1.0));
        q.ips_enqueue(packet(Proto::Tcp, 80), SimTime::ZERO);
        q.ips_enqueue(packet(Proto::Tcp, 23), SimTime::ZERO);
        q.ips_enqueue(packet(Proto::Tcp, 8080), SimTime::ZERO);

        let (_, v, a) = q.ips_service(&rs, &vars, &mut fs, SimTime::ZERO).unwrap().unwrap();
        assert_eq!((v, a.len()), (Verdict::AlertForward, 1));
        let (_, v, a) = q.ips_service(&rs, &vars, &mut fs, SimTime::ZERO).unwrap().unwrap();
        assert_eq!(v, Verdict::Drop);
        assert_eq!(a.iter().map(|r| (r.sid, r.action_taken)).collect::<Vec<_>>(), vec![(2, RuleAction::Drop), (3, RuleAction::Alert)]);
        let (_, v, a) = q.ips_service(&rs, &vars, &mut fs, SimTime::ZERO).unwrap().unwrap();
        assert_eq!((v, a.len()), (Verdict::Forward, 0));
        assert!(q.ips_service(&rs, &vars, &mut fs, SimTime::ZERO).unwrap().is_none());
        let c = q.counters();
        assert_eq!((c.enqueued, c.serviced, c.ips_rule_drops), (3, 3, 1));
    }

    #[test]
    fn fifo_order() {
        let mut q = InspectionQueue::new(4, 100, ServiceTime::constant(1.0));
        for i in 0..50u64 {
            let mut p = packet(Proto::Udp, 1);
            p.id = i;
            q.ips_enqueue(p, SimTime::ZERO);
        }
        let ids: Vec<u64> = std::iter::from_fn(|| q.dequeue()).map(|p| p.id).collect();
        assert_eq!(ids, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn exponential_service_mean() {
        let st = ServiceTime::new(8.0, ServiceDist::Exponential);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let total: f64 = (0..n).map(|_| st.sample(&mut rng).as_micros()).sum();
        let mean = total / n as f64;
        assert!((mean - 8.0).abs() < 0.1, "{mean}");
        assert_eq!(ServiceTime::constant(0.0).sample(&mut rng), SimTime::ZERO);
    }
}
