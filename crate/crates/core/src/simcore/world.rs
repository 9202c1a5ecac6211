//! One simulated run of a chain: a single flow, its endpoints, the links
//! and the VNF.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::natfn::NatTable;
use crate::pktmodel::{wire_size, FiveTuple, NodeId, Packet, SimTime, TcpFlag, TransportKind};
use crate::ruleset::{AlertRecord, FlowState};
use crate::secfn::{EnqueueOutcome, IdsTap, InspectionQueue, SecMode, ServiceTime, Verdict};
use crate::trafficgen::{stream_seed, PoissonArrivals, WorkloadSpec, STREAM_ARRIVALS, STREAM_IDS, STREAM_VNF};

use super::event::Scheduler;
use super::link::Link;
use super::tcp::{AckAction, LossSignal, TcpState};
use super::topology::{ChainTopology, CLIENT_SPORT, SERVER_ADDR};
use super::SimConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropCause {
    Link,
    Overflow,
    Nat,
    IpsRule,
}

impl DropCause {
    pub fn as_str(self) -> &'static str {
        match self {
            DropCause::Link => "link_drop",
            DropCause::Overflow => "overflow_drop",
            DropCause::Nat => "nat_drop",
            DropCause::IpsRule => "ips_rule_drop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fate {
    Delivered(SimTime),
    Dropped(DropCause),
    InFlight,
}

/// Outcome of one application message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PacketRecord {
    pub id: u64,
    pub sent_at: SimTime,
    pub fate: Fate,
}

impl PacketRecord {
    pub fn delivered_at(&self) -> Option<SimTime> {
        match self.fate {
            Fate::Delivered(t) => Some(t),
            _ => None,
        }
    }

    pub fn delay(&self) -> Option<SimTime> {
        self.delivered_at().map(|t| t - self.sent_at)
    }
}

/// Wire-level packet accounting plus a few run statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunCounters {
    /// Packets put on the wire by endpoints, including control segments
    /// and retransmissions.
    pub sent: u64,
    pub delivered: u64,
    pub link_drops: u64,
    pub overflow_drops: u64,
    pub nat_drops: u64,
    pub ips_rule_drops: u64,
    pub in_flight_at_end: u64,
    pub app_messages: u64,
    pub retransmissions: u64,
    pub alerts: u64,
    pub hop_order_violations: u64,
    pub peak_nat_bindings: u64,
    /// Wire bytes of distinct application data packets reaching the sink
    /// before the send window closes.
    pub delivered_wire_bytes: u64,
}

impl RunCounters {
    pub fn conserved(&self) -> bool {
        self.sent
            == self.delivered
                + self.link_drops
                + self.overflow_drops
                + self.nat_drops
                + self.ips_rule_drops
                + self.in_flight_at_end
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    /// One record per application message, indexed by message id.
    pub records: Vec<PacketRecord>,
    pub counters: RunCounters,
    pub alerts: Vec<AlertRecord>,
    /// Hash over the executed event sequence.
    pub trace_hash: u64,
    pub events: u64,
    pub end: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    Up,
    Down,
}

#[derive(Clone, Debug)]
enum Ev {
    AppSend,
    Arrival { node: NodeId, dir: Dir, pkt: Packet },
    ServiceComplete,
    RtoTimer { gen: u64 },
}

struct Vnf {
    cpu: InspectionQueue,
    busy: bool,
    /// Inspection times for packets carrying payload, in service order.
    data_rng: ChaCha8Rng,
    /// Inspection times for handshake and acknowledgement packets. Kept
    /// apart so that runs offering the same data see the same data samples.
    ctl_rng: ChaCha8Rng,
    nat: NatTable,
    tap: Option<IdsTap>,
    ips: bool,
    shared_ids: bool,
    flows: FlowState,
    /// NAT plus tunnel handling, already scaled.
    fixed: SimTime,
}

#[derive(Default)]
struct TcpEnds {
    state: TcpState,
    syn_sent: bool,
    syn_sent_at: SimTime,
    syn_retransmitted: bool,
    connected: bool,
    /// Application messages handed to the sender so far.
    offered: u64,
    first_sent: Vec<SimTime>,
    retransmitted: Vec<bool>,
    timer_gen: u64,
    timer_armed: bool,
    rcv_nxt: u64,
    out_of_order: BTreeSet<u64>,
}

struct World<'a> {
    cfg: &'a SimConfig,
    wl: &'a WorkloadSpec,
    topo: ChainTopology,
    sched: Scheduler<Ev>,
    up: Vec<Link>,
    down: Vec<Link>,
    vnf_node: NodeId,
    vnf: Vnf,
    arrivals: PoissonArrivals,
    tuple: FiveTuple,
    tcp: TcpEnds,
    records: Vec<PacketRecord>,
    counters: RunCounters,
    alerts: Vec<AlertRecord>,
    next_id: u64,
    hash: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Runs `wl` over the chain in `cfg` with `seed`. The configuration must
/// already be validated.
pub fn simulate(cfg: &SimConfig, wl: &WorkloadSpec, seed: u64) -> SimOutput {
    World::new(cfg, wl, seed).run()
}

fn app_message(p: &Packet) -> Option<u64> {
    match (p.kind, p.tcp_flags) {
        (TransportKind::UdpOpenLoop, _) => Some(p.seq),
        _ => None,
    }
}

impl<'a> World<'a> {
    fn new(cfg: &'a SimConfig, wl: &'a WorkloadSpec, seed: u64) -> Self {
        let topo = ChainTopology::new(cfg.preset, cfg.placement);
        let prop = SimTime::from_micros(cfg.link.prop_delay_us);
        let mut up = Vec::new();
        let mut down = Vec::new();
        for i in 0..topo.link_count() {
            let mk = |a, b| Link::new(a, b, cfg.link.bandwidth_bps, prop, cfg.link.buffer).expect("validated link");
            up.push(mk(i, i + 1));
            down.push(mk(i + 1, i));
        }
        let m = cfg.multiplier();
        let mut fixed_us = cfg.costs.nat_us * m;
        if cfg.preset.is_5g() {
            fixed_us += cfg.costs.tunnel_us * m;
        }
        let ips = cfg.security == Some(SecMode::Ips);
        let service = if ips {
            ServiceTime::new(cfg.inspection_mean_us(), cfg.service_dist)
        } else {
            ServiceTime::constant(0.0)
        };
        let tap = (cfg.security == Some(SecMode::Ids)).then(|| {
            IdsTap::new(
                ServiceTime::new(cfg.ids_inspection_mean_us(), cfg.service_dist),
                ChaCha8Rng::seed_from_u64(stream_seed(seed, STREAM_IDS)),
            )
        });
        let vnf = Vnf {
            cpu: InspectionQueue::new(cfg.queue_id, cfg.queue_capacity, service),
            busy: false,
            data_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, STREAM_VNF)),
            ctl_rng: {
                let mut r = ChaCha8Rng::seed_from_u64(stream_seed(seed, STREAM_VNF));
                r.set_stream(1);
                r
            },
            nat: NatTable::new(
                topo.nodes[topo.vnf()].addr,
                cfg.nat_capacity,
                SimTime::from_secs(cfg.nat_idle_timeout_s),
            ),
            shared_ids: tap.is_some() && cfg.ids_shared_cpu,
            tap,
            ips,
            flows: FlowState::new(),
            fixed: SimTime::from_micros(fixed_us),
        };
        let arrivals = PoissonArrivals::new(
            wl.rate_pps,
            wl.duration_s,
            ChaCha8Rng::seed_from_u64(stream_seed(seed, STREAM_ARRIVALS)),
        );
        let tuple = FiveTuple::new(wl.kind.proto(), topo.source().addr, CLIENT_SPORT, SERVER_ADDR, wl.dport);
        World {
            cfg,
            wl,
            vnf_node: topo.vnf(),
            topo,
            sched: Scheduler::new(),
            up,
            down,
            vnf,
            arrivals,
            tuple,
            tcp: TcpEnds::default(),
            records: Vec::new(),
            counters: RunCounters::default(),
            alerts: Vec::new(),
            next_id: 0,
            hash: FNV_OFFSET,
        }
    }

    fn run(mut self) -> SimOutput {
        let horizon = SimTime::from_secs(self.wl.duration_s) + self.cfg.drain();
        self.schedule_next_send();
        while let Some(ev) = self.sched.pop_until(horizon) {
            let now = ev.time;
            self.fold_hash(now, ev.seq, &ev.kind);
            match ev.kind {
                Ev::AppSend => self.on_app_send(now),
                Ev::Arrival { node, dir, pkt } => self.on_arrival(node, dir, pkt, now),
                Ev::ServiceComplete => self.on_service_complete(now),
                Ev::RtoTimer { gen } => self.on_timer(gen, now),
            }
        }
        let pending = self
            .sched
            .pending_events()
            .filter(|e| matches!(e.kind, Ev::Arrival { .. }))
            .count();
        self.counters.in_flight_at_end = (pending + self.vnf.cpu.occupancy()) as u64;
        self.counters.peak_nat_bindings = self.vnf.nat.peak_live_bindings() as u64;
        self.counters.alerts = self.counters.alerts.max(self.alerts.len() as u64);
        SimOutput {
            records: self.records,
            counters: self.counters,
            alerts: self.alerts,
            trace_hash: self.hash,
            events: self.sched.processed(),
            end: horizon,
        }
    }

    fn fold_hash(&mut self, t: SimTime, seq: u64, kind: &Ev) {
        let (tag, id) = match kind {
            Ev::AppSend => (1, 0),
            Ev::Arrival { node, pkt, .. } => (2 + ((*node as u64) << 8), pkt.id),
            Ev::ServiceComplete => (3, 0),
            Ev::RtoTimer { gen } => (4, *gen),
        };
        for word in [t.as_nanos(), seq, tag, id] {
            for b in word.to_le_bytes() {
                self.hash = (self.hash ^ b as u64).wrapping_mul(FNV_PRIME);
            }
        }
    }

    fn last_node(&self) -> NodeId {
        self.topo.nodes.len() - 1
    }

    fn schedule_next_send(&mut self) {
        if self.wl.max_packets.is_some_and(|n| self.counters.app_messages >= n) {
            return;
        }
        if let Some(t) = self.arrivals.next() {
            self.sched.schedule(t, Ev::AppSend);
        }
    }

    fn packet(&mut self, tuple: FiveTuple, payload: usize, flag: Option<TcpFlag>, seq: u64, now: SimTime) -> Packet {
        let mut p = Packet::new(self.next_id, tuple, self.wl.kind, payload, now);
        self.next_id += 1;
        p.tcp_flags = flag;
        p.seq = seq;
        p
    }

    /// Puts a packet on the wire at an endpoint.
    fn emit(&mut self, node: NodeId, dir: Dir, mut p: Packet, now: SimTime) {
        self.counters.sent += 1;
        p.tunneled = self.cfg.preset.is_5g() && node == 0;
        p.stamp(node, now);
        self.forward(node, dir, p, now);
    }

    fn forward(&mut self, node: NodeId, dir: Dir, p: Packet, now: SimTime) {
        let (link, next) = match dir {
            Dir::Up => (&mut self.up[node], node + 1),
            Dir::Down => (&mut self.down[node - 1], node - 1),
        };
        match link.transmit(&p, now) {
            Ok(at) => {
                self.sched.schedule(at, Ev::Arrival { node: next, dir, pkt: p });
            }
            Err(_) => self.count_drop(DropCause::Link, app_message(&p)),
        }
    }

    fn count_drop(&mut self, cause: DropCause, msg: Option<u64>) {
        let c = &mut self.counters;
        match cause {
            DropCause::Link => c.link_drops += 1,
            DropCause::Overflow => c.overflow_drops += 1,
            DropCause::Nat => c.nat_drops += 1,
            DropCause::IpsRule => c.ips_rule_drops += 1,
        }
        if let Some(m) = msg {
            let r = &mut self.records[m as usize];
            if r.fate == Fate::InFlight {
                r.fate = Fate::Dropped(cause);
            }
        }
    }

    fn push_alerts(&mut self, alerts: Vec<AlertRecord>) {
        self.counters.alerts += alerts.len() as u64;
        if self.cfg.keep_alerts {
            self.alerts.extend(alerts);
        }
    }

    fn on_app_send(&mut self, now: SimTime) {
        let id = self.counters.app_messages;
        self.counters.app_messages += 1;
        self.records.push(PacketRecord {
            id,
            sent_at: now,
            fate: Fate::InFlight,
        });
        match self.wl.kind {
            TransportKind::UdpOpenLoop => {
                let p = self.packet(self.tuple, self.wl.payload_bytes, None, id, now);
                self.emit(0, Dir::Up, p, now);
            }
            TransportKind::TcpClosedLoop => {
                self.tcp.offered += 1;
                if !self.tcp.syn_sent {
                    self.send_syn(now);
                } else {
                    self.tcp_try_send(now);
                }
            }
        }
        self.schedule_next_send();
    }

    fn on_arrival(&mut self, node: NodeId, dir: Dir, mut p: Packet, now: SimTime) {
        p.stamp(node, now);
        let at_end = match dir {
            Dir::Up => node == self.last_node(),
            Dir::Down => node == 0,
        };
        if at_end {
            self.deliver(node, p, now);
        } else if node == self.vnf_node {
            self.vnf_arrival(dir, p, now);
        } else {
            self.forward(node, dir, p, now);
        }
    }

    fn vnf_arrival(&mut self, dir: Dir, p: Packet, now: SimTime) {
        let msg = app_message(&p);
        let p = match dir {
            Dir::Up => p,
            Dir::Down => match self.vnf.nat.translate_inbound(p, now) {
                Ok(p) => p,
                Err(_) => return self.count_drop(DropCause::Nat, msg),
            },
        };
        if let Some(tap) = self.vnf.tap.as_mut() {
            let (rules, vars) = (&self.cfg.rules, &self.cfg.vars);
            let alerts = if self.vnf.shared_ids {
                tap.observe_inline(&p, rules, vars, now)
            } else {
                tap.observe(&p, rules, vars, now)
            };
            self.push_alerts(alerts.expect("rule variables checked by validate"));
        }
        match self.vnf.cpu.ips_enqueue(p, now) {
            EnqueueOutcome::OverflowDrop => self.count_drop(DropCause::Overflow, msg),
            EnqueueOutcome::Enqueued => {
                if !self.vnf.busy {
                    self.start_service(now);
                }
            }
        }
    }

    fn start_service(&mut self, now: SimTime) {
        let mut t = self.vnf.fixed;
        if self.vnf.ips {
            let carries_data = self.vnf.cpu.head().is_some_and(|p| p.payload_bytes > 0);
            let rng = if carries_data { &mut self.vnf.data_rng } else { &mut self.vnf.ctl_rng };
            t = t + self.vnf.cpu.service_time.sample(rng);
        }
        if self.vnf.shared_ids {
            if let Some(tap) = self.vnf.tap.as_mut() {
                t = t + tap.sample_service();
            }
        }
        self.vnf.busy = true;
        self.sched.schedule(now + t, Ev::ServiceComplete);
    }

    fn on_service_complete(&mut self, now: SimTime) {
        self.vnf.busy = false;
        let (mut p, verdict) = if self.vnf.ips {
            let (p, v, alerts) = self
                .vnf
                .cpu
                .ips_service(&self.cfg.rules, &self.cfg.vars, &mut self.vnf.flows, now)
                .expect("rule variables checked by validate")
                .expect("service completes with a packet queued");
            self.push_alerts(alerts);
            (p, v)
        } else {
            let p = self.vnf.cpu.dequeue().expect("service completes with a packet queued");
            (p, Verdict::Forward)
        };
        if !self.vnf.cpu.is_empty() {
            self.start_service(now);
        }
        if verdict == Verdict::Drop {
            return self.count_drop(DropCause::IpsRule, app_message(&p));
        }
        let vnf = self.vnf_node;
        if p.tuple.dst == self.topo.source().addr {
            p.tunneled = self.cfg.preset.is_5g();
            self.forward(vnf, Dir::Down, p, now);
        } else {
            p.tunneled = false;
            let msg = app_message(&p);
            match self.vnf.nat.translate_outbound(p, now) {
                Ok(p) => self.forward(vnf, Dir::Up, p, now),
                Err(_) => self.count_drop(DropCause::Nat, msg),
            }
        }
    }

    fn deliver(&mut self, node: NodeId, p: Packet, now: SimTime) {
        self.counters.delivered += 1;
        if !p.hops_monotone() {
            self.counters.hop_order_violations += 1;
        }
        match (p.kind, node == 0) {
            (TransportKind::UdpOpenLoop, false) => {
                self.count_wire(&p, now);
                self.mark_delivered(p.seq, now);
            }
            (TransportKind::TcpClosedLoop, false) => self.server_receive(p, now),
            (TransportKind::TcpClosedLoop, true) => self.client_receive(p, now),
            (TransportKind::UdpOpenLoop, true) => {}
        }
    }

    fn count_wire(&mut self, p: &Packet, now: SimTime) {
        if now <= SimTime::from_secs(self.wl.duration_s) {
            self.counters.delivered_wire_bytes += wire_size(p) as u64;
        }
    }

    fn mark_delivered(&mut self, msg: u64, now: SimTime) {
        let r = &mut self.records[msg as usize];
        if r.fate == Fate::InFlight {
            r.fate = Fate::Delivered(now);
        }
    }

    fn server_receive(&mut self, p: Packet, now: SimTime) {
        let reply = p.tuple.reversed();
        let last = self.last_node();
        match p.tcp_flags {
            Some(TcpFlag::Syn) => {
                let r = self.packet(reply, 0, Some(TcpFlag::SynAck), 0, now);
                self.emit(last, Dir::Down, r, now);
            }
            Some(TcpFlag::Data) => {
                let seg = p.seq;
                let in_order = seg == self.tcp.rcv_nxt;
                if in_order {
                    self.count_wire(&p, now);
                    self.mark_delivered(seg, now);
                    self.tcp.rcv_nxt += 1;
                    while self.tcp.out_of_order.remove(&self.tcp.rcv_nxt) {
                        self.mark_delivered(self.tcp.rcv_nxt, now);
                        self.tcp.rcv_nxt += 1;
                    }
                } else if seg > self.tcp.rcv_nxt && self.tcp.out_of_order.insert(seg) {
                    self.count_wire(&p, now);
                }
                let flag = if in_order { TcpFlag::Ack } else { TcpFlag::DupAck };
                let r = self.packet(reply, 0, Some(flag), self.tcp.rcv_nxt, now);
                self.emit(last, Dir::Down, r, now);
            }
            _ => {}
        }
    }

    fn client_receive(&mut self, p: Packet, now: SimTime) {
        match p.tcp_flags {
            Some(TcpFlag::SynAck) if !self.tcp.connected => {
                self.tcp.connected = true;
                if !self.tcp.syn_retransmitted {
                    self.tcp.state.observe_rtt(now - self.tcp.syn_sent_at);
                }
                self.stop_timer();
                let ack = self.packet(self.tuple, 0, Some(TcpFlag::Ack), 0, now);
                self.emit(0, Dir::Up, ack, now);
                self.tcp_try_send(now);
            }
            Some(TcpFlag::Ack | TcpFlag::DupAck) => self.on_ack(p.seq, now),
            _ => {}
        }
    }

    fn on_ack(&mut self, ack: u64, now: SimTime) {
        match self.tcp.state.on_ack(ack) {
            AckAction::Advanced { .. } => {
                let newest = (ack - 1) as usize;
                // Karn: no samples from retransmitted segments
                if !self.tcp.retransmitted[newest] {
                    let sample = now - self.tcp.first_sent[newest];
                    self.tcp.state.observe_rtt(sample);
                }
                if self.tcp.state.in_flight() > 0 {
                    self.arm_timer(now);
                } else {
                    self.stop_timer();
                }
                self.tcp_try_send(now);
            }
            AckAction::PartialAck { retransmit } | AckAction::FastRetransmit { retransmit } => {
                self.send_segment(retransmit, now);
                self.arm_timer(now);
                self.tcp_try_send(now);
            }
            AckAction::Duplicate | AckAction::Stale => {}
        }
    }

    fn send_syn(&mut self, now: SimTime) {
        if self.tcp.syn_sent {
            self.tcp.syn_retransmitted = true;
            self.counters.retransmissions += 1;
        } else {
            self.tcp.syn_sent = true;
            self.tcp.syn_sent_at = now;
        }
        let syn = self.packet(self.tuple, 0, Some(TcpFlag::Syn), 0, now);
        self.emit(0, Dir::Up, syn, now);
        self.arm_timer(now);
    }

    fn tcp_try_send(&mut self, now: SimTime) {
        if !self.tcp.connected {
            return;
        }
        while self.tcp.state.credits() > 0 && self.tcp.state.snd_nxt < self.tcp.offered {
            let seg = self.tcp.state.snd_nxt;
            self.tcp.state.snd_nxt += 1;
            self.send_segment(seg, now);
        }
        if self.tcp.state.in_flight() > 0 && !self.tcp.timer_armed {
            self.arm_timer(now);
        }
    }

    fn send_segment(&mut self, seg: u64, now: SimTime) {
        let i = seg as usize;
        if i < self.tcp.first_sent.len() {
            self.tcp.retransmitted[i] = true;
            self.counters.retransmissions += 1;
        } else {
            debug_assert_eq!(i, self.tcp.first_sent.len());
            self.tcp.first_sent.push(now);
            self.tcp.retransmitted.push(false);
        }
        let p = self.packet(self.tuple, self.wl.payload_bytes, Some(TcpFlag::Data), seg, now);
        self.emit(0, Dir::Up, p, now);
    }

    fn arm_timer(&mut self, now: SimTime) {
        self.tcp.timer_gen += 1;
        self.tcp.timer_armed = true;
        let gen = self.tcp.timer_gen;
        self.sched.schedule(now + self.tcp.state.rto(), Ev::RtoTimer { gen });
    }

    fn stop_timer(&mut self) {
        self.tcp.timer_gen += 1;
        self.tcp.timer_armed = false;
    }

    fn on_timer(&mut self, gen: u64, now: SimTime) {
        if gen != self.tcp.timer_gen || !self.tcp.timer_armed {
            return;
        }
        self.tcp.timer_armed = false;
        if !self.tcp.connected {
            self.send_syn(now);
            return;
        }
        if self.tcp.state.in_flight() == 0 {
            return;
        }
        self.tcp.state.on_loss(LossSignal::Timeout);
        self.tcp_try_send(now);
    }
}
