use std::collections::HashMap;

use crate::pktmodel::{Address, FiveTuple, Packet, Proto, TcpFlag};

/// Facts about a packet's flow consulted by `flow:` rule options.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlowFacts {
    pub established: bool,
    /// The packet travels from the side that opened the flow.
    pub from_initiator: bool,
}

#[derive(Clone, Copy, Debug)]
struct FlowEntry {
    initiator: (Address, u16),
    seen_from_initiator: bool,
    seen_from_responder: bool,
    syn_ack_seen: bool,
    established: bool,
}

/// Per-flow connection tracking used by the security functions.
///
/// TCP flows become established once the initiator sends after a SYN-ACK.
/// Other protocols become established once a packet has been seen in each
/// direction.
#[derive(Clone, Debug, Default)]
pub struct FlowState {
    flows: HashMap<FiveTuple, FlowEntry>,
}

fn flow_key(t: &FiveTuple) -> FiveTuple {
    let r = t.reversed();
    if (t.src, t.sport) <= (r.src, r.sport) {
        *t
    } else {
        r
    }
}

impl FlowState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `p` and returns the facts that apply to it.
    pub fn observe(&mut self, p: &Packet) -> FlowFacts {
        let t = &p.tuple;
        let entry = self.flows.entry(flow_key(t)).or_insert(FlowEntry {
            initiator: (t.src, t.sport),
            seen_from_initiator: false,
            seen_from_responder: false,
            syn_ack_seen: false,
            established: false,
        });
        let from_initiator = (t.src, t.sport) == entry.initiator;
        if from_initiator {
            entry.seen_from_initiator = true;
        } else {
            entry.seen_from_responder = true;
        }
        match t.proto {
            Proto::Tcp => {
                if !from_initiator && p.tcp_flags == Some(TcpFlag::SynAck) {
                    entry.syn_ack_seen = true;
                } else if from_initiator && entry.syn_ack_seen && p.tcp_flags != Some(TcpFlag::Syn) {
                    entry.established = true;
                }
            }
            Proto::Udp | Proto::Icmp => {
                if entry.seen_from_initiator && entry.seen_from_responder {
                    entry.established = true;
                }
            }
        }
        FlowFacts {
            established: entry.established,
            from_initiator,
        }
    }

    /// Facts for `t` without recording anything. Unknown flows are treated
    /// as freshly opened by `t.src`.
    pub fn facts(&self, t: &FiveTuple) -> FlowFacts {
        match self.flows.get(&flow_key(t)) {
            Some(e) => FlowFacts {
                established: e.established,
                from_initiator: (t.src, t.sport) == e.initiator,
            },
            None => FlowFacts {
                established: false,
                from_initiator: true,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pktmodel::{SimTime, TransportKind};

    fn tcp(src: Address, sport: u16, dst: Address, dport: u16, flag: TcpFlag) -> Packet {
        let mut p = Packet::new(
            0,
            FiveTuple::new(Proto::Tcp, src, sport, dst, dport),
            TransportKind::TcpClosedLoop,
            0,
            SimTime::ZERO,
        );
        p.tcp_flags = Some(flag);
        p
    }

    #[test]
    fn tcp_handshake_establishes() {
        let c = Address::new(10, 0, 0, 2);
        let s = Address::new(192, 168, 122, 10);
        let mut fs = FlowState::new();
        let f = fs.observe(&tcp(c, 4000, s, 445, TcpFlag::Syn));
        assert_eq!(f, FlowFacts { established: false, from_initiator: true });
        let f = fs.observe(&tcp(s, 445, c, 4000, TcpFlag::SynAck));
        assert_eq!(f, FlowFacts { established: false, from_initiator: false });
        let f = fs.observe(&tcp(c, 4000, s, 445, TcpFlag::Ack));
        assert_eq!(f, FlowFacts { established: true, from_initiator: true });
        assert!(fs.facts(&tcp(s, 445, c, 4000, TcpFlag::Ack).tuple).established);
        assert_eq!(fs.len(), 1);
    }

    #[test]
    fn udp_needs_both_directions() {
        let a = Address(1);
        let b = Address(2);
        let mut fs = FlowState::new();
        let mk = |src, sp, dst, dp| {
            Packet::new(0, FiveTuple::new(Proto::Udp, src, sp, dst, dp), TransportKind::UdpOpenLoop, 10, SimTime::ZERO)
        };
        assert!(!fs.observe(&mk(a, 1, b, 2)).established);
        assert!(!fs.observe(&mk(a, 1, b, 2)).established);
        assert!(fs.observe(&mk(b, 2, a, 1)).established);
    }
}
