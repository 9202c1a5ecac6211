//! Packet, address and flow representations shared by the whole simulator.
//!
//! Simulated time is kept as an integer count of nanoseconds so that event
//! ordering and run-to-run comparisons are exact; every public metric is
//! reported in microseconds.

use std::fmt;
use std::net::Ipv4Addr;
use std::ops::{Add, Sub};
use std::str::FromStr;

use thiserror::Error;

/// IPv4 header bytes.
pub const IPV4_HEADER: usize = 20;
/// UDP header bytes.
pub const UDP_HEADER: usize = 8;
/// TCP header bytes (no options).
pub const TCP_HEADER: usize = 20;
/// GTP-U mandatory header bytes.
pub const GTPU_HEADER: usize = 8;
/// Outer IP + UDP + GTP-U added by user-plane tunnelling.
pub const TUNNEL_OVERHEAD: usize = IPV4_HEADER + UDP_HEADER + GTPU_HEADER;
/// Largest UDP payload that fits an IPv4 datagram.
pub const MAX_PAYLOAD: usize = 65507;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AddrError {
    #[error("invalid IPv4 address {0:?}")]
    BadAddress(String),
    #[error("invalid prefix length in {0:?}")]
    BadPrefix(String),
    #[error("{0} has host bits set below the prefix")]
    HostBits(String),
}

/// Simulated time in nanoseconds since the start of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond; negative input clamps to zero.
    pub fn from_micros(us: f64) -> Self {
        SimTime((us * 1e3).round().max(0.0) as u64)
    }

    pub fn from_secs(s: f64) -> Self {
        SimTime((s * 1e9).round().max(0.0) as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_micros(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e9
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
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

/// A 32-bit IPv4 host address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub u32);

impl Address {
    pub const fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        Address(u32::from_be_bytes([a, b, c, d]))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Ipv4Addr::from(self.0).fmt(f)
    }
}

impl FromStr for Address {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Ipv4Addr>()
            .map(|a| Address(u32::from(a)))
            .map_err(|_| AddrError::BadAddress(s.to_string()))
    }
}

/// An IPv4 prefix. The base never has bits set below the prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CidrBlock {
    base: Address,
    prefix_len: u8,
}

fn prefix_mask(prefix_len: u8) -> u32 {
    if prefix_len == 0 {
        0
    } else {
        u32::MAX << (32 - prefix_len as u32)
    }
}

impl CidrBlock {
    pub fn new(base: Address, prefix_len: u8) -> Result<Self, AddrError> {
        if prefix_len > 32 {
            return Err(AddrError::BadPrefix(format!("{base}/{prefix_len}")));
        }
        if base.0 & !prefix_mask(prefix_len) != 0 {
            return Err(AddrError::HostBits(format!("{base}/{prefix_len}")));
        }
        Ok(CidrBlock { base, prefix_len })
    }

    /// Compile-time constructor; `None` if host bits are set.
    pub const fn const_new(base: Address, prefix_len: u8) -> Option<CidrBlock> {
        if prefix_len > 32 {
            return None;
        }
        let mask = if prefix_len == 0 { 0 } else { u32::MAX << (32 - prefix_len as u32) };
        if base.0 & !mask != 0 {
            return None;
        }
        Some(CidrBlock { base, prefix_len })
    }

    /// Builds the block containing `addr`, clearing host bits.
    pub fn covering(addr: Address, prefix_len: u8) -> Self {
        let prefix_len = prefix_len.min(32);
        CidrBlock {
            base: Address(addr.0 & prefix_mask(prefix_len)),
            prefix_len,
        }
    }

    pub fn host(addr: Address) -> Self {
        CidrBlock {
            base: addr,
            prefix_len: 32,
        }
    }

    pub fn base(&self) -> Address {
        self.base
    }

    pub fn prefix_len(&self) -> u8 {
        self.prefix_len
    }

    pub fn contains(&self, a: Address) -> bool {
        cidr_contains(self, a)
    }

    /// Returns the blocks covering every address outside `self`.
    pub fn complement(&self) -> Vec<CidrBlock> {
        (1..=self.prefix_len)
            .map(|len| {
                // Flip the last bit of each successively longer prefix.
                let bit = 1u32 << (32 - len as u32);
                let base = (self.base.0 & prefix_mask(len)) ^ bit;
                CidrBlock {
                    base: Address(base),
                    prefix_len: len,
                }
            })
            .collect()
    }
}

impl fmt::Display for CidrBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.prefix_len)
    }
}

impl FromStr for CidrBlock {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((addr, len)) => {
                let base: Address = addr.parse()?;
                let len: u8 = len.parse().map_err(|_| AddrError::BadPrefix(s.to_string()))?;
                CidrBlock::new(base, len)
            }
            None => Ok(CidrBlock::host(s.parse()?)),
        }
    }
}

/// True iff the top `prefix_len` bits of `a` equal those of the block base.
pub fn cidr_contains(block: &CidrBlock, a: Address) -> bool {
    let mask = prefix_mask(block.prefix_len);
    a.0 & mask == block.base.0 & mask
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
}

impl Proto {
    pub fn as_str(self) -> &'static str {
        match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
            Proto::Icmp => "icmp",
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Flow key. ICMP tuples always carry zero ports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FiveTuple {
    pub src: Address,
    pub dst: Address,
    pub sport: u16,
    pub dport: u16,
    pub proto: Proto,
}

impl FiveTuple {
    pub fn new(proto: Proto, src: Address, sport: u16, dst: Address, dport: u16) -> Self {
        let (sport, dport) = if proto == Proto::Icmp { (0, 0) } else { (sport, dport) };
        FiveTuple {
            src,
            dst,
            sport,
            dport,
            proto,
        }
    }

    pub fn reversed(&self) -> Self {
        FiveTuple {
            src: self.dst,
            dst: self.src,
            sport: self.dport,
            dport: self.sport,
            proto: self.proto,
        }
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}->{}:{}", self.src, self.sport, self.dst, self.dport)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransportKind {
    UdpOpenLoop,
    TcpClosedLoop,
}

impl TransportKind {
    pub fn proto(self) -> Proto {
        match self {
            TransportKind::UdpOpenLoop => Proto::Udp,
            TransportKind::TcpClosedLoop => Proto::Tcp,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransportKind::UdpOpenLoop => "udp",
            TransportKind::TcpClosedLoop => "tcp",
        }
    }
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "udp" => Ok(TransportKind::UdpOpenLoop),
            "tcp" => Ok(TransportKind::TcpClosedLoop),
            other => Err(format!("unknown transport {other:?} (expected tcp|udp)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TcpFlag {
    Syn,
    SynAck,
    Ack,
    Data,
    DupAck,
}

/// Identifier of a node within a chain topology.
pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub tuple: FiveTuple,
    pub kind: TransportKind,
    pub payload_bytes: usize,
    pub created_at: SimTime,
    pub hop_timestamps: Vec<(NodeId, SimTime)>,
    pub tunneled: bool,
    pub tcp_flags: Option<TcpFlag>,
    /// Segment index for TCP data and cumulative ack number for TCP acks;
    /// application message index for UDP.
    pub seq: u64,
}

impl Packet {
    pub fn new(id: u64, tuple: FiveTuple, kind: TransportKind, payload_bytes: usize, created_at: SimTime) -> Self {
        assert!(payload_bytes <= MAX_PAYLOAD, "payload {payload_bytes} exceeds {MAX_PAYLOAD}");
        Packet {
            id,
            tuple,
            kind,
            payload_bytes,
            created_at,
            hop_timestamps: Vec::with_capacity(4),
            tunneled: false,
            tcp_flags: None,
            seq: 0,
        }
    }

    /// Appends a hop record. Timestamps never go backwards.
    pub fn stamp(&mut self, node: NodeId, at: SimTime) {
        if let Some(&(_, last)) = self.hop_timestamps.last() {
            debug_assert!(at >= last, "hop timestamps must be nondecreasing");
        }
        self.hop_timestamps.push((node, at));
    }

    pub fn hops_monotone(&self) -> bool {
        self.hop_timestamps.windows(2).all(|w| w[0].1 <= w[1].1)
    }
}

/// Bytes on the wire: payload plus transport, IP and optional tunnel headers.
pub fn wire_size(p: &Packet) -> usize {
    wire_size_for(p.tuple.proto, p.payload_bytes, p.tunneled)
}

pub fn wire_size_for(proto: Proto, payload_bytes: usize, tunneled: bool) -> usize {
    let l4 = match proto {
        Proto::Udp => UDP_HEADER,
        Proto::Tcp => TCP_HEADER,
        // echo header is the same size as a UDP header
        Proto::Icmp => 8,
    };
    payload_bytes + IPV4_HEADER + l4 + if tunneled { TUNNEL_OVERHEAD } else { 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pkt(kind: TransportKind, payload: usize, tunneled: bool) -> Packet {
        let t = FiveTuple::new(kind.proto(), Address::new(10, 0, 0, 2), 40000, Address::new(192, 168, 122, 10), 80);
        let mut p = Packet::new(1, t, kind, payload, SimTime::ZERO);
        p.tunneled = tunneled;
        p
    }

    #[test]
    fn wire_sizes() {
        assert_eq!(wire_size(&pkt(TransportKind::UdpOpenLoop, 512, false)), 540);
        assert_eq!(wire_size(&pkt(TransportKind::TcpClosedLoop, 512, false)), 552);
        assert_eq!(wire_size(&pkt(TransportKind::UdpOpenLoop, 512, true)), 576);
    }

    #[test]
    fn cidr_examples() {
        let ten: CidrBlock = "10.0.0.0/8".parse().unwrap();
        assert!(ten.contains("10.1.2.3".parse().unwrap()));
        assert!(!ten.contains("192.168.0.1".parse().unwrap()));
        let all: CidrBlock = "0.0.0.0/0".parse().unwrap();
        assert!(all.contains(Address(u32::MAX)));
        assert!(all.contains(Address(0)));
    }

    #[test]
    fn cidr_rejects_host_bits() {
        assert!(matches!("10.0.0.1/8".parse::<CidrBlock>(), Err(AddrError::HostBits(_))));
        assert!(matches!("10.0.0.0/33".parse::<CidrBlock>(), Err(AddrError::BadPrefix(_))));
        assert_eq!(CidrBlock::covering(Address::new(10, 9, 8, 7), 16).to_string(), "10.9.0.0/16");
    }

    #[test]
    fn icmp_ports_zeroed() {
        let t = FiveTuple::new(Proto::Icmp, Address(1), 5, Address(2), 6);
        assert_eq!((t.sport, t.dport), (0, 0));
    }

    #[test]
    fn dotted_quad_render() {
        assert_eq!(Address::new(192, 168, 122, 10).to_string(), "192.168.122.10");
        assert_eq!(SimTime::from_nanos(4_320).to_string(), "4.320");
    }

    proptest! {
        #[test]
        fn address_round_trip(v in any::<u32>()) {
            let a = Address(v);
            prop_assert_eq!(a.to_string().parse::<Address>().unwrap(), a);
        }

        #[test]
        fn complement_partitions_space(v in any::<u32>(), len in 0u8..=32, probe in any::<u32>()) {
            let block = CidrBlock::covering(Address(v), len);
            let inside = block.contains(Address(probe));
            let outside = block.complement().iter().filter(|b| b.contains(Address(probe))).count();
            prop_assert_eq!(outside, if inside { 0 } else { 1 });
            prop_assert!(block.contains(block.base()));
        }

        #[test]
        fn wire_size_monotone(a in 0usize..MAX_PAYLOAD, tunneled in any::<bool>(), tcp in any::<bool>()) {
            let proto = if tcp { Proto::Tcp } else { Proto::Udp };
            prop_assert!(wire_size_for(proto, a, tunneled) < wire_size_for(proto, a + 1, tunneled));
        }
    }
}
