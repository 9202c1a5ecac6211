//! Source NAT in the style of iptables MASQUERADE.
//!
//! Each inside flow is bound to an outside port on the single external
//! address. Ports are handed out lowest-free-first from `[1024, 65535]`
//! so that runs are reproducible.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::pktmodel::{Address, FiveTuple, Packet, Proto, SimTime};

pub const PORT_POOL_LO: u16 = 1024;
pub const PORT_POOL_HI: u16 = 65535;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum NatError {
    #[error("NAT binding table or port pool exhausted")]
    Exhausted,
    #[error("no live binding for inbound packet")]
    UnsolicitedInbound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NatBinding {
    pub inside: FiveTuple,
    pub outside_port: u16,
    pub last_active: SimTime,
}

#[derive(Clone, Debug)]
struct PortPool {
    next_unused: u32,
    freed: BTreeSet<u16>,
}

impl PortPool {
    fn new() -> Self {
        PortPool {
            next_unused: PORT_POOL_LO as u32,
            freed: BTreeSet::new(),
        }
    }

    fn take_lowest(&mut self) -> Option<u16> {
        // Every freed port lies below `next_unused`.
        if let Some(p) = self.freed.pop_first() {
            return Some(p);
        }
        if self.next_unused <= PORT_POOL_HI as u32 {
            let p = self.next_unused as u16;
            self.next_unused += 1;
            Some(p)
        } else {
            None
        }
    }

    fn release(&mut self, port: u16) {
        debug_assert!((port as u32) < self.next_unused);
        let fresh = self.freed.insert(port);
        debug_assert!(fresh, "double free of port {port}");
    }

    fn free_count(&self) -> usize {
        self.freed.len() + (PORT_POOL_HI as u32 + 1 - self.next_unused) as usize
    }
}

fn proto_index(p: Proto) -> usize {
    match p {
        Proto::Tcp => 0,
        Proto::Udp => 1,
        Proto::Icmp => 2,
    }
}

#[derive(Clone, Debug)]
pub struct NatTable {
    external_addr: Address,
    capacity: usize,
    idle_timeout: SimTime,
    bindings: HashMap<FiveTuple, NatBinding>,
    by_port: HashMap<(Proto, u16), FiveTuple>,
    pools: [PortPool; 3],
    peak_live: usize,
}

impl NatTable {
    pub fn new(external_addr: Address, capacity: usize, idle_timeout: SimTime) -> Self {
        NatTable {
            external_addr,
            capacity,
            idle_timeout,
            bindings: HashMap::new(),
            by_port: HashMap::new(),
            pools: [PortPool::new(), PortPool::new(), PortPool::new()],
            peak_live: 0,
        }
    }

    pub fn external_addr(&self) -> Address {
        self.external_addr
    }

    pub fn live_bindings(&self) -> usize {
        self.bindings.len()
    }

    pub fn peak_live_bindings(&self) -> usize {
        self.peak_live
    }

    pub fn free_ports(&self, proto: Proto) -> usize {
        self.pools[proto_index(proto)].free_count()
    }

    pub fn binding(&self, inside: &FiveTuple) -> Option<&NatBinding> {
        self.bindings.get(inside)
    }

    fn is_stale(&self, b: &NatBinding, now: SimTime) -> bool {
        now.as_nanos().saturating_sub(b.last_active.as_nanos()) > self.idle_timeout.as_nanos()
    }

    fn remove(&mut self, inside: &FiveTuple) {
        if let Some(b) = self.bindings.remove(inside) {
            self.by_port.remove(&(inside.proto, b.outside_port));
            self.pools[proto_index(inside.proto)].release(b.outside_port);
        }
    }

    fn allocate(&mut self, inside: FiveTuple, now: SimTime) -> Result<u16, NatError> {
        let pool = proto_index(inside.proto);
        if self.bindings.len() >= self.capacity || self.pools[pool].free_count() == 0 {
            self.expire_bindings(now);
            if self.bindings.len() >= self.capacity || self.pools[pool].free_count() == 0 {
                return Err(NatError::Exhausted);
            }
        }
        let port = self.pools[pool].take_lowest().ok_or(NatError::Exhausted)?;
        self.bindings.insert(
            inside,
            NatBinding {
                inside,
                outside_port: port,
                last_active: now,
            },
        );
        self.by_port.insert((inside.proto, port), inside);
        self.peak_live = self.peak_live.max(self.bindings.len());
        Ok(port)
    }

    /// Rewrites the source of an inside-to-outside packet.
    pub fn translate_outbound(&mut self, mut p: Packet, now: SimTime) -> Result<Packet, NatError> {
        let inside = p.tuple;
        let live = match self.bindings.get(&inside) {
            Some(b) if !self.is_stale(b, now) => Some(b.outside_port),
            Some(_) => {
                self.remove(&inside);
                None
            }
            None => None,
        };
        let port = match live {
            Some(port) => {
                self.bindings.get_mut(&inside).expect("live binding").last_active = now;
                port
            }
            None => self.allocate(inside, now)?,
        };
        p.tuple.src = self.external_addr;
        if inside.proto != Proto::Icmp {
            p.tuple.sport = port;
        }
        Ok(p)
    }

    /// Rewrites the destination of a reply addressed to the external address.
    pub fn translate_inbound(&mut self, mut p: Packet, now: SimTime) -> Result<Packet, NatError> {
        let t = p.tuple;
        if t.dst != self.external_addr {
            return Err(NatError::UnsolicitedInbound);
        }
        let inside = match t.proto {
            Proto::Icmp => self
                .bindings
                .values()
                .filter(|b| b.inside.proto == Proto::Icmp && b.inside.dst == t.src)
                .map(|b| b.inside)
                .min(),
            proto => self.by_port.get(&(proto, t.dport)).copied(),
        }
        .ok_or(NatError::UnsolicitedInbound)?;
        if inside.dst != t.src || inside.dport != t.sport {
            return Err(NatError::UnsolicitedInbound);
        }
        let stale = self.is_stale(&self.bindings[&inside], now);
        if stale {
            self.remove(&inside);
            return Err(NatError::UnsolicitedInbound);
        }
        self.bindings.get_mut(&inside).expect("live binding").last_active = now;
        p.tuple.dst = inside.src;
        p.tuple.dport = inside.sport;
        Ok(p)
    }

    /// Drops bindings idle for longer than the timeout; returns how many.
    pub fn expire_bindings(&mut self, now: SimTime) -> usize {
        let mut stale: Vec<FiveTuple> = self
            .bindings
            .values()
            .filter(|b| self.is_stale(b, now))
            .map(|b| b.inside)
            .collect();
        stale.sort();
        for t in &stale {
            self.remove(t);
        }
        stale.len()
    }
}
