//! Discrete-event simulator and benchmark harness for software IDS/IPS and
//! NAT functions in client-server and 5G user-plane service chains.

pub mod metrics;
pub mod natfn;
pub mod pktmodel;
pub mod ruleset;
pub mod secfn;
pub mod simcore;
pub mod trafficgen;
pub mod bench;
