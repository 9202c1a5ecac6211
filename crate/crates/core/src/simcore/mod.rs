//! Deterministic discrete-event engine and the service-chain model.
//!
//! A run is a single flow from the chain's source (client or UE) to the
//! server, through one VNF node that always performs NAT and optionally
//! hosts an IDS tap or an inline IPS. Every VNF processing stage is timed
//! on one CPU server, scaled by the placement multiplier.

pub mod event;
pub mod link;
pub mod tcp;
pub mod topology;
mod world;

use thiserror::Error;

use crate::pktmodel::{wire_size_for, SimTime, TransportKind};
use crate::ruleset::{sample_ruleset, AddressSpec, RuleSet, RuleVars};
use crate::secfn::{SecMode, ServiceDist, DEFAULT_QUEUE_CAPACITY, DEFAULT_QUEUE_ID};
use crate::trafficgen::WorkloadSpec;

pub use event::{Event, Scheduler};
pub use link::Link;
pub use tcp::{AckAction, LossSignal, TcpState};
pub use topology::{ChainPreset, ChainTopology, Node, Placement, PlacementProfile, Role};
pub use world::{simulate, DropCause, Fate, PacketRecord, RunCounters, SimOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Mean per-packet costs in microseconds for the container profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceCosts {
    pub nat_us: f64,
    pub ips_inspect_us: f64,
    pub per_rule_us: f64,
    pub ids_inspect_us: f64,
    /// GTP-U decapsulation or encapsulation at the UPF.
    pub tunnel_us: f64,
}

impl Default for ServiceCosts {
    fn default() -> Self {
        ServiceCosts {
            nat_us: 5.0,
            ips_inspect_us: 8.0,
            per_rule_us: 0.2,
            ids_inspect_us: 8.0,
            tunnel_us: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkParams {
    pub bandwidth_bps: f64,
    pub prop_delay_us: f64,
    pub buffer: Option<usize>,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            bandwidth_bps: 1e9,
            prop_delay_us: 50.0,
            buffer: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub preset: ChainPreset,
    /// `None` runs the chain with NAT only.
    pub security: Option<SecMode>,
    pub placement: Placement,
    pub profile: PlacementProfile,
    pub costs: ServiceCosts,
    pub service_dist: ServiceDist,
    pub queue_id: u16,
    /// Packets the VNF CPU queue holds, counting the one in service.
    pub queue_capacity: usize,
    pub nat_capacity: usize,
    pub nat_idle_timeout_s: f64,
    pub link: LinkParams,
    /// Charge IDS inspection to the forwarding CPU instead of its own.
    pub ids_shared_cpu: bool,
    /// Extra simulated time after the sending window for in-flight packets.
    pub drain_s: f64,
    pub rules: RuleSet,
    pub vars: RuleVars,
    /// Keep alert records in the output; counts are kept regardless.
    pub keep_alerts: bool,
}

impl SimConfig {
    pub fn new(preset: ChainPreset) -> Self {
        SimConfig {
            preset,
            security: Some(preset.default_mode()),
            placement: Placement::Container,
            profile: PlacementProfile::default(),
            costs: ServiceCosts::default(),
            service_dist: ServiceDist::Exponential,
            queue_id: DEFAULT_QUEUE_ID,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            nat_capacity: 65536,
            nat_idle_timeout_s: 30.0,
            link: LinkParams::default(),
            ids_shared_cpu: false,
            drain_s: 1.0,
            rules: sample_ruleset(),
            vars: RuleVars::default(),
            keep_alerts: true,
        }
    }

    pub fn with_security(mut self, security: Option<SecMode>) -> Self {
        self.security = security;
        self
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, m) in [("vm", self.profile.vm), ("container", self.profile.container)] {
            if !(m.is_finite() && m > 0.0) {
                return bad(format!("{name} multiplier must be > 0, got {m}"));
            }
        }
        let c = &self.costs;
        for (name, v) in [
            ("nat cost", c.nat_us),
            ("ips cost", c.ips_inspect_us),
            ("rule cost", c.per_rule_us),
            ("ids cost", c.ids_inspect_us),
            ("tunnel cost", c.tunnel_us),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.link.bandwidth_bps.is_finite() && self.link.bandwidth_bps > 0.0) {
            return bad(format!("link bandwidth must be > 0, got {}", self.link.bandwidth_bps));
        }
        if !(self.link.prop_delay_us.is_finite() && self.link.prop_delay_us >= 0.0) {
            return bad(format!("propagation delay must be >= 0, got {}", self.link.prop_delay_us));
        }
        if !(self.drain_s.is_finite() && self.drain_s >= 0.0) {
            return bad(format!("drain window must be >= 0, got {}", self.drain_s));
        }
        if !(self.nat_idle_timeout_s.is_finite() && self.nat_idle_timeout_s >= 0.0) {
            return bad(format!("NAT idle timeout must be >= 0, got {}", self.nat_idle_timeout_s));
        }
        for rule in self.rules.rules() {
            for spec in [&rule.src, &rule.dst] {
                if let AddressSpec::Var(name) = spec {
                    if !self.vars.contains(name) {
                        return bad(format!("rule sid {} uses undefined variable ${name}", rule.options.sid));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn multiplier(&self) -> f64 {
        self.profile.multiplier(self.placement)
    }

    /// Mean inline inspection time, rule matching included.
    pub fn inspection_mean_us(&self) -> f64 {
        (self.costs.ips_inspect_us + self.costs.per_rule_us * self.rules.len() as f64) * self.multiplier()
    }

    pub fn ids_inspection_mean_us(&self) -> f64 {
        (self.costs.ids_inspect_us + self.costs.per_rule_us * self.rules.len() as f64) * self.multiplier()
    }

    /// Mean VNF CPU time per forwarded packet.
    pub fn vnf_service_mean_us(&self) -> f64 {
        let m = self.multiplier();
        let mut total = self.costs.nat_us * m;
        if self.preset.is_5g() {
            total += self.costs.tunnel_us * m;
        }
        match self.security {
            Some(SecMode::Ips) => total += self.inspection_mean_us(),
            Some(SecMode::Ids) if self.ids_shared_cpu => total += self.ids_inspection_mean_us(),
            _ => {}
        }
        total
    }

    /// Packets per second the VNF CPU can serve.
    pub fn service_capacity_pps(&self) -> f64 {
        1e6 / self.vnf_service_mean_us()
    }

    /// Packets per second the slowest forward-path link can carry.
    pub fn link_capacity_pps(&self, kind: TransportKind, payload_bytes: usize) -> f64 {
        let tunneled = self.preset.is_5g();
        let bytes = wire_size_for(kind.proto(), payload_bytes, tunneled);
        self.link.bandwidth_bps / (bytes * 8) as f64
    }

    /// Bottleneck packet rate of the forward path.
    pub fn capacity_pps(&self, kind: TransportKind, payload_bytes: usize) -> f64 {
        self.service_capacity_pps().min(self.link_capacity_pps(kind, payload_bytes))
    }

    pub fn drain(&self) -> SimTime {
        SimTime::from_secs(self.drain_s)
    }
}

/// Runs one repetition with the given seed.
pub fn run_once(cfg: &SimConfig, wl: &WorkloadSpec, seed: u64) -> Result<SimOutput, ConfigError> {
    cfg.validate()?;
    wl.validate().map_err(ConfigError::Invalid)?;
    Ok(simulate(cfg, wl, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_capacities() {
        let ips = SimConfig::new(ChainPreset::Scenario2Ips);
        // 5 + 8 + 4 * 0.2
        assert!((ips.vnf_service_mean_us() - 13.8).abs() < 1e-12);
        let vm = ips.clone().with_placement(Placement::Vm);
        assert!((vm.vnf_service_mean_us() - 20.7).abs() < 1e-12);
        let ids = SimConfig::new(ChainPreset::Scenario1Ids);
        assert!((ids.vnf_service_mean_us() - 5.0).abs() < 1e-12);
        let g = SimConfig::new(ChainPreset::FivegIps);
        assert!((g.vnf_service_mean_us() - 16.8).abs() < 1e-12);
        // 540-byte frames on 1 Gbps
        let pps = ids.link_capacity_pps(TransportKind::UdpOpenLoop, 512);
        assert!((pps - 1e9 / 4320.0).abs() < 1e-6);
    }

    #[test]
    fn validation() {
        let mut c = SimConfig::new(ChainPreset::Scenario1Ids);
        assert!(c.validate().is_ok());
        c.link.bandwidth_bps = 0.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::new(ChainPreset::Scenario1Ids);
        c.profile.vm = 0.0;
        assert!(c.validate().is_err());
    }
}
