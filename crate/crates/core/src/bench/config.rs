//! Experiment configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! scenario = scenario2_ips
//! rate = 20000
//! rates = 5000, 10000, 20000
//! ```
//!
//! Every key is optional. Unknown or repeated keys are errors.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use crate::pktmodel::{TransportKind, MAX_PAYLOAD};
use crate::ruleset::parse_ruleset;
use crate::secfn::{SecMode, ServiceDist};
use crate::simcore::{ChainPreset, ConfigError, LinkParams, Placement, ServiceCosts, SimConfig};
use crate::trafficgen::WorkloadSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ChainPreset,
    /// Security modes to run; defaults to the scenario's own mode.
    pub modes: Vec<SecMode>,
    pub placements: Vec<Placement>,
    pub transport: TransportKind,
    pub rates: Vec<f64>,
    pub payload_bytes: usize,
    pub duration_s: f64,
    pub repetitions: u32,
    pub seed: u64,
    pub dport: u16,
    pub rules_path: Option<PathBuf>,
    pub queue_capacity: usize,
    pub nat_capacity: usize,
    pub nat_idle_timeout_s: f64,
    pub link: LinkParams,
    pub vm_multiplier: f64,
    pub container_multiplier: f64,
    pub costs: ServiceCosts,
    pub service_dist: ServiceDist,
    pub ids_shared_cpu: bool,
    pub drain_s: f64,
    pub out: Option<PathBuf>,
    pub alert_log: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::new(ChainPreset::Scenario1Ids);
        ExperimentConfig {
            scenario: ChainPreset::Scenario1Ids,
            modes: Vec::new(),
            placements: vec![Placement::Container],
            transport: TransportKind::UdpOpenLoop,
            rates: Vec::new(),
            payload_bytes: 512,
            duration_s: 30.0,
            repetitions: 20,
            seed: 1,
            dport: 80,
            rules_path: None,
            queue_capacity: sim.queue_capacity,
            nat_capacity: sim.nat_capacity,
            nat_idle_timeout_s: sim.nat_idle_timeout_s,
            link: sim.link,
            vm_multiplier: sim.profile.vm,
            container_multiplier: sim.profile.container,
            costs: sim.costs,
            service_dist: sim.service_dist,
            ids_shared_cpu: false,
            drain_s: sim.drain_s,
            out: None,
            alert_log: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: ToString,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {value:?}")),
    }
}

fn num<T: FromStr>(value: &str) -> Result<T, String> {
    value.parse::<T>().map_err(|_| format!("not a number: {value:?}"))
}

pub const CONFIG_KEYS: &[&str] = &[
    "scenario",
    "mode",
    "placement",
    "transport",
    "rate",
    "rates",
    "payload",
    "duration",
    "reps",
    "seed",
    "dport",
    "rules",
    "queue_capacity",
    "nat_capacity",
    "nat_idle_timeout",
    "bandwidth",
    "prop_delay_us",
    "link_buffer",
    "vm_multiplier",
    "container_multiplier",
    "nat_cost_us",
    "ips_cost_us",
    "rule_cost_us",
    "ids_cost_us",
    "tunnel_cost_us",
    "service_dist",
    "ids_shared_cpu",
    "drain",
    "out",
    "alert_log",
];

impl ExperimentConfig {
    /// Applies one setting; `key` must be one of [`CONFIG_KEYS`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "scenario" => self.scenario = v.parse()?,
            "mode" => self.modes = parse_list(v)?,
            "placement" => self.placements = parse_list(v)?,
            "transport" => self.transport = v.parse()?,
            "rate" | "rates" => self.rates = parse_list(v)?,
            "payload" => self.payload_bytes = num(v)?,
            "duration" => self.duration_s = num(v)?,
            "reps" => self.repetitions = num(v)?,
            "seed" => self.seed = num(v)?,
            "dport" => self.dport = num(v)?,
            "rules" => self.rules_path = Some(PathBuf::from(v)),
            "queue_capacity" => self.queue_capacity = num(v)?,
            "nat_capacity" => self.nat_capacity = num(v)?,
            "nat_idle_timeout" => self.nat_idle_timeout_s = num(v)?,
            "bandwidth" => self.link.bandwidth_bps = num(v)?,
            "prop_delay_us" => self.link.prop_delay_us = num(v)?,
            "link_buffer" => {
                self.link.buffer = match v {
                    "none" | "" => None,
                    n => Some(num(n)?),
                }
            }
            "vm_multiplier" => self.vm_multiplier = num(v)?,
            "container_multiplier" => self.container_multiplier = num(v)?,
            "nat_cost_us" => self.costs.nat_us = num(v)?,
            "ips_cost_us" => self.costs.ips_inspect_us = num(v)?,
            "rule_cost_us" => self.costs.per_rule_us = num(v)?,
            "ids_cost_us" => self.costs.ids_inspect_us = num(v)?,
            "tunnel_cost_us" => self.costs.tunnel_us = num(v)?,
            "service_dist" => self.service_dist = v.parse()?,
            "ids_shared_cpu" => self.ids_shared_cpu = parse_bool(v)?,
            "drain" => self.drain_s = num(v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "alert_log" => self.alert_log = Some(PathBuf::from(v)),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses the flat file format on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {line_no}: expected `key = value`")))?;
            let key = key.trim();
            if !CONFIG_KEYS.contains(&key) {
                return Err(invalid(format!("line {line_no}: unknown key {key:?}")));
            }
            if let Some(first) = seen.insert(key.to_string(), line_no) {
                return Err(invalid(format!("line {line_no}: key {key:?} already set on line {first}")));
            }
            cfg.set(key, value).map_err(|e| invalid(format!("line {line_no}: {key}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn modes_or_default(&self) -> Vec<SecMode> {
        if self.modes.is_empty() {
            vec![self.scenario.default_mode()]
        } else {
            self.modes.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.payload_bytes > MAX_PAYLOAD {
            return Err(invalid(format!("payload {} exceeds {MAX_PAYLOAD} bytes", self.payload_bytes)));
        }
        if self.placements.is_empty() {
            return Err(invalid("no placement given"));
        }
        for r in &self.rates {
            if !(r.is_finite() && *r > 0.0) {
                return Err(invalid(format!("rate must be > 0 packets/s, got {r}")));
            }
        }
        self.sim_config(self.scenario.default_mode(), self.placements[0])?.validate()?;
        self.workload(1.0).validate().map_err(ConfigError::Invalid)
    }

    pub fn sim_config(&self, mode: SecMode, placement: Placement) -> Result<SimConfig, ConfigError> {
        let mut c = SimConfig::new(self.scenario)
            .with_security(Some(mode))
            .with_placement(placement);
        c.profile.vm = self.vm_multiplier;
        c.profile.container = self.container_multiplier;
        c.costs = self.costs;
        c.service_dist = self.service_dist;
        c.queue_capacity = self.queue_capacity;
        c.nat_capacity = self.nat_capacity;
        c.nat_idle_timeout_s = self.nat_idle_timeout_s;
        c.link = self.link;
        c.ids_shared_cpu = self.ids_shared_cpu;
        c.drain_s = self.drain_s;
        c.keep_alerts = self.alert_log.is_some();
        if let Some(path) = &self.rules_path {
            let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            c.rules = parse_ruleset(&text, &c.vars).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn workload(&self, rate_pps: f64) -> WorkloadSpec {
        WorkloadSpec {
            kind: self.transport,
            rate_pps,
            payload_bytes: self.payload_bytes,
            duration_s: self.duration_s,
            repetitions: self.repetitions,
            base_seed: self.seed,
            max_packets: None,
            dport: self.dport,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_documented_key() {
        let text = "\
# sweep settings
scenario = fiveg_ips
mode = ids, ips
placement = vm,container
transport = tcp
rates = 100, 200
payload = 256
duration = 2.5
reps = 3
seed = 99
dport = 8080
rules = local.rules
queue_capacity = 64
nat_capacity = 10
nat_idle_timeout = 5
bandwidth = 1e8
prop_delay_us = 10
link_buffer = 100
vm_multiplier = 2
container_multiplier = 1.1
nat_cost_us = 4
ips_cost_us = 9
rule_cost_us = 0.1
ids_cost_us = 7
tunnel_cost_us = 2
service_dist = deterministic
ids_shared_cpu = yes
drain = 0.5
out = x.csv
alert_log = a.log
";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.scenario, ChainPreset::FivegIps);
        assert_eq!(c.modes, vec![SecMode::Ids, SecMode::Ips]);
        assert_eq!(c.placements, vec![Placement::Vm, Placement::Container]);
        assert_eq!(c.transport, TransportKind::TcpClosedLoop);
        assert_eq!(c.rates, vec![100.0, 200.0]);
        assert_eq!((c.payload_bytes, c.repetitions, c.seed, c.dport), (256, 3, 99, 8080));
        assert_eq!(c.link.buffer, Some(100));
        assert_eq!(c.service_dist, ServiceDist::Deterministic);
        assert!(c.ids_shared_cpu);
        assert_eq!(c.costs.tunnel_us, 2.0);
        let keys: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .filter_map(|l| l.split_once('=').map(|(k, _)| k.trim()))
            .collect();
        assert_eq!(keys.len(), CONFIG_KEYS.len() - 1, "rate and rates share a slot");
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        let e = ExperimentConfig::parse("rate = 5\nspeed = 3\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = ExperimentConfig::parse("rate = 5\nrate = 6\n").unwrap_err();
        assert!(e.to_string().contains("already set on line 1"), "{e}");
        assert!(ExperimentConfig::parse("rate 5\n").is_err());
        assert!(ExperimentConfig::parse("reps = many\n").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.rates = vec![-1.0];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.link.bandwidth_bps = 0.0;
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            repetitions: 0,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
