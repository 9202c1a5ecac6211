//! Application QoS targets for industrial 5G use cases and the pass/fail
//! gate against measured metrics.

use std::fmt;

/// Comparisons tolerate this much rounding noise.
const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct QosProfile {
    pub name: &'static str,
    pub max_latency_ms: f64,
    pub min_rate_bps: f64,
    pub min_reliability_pct: f64,
    pub payload_class: &'static str,
}

/// Built-in targets. Where the source gives a rate range ("1 to 100
/// Mbps") the lower bound is used as the minimum.
pub const BUILTIN_PROFILES: [QosProfile; 6] = [
    QosProfile {
        name: "discrete automation",
        max_latency_ms: 10.0,
        min_rate_bps: 10e6,
        min_reliability_pct: 99.99,
        payload_class: "small to high",
    },
    QosProfile {
        name: "process automation remote control",
        max_latency_ms: 60.0,
        min_rate_bps: 1e6,
        min_reliability_pct: 99.999,
        payload_class: "small to high",
    },
    QosProfile {
        name: "process automation monitoring",
        max_latency_ms: 60.0,
        min_rate_bps: 1e6,
        min_reliability_pct: 99.9,
        payload_class: "small",
    },
    QosProfile {
        name: "electricity distribution medium voltage",
        max_latency_ms: 40.0,
        min_rate_bps: 10e6,
        min_reliability_pct: 99.9,
        payload_class: "small to high",
    },
    QosProfile {
        name: "electricity distribution high voltage",
        max_latency_ms: 5.0,
        min_rate_bps: 10e6,
        min_reliability_pct: 99.999,
        payload_class: "small",
    },
    QosProfile {
        name: "intelligent transportation system infrastructure backhaul",
        max_latency_ms: 30.0,
        min_rate_bps: 10e6,
        min_reliability_pct: 99.9999,
        payload_class: "small to high",
    },
];

fn normalize(name: &str) -> String {
    name.trim()
        .to_ascii_lowercase()
        .split(|c: char| c.is_whitespace() || c == '-' || c == '_')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// Finds a profile by name; case, spaces, hyphens and underscores are
/// interchangeable. `its_backhaul` is accepted for the transport row.
pub fn lookup_profile(name: &str) -> Option<&'static QosProfile> {
    let key = normalize(name);
    if key == "its_backhaul" || key == "its_infrastructure_backhaul" {
        return BUILTIN_PROFILES.last();
    }
    BUILTIN_PROFILES.iter().find(|p| normalize(p.name) == key)
}

pub fn profile_names() -> Vec<String> {
    BUILTIN_PROFILES.iter().map(|p| normalize(p.name)).collect()
}

/// Measured values in the units the targets use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QosMeasurement {
    pub latency_ms: f64,
    pub throughput_bps: f64,
    pub drop_pct: f64,
}

impl QosMeasurement {
    pub fn reliability_pct(&self) -> f64 {
        100.0 - self.drop_pct
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QosVerdict {
    pub latency: bool,
    pub rate: bool,
    pub reliability: bool,
}

impl QosVerdict {
    pub fn passed(&self) -> bool {
        self.latency && self.rate && self.reliability
    }
}

fn word(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

impl fmt::Display for QosVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "latency={} rate={} reliability={}",
            word(self.latency),
            word(self.rate),
            word(self.reliability)
        )
    }
}

pub fn qos_check(m: &QosMeasurement, p: &QosProfile) -> QosVerdict {
    QosVerdict {
        latency: m.latency_ms <= p.max_latency_ms + EPS,
        rate: m.throughput_bps + EPS >= p.min_rate_bps,
        reliability: m.reliability_pct() + EPS >= p.min_reliability_pct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(latency_ms: f64, throughput_bps: f64, reliability: f64) -> QosMeasurement {
        QosMeasurement {
            latency_ms,
            throughput_bps,
            drop_pct: 100.0 - reliability,
        }
    }

    #[test]
    fn discrete_automation_passes() {
        let p = lookup_profile("discrete automation").unwrap();
        let v = qos_check(&m(8.0, 12e6, 99.99), p);
        assert_eq!(v, QosVerdict { latency: true, rate: true, reliability: true });
    }

    #[test]
    fn high_voltage_latency_fails() {
        let p = lookup_profile("Electricity-Distribution high_voltage").unwrap();
        assert!(!qos_check(&m(8.0, 12e6, 100.0), p).latency);
    }

    #[test]
    fn its_reliability_fails() {
        let p = lookup_profile("ITS backhaul").unwrap();
        let v = qos_check(&m(1.0, 20e6, 99.9), p);
        assert!(!v.reliability);
        assert!(v.latency && v.rate);
    }

    #[test]
    fn unknown_profile() {
        assert!(lookup_profile("teleportation").is_none());
        assert_eq!(profile_names().len(), 6);
    }

    proptest! {
        #[test]
        fn improving_never_flips_to_fail(
            idx in 0usize..6,
            lat in 0.0f64..100.0, rate in 0.0f64..1e8, rel in 99.0f64..=100.0,
            dl in 0.0f64..50.0, dr in 0.0f64..1e7, dd in 0.0f64..1.0,
        ) {
            let p = &BUILTIN_PROFILES[idx];
            let before = qos_check(&m(lat, rate, rel), p);
            let after = qos_check(&m((lat - dl).max(0.0), rate + dr, (rel + dd).min(100.0)), p);
            prop_assert!(!before.latency || after.latency);
            prop_assert!(!before.rate || after.rate);
            prop_assert!(!before.reliability || after.reliability);
        }
    }
}
