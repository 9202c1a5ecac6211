//! Checks the inline queue against the closed-form M/M/1/K loss.

use rayon::prelude::*;

use crate::pktmodel::TransportKind;
use crate::secfn::{SecMode, ServiceDist};
use crate::simcore::{simulate, ChainPreset, SimConfig};
use crate::trafficgen::{mix_seed, WorkloadSpec};

/// Mean inspection time used by the oracle runs.
pub const ORACLE_SERVICE_US: f64 = 1000.0;

/// Blocking probability of an M/M/1/K queue with `k` places in total.
pub fn mm1k_loss(rho: f64, k: u32) -> f64 {
    if (rho - 1.0).abs() < 1e-12 {
        return 1.0 / (k as f64 + 1.0);
    }
    (1.0 - rho) * rho.powi(k as i32) / (1.0 - rho.powi(k as i32 + 1))
}

/// A chain whose only delay worth mentioning is an exponential inspection
/// step with mean [`ORACLE_SERVICE_US`] and `k` queue places.
pub fn oracle_config(k: usize) -> SimConfig {
    let mut cfg = SimConfig::new(ChainPreset::Scenario2Ips).with_security(Some(SecMode::Ips));
    cfg.costs.nat_us = 0.0;
    cfg.costs.per_rule_us = 0.0;
    cfg.costs.ips_inspect_us = ORACLE_SERVICE_US;
    cfg.service_dist = ServiceDist::Exponential;
    cfg.queue_capacity = k;
    cfg.keep_alerts = false;
    cfg
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleRow {
    pub rho: f64,
    pub k: u32,
    pub offered: u64,
    pub simulated: f64,
    pub analytic: f64,
}

impl OracleRow {
    pub fn abs_diff(&self) -> f64 {
        (self.simulated - self.analytic).abs()
    }

    pub fn rel_diff(&self) -> f64 {
        self.abs_diff() / self.analytic
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSpec {
    pub rhos: Vec<f64>,
    pub k: u32,
    pub seeds: u32,
    pub packets_per_seed: u64,
    pub base_seed: u64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            rhos: vec![0.5, 0.9, 1.0, 1.2],
            k: 10,
            seeds: 20,
            packets_per_seed: 100_000,
            base_seed: 1,
        }
    }
}

/// Pools overflow losses over all seeds for each load.
pub fn validate_oracle(spec: &OracleSpec) -> Vec<OracleRow> {
    let cfg = oracle_config(spec.k as usize);
    let jobs: Vec<(usize, u32)> = (0..spec.rhos.len())
        .flat_map(|i| (0..spec.seeds).map(move |s| (i, s)))
        .collect();
    let results: Vec<(usize, u64, u64)> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let rate = spec.rhos[i] * 1e6 / ORACLE_SERVICE_US;
            let mut wl = WorkloadSpec::new(TransportKind::UdpOpenLoop, rate);
            wl.max_packets = Some(spec.packets_per_seed);
            // long enough that the packet cap, not the clock, ends the run
            wl.duration_s = 2.0 * spec.packets_per_seed as f64 / rate + 1.0;
            let out = simulate(&cfg, &wl, mix_seed(spec.base_seed, s));
            (i, out.counters.app_messages, out.counters.overflow_drops)
        })
        .collect();
    spec.rhos
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            let (offered, lost) = results
                .iter()
                .filter(|r| r.0 == i)
                .fold((0, 0), |(o, l), r| (o + r.1, l + r.2));
            OracleRow {
                rho,
                k: spec.k,
                offered,
                simulated: lost as f64 / offered as f64,
                analytic: mm1k_loss(rho, spec.k),
            }
        })
        .collect()
}
