//! CSV rows for runs and sweeps.
//!
//! Per-repetition rows leave the half-width columns empty. Summary rows
//! carry `rep = mean`, the base seed and the 95% half-widths. Undefined
//! metrics are empty cells.

use std::io::Write;

use crate::metrics::{MetricsSummary, Summary, TraceMetrics};
use crate::pktmodel::TransportKind;
use crate::secfn::SecMode;
use crate::simcore::{ChainPreset, Placement};

pub const CSV_HEADER: [&str; 18] = [
    "scenario",
    "mode",
    "placement",
    "transport",
    "rate_pps",
    "rep",
    "throughput_bps",
    "latency_us",
    "jitter_us",
    "drop_pct",
    "overflow_drops",
    "nat_drops",
    "seed",
    "throughput_hw",
    "latency_hw",
    "jitter_hw",
    "drop_pct_hw",
    "wire_throughput_bps",
];

/// Identifies the experiment point a row belongs to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowKey {
    pub scenario: ChainPreset,
    pub mode: SecMode,
    pub placement: Placement,
    pub transport: TransportKind,
    pub rate_pps: f64,
}

pub type Row = Vec<String>;

fn fixed(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| fixed(x, decimals)).unwrap_or_default()
}

fn key_cells(k: &RowKey) -> Row {
    vec![
        k.scenario.as_str().to_string(),
        k.mode.as_str().to_string(),
        k.placement.as_str().to_string(),
        k.transport.as_str().to_string(),
        format!("{}", k.rate_pps),
    ]
}

pub fn rep_row(k: &RowKey, rep: u32, seed: u64, m: &TraceMetrics) -> Row {
    let mut row = key_cells(k);
    row.extend([
        rep.to_string(),
        fixed(m.throughput_bps, 3),
        opt(m.latency_us, 3),
        opt(m.jitter_us, 3),
        opt(m.drop_pct, 6),
        m.overflow_drops.to_string(),
        m.nat_drops.to_string(),
        seed.to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        fixed(m.wire_throughput_bps, 3),
    ]);
    row
}

pub fn summary_row(k: &RowKey, s: &MetricsSummary, base_seed: u64) -> Row {
    let mean = |x: Option<Summary>, d| opt(x.map(|e| e.mean), d);
    let hw = |x: Option<Summary>, d| opt(x.and_then(|e| e.half_width), d);
    let mut row = key_cells(k);
    row.extend([
        "mean".to_string(),
        mean(s.throughput_bps, 3),
        mean(s.latency_us, 3),
        mean(s.jitter_us, 3),
        mean(s.drop_pct, 6),
        fixed(s.overflow_drops, 3),
        fixed(s.nat_drops, 3),
        base_seed.to_string(),
        hw(s.throughput_bps, 3),
        hw(s.latency_us, 3),
        hw(s.jitter_us, 3),
        hw(s.drop_pct, 6),
        mean(s.wire_throughput_bps, 3),
    ]);
    row
}

pub fn write_csv<W: Write>(w: W, rows: &[Row]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "\
scenario,mode,placement,transport,rate_pps,rep,throughput_bps,latency_us,jitter_us,drop_pct,overflow_drops,nat_drops,seed,throughput_hw,latency_hw,jitter_hw,drop_pct_hw,wire_throughput_bps
scenario2_ips,ips,vm,udp,1500.5,0,136533.333,200.000,,10.000000,3,0,77,,,,,144000.000
scenario2_ips,ips,vm,udp,1500.5,mean,136533.333,200.000,,10.000000,3.000,0.000,5,0.500,,,,144000.000
";

    #[test]
    fn golden_rows() {
        let key = RowKey {
            scenario: ChainPreset::Scenario2Ips,
            mode: SecMode::Ips,
            placement: Placement::Vm,
            transport: TransportKind::UdpOpenLoop,
            rate_pps: 1500.5,
        };
        let m = TraceMetrics {
            throughput_bps: 136_533.333_333_333_34,
            latency_us: Some(200.0),
            jitter_us: None,
            drop_pct: Some(10.0),
            wire_throughput_bps: 144_000.0,
            sent: 100,
            delivered: 90,
            overflow_drops: 3,
            nat_drops: 0,
        };
        let s = MetricsSummary {
            n: 1,
            throughput_bps: Some(Summary { mean: m.throughput_bps, half_width: Some(0.5) }),
            latency_us: Some(Summary { mean: 200.0, half_width: None }),
            jitter_us: None,
            drop_pct: Some(Summary { mean: 10.0, half_width: None }),
            wire_throughput_bps: Some(Summary { mean: 144_000.0, half_width: None }),
            overflow_drops: 3.0,
            nat_drops: 0.0,
        };
        let rows = vec![rep_row(&key, 0, 77, &m), summary_row(&key, &s, 5)];
        assert_eq!(csv_string(&rows), GOLDEN);
        assert!(rows.iter().all(|r| r.len() == CSV_HEADER.len()));
    }
}
