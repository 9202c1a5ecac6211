//! Throughput, latency, jitter and drop rate, with confidence intervals
//! across repetitions.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::pktmodel::SimTime;
use crate::simcore::Fate;
use crate::trafficgen::RawTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("undefined metric: {0}")]
    Undefined(&'static str),
    #[error("confidence level must be in (0, 1), got {0}")]
    BadLevel(f64),
}

/// Payload bits delivered per second of sending window.
pub fn throughput_bps(delivered: u64, payload_bytes: usize, duration_s: f64) -> f64 {
    if delivered == 0 {
        return 0.0;
    }
    (delivered as f64) * (payload_bytes as f64) * 8.0 / duration_s
}

pub fn mean_latency_us(delays_us: &[f64]) -> Result<f64, MetricError> {
    if delays_us.is_empty() {
        return Err(MetricError::Undefined("latency needs a delivered packet"));
    }
    Ok(delays_us.iter().sum::<f64>() / delays_us.len() as f64)
}

/// Mean absolute difference of consecutive delays, in receive order.
pub fn jitter_us(delays_us: &[f64]) -> Result<f64, MetricError> {
    if delays_us.len() < 2 {
        return Err(MetricError::Undefined("jitter needs two delivered packets"));
    }
    let total: f64 = delays_us.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (delays_us.len() - 1) as f64)
}

pub fn drop_pct(sent: u64, delivered: u64) -> Result<f64, MetricError> {
    if sent == 0 {
        return Err(MetricError::Undefined("drop rate needs a sent packet"));
    }
    Ok(100.0 * (sent - delivered) as f64 / sent as f64)
}

/// Sample mean and confidence half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

fn mean_and_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// `mean ± t(1 - (1 - level)/2, n - 1) · s / √n`.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<Estimate, MetricError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::BadLevel(level));
    }
    if samples.len() < 2 {
        return Err(MetricError::Undefined("confidence interval needs two samples"));
    }
    let (mean, sd) = mean_and_sd(samples);
    let t = StudentsT::new(0.0, 1.0, (samples.len() - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0);
    Ok(Estimate {
        mean,
        half_width: t * sd / (samples.len() as f64).sqrt(),
    })
}

/// Normal-approximation variant of [`confidence_interval`].
pub fn confidence_interval_z(samples: &[f64], level: f64) -> Result<Estimate, MetricError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::BadLevel(level));
    }
    if samples.len() < 2 {
        return Err(MetricError::Undefined("confidence interval needs two samples"));
    }
    let (mean, sd) = mean_and_sd(samples);
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok(Estimate {
        mean,
        half_width: z * sd / (samples.len() as f64).sqrt(),
    })
}

/// Per-repetition metrics. Latency and jitter are `None` when undefined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceMetrics {
    pub throughput_bps: f64,
    pub latency_us: Option<f64>,
    pub jitter_us: Option<f64>,
    pub drop_pct: Option<f64>,
    pub wire_throughput_bps: f64,
    pub sent: u64,
    pub delivered: u64,
    pub overflow_drops: u64,
    pub nat_drops: u64,
}

/// Delays of delivered messages in receive order.
pub fn delays_in_receive_order(t: &RawTrace) -> Vec<f64> {
    let mut d: Vec<_> = t
        .records
        .iter()
        .filter_map(|r| match r.fate {
            Fate::Delivered(at) => Some((at, r.id, (at - r.sent_at).as_micros())),
            _ => None,
        })
        .collect();
    d.sort_by_key(|&(at, id, _)| (at, id));
    d.into_iter().map(|(_, _, delay)| delay).collect()
}

/// Metrics of one repetition. Throughput counts what the receiver got
/// while the sources were sending; drop rate also credits deliveries made
/// during the drain window.
pub fn trace_metrics(t: &RawTrace) -> TraceMetrics {
    let delays = delays_in_receive_order(t);
    let sent = t.records.len() as u64;
    let delivered = delays.len() as u64;
    let window_end = SimTime::from_secs(t.duration_s);
    let in_window = t.records.iter().filter(|r| r.delivered_at().is_some_and(|at| at <= window_end)).count() as u64;
    let wire_throughput_bps = if t.duration_s > 0.0 {
        t.counters.delivered_wire_bytes as f64 * 8.0 / t.duration_s
    } else {
        0.0
    };
    TraceMetrics {
        throughput_bps: if t.duration_s > 0.0 {
            throughput_bps(in_window, t.payload_bytes, t.duration_s)
        } else {
            0.0
        },
        latency_us: mean_latency_us(&delays).ok(),
        jitter_us: jitter_us(&delays).ok(),
        drop_pct: drop_pct(sent, delivered).ok(),
        wire_throughput_bps,
        sent,
        delivered,
        overflow_drops: t.counters.overflow_drops,
        nat_drops: t.counters.nat_drops,
    }
}

/// Mean with an optional half-width; the half-width is missing when fewer
/// than two repetitions define the metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub half_width: Option<f64>,
}

fn summarize(values: impl Iterator<Item = Option<f64>>, level: f64) -> Option<Summary> {
    let v: Vec<f64> = values.flatten().collect();
    match v.len() {
        0 => None,
        1 => Some(Summary {
            mean: v[0],
            half_width: None,
        }),
        _ => confidence_interval(&v, level).ok().map(|e| Summary {
            mean: e.mean,
            half_width: Some(e.half_width),
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsSummary {
    pub n: usize,
    pub throughput_bps: Option<Summary>,
    pub latency_us: Option<Summary>,
    pub jitter_us: Option<Summary>,
    pub drop_pct: Option<Summary>,
    pub wire_throughput_bps: Option<Summary>,
    pub overflow_drops: f64,
    pub nat_drops: f64,
}

impl MetricsSummary {
    pub fn from_metrics(reps: &[TraceMetrics], level: f64) -> Self {
        let n = reps.len();
        let avg = |f: fn(&TraceMetrics) -> u64| {
            if n == 0 {
                0.0
            } else {
                reps.iter().map(f).sum::<u64>() as f64 / n as f64
            }
        };
        MetricsSummary {
            n,
            throughput_bps: summarize(reps.iter().map(|m| Some(m.throughput_bps)), level),
            latency_us: summarize(reps.iter().map(|m| m.latency_us), level),
            jitter_us: summarize(reps.iter().map(|m| m.jitter_us), level),
            drop_pct: summarize(reps.iter().map(|m| m.drop_pct), level),
            wire_throughput_bps: summarize(reps.iter().map(|m| Some(m.wire_throughput_bps)), level),
            overflow_drops: avg(|m| m.overflow_drops),
            nat_drops: avg(|m| m.nat_drops),
        }
    }

    pub fn from_traces(traces: &[RawTrace]) -> Self {
        let m: Vec<_> = traces.iter().map(trace_metrics).collect();
        Self::from_metrics(&m, 0.95)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // scipy.stats.t.ppf(0.975, df)
    const T_975_DF19: f64 = 2.093_024_054_408_263;
    const T_975_DF1: f64 = 12.706_204_736_174_698;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn throughput_examples() {
        assert!(close(throughput_bps(1000, 512, 30.0), 136_533.333_333_333_3, 1e-12));
        assert_eq!(throughput_bps(0, 512, 30.0), 0.0);
        assert_eq!(throughput_bps(1000, 512, 1.0), 4_096_000.0);
    }

    #[test]
    fn latency_examples() {
        assert_eq!(mean_latency_us(&[100.0, 200.0, 300.0]), Ok(200.0));
        assert_eq!(mean_latency_us(&[50.0]), Ok(50.0));
        assert!(mean_latency_us(&[]).is_err());
    }

    #[test]
    fn jitter_examples() {
        assert_eq!(jitter_us(&[7.0, 7.0, 7.0]), Ok(0.0));
        assert_eq!(jitter_us(&[1000.0, 3000.0, 2000.0]), Ok(1500.0));
        assert_eq!(jitter_us(&[5.0, 9.0]), Ok(4.0));
        assert!(jitter_us(&[5.0]).is_err());
    }

    #[test]
    fn drop_examples() {
        assert_eq!(drop_pct(100, 90), Ok(10.0));
        assert_eq!(drop_pct(100, 100), Ok(0.0));
        assert_eq!(drop_pct(100, 0), Ok(100.0));
        assert!(drop_pct(0, 0).is_err());
    }

    #[test]
    fn ci_zero_variance() {
        let e = confidence_interval(&[5.0; 20], 0.95).unwrap();
        assert_eq!((e.mean, e.half_width), (5.0, 0.0));
    }

    #[test]
    fn ci_unit_sd_n20() {
        // 20 samples with mean 0 and sample sd exactly 1
        let a = (19.0f64 / 20.0).sqrt();
        let s: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { a } else { -a }).collect();
        let e = confidence_interval(&s, 0.95).unwrap();
        assert!(e.mean.abs() < 1e-15);
        assert!(close(e.half_width, T_975_DF19 / 20f64.sqrt(), 1e-6), "{}", e.half_width);
    }

    #[test]
    fn ci_two_samples() {
        let e = confidence_interval(&[0.0, 2.0], 0.95).unwrap();
        assert_eq!(e.mean, 1.0);
        assert!(close(e.half_width, T_975_DF1, 1e-6), "{}", e.half_width);
        assert!(confidence_interval(&[1.0], 0.95).is_err());
        assert!(confidence_interval(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn z_interval_narrower() {
        let s = [1.0, 2.0, 4.0, 8.0];
        let t = confidence_interval(&s, 0.95).unwrap();
        let z = confidence_interval_z(&s, 0.95).unwrap();
        assert!(z.half_width < t.half_width);
        assert!(close(z.half_width / t.half_width, 1.959_963_984_540_054 / 3.182_446_305_284_263, 1e-9));
    }

    proptest! {
        #[test]
        fn scale_equivariance(d in prop::collection::vec(0.0f64..1e6, 2..50), k in -8i32..8) {
            let c = 2f64.powi(k);
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            prop_assert_eq!(mean_latency_us(&scaled).unwrap(), c * mean_latency_us(&d).unwrap());
            prop_assert_eq!(jitter_us(&scaled).unwrap(), c * jitter_us(&d).unwrap());
        }

        #[test]
        fn ci_shrinks_with_n(n in 2usize..200) {
            // alternating ±1 keeps the sample variance near 1 for every n
            let sample = |n: usize| -> Vec<f64> { (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect() };
            let var = |v: &[f64]| { let (_, sd) = mean_and_sd(v); sd * sd };
            let a = sample(n);
            let b = sample(n + 1);
            let ha = confidence_interval(&a, 0.95).unwrap().half_width / var(&a).sqrt();
            let hb = confidence_interval(&b, 0.95).unwrap().half_width / var(&b).sqrt();
            prop_assert!(hb <= ha);
        }

        #[test]
        fn drop_and_delivery_sum_to_100(sent in 1u64..1_000_000, frac in 0.0f64..=1.0) {
            let delivered = ((sent as f64) * frac) as u64;
            let d = drop_pct(sent, delivered).unwrap();
            let delivered_pct = 100.0 * delivered as f64 / sent as f64;
            prop_assert!((d + delivered_pct - 100.0).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&d));
        }
    }
}
