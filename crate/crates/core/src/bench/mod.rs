//! Experiment orchestration behind the `secvnf` command-line tool.

pub mod config;
pub mod oracle;
pub mod plot;
pub mod qos;
pub mod report;

use crate::metrics::{trace_metrics, MetricsSummary, TraceMetrics};
use crate::simcore::ConfigError;
use crate::trafficgen::run_experiment;

pub use config::ExperimentConfig;
pub use report::{csv_string, write_csv, Row, RowKey, CSV_HEADER};

/// Everything one experiment point produced.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub key: RowKey,
    pub reps: Vec<(u32, u64, TraceMetrics)>,
    pub summary: MetricsSummary,
    /// Alert log section for this point, one line per alert.
    pub alert_log: String,
}

#[derive(Clone, Debug, Default)]
pub struct BatchResult {
    pub base_seed: u64,
    pub points: Vec<PointResult>,
}

impl BatchResult {
    /// CSV rows; per-repetition rows precede each summary when asked for.
    pub fn rows(&self, with_reps: bool) -> Vec<Row> {
        let mut rows = Vec::new();
        for p in &self.points {
            if with_reps {
                for (rep, seed, m) in &p.reps {
                    rows.push(report::rep_row(&p.key, *rep, *seed, m));
                }
            }
            rows.push(report::summary_row(&p.key, &p.summary, self.base_seed));
        }
        rows
    }

    pub fn alert_log(&self) -> String {
        self.points.iter().map(|p| p.alert_log.as_str()).collect()
    }
}

/// Runs every rate × placement × mode combination in that nesting order.
pub fn run_batch(cfg: &ExperimentConfig) -> Result<BatchResult, ConfigError> {
    cfg.validate()?;
    if cfg.rates.is_empty() {
        return Err(ConfigError::Invalid("at least one rate is required".into()));
    }
    let mut points = Vec::new();
    for &rate in &cfg.rates {
        for &placement in &cfg.placements {
            for mode in cfg.modes_or_default() {
                let sim = cfg.sim_config(mode, placement)?;
                let wl = cfg.workload(rate);
                let traces = run_experiment(&sim, &wl)?;
                let key = RowKey {
                    scenario: cfg.scenario,
                    mode,
                    placement,
                    transport: cfg.transport,
                    rate_pps: rate,
                };
                let reps: Vec<_> = traces.iter().map(|t| (t.rep, t.seed, trace_metrics(t))).collect();
                let metrics: Vec<TraceMetrics> = reps.iter().map(|r| r.2).collect();
                let mut alert_log = String::new();
                if sim.keep_alerts {
                    for t in &traces {
                        alert_log.push_str(&format!(
                            "# scenario={} mode={} placement={} transport={} rate_pps={} rep={} seed={}\n",
                            key.scenario,
                            mode,
                            placement,
                            cfg.transport.as_str(),
                            rate,
                            t.rep,
                            t.seed
                        ));
                        for a in &t.alerts {
                            alert_log.push_str(&a.log_line());
                            alert_log.push('\n');
                        }
                    }
                }
                points.push(PointResult {
                    key,
                    reps,
                    summary: MetricsSummary::from_metrics(&metrics, 0.95),
                    alert_log,
                });
            }
        }
    }
    Ok(BatchResult {
        base_seed: cfg.seed,
        points,
    })
}
