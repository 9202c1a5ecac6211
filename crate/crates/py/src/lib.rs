//! Python bindings: rule parsing and matching, NAT, the chain simulator
//! and the statistics helpers.

use std::str::FromStr;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use secvnf_core::bench::oracle::{mm1k_loss as core_mm1k_loss, validate_oracle as core_validate_oracle, OracleSpec};
use secvnf_core::bench::qos::{lookup_profile, qos_check as core_qos_check, QosMeasurement};
use secvnf_core::metrics::{confidence_interval as core_ci, trace_metrics, MetricsSummary, Summary};
use secvnf_core::natfn::NatTable as CoreNat;
use secvnf_core::pktmodel::{wire_size_for, Address, CidrBlock, FiveTuple, Packet, Proto, SimTime, TransportKind};
use secvnf_core::ruleset::{
    match_packet, parse_rule, parse_ruleset, sample_ruleset, serialize_rule, FlowState, Rule as CoreRule,
    RuleSet as CoreRuleSet, RuleVars,
};
use secvnf_core::secfn::SecMode;
use secvnf_core::simcore::{ChainPreset, Placement, SimConfig};
use secvnf_core::trafficgen::{run_experiment, WorkloadSpec};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(value_err)
}

fn proto(s: &str) -> PyResult<Proto> {
    match s.to_ascii_lowercase().as_str() {
        "tcp" => Ok(Proto::Tcp),
        "udp" => Ok(Proto::Udp),
        "icmp" => Ok(Proto::Icmp),
        other => Err(value_err(format!("unknown protocol {other:?}"))),
    }
}

fn kind_for(p: Proto) -> TransportKind {
    if p == Proto::Tcp {
        TransportKind::TcpClosedLoop
    } else {
        TransportKind::UdpOpenLoop
    }
}

fn tuple(p: &str, src: &str, sport: u16, dst: &str, dport: u16) -> PyResult<FiveTuple> {
    Ok(FiveTuple::new(proto(p)?, parse::<Address>(src)?, sport, parse::<Address>(dst)?, dport))
}

type Endpoints = (String, u16, String, u16);

fn endpoints(t: &FiveTuple) -> Endpoints {
    (t.src.to_string(), t.sport, t.dst.to_string(), t.dport)
}

/// Bytes on the wire for a packet with the given payload.
#[pyfunction]
#[pyo3(signature = (proto_name, payload_bytes, tunneled = false))]
fn wire_size(proto_name: &str, payload_bytes: usize, tunneled: bool) -> PyResult<usize> {
    Ok(wire_size_for(proto(proto_name)?, payload_bytes, tunneled))
}

/// One signature rule.
#[pyclass(frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct Rule {
    inner: CoreRule,
}

#[pymethods]
impl Rule {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_rule(text).map(|inner| Rule { inner }).map_err(value_err)
    }

    #[getter]
    fn action(&self) -> &'static str {
        self.inner.action.as_str()
    }

    #[getter]
    fn proto(&self) -> &'static str {
        self.inner.proto.as_str()
    }

    #[getter]
    fn sid(&self) -> u32 {
        self.inner.options.sid
    }

    #[getter]
    fn msg(&self) -> String {
        self.inner.options.msg.clone()
    }

    #[getter]
    fn rev(&self) -> Option<u32> {
        self.inner.options.rev
    }

    #[getter]
    fn priority(&self) -> Option<u32> {
        self.inner.options.priority
    }

    #[getter]
    fn classtype(&self) -> Option<String> {
        self.inner.options.classtype.clone()
    }

    #[getter]
    fn flow(&self) -> Vec<&'static str> {
        self.inner.options.flow.iter().flatten().map(|f| f.as_str()).collect()
    }

    fn serialize(&self) -> String {
        serialize_rule(&self.inner)
    }

    fn __str__(&self) -> String {
        serialize_rule(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Rule.parse({:?})", serialize_rule(&self.inner))
    }
}

/// Rules in file order together with the variables they refer to.
#[pyclass(frozen)]
struct RuleSet {
    rules: CoreRuleSet,
    vars: RuleVars,
}

fn vars_for(home_net: Option<&str>) -> PyResult<RuleVars> {
    match home_net {
        Some(h) => Ok(RuleVars::for_home(parse::<CidrBlock>(h)?)),
        None => Ok(RuleVars::default()),
    }
}

#[pymethods]
impl RuleSet {
    #[new]
    #[pyo3(signature = (text, home_net = None))]
    fn new(text: &str, home_net: Option<&str>) -> PyResult<Self> {
        let vars = vars_for(home_net)?;
        let rules = parse_ruleset(text, &vars).map_err(value_err)?;
        Ok(RuleSet { rules, vars })
    }

    /// The four built-in sample rules.
    #[staticmethod]
    fn sample() -> Self {
        RuleSet {
            rules: sample_ruleset(),
            vars: RuleVars::default(),
        }
    }

    fn rules(&self) -> Vec<Rule> {
        self.rules.rules().iter().map(|r| Rule { inner: r.clone() }).collect()
    }

    /// Sids of the rules matching a packet on a fresh flow, in file order.
    #[pyo3(name = "match")]
    fn match_(&self, proto_name: &str, src: &str, sport: u16, dst: &str, dport: u16) -> PyResult<Vec<(u32, &'static str)>> {
        let t = tuple(proto_name, src, sport, dst, dport)?;
        let p = Packet::new(0, t, kind_for(t.proto), 0, SimTime::ZERO);
        let hits = match_packet(&self.rules, &p, &self.vars, &FlowState::new()).map_err(value_err)?;
        Ok(hits.iter().map(|(r, a)| (r.options.sid, a.as_str())).collect())
    }

    fn __len__(&self) -> usize {
        self.rules.len()
    }
}

/// Masquerading source NAT with idle expiry.
#[pyclass]
struct NatTable {
    inner: CoreNat,
}

#[pymethods]
impl NatTable {
    #[new]
    #[pyo3(signature = (external_addr, capacity = 65536, idle_timeout_s = 30.0))]
    fn new(external_addr: &str, capacity: usize, idle_timeout_s: f64) -> PyResult<Self> {
        if !(idle_timeout_s.is_finite() && idle_timeout_s >= 0.0) {
            return Err(value_err("idle_timeout_s must be >= 0"));
        }
        Ok(NatTable {
            inner: CoreNat::new(parse(external_addr)?, capacity, SimTime::from_secs(idle_timeout_s)),
        })
    }

    /// Translates an inside-to-outside packet; returns the rewritten
    /// (src, sport, dst, dport).
    #[pyo3(signature = (proto_name, src, sport, dst, dport, now_s = 0.0))]
    fn outbound(&mut self, proto_name: &str, src: &str, sport: u16, dst: &str, dport: u16, now_s: f64) -> PyResult<Endpoints> {
        let t = tuple(proto_name, src, sport, dst, dport)?;
        let now = SimTime::from_secs(now_s);
        let p = self.inner.translate_outbound(Packet::new(0, t, kind_for(t.proto), 0, now), now).map_err(value_err)?;
        Ok(endpoints(&p.tuple))
    }

    /// Translates a reply addressed to the external address back inside.
    #[pyo3(signature = (proto_name, src, sport, dst, dport, now_s = 0.0))]
    fn inbound(&mut self, proto_name: &str, src: &str, sport: u16, dst: &str, dport: u16, now_s: f64) -> PyResult<Endpoints> {
        let t = tuple(proto_name, src, sport, dst, dport)?;
        let now = SimTime::from_secs(now_s);
        let p = self.inner.translate_inbound(Packet::new(0, t, kind_for(t.proto), 0, now), now).map_err(value_err)?;
        Ok(endpoints(&p.tuple))
    }

    fn expire(&mut self, now_s: f64) -> usize {
        self.inner.expire_bindings(SimTime::from_secs(now_s))
    }

    #[getter]
    fn live_bindings(&self) -> usize {
        self.inner.live_bindings()
    }

    fn free_ports(&self, proto_name: &str) -> PyResult<usize> {
        Ok(self.inner.free_ports(proto(proto_name)?))
    }
}

fn put_summary(d: &Bound<'_, PyDict>, name: &str, s: Option<Summary>) -> PyResult<()> {
    d.set_item(name, s.map(|s| s.mean))?;
    d.set_item(format!("{name}_hw"), s.and_then(|s| s.half_width))
}

/// Runs one experiment point and returns its summary plus per-repetition
/// metrics. `mode` is "ids", "ips" or "none"; the scenario default applies
/// when omitted.
#[pyfunction]
#[pyo3(signature = (
    scenario, rate_pps, mode = None, placement = "container", transport = "udp",
    duration_s = 1.0, reps = 2, payload_bytes = 512, seed = 1, queue_capacity = None
))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    scenario: &str,
    rate_pps: f64,
    mode: Option<&str>,
    placement: &str,
    transport: &str,
    duration_s: f64,
    reps: u32,
    payload_bytes: usize,
    seed: u64,
    queue_capacity: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = SimConfig::new(parse::<ChainPreset>(scenario)?).with_placement(parse::<Placement>(placement)?);
    match mode {
        Some("none") => cfg = cfg.with_security(None),
        Some(m) => cfg = cfg.with_security(Some(parse::<SecMode>(m)?)),
        None => {}
    }
    if let Some(k) = queue_capacity {
        cfg.queue_capacity = k;
    }
    cfg.keep_alerts = false;
    let mut wl = WorkloadSpec::new(parse::<TransportKind>(transport)?, rate_pps);
    wl.duration_s = duration_s;
    wl.repetitions = reps;
    wl.payload_bytes = payload_bytes;
    wl.base_seed = seed;
    let traces = py.detach(|| run_experiment(&cfg, &wl)).map_err(value_err)?;

    let out = PyDict::new(py);
    let s = MetricsSummary::from_traces(&traces);
    out.set_item("n", s.n)?;
    put_summary(&out, "throughput_bps", s.throughput_bps)?;
    put_summary(&out, "latency_us", s.latency_us)?;
    put_summary(&out, "jitter_us", s.jitter_us)?;
    put_summary(&out, "drop_pct", s.drop_pct)?;
    let rows = traces
        .iter()
        .map(|t| {
            let m = trace_metrics(t);
            let d = PyDict::new(py);
            d.set_item("rep", t.rep)?;
            d.set_item("seed", t.seed)?;
            d.set_item("sent", m.sent)?;
            d.set_item("delivered", m.delivered)?;
            d.set_item("throughput_bps", m.throughput_bps)?;
            d.set_item("latency_us", m.latency_us)?;
            d.set_item("jitter_us", m.jitter_us)?;
            d.set_item("drop_pct", m.drop_pct)?;
            d.set_item("overflow_drops", m.overflow_drops)?;
            d.set_item("alerts", t.counters.alerts)?;
            d.set_item("trace_hash", t.trace_hash)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    out.set_item("reps", rows)?;
    Ok(out)
}

/// (mean, half_width) of the Student-t interval.
#[pyfunction]
#[pyo3(signature = (samples, level = 0.95))]
fn confidence_interval(samples: Vec<f64>, level: f64) -> PyResult<(f64, f64)> {
    core_ci(&samples, level).map(|e| (e.mean, e.half_width)).map_err(value_err)
}

/// Blocking probability of an M/M/1/K queue.
#[pyfunction]
fn mm1k_loss(rho: f64, k: u32) -> f64 {
    core_mm1k_loss(rho, k)
}

/// Rows of (rho, offered, simulated, analytic) comparing the inline queue
/// with the closed form.
#[pyfunction]
#[pyo3(signature = (rhos, k = 10, seeds = 20, packets_per_seed = 100_000, seed = 1))]
fn validate_oracle(py: Python<'_>, rhos: Vec<f64>, k: u32, seeds: u32, packets_per_seed: u64, seed: u64) -> PyResult<Vec<(f64, u64, f64, f64)>> {
    if rhos.iter().any(|r| !(r.is_finite() && *r > 0.0)) || k == 0 || seeds == 0 || packets_per_seed == 0 {
        return Err(value_err("rhos must be positive and k, seeds, packets_per_seed >= 1"));
    }
    let spec = OracleSpec {
        rhos,
        k,
        seeds,
        packets_per_seed,
        base_seed: seed,
    };
    let rows = py.detach(|| core_validate_oracle(&spec));
    Ok(rows.iter().map(|r| (r.rho, r.offered, r.simulated, r.analytic)).collect())
}

/// Pass/fail per criterion against a named QoS profile.
#[pyfunction]
fn qos_check<'py>(py: Python<'py>, profile: &str, latency_ms: f64, throughput_bps: f64, drop_pct: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = lookup_profile(profile).ok_or_else(|| PyKeyError::new_err(format!("unknown QoS profile {profile:?}")))?;
    let v = core_qos_check(
        &QosMeasurement {
            latency_ms,
            throughput_bps,
            drop_pct,
        },
        p,
    );
    let d = PyDict::new(py);
    d.set_item("latency", v.latency)?;
    d.set_item("rate", v.rate)?;
    d.set_item("reliability", v.reliability)?;
    d.set_item("passed", v.passed())?;
    Ok(d)
}

#[pymodule]
fn secvnf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Rule>()?;
    m.add_class::<RuleSet>()?;
    m.add_class::<NatTable>()?;
    m.add_function(wrap_pyfunction!(wire_size, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_interval, m)?)?;
    m.add_function(wrap_pyfunction!(mm1k_loss, m)?)?;
    m.add_function(wrap_pyfunction!(validate_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(qos_check, m)?)?;
    Ok(())
}
