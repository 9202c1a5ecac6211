use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use secvnf_core::bench::oracle::{validate_oracle, OracleSpec};
use secvnf_core::bench::plot::{render_svg, series_from_csv};
use secvnf_core::bench::qos::{lookup_profile, profile_names, qos_check, QosMeasurement};
use secvnf_core::bench::{csv_string, run_batch, ExperimentConfig};
use secvnf_core::pktmodel::TransportKind;
use secvnf_core::ruleset::{parse_ruleset, RuleVars};
use secvnf_core::secfn::SecMode;
use secvnf_core::simcore::{ChainPreset, Placement};

#[derive(Parser)]
#[command(name = "secvnf", version, about = "Simulate IDS/IPS/NAT service chains and benchmark them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment point and write per-repetition and summary rows.
    Run(RunArgs),
    /// Run a rate sweep and write one summary row per point.
    Sweep(RunArgs),
    /// Gate measured metrics against an application QoS profile.
    QosCheck(QosArgs),
    /// Compare simulated inline-queue loss with the M/M/1/K formula.
    ValidateOracle(OracleArgs),
    /// Rule file utilities.
    Rules {
        #[command(subcommand)]
        command: RulesCommand,
    },
    /// Render a metric from sweep CSV as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum RulesCommand {
    /// Parse a rule file and print each rule in canonical form.
    Check { file: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<ChainPreset>,
    /// Security mode; a comma list runs each.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<SecMode>,
    /// Placement; a comma list runs each.
    #[arg(long, value_delimiter = ',')]
    placement: Vec<Placement>,
    #[arg(long)]
    transport: Option<TransportKind>,
    /// Mean offered packets per second.
    #[arg(long)]
    rate: Option<f64>,
    /// Comma-separated rate grid for sweeps.
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
    /// Payload bytes per packet [default: 512]
    #[arg(long)]
    payload: Option<usize>,
    /// Seconds of traffic per repetition [default: 30]
    #[arg(long)]
    duration: Option<f64>,
    /// Repetitions per point [default: 20]
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    queue_capacity: Option<usize>,
    /// Rule file replacing the built-in sample rules.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alert_log: Option<PathBuf>,
}

#[derive(Args)]
struct QosArgs {
    /// Profile name, e.g. "discrete automation" or its_backhaul.
    #[arg(long)]
    profile: String,
    #[arg(long)]
    latency_ms: Option<f64>,
    #[arg(long)]
    throughput_bps: Option<f64>,
    #[arg(long)]
    drop_pct: Option<f64>,
    /// Check every summary row of a run or sweep CSV instead.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,1.0,1.2")]
    rhos: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    k: u32,
    #[arg(long, default_value_t = 20)]
    seeds: u32,
    /// Offered packets per seed.
    #[arg(long, default_value_t = 100_000)]
    packets: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value = "throughput_bps")]
    metric: String,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Undefined(String),
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn experiment_config(a: &RunArgs, sweep: bool) -> Result<ExperimentConfig, Failure> {
    let mut c = match &a.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = a.scenario {
        c.scenario = s;
    }
    if !a.mode.is_empty() {
        c.modes = a.mode.clone();
    }
    if !a.placement.is_empty() {
        c.placements = a.placement.clone();
    }
    if let Some(t) = a.transport {
        c.transport = t;
    }
    if !a.rates.is_empty() {
        c.rates = a.rates.clone();
    }
    if let Some(r) = a.rate {
        c.rates = vec![r];
    }
    if let Some(v) = a.payload {
        c.payload_bytes = v;
    }
    if let Some(v) = a.duration {
        c.duration_s = v;
    }
    if let Some(v) = a.reps {
        c.repetitions = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.queue_capacity {
        c.queue_capacity = v;
    }
    if let Some(v) = &a.rules {
        c.rules_path = Some(v.clone());
    }
    if let Some(v) = &a.out {
        c.out = Some(v.clone());
    }
    if let Some(v) = &a.alert_log {
        c.alert_log = Some(v.clone());
    }
    if c.rates.is_empty() {
        return Err(usage(if sweep {
            "sweep needs a nonempty --rates list"
        } else {
            "run needs --rate"
        }));
    }
    if !sweep && c.rates.len() > 1 {
        return Err(usage("run takes a single rate; use sweep for a grid"));
    }
    Ok(c)
}

fn cmd_run(a: &RunArgs, sweep: bool) -> CmdResult {
    let cfg = experiment_config(a, sweep)?;
    let batch = run_batch(&cfg).map_err(|e| usage(e.to_string()))?;
    let csv = csv_string(&batch.rows(!sweep));
    match &cfg.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &cfg.alert_log {
        write(p, &batch.alert_log())?;
    }
    for p in &batch.points {
        let s = &p.summary;
        let show = |x: Option<secvnf_core::metrics::Summary>| x.map_or("n/a".to_string(), |e| format!("{:.3}", e.mean));
        eprintln!(
            "{} {} {} {} rate={} throughput_bps={} latency_us={} jitter_us={} drop_pct={}",
            p.key.scenario,
            p.key.mode,
            p.key.placement,
            p.key.transport.as_str(),
            p.key.rate_pps,
            show(s.throughput_bps),
            show(s.latency_us),
            show(s.jitter_us),
            show(s.drop_pct),
        );
    }
    Ok(())
}

fn cmd_qos(a: &QosArgs) -> CmdResult {
    let profile = lookup_profile(&a.profile)
        .ok_or_else(|| usage(format!("unknown QoS profile {:?}; known: {}", a.profile, profile_names().join(", "))))?;
    let mut checks: Vec<(String, Option<QosMeasurement>)> = Vec::new();
    if let Some(path) = &a.csv {
        let text = read(path)?;
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
            if rec.get(5) != Some("mean") {
                continue;
            }
            let cell = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok());
            let label = (0..5).map(|i| rec.get(i).unwrap_or("")).collect::<Vec<_>>().join(" ");
            let m = match (cell(7), cell(6), cell(9)) {
                (Some(lat), Some(thr), Some(drop)) => Some(QosMeasurement {
                    latency_ms: lat / 1000.0,
                    throughput_bps: thr,
                    drop_pct: drop,
                }),
                _ => None,
            };
            checks.push((label, m));
        }
        if checks.is_empty() {
            return Err(usage(format!("{}: no summary rows", path.display())));
        }
    } else {
        match (a.latency_ms, a.throughput_bps, a.drop_pct) {
            (Some(l), Some(t), Some(d)) => checks.push((
                "measurement".into(),
                Some(QosMeasurement {
                    latency_ms: l,
                    throughput_bps: t,
                    drop_pct: d,
                }),
            )),
            _ => return Err(usage("give --latency-ms, --throughput-bps and --drop-pct, or --csv")),
        }
    }
    let mut undefined = Vec::new();
    for (label, m) in &checks {
        match m {
            Some(m) => {
                let v = qos_check(m, profile);
                println!(
                    "{label}: profile={:?} {v} overall={}",
                    profile.name,
                    if v.passed() { "pass" } else { "fail" }
                );
            }
            None => {
                println!("{label}: profile={:?} undefined metric", profile.name);
                undefined.push(label.clone());
            }
        }
    }
    if undefined.is_empty() {
        Ok(())
    } else {
        Err(Failure::Undefined(format!("undefined metric in: {}", undefined.join("; "))))
    }
}

fn cmd_oracle(a: &OracleArgs) -> CmdResult {
    if a.rhos.is_empty() || a.rhos.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(usage("--rhos must be positive numbers"));
    }
    if a.k == 0 || a.seeds == 0 || a.packets == 0 {
        return Err(usage("--k, --seeds and --packets must be >= 1"));
    }
    let rows = validate_oracle(&OracleSpec {
        rhos: a.rhos.clone(),
        k: a.k,
        seeds: a.seeds,
        packets_per_seed: a.packets,
        base_seed: a.seed,
    });
    println!("rho,k,offered,simulated_loss,analytic_loss,abs_diff");
    for r in rows {
        println!(
            "{},{},{},{:.6},{:.6},{:.6}",
            r.rho,
            r.k,
            r.offered,
            r.simulated,
            r.analytic,
            r.abs_diff()
        );
    }
    Ok(())
}

fn cmd_rules_check(file: &Path) -> CmdResult {
    let text = read(file)?;
    let rs = parse_ruleset(&text, &RuleVars::default()).map_err(|e| usage(format!("{}: {e}", file.display())))?;
    for r in rs.rules() {
        println!("{r}");
    }
    eprintln!("{}: {} rules ok", file.display(), rs.len());
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> CmdResult {
    let text = read(&a.csv)?;
    let series = series_from_csv(&text, &a.metric).map_err(usage)?;
    write(&a.out, &render_svg(&series, &a.metric))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, false),
        Command::Sweep(a) => cmd_run(a, true),
        Command::QosCheck(a) => cmd_qos(a),
        Command::ValidateOracle(a) => cmd_oracle(a),
        Command::Rules {
            command: RulesCommand::Check { file },
        } => cmd_rules_check(file),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Undefined(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
