use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use secvnf_core::bench::CSV_HEADER;

fn secvnf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secvnf")).args(args).output().expect("secvnf runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK: [&str; 6] = ["--duration", "0.05", "--reps", "2", "--seed", "3"];

#[test]
fn run_writes_rep_and_summary_rows() {
    let mut args = vec!["run", "--scenario", "scenario2_ips", "--rate", "2000"];
    args.extend(QUICK);
    let o = secvnf(&args);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("scenario2_ips,ips,container,udp,2000,0,"));
    assert!(lines[3].starts_with("scenario2_ips,ips,container,udp,2000,mean,"));
    assert!(text(&o.stderr).contains("throughput_bps="));
}

#[test]
fn sweep_emits_one_summary_per_rate_and_mode() {
    let mut args = vec!["sweep", "--scenario", "scenario1_ids", "--mode", "ids,ips", "--rates", "500,1000,2000"];
    args.extend(QUICK);
    let o = secvnf(&args);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.split(',').nth(5) == Some("mean")));
    let modes: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(modes, ["ids", "ips", "ids", "ips", "ids", "ips"]);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&secvnf(&["sweep", "--rates", ""])), 1);
    assert_eq!(code(&secvnf(&["run"])), 1);
    assert_eq!(code(&secvnf(&["run", "--rate", "100", "--mode", "firewall"])), 1);
    assert_eq!(code(&secvnf(&["run", "--rate", "-5"])), 1);
    assert_eq!(code(&secvnf(&["frobnicate"])), 1);
    assert_eq!(code(&secvnf(&["qos-check", "--profile", "gaming", "--latency-ms", "1", "--throughput-bps", "1", "--drop-pct", "0"])), 1);
    assert_eq!(code(&secvnf(&["--help"])), 0);
    assert_eq!(code(&secvnf(&["--version"])), 0);
}

#[test]
fn config_file_is_read_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.conf");
    fs::write(&good, "# quick point\nscenario = fiveg_ips\ntransport = tcp\nrates = 1000\nduration = 0.05\nreps = 2\n").unwrap();
    let o = secvnf(&["run", "--config", path(&good)]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("fiveg_ips,ips,container,tcp,1000,mean,"));

    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "rates = 1000\nwarp_speed = 9\n").unwrap();
    let o = secvnf(&["run", "--config", path(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("line 2"), "{}", text(&o.stderr));
}

#[test]
fn qos_check_verdicts_and_exit_codes() {
    let o = secvnf(&["qos-check", "--profile", "discrete automation", "--latency-ms", "8", "--throughput-bps", "12e6", "--drop-pct", "0.01"]);
    assert_eq!(code(&o), 0);
    assert!(text(&o.stdout).contains("latency=pass rate=pass reliability=pass overall=pass"));

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("summary.csv");
    let header = CSV_HEADER.join(",");
    fs::write(
        &csv,
        format!(
            "{header}\nscenario2_ips,ips,container,udp,1000,mean,4096000,,,100,0,0,1,,,,,\n\
             scenario2_ips,ips,container,udp,500,mean,2048000,150,20,0,0,0,1,,,,,\n"
        ),
    )
    .unwrap();
    let o = secvnf(&["qos-check", "--profile", "process automation monitoring", "--csv", path(&csv)]);
    assert_eq!(code(&o), 2);
    let out = text(&o.stdout);
    assert!(out.contains("undefined metric"));
    assert!(out.contains("latency=pass rate=pass reliability=pass"));
}

#[test]
fn rules_check_prints_canonical_rules() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("local.rules");
    fs::write(&rules, "# local\nalert udp any any -> $HOME_NET 1000:2000 (msg:\"range\"; sid:1;)\n").unwrap();
    let o = secvnf(&["rules", "check", path(&rules)]);
    assert_eq!(code(&o), 0);
    assert!(text(&o.stdout).contains("1000:2000"));
    assert!(text(&o.stderr).contains("1 rules ok"));

    fs::write(&rules, "alert udp any any -> any any (msg:\"a\"; sid:7;)\nalert udp any any -> any any (msg:\"b\"; sid:7;)\n").unwrap();
    let o = secvnf(&["rules", "check", path(&rules)]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("line 2"), "{}", text(&o.stderr));
}

#[test]
fn custom_rules_drive_the_alert_log() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("drop.rules");
    fs::write(&rules, "drop udp any any -> $HOME_NET 80 (msg:\"no web over udp\"; sid:77;)\n").unwrap();
    let log = dir.path().join("alerts.log");
    let mut args = vec!["run", "--scenario", "scenario2_ips", "--rate", "1000", "--rules", path(&rules), "--alert-log", path(&log)];
    args.extend(QUICK);
    let o = secvnf(&args);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let summary = text(&o.stdout).lines().last().unwrap().to_string();
    assert_eq!(summary.split(',').nth(9), Some("100.000000"));
    let log = fs::read_to_string(&log).unwrap();
    assert!(log.starts_with("# scenario=scenario2_ips mode=ips"));
    assert!(log.lines().filter(|l| !l.starts_with('#')).all(|l| l.contains("|77|drop|udp|")));
}

#[test]
fn validate_oracle_and_plot() {
    let o = secvnf(&["validate-oracle", "--rhos", "1.0", "--seeds", "2", "--packets", "5000"]);
    assert_eq!(code(&o), 0);
    let out = text(&o.stdout);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "10000");
    assert_eq!(row[4], "0.090909");

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let svg = dir.path().join("sweep.svg");
    let mut args = vec!["sweep", "--rates", "500,1000", "--out", path(&csv)];
    args.extend(QUICK);
    assert_eq!(code(&secvnf(&args)), 0);
    let o = secvnf(&["plot", "--csv", path(&csv), "--metric", "latency_us", "--out", path(&svg)]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let svg = fs::read_to_string(&svg).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("scenario1_ids/ids/container/udp"));
}
