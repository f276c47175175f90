use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use wesn_core::flops::{flops_method, FlopsMethod, FlopsParams};
use wesn_core::harness::experiment::BER_CSV_HEADER;

fn wesn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wesn"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout_of(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn flops_table_matches_library() {
    let csv = stdout_of(wesn().args(["flops-table", "--nc", "256", "--n", "2", "--mod", "4", "--neurons", "40"]));
    let p = FlopsParams { n_antennas: 2, n_subcarriers: 256, n_neurons: 40, delta: 2.0 / 7.0, kappa: 1.0, constellation_size: 4 };
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,params,flops"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), FlopsMethod::ALL.len());
    for (row, m) in rows.iter().zip(FlopsMethod::ALL) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], m.name());
        let got: f64 = fields[2].parse().unwrap();
        let want = flops_method(m, &p).unwrap().flops;
        assert!((got - want).abs() <= 1e-6 * want, "{m}: {got} vs {want}");
    }
}

#[test]
fn pa_curve_saturates() {
    let csv = stdout_of(wesn().args(["pa-curve", "--usat-db", "-6", "--points", "400", "--max-ratio", "20"]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("input_amplitude,output_amplitude"));
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(pts.len(), 400);
    assert!(pts.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1));
    let u_sat = 10f64.powf(-6.0 / 20.0);
    let last = pts.last().unwrap().1;
    assert!(last <= u_sat && last > 0.999 * u_sat, "{last} vs {u_sat}");
    // small-signal gain is one
    assert!((pts[1].1 / pts[1].0 - 1.0).abs() < 1e-6);
}

#[test]
fn bad_invocations_exit_nonzero() {
    let out = wesn().arg("no-such-command").output().unwrap();
    assert!(!out.status.success());
    let out = wesn()
        .args(["ber-sweep", "--config"])
        .arg(configs().join("smoke.conf"))
        .args(["--set", "n_antennas=0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    let out = wesn().args(["ber-sweep", "--config", "/nonexistent/x.conf"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn smoke_sweep_is_fast_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let path = dir.path().join(name);
        let start = Instant::now();
        let status = wesn()
            .args(["ber-sweep", "--config"])
            .arg(configs().join("smoke.conf"))
            .args(["--seed", "17", "--jobs", jobs, "--out"])
            .arg(&path)
            .status()
            .unwrap();
        assert!(status.success());
        assert!(start.elapsed() < Duration::from_secs(60));
        std::fs::read(&path).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "1");
    let c = run("c.csv", "4");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(BER_CSV_HEADER));
    let cols = BER_CSV_HEADER.split(',').count();
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f.len(), cols);
        let ber: f64 = f[10].parse().unwrap();
        assert!((0.0..=1.0).contains(&ber));
    }
}

#[test]
fn stm_measure_reports_buffer_capacity() {
    let csv = stdout_of(wesn().args(["stm-measure", "--system", "buffer", "--buffer", "8", "--samples", "2000", "--seed", "3"]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("m,mc_m,noise_floor"));
    let mc: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(mc.len(), 16);
    // a buffer of 8 remembers delays 1..=8 exactly
    assert!(mc[..8].iter().all(|&v| v > 0.99));
    assert!(mc[8..].iter().all(|&v| v < 0.05));
}
