use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn chargeshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chargeshare")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = scenario("base");
    let o = chargeshare(&[
        "simulate",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--set",
        "sim.t_final=120",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["telemetry.csv", "events.log", "metrics.txt", "config.resolved.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("telemetry.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,robot_id,x,y,vx,vy,E,E_min,h_e,T_L,mode,active_constraint"));
    let rows = csv.lines().skip(1).count();
    // Decimation 10 at dt 0.01 over 120 s, five robots.
    assert_eq!(rows, 1200 * 5);

    let resolved = fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("t_final = 120.0"), "{resolved}");

    let metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.contains("exclusion_violation_ticks = 0"));
    assert!(metrics.contains("capacity_verdict = FEASIBLE"));

    let events = fs::read_to_string(out.join("events.log")).unwrap();
    for line in events.lines() {
        let fields: Vec<&str> = line.split(',').collect();
        assert!(fields.len() >= 3, "{line}");
        assert!(fields[0].parse::<f64>().is_ok());
        assert!(["ARRIVAL", "DEPART", "EXCLUSION_VIOLATION"].contains(&fields[1]), "{line}");
    }
}

#[test]
fn capacity_verdicts_and_exit_codes() {
    let o = chargeshare(&["capacity", "-c", scenario("base").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("delta_t_cr     36.39"), "{text}");
    assert!(text.contains("FEASIBLE"));

    let o = chargeshare(&["capacity", "-c", scenario("wind_n5_overload").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("INFEASIBLE"));

    let o = chargeshare(&["capacity", "-c", scenario("wind_lowkv_n6").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("delta_t_cr     39.51"));
}

#[test]
fn overrides_change_the_verdict() {
    let cfg = scenario("wind_n5_overload");
    let o = chargeshare(&[
        "capacity",
        "-c",
        cfg.to_str().unwrap(),
        "--set",
        "capacity.n=4",
        "--set",
        "capacity.epsilon=0.27",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("delta_t_cr     41.45"));
}

#[test]
fn weak_distance_gain_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("base");
    // k_v * r0 = 0.135, so 0.1 leaves the barrier unable to bring a robot home.
    let o = chargeshare(&[
        "simulate",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
        "--set",
        "cbf.k_c=0.1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("k_c"));
}

#[test]
fn bad_inputs_exit_with_error() {
    assert_eq!(chargeshare(&["capacity", "-c", "/nonexistent.toml"]).status.code(), Some(1));
    let cfg = scenario("base");
    let c = cfg.to_str().unwrap();
    assert_eq!(chargeshare(&["capacity", "-c", c, "--set", "cbf.no_such_key=1"]).status.code(), Some(1));
    assert_eq!(chargeshare(&["capacity", "-c", c, "--set", "novalue"]).status.code(), Some(1));
    assert_eq!(chargeshare(&["sweep", "-c", c, "--n", "x,y"]).status.code(), Some(1));
}

#[test]
fn kc_reports_floor() {
    let o = chargeshare(&["kc", "-c", scenario("wind_n4").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("floor       = 0.135000"), "{text}");
    assert!(text.contains("recommended"));
}

#[test]
fn sweep_tabulates_every_pair() {
    let c = scenario("base");
    let o = chargeshare(&["sweep", "-c", c.to_str().unwrap(), "--n", "4..6", "--v-tilde", "0.15,0.2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6, "{text}");
    assert!(rows.iter().any(|r| r.contains("36.39")));

    let o = chargeshare(&["sweep", "-c", c.to_str().unwrap(), "--n", ""]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}
