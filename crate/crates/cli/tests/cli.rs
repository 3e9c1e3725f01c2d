use std::fs;
use std::process::{Command, Output};

fn qtangent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtangent"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn semicircle_density_csv() {
    let o = qtangent(&["density", "--process", "qnormal", "--q", "0", "--grid", "-2:2:401"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,pdf"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (x, p) = l.split_once(',').unwrap();
            (x.parse().unwrap(), p.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 401);
    let (x, p) = rows[200];
    assert_eq!(x, 0.0);
    assert!((p - std::f64::consts::FRAC_1_PI).abs() < 1e-10);
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn density_json_envelope() {
    let o = qtangent(&[
        "density", "--process", "qou", "--q", "0.5", "--t1", "0", "--t2", "0.3", "--y1", "-0.4", "--grid", "-1:1:5",
        "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["tool"], "qtangent");
    assert_eq!(v["command"], "density");
    assert!(v["version"].is_string());
    assert_eq!(v["result"]["pdf"].as_array().unwrap().len(), 5);
}

#[test]
fn simulate_writes_trajectories_within_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "simulate", "--process", "qbm", "--q", "0.95", "--t0", "0", "--t1", "4", "--steps", "2000", "--paths", "3",
        "--seed", "7", "--out-dir", out,
    ];
    let o = qtangent(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 3);
    let mut first = Vec::new();
    for (k, f) in files.iter().enumerate() {
        let text = fs::read_to_string(f).unwrap();
        if k == 0 {
            first = text.clone().into_bytes();
        }
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,value"));
        let mut n = 0;
        for l in lines {
            let (t, w) = l.split_once(',').unwrap();
            let (t, w): (f64, f64) = (t.parse().unwrap(), w.parse().unwrap());
            assert!(w.abs() <= 2.0 * (t / 0.05).sqrt() * (1.0 + 1e-12), "{t} {w}");
            n += 1;
        }
        assert_eq!(n, 2001);
    }
    // same argv, same seed, one worker thread: byte-identical files
    let dir2 = tempfile::tempdir().unwrap();
    let mut args2 = args.to_vec();
    let out2 = dir2.path().to_str().unwrap();
    *args2.last_mut().unwrap() = out2;
    args2.extend(["--threads", "1"]);
    let o = qtangent(&args2);
    assert_eq!(o.status.code(), Some(0));
    let again = fs::read(dir2.path().join(files[0].file_name().unwrap())).unwrap();
    assert_eq!(again, first);
}

#[test]
fn tangent_report_and_verdict_exit() {
    let o = qtangent(&["tangent", "--case", "qou_interior", "--q", "0", "--x", "0", "--resolution", "1001"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["result"]["case"], "qou_interior");
    assert_eq!(v["result"]["verdict"], "pass");
    assert_eq!(v["result"]["ladder"].as_array().unwrap().len(), 5);
    let o = qtangent(&[
        "tangent", "--case", "qou_interior", "--q", "0", "--x", "0", "--ladder", "0.2,0.1", "--resolution", "1001",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = qtangent(&["tangent", "--case", "qbm_interior", "--q", "0", "--x", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).trim().lines().count(), 1);
}

#[test]
fn jumps_report() {
    let o = qtangent(&[
        "jumps", "--q", "0.5", "--a", "1,2", "--paths", "40", "--steps", "100", "--seed", "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v["result"]["thresholds"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["bound"], 0.5);
}

#[test]
fn biane_inversion_matches_density() {
    let o = qtangent(&["biane", "--s", "1", "--t", "2", "--x", "1", "--grid", "0.5:3:6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y,pdf,inversion"));
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((v[1] - v[2]).abs() < 1e-4, "{l}");
    }
}

#[test]
fn verify_single_kind() {
    let o = qtangent(&["verify", "--suite", "freeprob", "--kind", "subordination", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = &v["result"]["reports"][0];
    assert_eq!(r["kind"], "subordination");
    assert_eq!(r["pass"], true);
    assert!(r["max_residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn verify_suite_exit_tracks_verdicts() {
    let o = qtangent(&["verify", "--suite", "freeprob", "--samples", "50"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let reports = v["result"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 5);
    let all = reports.iter().all(|r| r["pass"] == true);
    assert_eq!(o.status.code(), Some(if all { 0 } else { 2 }));
}

#[test]
fn validation_errors() {
    for args in [
        vec!["density", "--process", "qnormal", "--q", "1.5", "--grid", "0:1:3"],
        vec!["density", "--process", "qnormal", "--q", "0", "--grid", "1:0:3"],
        vec!["density", "--process", "qnormal", "--q", "0", "--grid", "0:1:3", "--unknown"],
        vec!["simulate", "--process", "cauchy", "--q", "0", "--t1", "1", "--steps", "10"],
        vec!["tangent", "--case", "qou_interior", "--q", "0", "--x", "0", "--ladder", "0.1,0.2"],
        vec!["jumps", "--q", "0", "--a", "-1"],
        vec!["--threads", "0", "verify"],
    ] {
        let o = qtangent(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.trim().lines().count(), 1, "{args:?}: {err}");
    }
}

#[test]
fn help_exits_zero() {
    let o = qtangent(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("simulate"));
}
