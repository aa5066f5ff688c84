use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dampwave"))
        .args(args)
        .env_remove("HOTSPOT_DW_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn escape_ex1d_is_confirmed() {
    let o = run(&["escape", "--example", "ex1d", "--epsilon", "0.02"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["example"], "ex1d");
    assert_eq!(v["escape_confirmed"], true);
}

#[test]
fn solve_difference_grid() {
    let o = run(&["solve", "--part", "difference", "--t", "40", "--dim", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,difference"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 41 * 41);
    assert!(rows.iter().all(|r| r.len() == 3 && r[2].is_finite()));
    assert!(rows.iter().any(|r| r[2] != 0.0));
}

#[test]
fn dumped_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(&["--dump-config"]);
    assert!(first.status.success());
    let path = write(dir.path(), "cfg.json", &stdout(&first));
    let second = run(&["--config", &path, "--dump-config"]);
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(stdout(&first), stdout(&second));
    let shipped = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/default.json"
    ))
    .unwrap();
    assert_eq!(shipped, stdout(&first));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let dumped = stdout(&run(&["--dump-config"]));
    let extra = dumped.replacen("\"version\": 1,", "\"version\": 1,\n  \"colour\": 3,", 1);
    let p = write(dir.path(), "extra.json", &extra);
    let o = run(&["--config", &p, "hotspots"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let old = dumped.replacen("\"version\": 1", "\"version\": 0", 1);
    let p = write(dir.path(), "old.json", &old);
    let o = run(&["--config", &p, "hotspots"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("version"), "{}", stderr(&o));

    let o = run(&["--config", &p.replace("old", "missing"), "hotspots"]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = write(dir.path(), "ok.json", &dumped);
    let o = run(&["--config", &cfg, "solve", "--t", "1", "--dim", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("initial_data.dim"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(
        run(&["solve", "--t", "1", "--part", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn output_is_deterministic_and_thread_independent() {
    let args = ["solve", "--t", "3", "--dim", "2", "--resolution", "15"];
    let a = run(&args);
    let b = run(&args);
    let mut threaded = vec!["--threads", "1"];
    threaded.extend(args);
    let c = run(&threaded);
    assert!(a.status.success() && c.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn oracle_writes_report_into_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["oracle", "--dim", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(v["dim"], 1);
    assert!(v["max_error"].as_f64().unwrap() <= 1e-3);
    assert_eq!(run(&["oracle", "--dim", "3"]).status.code(), Some(1));
}

#[test]
fn hotspots_follow_the_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "version": 1,
      "initial_data": {"dim": 1, "g": [{"center": [0.0], "radius": 0.5, "amplitude": 1.0},
                                        {"center": [0.9], "radius": 0.3, "amplitude": 0.5}]},
      "schedule": {"times": [60.0, 30.0]}
    }"#;
    let p = write(dir.path(), "c.json", cfg);
    let out = dir.path().join("o");
    let o = run(&["--config", &p, "--out", out.to_str().unwrap(), "hotspots"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("hotspots.json")).unwrap()).unwrap();
    let recs = v.as_array().unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0]["t"], 30.0);
    assert_eq!(recs[1]["hotspot_count"], 1);
    let csv = std::fs::read_to_string(out.join("hotspots.csv")).unwrap();
    assert!(csv.starts_with("t,sup_dist_to_centroid,inside_hull"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn kernel_tables() {
    let o = run(&["kernels", "--points", "3", "--max-order", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("s,family,order,k,k_deriv\n"));
    // Per s: odd 0, odd 1, even 1.
    assert_eq!(text.lines().count(), 1 + 3 * 3);
    let o = run(&[
        "kernels", "--table", "bessel", "--points", "2", "--s-min", "0",
    ]);
    let first_row = stdout(&o).lines().nth(1).unwrap().to_string();
    assert_eq!(first_row, "0.0,0,1.0");
    assert_eq!(run(&["kernels", "--table", "x"]).status.code(), Some(1));
}

#[test]
fn selftest_reports_verdicts_and_exit_codes() {
    let o = run(&["selftest", "--criteria", "1,2,3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    // A coarse rule cannot reach the decomposition tolerance.
    let o = run(&["--tol", "0.5", "selftest", "--criteria", "4"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("FAIL"));
    assert_eq!(
        run(&["selftest", "--criteria", "14"]).status.code(),
        Some(1)
    );
}
