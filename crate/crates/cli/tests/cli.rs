use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greenbound"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn ex4_bound_is_sqrt5_h() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("ex4");
    let out = run(&[
        "bound", "--q", "-1", "--scenario", "ex4", "--gamma", "1", "--lambda", "1", "--n", "201",
        "--out", prefix.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out);
    assert_eq!(summary["schema"], "greenbound/1");
    assert_eq!(summary["violated_nodes"].as_array().unwrap().len(), 0);
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ex4.json")).unwrap()).unwrap();
    assert_eq!(on_disk, summary);
    let (header, rows) = read_csv(&dir.path().join("ex4.csv"));
    assert_eq!(rows.len(), 201);
    let (h, b) = (col(&header, "h"), col(&header, "bound"));
    for row in &rows[1..200] {
        let h: f64 = row[h].parse().unwrap();
        let b: f64 = row[b].parse().unwrap();
        assert!((b / h - 5f64.sqrt()).abs() < 1e-8);
    }
}

#[test]
fn recurrence_ends_near_one_half() {
    let out = run(&["recurrence", "--q", "-1", "--a", "0.25", "--kmax", "200"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let b = v["b"].as_array().unwrap();
    assert_eq!(b.len(), 201);
    let last = v["last"].as_f64().unwrap();
    assert!(last > 0.5 && last - 0.5 <= 1.0 / 200.0, "{last}");
}

#[test]
fn recurrence_above_sharp_constant_is_a_condition_failure() {
    let out = run(&["recurrence", "--q", "-1", "--a", "0.3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bracket_violation_lists_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let mut body = String::from("x,value\n");
    for i in 0..=10 {
        body.push_str(&format!("{},-2000\n", i as f64 / 10.0));
    }
    std::fs::write(&v, body).unwrap();
    let out = run(&["bound", "--q", "2", "--V-file", v.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("1 2 3 4 5 6 7 8 9"), "{stderr}");
    let nodes = json(&out)["violated_nodes"].as_array().unwrap().len();
    assert_eq!(nodes, 9);
}

#[test]
fn malformed_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "q=-1\nwidth=3\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["bound", "--config", cfg.to_str().unwrap(), "--V", "const:1"],
        vec!["bound", "--q"],
        vec!["bound", "--V", "const:1"],
        vec!["bound", "--q", "-1", "--V", "sin:2"],
        vec!["bound", "--q", "-1", "--V", "const:1", "--n", "2"],
        vec!["scenario", "--scenario", "ex4", "--q", "-1", "--lambda", "1"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(3), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn non_convergence_exits_2() {
    let out = run(&["solve-bvp", "--q", "3", "--V", "const:-30", "--n", "51", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["converged"], false);
}

#[test]
fn config_file_with_command_line_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# negative exponent\nq = -1\nV = distpow:0.1,1\nn = 101\nout = res\n").unwrap();
    let out = run(&["solve-integral", "--config", cfg.to_str().unwrap(), "--n", "51"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["n"], 51);
    assert_eq!(v["converged"], true);
    let (header, rows) = read_csv(&dir.path().join("res.csv"));
    assert_eq!(header, ["x", "h", "u"]);
    assert_eq!(rows.len(), 51);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for tag in ["a", "b"] {
        let prefix = dir.path().join(tag);
        let out = run(&[
            "scenario", "--scenario", "ex4", "--q", "-1", "--lambda", "0.5", "--gamma", "0.8",
            "--n", "301", "--out", prefix.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        files.push((
            std::fs::read(dir.path().join(format!("{tag}.csv"))).unwrap(),
            std::fs::read(dir.path().join(format!("{tag}.json"))).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn identity_check_converges_at_second_order() {
    let out = run(&["identity-check", "--q", "2", "--V", "distpow:0.5,1", "--n", "101"]);
    assert_eq!(out.status.code(), Some(0));
    for r in json(&out)["reduction_factors"].as_array().unwrap() {
        assert!(r.as_f64().unwrap() > 3.5);
    }
}

#[test]
fn csv_format_on_stdout() {
    let out = run(&["recurrence", "--q", "-2", "--a", "0.1", "--kmax", "5", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,b");
    assert_eq!(lines.len(), 7);
}
