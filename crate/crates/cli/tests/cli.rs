use std::process::{Command, Output};

use serde_json::Value;

fn fbq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbq")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const K1: [&str; 10] = ["--lambda", "2", "--nu1", "5", "--nu2", "1", "--q", "0.1", "--speeds", "0,1"];

#[test]
fn solve_single_example() {
    let mut args = vec!["solve-single"];
    args.extend(K1);
    let v = json(&fbq(&args));
    assert!((v["L"].as_f64().unwrap() - 1.266667).abs() < 1e-6);
    for key in ["L1", "L2", "p", "tail_mass", "energy_rate", "boundary"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    // 12 significant digits
    let text = String::from_utf8(fbq(&args).stdout).unwrap();
    assert!(text.contains("\"L\": 1.26666666667,"), "{text}");
}

#[test]
fn unstable_model_exits_two() {
    let out = fbq(&["solve-single", "--lambda", "4", "--nu1", "5", "--nu2", "1", "--q", "0.1", "--speeds", "0,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("must be below 1"));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_input_exits_two() {
    assert_eq!(fbq(&["solve-single", "--lambda", "1", "--bogus", "3"]).status.code(), Some(2));
    assert_eq!(fbq(&["solve-multi", "--model", "/nonexistent/model.json"]).status.code(), Some(2));
    assert_eq!(fbq(&["solve-single", "--lambda", "1", "--nu1", "5"]).status.code(), Some(2));
    assert_eq!(fbq(&["reproduce-figure", "2"]).status.code(), Some(2));
}

#[test]
fn dumped_models_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["solve-single", "--lambda", "1.3", "--nu1", "4", "--nu2", "0.7", "--q", "0.25", "--speeds", "0.1,0.4,1", "--alpha", "2.5"],
        vec!["solve-multi", "--lambda", "5", "--mu1", "1", "--mu2", "0.2", "--q", "0.1", "--m", "10", "--threshold", "4"],
        vec!["simulate", "--lambda", "1.5", "--mu1", "5", "--mu2", "1", "--mu3", "0.5", "--q1", "0.1", "--q2", "0.5"],
    ];
    for (n, case) in cases.iter().enumerate() {
        let mut args = case.clone();
        args.push("--dump-model");
        let first = fbq(&args);
        let path = dir.path().join(format!("m{n}.json"));
        std::fs::write(&path, &first.stdout).unwrap();
        let again = fbq(&[case[0], "--model", path.to_str().unwrap(), "--dump-model"]);
        assert_eq!(json(&first), json(&again));
        assert_eq!(first.stdout, again.stdout);
    }
}

#[test]
fn inline_flags_override_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, r#"{"lambda": 2, "nu1": 5, "nu2": 1, "q": 0.1, "speeds": [0, 1], "alpha": 1}"#).unwrap();
    let v = json(&fbq(&["solve-single", "--model", path.to_str().unwrap()]));
    assert!((v["L"].as_f64().unwrap() - 1.266667).abs() < 1e-6);
    let v = json(&fbq(&["solve-single", "--model", path.to_str().unwrap(), "--lambda", "1", "--dump-model"]));
    assert_eq!(v["lambda"].as_f64(), Some(1.0));
}

#[test]
fn figure4_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("fig4.csv");
    let out = fbq(&["reproduce-figure", "4", "--out", csv_path.to_str().unwrap()]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["x", "series", "value"]);
    let rows: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[2].parse().unwrap())
        })
        .collect();
    let best = rows.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!((best.0 - 0.6).abs() < 1e-9);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fig4.json")).unwrap()).unwrap();
    assert_eq!(meta["figure"], 4);
    assert!(meta["parameters"]["sweep"]["grid"].is_array());
}

#[test]
fn simulate_is_seeded() {
    let mut args = vec!["simulate", "--jobs", "50000"];
    args.extend(K1);
    let a = json(&fbq(&args));
    let b = json(&fbq(&args));
    assert_eq!(a, b);
    assert_eq!(a["seed"], 42);
    args.extend(["--seed", "7"]);
    let c = json(&fbq(&args));
    assert_ne!(a["L"], c["L"]);
}

#[test]
fn parallel_sweep_matches_serial() {
    let args = ["optimize-threshold", "--lambda", "5", "--mu1", "1", "--mu2", "0.2", "--q", "0.1", "--m", "10", "--c2", "0.5"];
    let serial = json(&fbq(&args));
    let mut par = args.to_vec();
    par.extend(["--parallel", "4"]);
    assert_eq!(serial, json(&fbq(&par)));
    assert_eq!(serial["best_k"], 3);
}

#[test]
fn logging_stays_off_stdout() {
    let mut args = vec!["solve-single"];
    args.extend(K1);
    let out = Command::new(env!("CARGO_BIN_EXE_fbq")).args(&args).env("FBQ_LOG", "debug").output().unwrap();
    json(&out);
}

#[test]
fn validate_reports_each_check() {
    let out = fbq(&["validate", "--lambda", "1.5", "--mu1", "1", "--mu2", "0.5", "--q", "0.3", "--m", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["stability", "root count", "normalization", "idle servers", "chain oracle"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("PASS {name}:"))), "{text}");
    }
    let mut args = vec!["validate"];
    args.extend(K1);
    let text = String::from_utf8(fbq(&args).stdout).unwrap();
    assert!(text.contains("PASS closed form vs general"));
    let out = fbq(&["validate", "--lambda", "5", "--mu1", "1", "--mu2", "0.2", "--q", "0.9", "--m", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("FAIL stability"));
}

#[test]
fn compare_policies_orders_baselines() {
    let v = json(&fbq(&["compare-policies", "--lambda", "2.1", "--nu1", "5", "--nu2", "1", "--q", "0.1"]));
    let (fcfs, las, fb) = (v["FCFS"].as_f64().unwrap(), v["LAS"].as_f64().unwrap(), v["FB-ph2"].as_f64().unwrap());
    assert!(fcfs > las && las > fb);
    assert!((fcfs - 2.537).abs() < 1e-3);
}

#[test]
fn optimize_speeds_reports_profile() {
    let v = json(&fbq(&[
        "optimize-speeds", "--lambda", "2.5", "--nu1", "5", "--nu2", "1", "--q", "0.1", "--speeds", "0,0.5,1", "--alpha", "2",
        "--c2", "20",
    ]));
    let s = v["speeds"].as_array().unwrap();
    assert_eq!(s.len(), 3);
    assert!((s[1].as_f64().unwrap() - 0.6).abs() <= 0.05);
    assert!(v["curve"].as_array().unwrap().is_empty());
}
