use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn srbridge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srbridge")).current_dir(dir).args(args).output().expect("runs")
}

fn setup(config: &str, files: &[(&str, &str)]) -> TempDir {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("cfg.json"), config).unwrap();
    for (name, body) in files {
        fs::write(d.path().join(name), body).unwrap();
    }
    d
}

const GPD: &str = r#""params":{"c":1.0,"T":1.0},"prior":{"kind":"gpd","sigma":1,"mu":1,"shape":0.25}"#;

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let err = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(err.lines().last().unwrap()).unwrap()
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let d = setup(&format!(r#"{{{GPD},"simulate":{{"depth":5,"count":300}}}}"#), &[]);
    for run in ["a", "b"] {
        let out = srbridge(d.path(), &["simulate", "--config", "cfg.json", "--seed", "11", "--out", run]);
        assert!(out.status.success());
    }
    for f in ["simulate_paths.csv", "simulate_quantiles.csv"] {
        let a = fs::read(d.path().join("a").join(f)).unwrap();
        let b = fs::read(d.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let other = srbridge(d.path(), &["simulate", "--config", "cfg.json", "--seed", "12", "--out", "c"]);
    assert!(other.status.success());
    assert_ne!(fs::read(d.path().join("a/simulate_paths.csv")).unwrap(), fs::read(d.path().join("c/simulate_paths.csv")).unwrap());

    let q = fs::read_to_string(d.path().join("a/simulate_quantiles.csv")).unwrap();
    assert!(q.starts_with("# srbridge simulate depth=5 count=300 seed=11\n"));
    // the median never decreases along the time axis
    let medians: Vec<f64> = q.lines().skip(2).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(medians.len(), 33);
    assert!(medians.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn reserve_is_deterministic_and_matches_prior_without_data() {
    let d = setup(&format!(r#"{{{GPD},"observations":"obs.csv"}}"#), &[("obs.csv", "")]);
    let a = srbridge(d.path(), &["reserve", "--config", "cfg.json", "--format", "json"]);
    let b = srbridge(d.path(), &["reserve", "--config", "cfg.json", "--format", "json"]);
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["t"], 0.0);
    assert!((rows[0]["ultimate_best_estimate"].as_f64().unwrap() - 7.0 / 3.0).abs() < 1e-12);
    assert!((rows[0]["variance"].as_f64().unwrap() - 1.0 / (0.5625 * 0.5)).abs() < 1e-9);
}

#[test]
fn inverse_gaussian_prior_reserve_is_linear() {
    // GIG(-1/2, cT, gamma): the process has independent IG increments, so
    // the best estimate is paid + c (T - t) / gamma
    let cfg = r#"{"params":{"c":1.5,"T":2.0},"prior":{"kind":"gig","lambda":-0.5,"delta":3.0,"gamma":1.2},"observations":"obs.csv"}"#;
    let d = setup(cfg, &[("obs.csv", "t,paid\n0.5,0.7\n1.2,2.1\n1.9,3.3\n")]);
    let v = json(&srbridge(d.path(), &["reserve", "--config", "cfg.json", "--format", "json"]));
    for row in v.as_array().unwrap() {
        let (t, paid) = (row["t"].as_f64().unwrap(), row["paid"].as_f64().unwrap());
        let want = paid + 1.5 * (2.0 - t) / 1.2;
        let got = row["ultimate_best_estimate"].as_f64().unwrap();
        assert!((got / want - 1.0).abs() < 1e-8, "{got} vs {want}");
    }
}

#[test]
fn full_layer_recovers_the_reserve() {
    let cfg = format!(r#"{{{GPD},"observations":"obs.csv","layers":[{{"attachment":0,"payment_dates":[1.0]}}]}}"#);
    let d = setup(&cfg, &[("obs.csv", "t,paid\n0.3,0.6\n")]);
    let layer = json(&srbridge(d.path(), &["reinsure", "--config", "cfg.json", "--format", "json"]));
    let reserve = json(&srbridge(d.path(), &["reserve", "--config", "cfg.json", "--format", "json"]));
    let a = layer[0]["expected_payment"].as_f64().unwrap();
    let b = reserve[0]["reserve"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    let out = srbridge(d.path(), &["reinsure", "--config", "cfg.json"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("telescoping check ok"));
}

#[test]
fn symmetric_lines_give_symmetric_reports() {
    // k = c2 / (c lambda) = 1 with T = T*/2
    let cfg = r#"{"prior":{"kind":"gpd","sigma":1,"mu":1,"shape":0.25},
        "multiline":{"lines":{"c":1,"T_star":2,"T":1,"c2":1},"observations":["a.csv","b.csv"]}}"#;
    let d = setup(cfg, &[("a.csv", "t,paid\n0.3,0.5\n0.6,0.9\n"), ("b.csv", "t,paid\n0.3,0.2\n0.6,1.4\n")]);
    let v = json(&srbridge(d.path(), &["multiline", "--config", "cfg.json", "--format", "json"]));
    fs::write(d.path().join("cfg.json"), cfg.replace(r#"["a.csv","b.csv"]"#, r#"["b.csv","a.csv"]"#)).unwrap();
    let w = json(&srbridge(d.path(), &["multiline", "--config", "cfg.json", "--format", "json"]));
    let (r, s) = (v["reports"].as_array().unwrap(), w["reports"].as_array().unwrap());
    assert_eq!(r.len(), 4);
    for i in 0..2 {
        let u = |x: &Value| x["ultimate_best_estimate"].as_f64().unwrap();
        assert!((u(&r[2 * i]) - u(&s[2 * i + 1])).abs() < 1e-12);
        assert!((u(&r[2 * i + 1]) - u(&s[2 * i])).abs() < 1e-12);
    }
    assert!(v["correlation"]["correlation"].as_f64().unwrap().abs() <= 1.0);
}

#[test]
fn config_errors_exit_2() {
    let bad_split = r#"{"prior":{"kind":"gpd","sigma":1,"mu":1,"shape":0.25},"multiline":{"lines":{"c":1,"T_star":2,"T":2,"c2":1}}}"#;
    let unknown = &format!(r#"{{{GPD},"colour":"blue"}}"#);
    let bad_prior = r#"{"params":{"c":1.0,"T":1.0},"prior":{"kind":"gpd","sigma":-1,"mu":1,"shape":0.25}}"#;
    for (cmd, cfg) in [("multiline", bad_split), ("reserve", unknown.as_str()), ("reserve", bad_prior), ("reserve", "{")] {
        let d = setup(cfg, &[]);
        let out = srbridge(d.path(), &[cmd, "--config", "cfg.json"]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
        assert_eq!(stderr_error(&out)["error"], "config");
    }
    let d = setup("{}", &[]);
    assert_eq!(srbridge(d.path(), &["reserve"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3_with_line_number() {
    let cfg = format!(r#"{{{GPD},"observations":"obs.csv"}}"#);
    for (body, line) in [
        ("t,paid\n0.2,0.3\n0.4,oops\n", 3),
        ("t,paid\n0.2,0.3\n0.1,0.5\n", 3),
        ("t,paid\n0.2,0.3\n0.4,0.1\n", 3),
        ("t,paid\n1.5,0.3\n", 2),
        ("t,paid\n0.2,-0.1\n", 2),
    ] {
        let d = setup(&cfg, &[("obs.csv", body)]);
        let out = srbridge(d.path(), &["reserve", "--config", "cfg.json"]);
        assert_eq!(out.status.code(), Some(3), "{body}");
        let e = stderr_error(&out);
        assert_eq!(e["error"], "data");
        assert_eq!(e["line"], line, "{body}");
    }
}

#[test]
fn numerical_failure_exits_4() {
    // a tabulated prior has no mass beyond its grid, so tail ratios there
    // are undefined
    let cfg = r#"{"params":{"c":1.0,"T":1.0},"prior":{"kind":"tabulated","grid":[0.5,1,2,3],"density":[0.2,0.5,0.3,0.1]},
        "tail":{"levels":[10]}}"#;
    let d = setup(cfg, &[]);
    let out = srbridge(d.path(), &["tail", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_error(&out)["error"], "numerical");
}

#[test]
fn json_and_csv_agree() {
    let cfg = format!(r#"{{{GPD},"observations":"obs.csv","cvar":{{"t":0.8,"thresholds":[1.0,1.5]}}}}"#);
    let d = setup(&cfg, &[("obs.csv", "t,paid\n0.4,0.9\n")]);
    let v = json(&srbridge(d.path(), &["cvar", "--config", "cfg.json", "--format", "json"]));
    let csv = srbridge(d.path(), &["cvar", "--config", "cfg.json"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,threshold,cvar,quad_err"));
    for (row, line) in v.as_array().unwrap().iter().zip(lines) {
        let cvar: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(cvar, row["cvar"].as_f64().unwrap());
    }
}
