use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn nominal_csv() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/nominal.csv")
}

fn omega(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omega"))
        .args(args)
        .env_remove("OMEGA_THREADS")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let out = omega(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn table<'a>(report: &'a Value, title: &str) -> &'a Value {
    report["tables"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["title"] == title)
        .unwrap_or_else(|| panic!("no table {title}"))
}

fn cell(t: &Value, row: &str, col: &str) -> f64 {
    let j = t["columns"].as_array().unwrap().iter().position(|c| c == col).unwrap();
    let r = t["rows"].as_array().unwrap().iter().find(|r| r["name"] == row).unwrap();
    r["values"][j].as_f64().unwrap()
}

fn scalar(report: &Value, name: &str) -> f64 {
    report["scalars"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["name"] == name)
        .unwrap()["value"]
        .as_f64()
        .unwrap()
}

#[test]
fn nominal_fit_with_asymptotic_interval() {
    let path = nominal_csv();
    let p = path.to_str().unwrap();
    let r = json(&["fit", "--input", p, "--level", "nominal", "--confint", "asymptotic"]);
    let c = table(&r, "Coefficients");
    assert!((cell(c, "inter", "Estimate") - 0.8942).abs() < 0.002);
    assert!((cell(c, "p5", "Estimate") - 0.0914).abs() < 0.003);
    assert!((cell(c, "inter", "Lower") - 0.7627).abs() < 0.03);
    assert!((cell(c, "inter", "Upper") - 1.026).abs() < 0.03);
    assert_eq!(r["convergence"]["converged"], true);

    let out = omega(&["fit", "--input", p, "--level", "nominal", "--confint", "asymptotic"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Optimization converged at -40.42 after"), "{text}");
    assert!(text.contains("inter   0.8942"), "{text}");
    assert!(text.contains("method  dt"));
}

#[test]
fn every_text_number_is_in_the_json() {
    let path = nominal_csv();
    let p = path.to_str().unwrap();
    let text = String::from_utf8(omega(&["fit", "-i", p, "--confint", "asymptotic"]).stdout).unwrap();
    let r = json(&["fit", "-i", p, "--confint", "asymptotic"]);
    for row in table(&r, "Coefficients")["rows"].as_array().unwrap() {
        let name = row["name"].as_str().unwrap();
        let line = text.lines().find(|l| l.split_whitespace().next() == Some(name)).unwrap();
        let printed: Vec<f64> = line.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
        let full: Vec<f64> = row["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(printed.len(), full.len());
        for (a, b) in printed.iter().zip(&full) {
            // four significant figures
            assert!((a - b).abs() <= 5e-4 * b.abs(), "{name}: {a} vs {b}");
        }
    }
    let objective = r["convergence"]["objective"].as_f64().unwrap();
    assert!(text.contains(&format!("converged at {:.2} after", objective)));
}

#[test]
fn alpha_baseline() {
    let path = nominal_csv();
    let r = json(&["alpha", "-i", path.to_str().unwrap(), "--bootit", "200"]);
    assert!((scalar(&r, "alpha") - 0.74).abs() < 0.005);
    let t = table(&r, "Bootstrap intervals");
    assert!(cell(t, "quantile", "Lower") < cell(t, "quantile", "Upper"));
}

#[test]
fn simulation_is_byte_identical_under_a_seed() {
    let path = nominal_csv();
    let p = path.to_str().unwrap();
    let a = omega(&["simulate", "-i", p, "--seed", "42"]);
    let b = omega(&["simulate", "-i", p, "--seed", "42"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = omega(&["simulate", "-i", p, "--seed", "43"]);
    assert_ne!(a.stdout, c.stdout);
    let d = omega_core::ScoreMatrix::from_csv(a.stdout.as_slice(), omega_core::Level::Nominal).unwrap();
    assert_eq!(d.original_rows(), 12);
}

#[test]
fn influence_tables() {
    let path = nominal_csv();
    let r = json(&["influence", "-i", path.to_str().unwrap(), "--units", "6,11", "--coders", "2"]);
    let u = table(&r, "dfbeta.units");
    assert!((cell(u, "6", "inter") + 0.0791).abs() < 0.005);
    assert!((cell(u, "11", "inter") - 0.0110).abs() < 0.005);
    table(&r, "dfbeta.coders");
}

#[test]
fn thread_count_does_not_change_results() {
    let path = nominal_csv();
    let p = path.to_str().unwrap();
    let args = ["fit", "-i", p, "--confint", "bootstrap", "--bootit", "100"];
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    let mut three = args.to_vec();
    three.extend(["--threads", "3"]);
    let a = json(&one);
    let b = json(&three);
    assert_eq!(a["tables"], b["tables"]);
}

#[test]
fn laplace_posterior_with_draw_dump() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pairs.csv");
    let mut csv = String::from("c.1.1,c.2.1\n");
    for i in 0..60 {
        let x = 20.0 + 6.0 * ((i as f64) * 0.61).sin();
        csv.push_str(&format!("{:.3},{:.3}\n", x, x + ((i as f64) * 1.7).cos()));
    }
    std::fs::write(&input, csv).unwrap();
    let draws = dir.path().join("draws.csv");
    let r = json(&[
        "bayes",
        "-i",
        input.to_str().unwrap(),
        "--level",
        "ratio",
        "--dist",
        "laplace",
        "--sigma-1",
        "1",
        "--sigma.2",
        "0.1",
        "--sigma-omega",
        "0.2",
        "--draws",
        draws.to_str().unwrap(),
    ]);
    let n = r["samples"].as_u64().unwrap() as usize;
    assert!(n >= 1000);
    assert!(scalar(&r, "DIC").is_finite());
    let t = table(&r, "Coefficients");
    assert!(cell(t, "inter", "MCSE") > 0.0);
    let dump = std::fs::read_to_string(draws).unwrap();
    assert_eq!(dump.lines().next(), Some("inter,mu,sigma"));
    assert_eq!(dump.lines().count(), n + 1);
}

#[test]
fn exit_codes_and_reasons() {
    let dir = tempfile::tempdir().unwrap();
    let path = nominal_csv();
    let p = path.to_str().unwrap();

    let out = omega(&["fit"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error[config]: "), "{err}");
    assert_eq!(err.lines().count(), 1);

    assert_eq!(omega(&["fit", "-i", p, "--level", "cardinal"]).status.code(), Some(1));
    assert_eq!(omega(&["fit", "-i", p, "--method", "mle"]).status.code(), Some(1));
    assert_eq!(omega(&["fit", "-i", p, "--confint", "wald"]).status.code(), Some(1));
    assert_eq!(omega(&["bayes", "-i", p]).status.code(), Some(1));
    assert_eq!(omega(&["fit", "-i", p, "--nonsense"]).status.code(), Some(1));

    let missing = dir.path().join("absent.csv");
    let out = omega(&["fit", "-i", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[data]: "));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "c.1.1,coder2\n1,2\n2,2\n").unwrap();
    let out = omega(&["fit", "-i", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // perfect binary agreement puts ω on its upper cap; the information is singular
    let perfect = dir.path().join("perfect.csv");
    std::fs::write(&perfect, "c.1.1,c.2.1\n1,1\n2,2\n1,1\n2,2\n1,1\n2,2\n").unwrap();
    let out = omega(&["fit", "-i", perfect.to_str().unwrap(), "--confint", "asymptotic"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error[numerical]: "), "{err}");

    assert_eq!(omega(&["--help"]).status.code(), Some(0));
}

#[test]
fn report_goes_to_the_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("report.json");
    let path = nominal_csv();
    let out = omega(&[
        "fit",
        "-i",
        path.to_str().unwrap(),
        "--format",
        "json",
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert!(r["call"].as_str().unwrap().starts_with("omega fit"));
}
