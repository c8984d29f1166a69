use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn gcomp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcomp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_GRID: &str = r#"
seed = 11
[simulate]
n = [200]
iterations = 4
truth_sample = 2000
"#;

#[test]
fn simulate_same_seed_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "sim.toml", SMALL_GRID);
    for (out, workers) in [("a.json", "1"), ("b.json", "3")] {
        let o = gcomp(
            dir.path(),
            &[
                "simulate",
                "--config",
                "sim.toml",
                "--out",
                out,
                "--workers",
                workers,
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
    let a = fs::read(dir.path().join("a.json")).unwrap();
    let b = fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);

    let doc = json(&dir.path().join("a.json"));
    assert_eq!(doc["config"]["seed"], 11);
    let results = doc["results"].as_array().unwrap();
    assert_eq!(results.len(), 4, "2 estimators x 2 plans");
    for r in results {
        assert_eq!(r["iterations"], 4);
        for key in ["truth", "bias", "ese", "ase", "ser", "coverage", "failed"] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
    }

    let o = gcomp(
        dir.path(),
        &[
            "simulate", "--config", "sim.toml", "--out", "c.json", "--seed", "12",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_ne!(a, fs::read(dir.path().join("c.json")).unwrap());
}

#[test]
fn single_iteration_reports_missing_ese() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "sim.toml", SMALL_GRID);
    let o = gcomp(
        dir.path(),
        &[
            "simulate",
            "--config",
            "sim.toml",
            "--out",
            "one.json",
            "--iterations",
            "1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = json(&dir.path().join("one.json"));
    assert_eq!(doc["config"]["simulate"]["iterations"], 1);
    for r in doc["results"].as_array().unwrap() {
        assert!(r["ese"].is_null());
        assert!(r["ser"].is_null());
    }

    let o = gcomp(
        dir.path(),
        &[
            "simulate",
            "--config",
            "sim.toml",
            "--out",
            "one.csv",
            "--iterations",
            "1",
            "--format",
            "csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("one.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(
        lines.next().unwrap(),
        "n,estimator,plan,truth,bias,ese,ase,ser,coverage,failed,iterations"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[5], "", "ESE cell is empty");
}

#[test]
fn contrast_equals_difference_of_separate_runs() {
    let dir = TempDir::new().unwrap();
    let data = r#"data = { simulated = { n = 800, seed = 21 } }"#;
    let run = |name: &str, body: &str| {
        write(
            dir.path(),
            &format!("{name}.toml"),
            &format!("[estimate]\n{data}\n{body}\n"),
        );
        let o = gcomp(
            dir.path(),
            &[
                "estimate",
                "--config",
                &format!("{name}.toml"),
                "--out",
                &format!("{name}.json"),
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        json(&dir.path().join(format!("{name}.json")))
    };
    let a = run("a", r#"plan = "always""#);
    let b = run("b", r#"plan = "never""#);
    let c = run("c", "plan = \"always\"\ncontrast = \"never\"");

    let mu_a = a["estimate"]["mu_hat"].as_f64().unwrap();
    let mu_b = b["estimate"]["mu_hat"].as_f64().unwrap();
    let diff = c["contrast"]["difference"]["estimate"].as_f64().unwrap();
    assert!(
        (diff - (mu_a - mu_b)).abs() < 1e-6,
        "{diff} vs {}",
        mu_a - mu_b
    );
    assert!(c["contrast"]["difference"]["se"].as_f64().unwrap() > 0.0);
    assert_eq!(c["comparison"]["mu_hat"], b["estimate"]["mu_hat"]);
}

#[test]
fn non_monotone_censoring_is_a_validation_error_naming_the_unit() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "d.csv",
        "L0_x,A0,C1,Y1,L1_x,A1,C2,Y2\n\
         1,1,0,0,1,1,0,1\n\
         0,0,1,,,,0,1\n",
    );
    write(
        dir.path(),
        "e.toml",
        r#"
[estimate]
data = { csv = { path = "d.csv" } }
plan = "always"
[[estimate.design]]
terms = [{ kind = "intercept" }]
[[estimate.design]]
terms = [{ kind = "intercept" }]
"#,
    );
    let o = gcomp(
        dir.path(),
        &["estimate", "--config", "e.toml", "--out", "r.json"],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("unit 1"), "{}", stderr(&o));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn single_period_saturated_model_is_standardization() {
    let dir = TempDir::new().unwrap();
    // (l, a, y) cells with known counts
    let cells = [
        (0, 0, 0, 30),
        (0, 0, 1, 10),
        (0, 1, 0, 12),
        (0, 1, 1, 18),
        (1, 0, 0, 8),
        (1, 0, 1, 12),
        (1, 1, 0, 5),
        (1, 1, 1, 25),
    ];
    let mut csv = String::from("L0_x,A0,C1,Y1\n");
    for (l, a, y, count) in cells {
        for _ in 0..count {
            csv.push_str(&format!("{l},{a},0,{y}\n"));
        }
    }
    write(dir.path(), "d.csv", &csv);
    write(
        dir.path(),
        "e.toml",
        r#"
[estimate]
data = { csv = { path = "d.csv" } }
plan = "always"
[[estimate.design]]
terms = [
  { kind = "intercept" },
  { kind = "treatment", time = 0 },
  { kind = "covariate", time = 0, name = "x" },
  { kind = "interaction", left = { kind = "treatment", time = 0 }, right = { kind = "covariate", time = 0, name = "x" } },
]
"#,
    );
    let o = gcomp(
        dir.path(),
        &["estimate", "--config", "e.toml", "--out", "r.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let n0 = 30.0 + 10.0 + 12.0 + 18.0;
    let n1 = 8.0 + 12.0 + 5.0 + 25.0;
    let expected = (n0 * (18.0 / 30.0) + n1 * (25.0 / 30.0)) / (n0 + n1);
    let mu = json(&dir.path().join("r.json"))["estimate"]["mu_hat"]
        .as_f64()
        .unwrap();
    assert!((mu - expected).abs() < 1e-8, "{mu} vs {expected}");
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("unknown top-level key", "sed = 3\n"),
        (
            "unknown section key",
            "[simulate]\nn = [100]\niteration = 5\n",
        ),
        (
            "natural course is not simulated",
            "[simulate]\nplans = [\"natural_course\"]\n",
        ),
        ("empty grid", "[simulate]\nn = []\n"),
        ("wrong type", "seed = \"seven\"\n"),
    ];
    for (what, text) in cases {
        write(dir.path(), "bad.toml", text);
        let o = gcomp(
            dir.path(),
            &["simulate", "--config", "bad.toml", "--out", "x.json"],
        );
        assert_eq!(code(&o), 2, "{what}: {}", stderr(&o));
        assert!(stderr(&o).contains("config error"), "{what}");
    }

    // estimator/plan combinations and designs are checked before any output
    write(
        dir.path(),
        "strat.toml",
        "[estimate]\ndata = { simulated = { n = 100, seed = 1 } }\nplan = \"natural_course\"\nestimator = \"stratified\"\n",
    );
    let o = gcomp(
        dir.path(),
        &["estimate", "--config", "strat.toml", "--out", "x.json"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    write(dir.path(), "d.csv", "L0_x,A0,C1,Y1\n1,1,0,1\n0,0,0,0\n");
    write(
        dir.path(),
        "missing.toml",
        r#"
[estimate]
data = { csv = { path = "d.csv" } }
plan = "always"
[[estimate.design]]
terms = [{ kind = "covariate", time = 0, name = "age" }]
"#,
    );
    let o = gcomp(
        dir.path(),
        &["estimate", "--config", "missing.toml", "--out", "x.json"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("age"));

    let o = gcomp(
        dir.path(),
        &["simulate", "--out", "x.json", "--workers", "0"],
    );
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn non_convergence_exits_four_and_still_writes_results() {
    let dir = TempDir::new().unwrap();
    // nobody is treated at time 0, so the stratified always-treat fit has no units
    write(
        dir.path(),
        "d.csv",
        "L0_x,A0,C1,Y1\n1,0,0,1\n0,0,0,0\n1,0,0,0\n0,0,0,1\n",
    );
    write(
        dir.path(),
        "e.toml",
        r#"
[estimate]
data = { csv = { path = "d.csv" } }
plan = "always"
estimator = "stratified"
[[estimate.design]]
terms = [{ kind = "intercept" }, { kind = "covariate", time = 0, name = "x" }]
"#,
    );
    let o = gcomp(
        dir.path(),
        &["estimate", "--config", "e.toml", "--out", "r.json"],
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let doc = json(&dir.path().join("r.json"));
    assert_eq!(doc["estimate"]["converged"], false);
    assert!(doc["estimate"]["failure"].is_string());
    assert!(doc["estimate"]["mu_hat"].is_null());
}

#[test]
fn bench_with_two_resamples_reports_with_warning() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "b.toml",
        "[estimate]\ndata = { simulated = { n = 400, seed = 8 } }\nplan = \"never\"\n[bench]\nresamples = 2\n",
    );
    let o = gcomp(
        dir.path(),
        &[
            "bench",
            "--config",
            "b.toml",
            "--out",
            "bench.json",
            "--workers",
            "2",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let doc = json(&dir.path().join("bench.json"));
    assert_eq!(doc["small_resamples"], true);
    let methods = doc["methods"].as_array().unwrap();
    let names: Vec<&str> = methods
        .iter()
        .map(|m| m["method"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        ["sandwich", "bootstrap_sequential", "bootstrap_parallel"]
    );
    assert_eq!(methods[1]["resamples"], 2);
    assert_eq!(methods[2]["workers"], 2);
    // resampling is seeded per resample, so worker count does not change the estimates
    assert_eq!(methods[1]["se"], methods[2]["se"]);
    for m in methods {
        assert!(m["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    }

    let o = gcomp(
        dir.path(),
        &[
            "bench",
            "--config",
            "b.toml",
            "--out",
            "x.json",
            "--iterations",
            "1",
        ],
    );
    assert_eq!(code(&o), 2, "one resample is a config error");
}

#[test]
fn flags_override_file_values() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "sim.toml",
        &format!("out = \"from_file.json\"\n{SMALL_GRID}"),
    );
    let o = gcomp(
        dir.path(),
        &[
            "simulate", "--config", "sim.toml", "--seed", "5", "--format", "csv", "--out",
            "flag.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!dir.path().join("from_file.json").exists());
    let text = fs::read_to_string(dir.path().join("flag.csv")).unwrap();
    assert!(text.starts_with("# config: {\"command\":\"simulate\",\"seed\":5,"));
}
