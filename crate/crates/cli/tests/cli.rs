use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn owl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owl"))
        .args(args)
        .current_dir(dir)
        .env_remove("OWL_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Non-comment lines of a CSV file.
fn table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

const TOY: &str = "x\n0.1\n0.5\n-0.3\n2.0\n1.1\n";

#[test]
fn zero_radius_fit_writes_the_closed_form_mle() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "toy.csv", TOY);
    let o = owl(
        &[
            "fit",
            "--data",
            "toy.csv",
            "--model",
            "gaussian",
            "--epsilon",
            "0",
            "--out",
            "res",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let xs = [0.1, 0.5, -0.3, 2.0, 1.1];
    let mean = xs.iter().sum::<f64>() / 5.0;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
    let p = json(&dir.path().join("res/params.json"));
    assert_eq!(p["params"]["family"], "gaussian");
    assert!((p["params"]["mean"][0].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((p["params"]["covariance"]["full"][0][0].as_f64().unwrap() - var).abs() < 1e-12);
    assert_eq!(p["config"]["version"], owl_core::VERSION);
    assert_eq!(p["config"]["args"]["epsilon"], 0.0);

    let w = table(&dir.path().join("res/weights.csv"));
    assert_eq!(w[0], ["index", "n_w", "inlier"]);
    assert_eq!(w.len(), 6);
    assert!(w[1..]
        .iter()
        .all(|r| r[1].parse::<f64>().unwrap() == 1.0 && r[2] == "true"));
    let t = table(&dir.path().join("res/trace.csv"));
    assert_eq!(t[0], ["iteration", "okl"]);
    assert!(t.len() >= 2);
    let first = fs::read_to_string(dir.path().join("res/trace.csv")).unwrap();
    assert!(first.starts_with("# config: {"));
}

#[test]
fn planted_outlier_is_flagged() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("a,b\n");
    for i in 0..19 {
        let t = i as f64 / 19.0;
        body.push_str(&format!("{},{}\n", (6.283 * t).sin() * 0.5, (6.283 * t).cos() * 0.5));
    }
    body.push_str("40,40\n");
    write(dir.path(), "d.csv", &body);
    let o = owl(
        &[
            "fit",
            "--data",
            "d.csv",
            "--model",
            "gaussian",
            "--epsilon",
            "0.1",
            "--out",
            ".",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let w = table(&dir.path().join("weights.csv"));
    assert_eq!(w[20][2], "false");
    assert!(w[20][1].parse::<f64>().unwrap() < 0.01);
}

#[test]
fn regression_uses_the_response_column() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("y,x\n");
    for i in 0..30 {
        let x = i as f64 / 10.0;
        let noise = if i % 2 == 0 { 0.05 } else { -0.05 };
        let y = if i == 7 { 100.0 } else { 1.0 + 2.0 * x + noise };
        body.push_str(&format!("{y},{x}\n"));
    }
    write(dir.path(), "r.csv", &body);
    let args = [
        "fit",
        "--data",
        "r.csv",
        "--model",
        "linear",
        "--response",
        "y",
        "--epsilon",
        "0.05",
    ];
    let o = owl(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let p = json(&dir.path().join("params.json"));
    assert!((p["params"]["coef"][0].as_f64().unwrap() - 2.0).abs() < 0.05);
    let w = table(&dir.path().join("weights.csv"));
    assert_eq!(w[8][2], "false");

    let o = owl(
        &["fit", "--data", "r.csv", "--model", "linear", "--epsilon", "0.05"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn argument_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "toy.csv", TOY);
    let o = owl(&["fit", "--data", "toy.csv", "--model", "gaussian"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&owl(&["frobnicate"], dir.path())), 2);
    assert_eq!(
        code(&owl(
            &["fit", "--data", "toy.csv", "--model", "gaussian", "--epsilon", "1.5"],
            dir.path()
        )),
        2
    );
    assert_eq!(
        code(&owl(
            &[
                "tune",
                "--data",
                "toy.csv",
                "--model",
                "gaussian",
                "--grid",
                "0.5:0.0:0.1"
            ],
            dir.path()
        )),
        2
    );
    assert_eq!(
        code(&owl(
            &["tune", "--data", "toy.csv", "--model", "gaussian", "--grid", "0:0.1"],
            dir.path()
        )),
        2
    );
    assert_eq!(code(&owl(&["verify", "--support", "7", "--eps", "0.1"], dir.path())), 2);
    assert_eq!(code(&owl(&["--version"], dir.path())), 0);

    let o = Command::new(env!("CARGO_BIN_EXE_owl"))
        .args(["verify", "--eps", "0.1", "--reps", "10"])
        .env("OWL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn data_errors_exit_3_and_fit_errors_exit_4() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        code(&owl(
            &[
                "fit",
                "--data",
                "missing.csv",
                "--model",
                "gaussian",
                "--epsilon",
                "0.1"
            ],
            dir.path()
        )),
        3
    );
    write(dir.path(), "bad.csv", "x,y\n1,2\nfoo,3\n");
    let o = owl(
        &[
            "fit",
            "--data",
            "bad.csv",
            "--model",
            "linear",
            "--response",
            "y",
            "--epsilon",
            "0.1",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
    write(dir.path(), "empty.csv", "x\n");
    assert_eq!(
        code(&owl(
            &["fit", "--data", "empty.csv", "--model", "gaussian", "--epsilon", "0.1"],
            dir.path()
        )),
        3
    );
    write(dir.path(), "sing.csv", "x,y\n1,2\n1,3\n1,4\n");
    let o = owl(
        &[
            "fit",
            "--data",
            "sing.csv",
            "--model",
            "linear",
            "--response",
            "y",
            "--epsilon",
            "0.1",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 4);
}

#[test]
fn tune_writes_the_search_table_and_default_grid() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("x\n");
    for i in 0..40 {
        body.push_str(&format!("{}\n", ((i * 37) % 40) as f64 / 20.0 - 1.0));
    }
    body.push_str("25\n30\n");
    write(dir.path(), "t.csv", &body);
    let o = owl(
        &["tune", "--data", "t.csv", "--model", "gaussian", "--restarts", "1"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("chosen epsilon: "));
    let path = dir.path().join("epsilon_search.csv");
    let text = fs::read_to_string(&path).unwrap();
    let cfg: Value = serde_json::from_str(text.lines().next().unwrap().trim_start_matches("# config: ")).unwrap();
    let grid: Vec<f64> = cfg["resolved"]["grid"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(grid.len(), 50);
    assert_eq!(grid[0], 1e-4);
    assert_eq!(grid[49], 1e-1);
    assert!(grid
        .windows(2)
        .all(|p| ((p[1] / p[0]).log10() - 3.0 / 49.0).abs() < 1e-12));
    let t = table(&path);
    assert_eq!(t[0], ["epsilon", "g_hat", "smoothed", "curvature"]);
    assert_eq!(t.len(), 51);

    let o = owl(
        &[
            "tune",
            "--data",
            "t.csv",
            "--model",
            "gaussian",
            "--restarts",
            "1",
            "--grid",
            "0.0:0.5:0.05",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert_eq!(table(&path).len(), 12);
}

#[test]
fn fit_with_tune_and_gaussian_kernel() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("x\n");
    for i in 0..30 {
        body.push_str(&format!("{}\n", (i as f64 * 0.7).sin()));
    }
    body.push_str("12\n");
    write(dir.path(), "k.csv", &body);
    let args = [
        "fit",
        "--data",
        "k.csv",
        "--model",
        "gaussian",
        "--tune",
        "--grid",
        "0:0.2:0.025",
        "--kernel",
        "gaussian",
        "--bandwidth",
        "auto",
        "--restarts",
        "2",
        "--out",
        "o",
    ];
    let o = owl(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let p = json(&dir.path().join("o/params.json"));
    assert!(p["config"]["resolved"]["bandwidth"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("o/epsilon_search.csv").exists());
    let bad = [
        "fit",
        "--data",
        "k.csv",
        "--model",
        "gaussian",
        "--epsilon",
        "0.1",
        "--bandwidth",
        "0.3",
    ];
    assert_eq!(code(&owl(&bad, dir.path())), 2);
}

#[test]
fn fixed_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("a,b\n");
    for i in 0..60 {
        let c = if i % 2 == 0 { -3.0 } else { 3.0 };
        body.push_str(&format!(
            "{},{}\n",
            c + ((i * 13) % 7) as f64 * 0.1,
            ((i * 5) % 11) as f64 * 0.1
        ));
    }
    write(dir.path(), "m.csv", &body);
    for out in ["r1", "r2"] {
        let args = [
            "fit",
            "--data",
            "m.csv",
            "--model",
            "gaussian-mixture",
            "--k",
            "2",
            "--epsilon",
            "0.05",
            "--seed",
            "4",
            "--out",
            out,
        ];
        assert_eq!(code(&owl(&args, dir.path())), 0);
    }
    for f in ["params.json", "weights.csv", "trace.csv"] {
        let a = fs::read(dir.path().join("r1").join(f)).unwrap();
        let b = fs::read(dir.path().join("r2").join(f)).unwrap();
        let strip = |v: Vec<u8>| {
            String::from_utf8(v)
                .unwrap()
                .replace("\"r1\"", "")
                .replace("\"r2\"", "")
        };
        assert_eq!(strip(a), strip(b), "{f}");
    }
}

#[test]
fn verify_reports_the_gap() {
    let dir = TempDir::new().unwrap();
    let args = [
        "verify",
        "--support",
        "2",
        "--n",
        "50",
        "--eps",
        "0.25",
        "--reps",
        "200000",
        "--out",
        "v.json",
    ];
    let o = owl(&args, dir.path());
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("mc_estimate") && stdout.contains("okl_bruteforce") && stdout.contains("gap"));
    let v = json(&dir.path().join("v.json"));
    assert!(v["gap"].as_f64().unwrap() <= 0.02);
    assert_eq!(v["config"]["resolved"]["p_hat"], serde_json::json!([0.5, 0.5]));

    let args = [
        "verify",
        "--support",
        "3",
        "--n",
        "30",
        "--eps",
        "0.1",
        "--reps",
        "1000",
        "--p-theta",
        "0.5,0.3,0.2",
    ];
    assert_eq!(code(&owl(&args, dir.path())), 0);
    assert_eq!(code(&owl(&["verify", "--support", "3", "--eps", "0.1"], dir.path())), 2);
}

#[test]
fn simulate_writes_one_row_per_cell() {
    let dir = TempDir::new().unwrap();
    let args = [
        "simulate",
        "--scenario",
        "gaussian_mean",
        "--n",
        "60",
        "--d",
        "2",
        "--fractions",
        "0,0.1",
        "--methods",
        "owl-known,mle",
        "--seeds",
        "2",
        "--restarts",
        "2",
    ];
    let o = owl(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = table(&dir.path().join("sweep.csv"));
    assert_eq!(t.len(), 1 + 2 * 2 * 2);
    assert!(t[0].contains(&"metric".to_string()));
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["cells"].as_array().unwrap().len(), 4);
    assert_eq!(code(&owl(&["simulate", "--scenario", "nope"], dir.path())), 2);
}

#[test]
fn bootstrap_writes_bands() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("x\n");
    for i in 0..30 {
        body.push_str(&format!("{}\n", (i as f64 * 1.3).sin()));
    }
    body.push_str("15\n");
    write(dir.path(), "b.csv", &body);
    let args = [
        "bootstrap",
        "--data",
        "b.csv",
        "--model",
        "gaussian",
        "--epsilon",
        "0.05",
        "--replicates",
        "20",
        "--restarts",
        "1",
    ];
    let o = owl(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = table(&dir.path().join("bands.csv"));
    assert_eq!(t[0], ["name", "estimate", "lower", "upper"]);
    for r in &t[1..] {
        assert!(r[2].parse::<f64>().unwrap() <= r[3].parse::<f64>().unwrap());
    }
    assert_eq!(table(&dir.path().join("replicates.csv")).len(), 21);
    let b = json(&dir.path().join("bootstrap.json"));
    // The leftover radius also trims the tails, so more than the planted point is down-weighted.
    assert!(b["outliers"].as_array().unwrap().contains(&serde_json::json!(30)));
}
