use std::fs;
use std::path::Path;

use netlasso::cli::config::RunConfig;
use netlasso::cli::{run, EXIT_CONFIG, EXIT_OK};
use netlasso::datasets::{default_levels, gen_piecewise_signal};
use netlasso::cli::piecewise::{piecewise_experiment, PiecewiseSettings};

fn run_config(dir: &Path, task: &str, body: &str) -> i32 {
    let cfg = dir.join("run.toml");
    let out = dir.join("out");
    fs::write(&cfg, format!("task = \"{task}\"\noutput_dir = {:?}\n{body}", out.to_str().unwrap())).unwrap();
    run(["netlasso", task, "--config", cfg.to_str().unwrap()])
}

fn write_points(dir: &Path, rows: &[&str]) -> String {
    let path = dir.join("points.csv");
    fs::write(&path, rows.join("\n") + "\n").unwrap();
    path.to_str().unwrap().to_owned()
}

fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn k_above_edge_count_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[data]\nkind = \"half-moons\"\nn = 10\n[graph]\nkind = \"path\"\n[solver]\ngamma = 1.0\nk = 20\n";
    assert_eq!(run_config(dir.path(), "solve-ntl", body), EXIT_CONFIG);
}

#[test]
fn unknown_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[data]\nkind = \"half-moons\"\n[solver]\ngama = 1.0\n";
    assert_eq!(run_config(dir.path(), "solve-nl", body), EXIT_CONFIG);
}

#[test]
fn recovery_check_needs_labels() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_points(dir.path(), &["0,0", "1,0", "5,5"]);
    let body = format!("[data]\nkind = \"csv\"\nfile = {file:?}\nhas_labels = false\n");
    assert_eq!(run_config(dir.path(), "recovery-check", &body), EXIT_CONFIG);
}

#[test]
fn zero_gamma_returns_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_points(dir.path(), &["0.5,1.5", "-2,3", "4,-1", "0.25,0"]);
    let body = format!("[data]\nkind = \"csv\"\nfile = {file:?}\n[solver]\ngamma = 0.0\n");
    assert_eq!(run_config(dir.path(), "solve-nl", &body), EXIT_OK);
    let rows = read_rows(&dir.path().join("out/centroids.csv"));
    let expect = [[0.5, 1.5], [-2.0, 3.0], [4.0, -1.0], [0.25, 0.0]];
    for (r, e) in rows.iter().zip(expect) {
        assert!((r[0] - e[0]).abs() < 1e-8 && (r[1] - e[1]).abs() < 1e-8, "{r:?} vs {e:?}");
    }
}

#[test]
fn four_node_trimmed_solve_splits_the_pairs() {
    let dir = tempfile::tempdir().unwrap();
    // on the path 0-1-2-3 with K = 1 the only sensible active edge is 1-2
    let file = write_points(dir.path(), &["0", "0.1", "5", "5.1"]);
    let body = format!(
        "[data]\nkind = \"csv\"\nfile = {file:?}\n[graph]\nkind = \"path\"\n[solver]\ngamma_rule = \"three-n-c\"\nk = 1\nrho = 1.0\neps_abs = 1e-10\neps_rel = 1e-10\nmax_iters = 20000\n"
    );
    assert_eq!(run_config(dir.path(), "solve-ntl", &body), EXIT_OK);
    let part: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/partition.json")).unwrap()).unwrap();
    let labels: Vec<u64> = part["labels"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(labels[0], labels[1]);
    assert_eq!(labels[2], labels[3]);
    assert_ne!(labels[1], labels[2]);
    let rows = read_rows(&dir.path().join("out/centroids.csv"));
    assert!((rows[0][0] - 0.05).abs() < 1e-6 && (rows[3][0] - 5.05).abs() < 1e-6);
    for name in ["trace.csv", "report.json", "config.toml"] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }
}

#[test]
fn gamma_path_stops_once_merged() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[data]\nkind = \"half-moons\"\nn = 12\n[solver]\neps_abs = 1e-8\neps_rel = 1e-8\n[path]\ngamma_start = 0.01\ngamma_ratio = 3.0\ngamma_count = 40\n";
    assert_eq!(run_config(dir.path(), "gamma-path", body), EXIT_OK);
    let path: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/path.json")).unwrap()).unwrap();
    assert_eq!(path["stopped_early"], serde_json::Value::Bool(true));
    let steps = path["steps"].as_array().unwrap();
    assert!(steps.len() < 40);
    assert_eq!(steps.last().unwrap()["partition"]["clusters"], 1);
}

#[test]
fn thresholds_report_three_n_c() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[data]\nkind = \"half-moons\"\nn = 20\n";
    assert_eq!(run_config(dir.path(), "thresholds", body), EXIT_OK);
    let text = fs::read_to_string(dir.path().join("out/thresholds.json")).unwrap();
    assert!(text.contains("\"3nC\""), "{text}");
}

#[test]
fn shipped_configs_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        let cfg = RunConfig::from_toml(&text).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        count += 1;
    }
    assert!(count >= 8);
}

#[test]
fn noiseless_signal_is_recovered_exactly() {
    let signal = gen_piecewise_signal::<f64>(60, &default_levels(60), 0.0, 1).unwrap();
    let settings = PiecewiseSettings { nl_gammas: vec![1e-3, 1e-2], ..Default::default() };
    let rep = piecewise_experiment(&signal, &settings).unwrap();
    assert!(rep.ntl_jumps_exact);
    assert!(rep.ntl.error <= 1e-6, "{}", rep.ntl.error);
}
