use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
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

const TREE: &str = "topology = paper_tree\nk = 4\ndepth = 5\ndist = delta\ntheta_bar = 1\nalpha = 0.5\nshock = 10\n";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn capacity_of_broad_power_law() {
    let o = cascade(&[
        "capacity",
        "--set",
        "dist=power_law",
        "--set",
        "gamma=1.5",
        "--set",
        "theta_min=0.5",
        "--set",
        "alpha=0",
        "--set",
        "n=1000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let q: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
    assert!((q - 31122.8).abs() < 0.05, "{q}");
    assert!(stdout(&o).contains("# Q_homogeneous_2theta_min=1000\n"));
}

#[test]
fn simulate_tree_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TREE);
    let o = cascade(&["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let last = out.lines().last().unwrap();
    assert!(
        last.starts_with("# t_prime=3,stop_reason=no_new_failures"),
        "{last}"
    );
    let x: f64 = last.rsplit('=').next().unwrap().parse().unwrap();
    assert_eq!(x, 21.0 / 1365.0);
    assert!(out.starts_with("t,K_t,F_t,f_t,X_t\n"));
}

#[test]
fn paper_literal_flag_changes_homogeneous_x() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TREE);
    let default = stdout(&cascade(&["analytic", "--config", &cfg]));
    let literal = stdout(&cascade(&["analytic", "--config", &cfg, "--paper-literal"]));
    let x_final = |s: &str| {
        s.lines()
            .last()
            .unwrap()
            .split(',')
            .find_map(|kv| kv.strip_prefix("X_final="))
            .unwrap()
            .parse::<f64>()
            .unwrap()
    };
    assert_eq!(x_final(&default), 21.0 / 1365.0);
    assert_ne!(x_final(&default), x_final(&literal));
    assert!(default.contains("literal_differs=true"));
    assert!(literal.contains("literal_differs=true"));
}

#[test]
fn validation_errors_exit_1_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TREE.replace("alpha = 0.5", "alpha = 1.5"));
    let o = cascade(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 6"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), &format!("{TREE}colour = blue\n"));
    let o = cascade(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 8") && stderr(&o).contains("colour"));

    assert_eq!(cascade(&["simulate", "--bogus"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // The shock does not reach the seed's own threshold.
    let cfg = write_config(dir.path(), &TREE.replace("shock = 10", "shock = 0.5"));
    let o = cascade(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn io_errors_exit_3_and_leave_no_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TREE);
    let missing = dir.path().join("nope").join("out.csv");
    let o = cascade(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));

    // Persisting onto a directory fails after the data was written.
    let target = dir.path().join("taken");
    fs::create_dir(&target).unwrap();
    fs::write(target.join("keep"), "x").unwrap();
    let o = cascade(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let mut names = names;
    names.sort();
    assert_eq!(names, vec!["run.cfg", "taken"]);

    assert_eq!(
        cascade(&["simulate", "--config", "/no/such/file"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn output_file_keeps_stdout_empty() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TREE);
    let out = dir.path().join("trace.csv");
    let o = cascade(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(fs::read_to_string(&out).unwrap().contains("X_final"));
}

#[test]
fn json_envelope_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "topology = random_regular\nn = 120\nk = 6\ndist = uniform\ntheta_bar = 1\nsigma = 0.5\n\
         alpha = 0.8\nshock = rie\nreplicas = 6\n",
    );
    let first = dir.path().join("first.json");
    let o = cascade(&[
        "ensemble",
        "--config",
        &cfg,
        "--seed",
        "17",
        "--format",
        "json",
        "--out",
        first.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second = dir.path().join("second.json");
    let o = cascade(&[
        "ensemble",
        "--config",
        first.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(&first).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(&second).unwrap()).unwrap();
    assert_eq!(a["result"], b["result"]);
    assert_eq!(a["metadata"]["config"]["rng_seed"], "17");
    let mut ca = a["metadata"]["config"].clone();
    let mut cb = b["metadata"]["config"].clone();
    ca["output_path"] = serde_json::Value::Null;
    cb["output_path"] = serde_json::Value::Null;
    assert_eq!(ca, cb);
    assert_eq!(a["result"]["replicas"], 6);
}

#[test]
fn ensemble_csv_summary() {
    let o = cascade(&[
        "ensemble",
        "--set",
        "topology=paper_tree",
        "--set",
        "dist=delta",
        "--set",
        "theta_bar=1",
        "--set",
        "alpha=0.5",
        "--set",
        "shock=10",
        "--set",
        "replicas=1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("X_stderr=0,"), "{out}");
    assert!(out.contains("frequency_infinite=0,"));
}

#[test]
fn fig2_preset_table() {
    let o = cascade(&["sweep", "--preset", "fig2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("alpha,t,theta_c,f_t\n"));
    assert_eq!(out.lines().count(), 1 + 4 * 8);
}

#[test]
fn small_preset_sweep_declares_its_grid() {
    let o = cascade(&[
        "sweep",
        "--preset",
        "fig3",
        "--set",
        "grid_points=2",
        "--set",
        "replicas=2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(
        out.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 2 * 4
    );
    assert!(out.contains("# grid=tree axes=alphaxshock_over_capacity (2x2) replicas=2"));
}

#[test]
fn custom_sweep_residuals_vanish_for_homogeneous_tree() {
    let o = cascade(&[
        "sweep",
        "--set",
        "topology=paper_tree",
        "--set",
        "dist=delta",
        "--set",
        "theta_bar=1",
        "--set",
        "axis1=alpha",
        "--set",
        "axis1_values=0.2,0.5",
        "--set",
        "axis2=shock",
        "--set",
        "axis2_values=lin:5:20:3",
        "--set",
        "replicas=2",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["result"].as_array().unwrap().len(), 6);
    assert_eq!(v["metadata"]["residuals"]["max_abs_residual"], 0.0);
}

#[test]
fn help_documents_defaults() {
    let o = cascade(&["simulate", "--help"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("rng_seed") && out.contains("[default: 0]"));
    assert!(out.contains("--paper-literal"));
}
