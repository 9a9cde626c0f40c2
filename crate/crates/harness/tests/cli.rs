use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedamp_harness::commands::{run_sweep, Options};
use fedamp_harness::config::{parse_with_overrides, ExperimentConfig};
use fedamp_harness::metrics::{read_metrics, read_sweep, sweep_slope};
use tempfile::TempDir;

const BASE: &str = r#"
[population]
kind = "quadratic"
clients = 8
dim = 3

[noise]
kind = "gaussian"
sigma = 0.5

[pattern]
kind = "permutation"
participants = 2

[run]
interval = "aligned"
rounds = 64
eval_every = 4
x0 = 1.0

[seeds]
master = 11
replications = 2
"#;

fn setup(extra: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, format!("{BASE}{extra}")).unwrap();
    (dir, cfg)
}

fn fedamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedamp"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn run_writes_one_row_per_checkpoint_and_seed() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("o");
    let o = fedamp(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_metrics(&read(&out.join("metrics.csv"))).unwrap();
    assert_eq!(rows.len(), 2 * (64 / 4 + 1));
    assert_eq!(rows.iter().filter(|r| r.run == "rep1").count(), 64 / 4 + 1);
    assert!(read(&out.join("meta.txt")).contains("derivation"));
}

#[test]
fn negative_step_size_is_a_config_error() {
    let (dir, cfg) = setup("\n[rates]\nplanner = \"manual\"\ngamma = -1.0\neta = 1.0\n");
    let o = fedamp(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn oversized_step_size_diverges_with_the_round() {
    // Curvature at most L = 1 and floor 1 make every client A = I, so
    // x <- (1 - gamma)^I x grows without bound for gamma = 10.
    let extra = "\n[rates]\nplanner = \"manual\"\ngamma = 10.0\neta = 1.0\n";
    let (dir, cfg) = setup(extra);
    let o = fedamp(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
        "--set",
        "population.curvature_floor=1.0",
        "--set",
        "noise.kind=\"none\"",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("round"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let (dir, cfg) = setup("");
    let o = fedamp(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
        "--set",
        "run.roudns=3",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn sweep_bookkeeping() {
    let extra = "\n[sweep]\naxis = \"rounds\"\nvalues = [256, 1024, 4096]\n";
    let (dir, cfg) = setup(extra);
    let out = dir.path().join("o");
    let o = fedamp(&[
        "sweep",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--set",
        "seeds.replications=5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_sweep(&read(&out.join("sweep.csv"))).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.runs == 5 && r.failed == 0));
    let runs = read(&out.join("sweep_runs.csv"));
    assert_eq!(runs.lines().count(), 1 + 15);

    // The slope refitted from the CSV matches the in-memory fit.
    let text = format!("{BASE}{extra}");
    let mem: ExperimentConfig =
        parse_with_overrides(&text, &["seeds.replications=5".into()]).unwrap();
    let mem = run_sweep(&mem).unwrap();
    let from_csv = sweep_slope(&rows).unwrap();
    let in_mem = mem.slope.unwrap();
    assert!((from_csv.fit.slope - in_mem.fit.slope).abs() <= 1e-12);
    assert!((from_csv.fit.intercept - in_mem.fit.intercept).abs() <= 1e-12);
}

#[test]
fn empty_sweep_axis_is_a_config_error() {
    let (dir, cfg) = setup("\n[sweep]\naxis = \"rounds\"\nvalues = []\n");
    let o = fedamp(&[
        "sweep",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn diagnose_permutation_has_zero_delta() {
    let (dir, cfg) = setup("\n[diagnose]\nintervals = [4, 8]\nmethod = \"exact\"\n");
    let out = dir.path().join("o");
    let o = fedamp(&["diagnose", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(&out.join("divergence.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("P,beta2,nu2,delta2,d2,exact"));
    for l in lines {
        let cols: Vec<&str> = l.split(',').collect();
        let d2: f64 = cols[4].parse().unwrap();
        assert!(cols[3].parse::<f64>().unwrap() <= 1e-15 * d2, "{l}");
        assert_eq!(cols[5], "1");
    }
}

#[test]
fn diagnose_exact_on_logistic_is_a_config_error() {
    let (dir, cfg) = setup("\n[diagnose]\nintervals = [4]\nmethod = \"exact\"\n");
    let o = fedamp(&[
        "diagnose",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
        "--set",
        "population.kind=\"logistic\"",
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn bounds_writes_checks() {
    let extra = "\n[bounds]\nchecks = [\"hoeffding\"]\nintervals = [64]\ntrials = 2000\n";
    let (dir, cfg) = setup(extra);
    let out = dir.path().join("o");
    let o = fedamp(&[
        "bounds",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--set",
        "pattern.kind=\"independent\"",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(&out.join("bounds.csv"));
    assert!(text.starts_with("bound,P,c,threshold,trials,violation_rate,pass\n"));
    assert!(text.lines().nth(1).unwrap().starts_with("hoeffding,64,"));
}

#[test]
fn outputs_are_byte_identical_across_reruns() {
    let (dir, cfg) = setup("");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = fedamp(&["run", "--config", s(&cfg), "--out", s(out), "--seed", "5"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let o = fedamp(&[
            "plot",
            "--input",
            s(&out.join("metrics.csv")),
            "--out",
            s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["metrics.csv", "meta.txt", "plot.svg"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let other = dir.path().join("c");
    fedamp(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&other),
        "--seed",
        "6",
    ]);
    assert_ne!(
        read(&a.join("metrics.csv")),
        read(&other.join("metrics.csv"))
    );
}

#[test]
fn plot_rejects_malformed_csv_naming_the_row() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "run,seed,t,f,grad_norm_sq,min_grad_norm_sq,is_boundary\na,1,0,1,1,1,1\na,1,zz,1,1,1,1\n",
    )
    .unwrap();
    let o = fedamp(&["plot", "--input", s(&bad), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let empty = dir.path().join("empty.csv");
    std::fs::write(
        &empty,
        "run,seed,t,f,grad_norm_sq,min_grad_norm_sq,is_boundary\n",
    )
    .unwrap();
    assert_eq!(
        code(&fedamp(&[
            "plot",
            "--input",
            s(&empty),
            "--out",
            s(dir.path())
        ])),
        1
    );
}

#[test]
fn plot_from_csv_matches_in_memory_values() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("o");
    assert_eq!(
        code(&fedamp(&["run", "--config", s(&cfg), "--out", s(&out)])),
        0
    );
    let mem: ExperimentConfig = parse_with_overrides(BASE, &[]).unwrap();
    let mem = fedamp_harness::commands::run_experiment(&mem).unwrap();
    let disk = read_metrics(&read(&out.join("metrics.csv"))).unwrap();
    assert_eq!(disk.len(), mem.rows.len());
    for (d, m) in disk.iter().zip(&mem.rows) {
        assert_eq!((d.run.as_str(), d.t), (m.run.as_str(), m.t));
        assert!(
            (d.grad_norm_sq - m.grad_norm_sq).abs() <= 1e-12 * m.grad_norm_sq.abs().max(1e-300)
        );
        assert!((d.f - m.f).abs() <= 1e-12 * m.f.abs().max(1e-300));
    }
    let _ = Options::default();
}

#[test]
fn paperdemo_reports_failure_with_ranking() {
    let dir = TempDir::new().unwrap();
    // With eta = 1 the amplified arm equals the eta-one arm, so the ordering
    // cannot hold.
    let o = fedamp(&[
        "paperdemo",
        "--out",
        s(dir.path()),
        "--set",
        "demo.eta=1.0",
        "--set",
        "demo.seeds=2",
        "--set",
        "demo.required=1",
        "--set",
        "demo.rounds=400",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("amplified"), "{}", stderr(&o));
    for f in ["demo.csv", "demo_metrics.csv", "demo.svg", "meta.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
