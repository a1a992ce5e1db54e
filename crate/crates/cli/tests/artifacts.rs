use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use edgeworth_cli::snapshot::{load, SnapshotData};
use edgeworth_cli::{parse_config_in, run_experiment, run_sweep, ExperimentConfig};

fn config(dir: &Path, text: &str) -> ExperimentConfig {
    let mut cfg = parse_config_in(text, dir).unwrap();
    cfg.out = dir.join("out");
    cfg
}

fn snapshot_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir.join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn horizon_zero_writes_only_the_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "kind = \"linear\"\nagents = 50\nhorizon = 0\n");
    let done = run_experiment(&cfg).unwrap();
    assert_eq!(snapshot_files(&done.dir).len(), 1);
    let moments = fs::read_to_string(done.dir.join("moments.csv")).unwrap();
    assert_eq!(moments.lines().count(), 2);
    assert!(done.report.contains("steps = 0"));
    for name in ["manifest", "report.txt", "moments.csv"] {
        assert!(done.dir.join(name).is_file(), "{name}");
    }
}

fn values(data: SnapshotData) -> Vec<(u64, u64)> {
    match data {
        SnapshotData::Agents { agents, .. } => agents
            .iter()
            .map(|a| (a.x.to_bits(), a.y.to_bits()))
            .collect(),
        SnapshotData::Particles { particles, .. } => particles
            .iter()
            .map(|p| (p.v.to_bits(), p.w.to_bits()))
            .collect(),
    }
}

fn round_trip(kind: &str, extra: &str, file_kind: &str) {
    let dir = tempfile::tempdir().unwrap();
    let first = config(
        dir.path(),
        &format!("kind = \"{kind}\"\nagents = 300\nhorizon = 0.5\nseed = 3\n{extra}"),
    );
    run_experiment(&first).unwrap();
    let last = snapshot_files(&first.out).pop().unwrap();
    let input = dir.path().join("input.csv");
    fs::copy(&last, &input).unwrap();

    let mut again = config(
        dir.path(),
        &format!("kind = \"{kind}\"\nhorizon = 0\n{extra}[initial]\nkind = \"{file_kind}\"\npath = \"input.csv\"\n"),
    );
    again.out = dir.path().join("again");
    run_experiment(&again).unwrap();
    let written = snapshot_files(&again.out);
    assert_eq!(written.len(), 1);
    assert_eq!(
        values(load(&written[0]).unwrap()),
        values(load(&input).unwrap())
    );
    assert!(fs::read_to_string(again.out.join("manifest"))
        .unwrap()
        .contains("input_sha256"));
}

#[test]
fn nonlinear_snapshot_round_trips() {
    round_trip(
        "nonlinear",
        "[noise]\nkind = \"uniform\"\nhalf_width = 0.1\n",
        "file",
    );
}

#[test]
fn linear_snapshot_round_trips() {
    round_trip(
        "linear",
        "[noise]\nkind = \"uniform\"\nhalf_width = 0.1\n",
        "file",
    );
}

#[test]
fn particle_snapshot_round_trips() {
    round_trip(
        "fokker-planck",
        "[fokker_planck]\nsigma1_sq = 0.3\nsigma2_sq = 0.3\n",
        "vw-file",
    );
}

#[test]
fn equal_configs_give_identical_directories() {
    let dir = tempfile::tempdir().unwrap();
    let text = "kind = \"nonlinear\"\nagents = 200\nhorizon = 1\nsnapshot_interval = 0.25\nseed = 11\n[noise]\nkind = \"uniform\"\nhalf_width = 0.1\n";
    let mut a = config(dir.path(), text);
    a.out = dir.path().join("a");
    let mut b = a.clone();
    b.out = dir.path().join("b");
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    assert_eq!(tree(&a.out), tree(&b.out));

    let mut c = a.clone();
    c.seed = 12;
    c.out = dir.path().join("c");
    run_experiment(&c).unwrap();
    let manifest = |p: &Path| fs::read_to_string(p.join("manifest")).unwrap();
    assert_ne!(manifest(&a.out), manifest(&c.out));
    assert_ne!(tree(&a.out), tree(&c.out));
}

#[test]
fn fokker_planck_output_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let text = "kind = \"fokker-planck\"\nagents = 9000\nhorizon = 0.2\n[initial]\nkind = \"vw-point\"\n[fokker_planck]\nsigma2_sq = 0.5\nsigma1_sq = 0.5\n";
    let mut a = config(dir.path(), text);
    a.out = dir.path().join("one");
    let mut b = a.clone();
    b.workers = 3;
    b.out = dir.path().join("three");
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    assert_eq!(tree(&a.out), tree(&b.out));
}

#[test]
fn rerun_replaces_earlier_artifacts_but_not_foreign_directories() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        dir.path(),
        "kind = \"linear\"\nagents = 20\nhorizon = 1\nsnapshot_interval = 0.1\n",
    );
    run_experiment(&cfg).unwrap();
    cfg.snapshot_interval = None;
    run_experiment(&cfg).unwrap();
    assert_eq!(snapshot_files(&cfg.out).len(), 2);

    let foreign = dir.path().join("foreign");
    fs::create_dir(&foreign).unwrap();
    fs::write(foreign.join("keep.txt"), "x").unwrap();
    cfg.out = foreign.clone();
    assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 4);
    assert!(foreign.join("keep.txt").exists());
}

#[test]
fn quasi_invariant_sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "kind = \"quasi-invariant-sweep\"\nagents = 2000\nhorizon = 1\n[trade]\nlambda = 0.8\n[noise]\nkind = \"uniform\"\nhalf_width = 0.05\n[initial]\nkind = \"uniform\"\n[sweep]\nepsilons = [0.5, 0.1]\n",
    );
    let done = run_sweep(&cfg).unwrap();
    let table = fs::read_to_string(done.dir.join("distance_vs_epsilon.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("epsilon,tau,seed,ks_distance,monotone"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("5.0000000000000000e-1,"));
    assert!(rows[0].ends_with(",true"));
    assert_eq!(snapshot_files(&done.dir).len(), 3);
}

#[test]
fn tail_study_reports_growth_sign_change() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "kind = \"tail-study\"\nagents = 20000\nhorizon = 1\nseed = 5\n[trade]\nlambda = 0.5\n[initial]\nkind = \"vw-point\"\n[fokker_planck]\nsigma1_sq = 0.5\nsigma2_sq = 0.5\ndt = 0.01\norders = [0.5, 3.0]\n",
    );
    let done = run_experiment(&cfg).unwrap();
    let rate = |key: &str| -> f64 {
        let line = done.report.lines().find(|l| l.starts_with(key)).unwrap();
        line.split(" = ").nth(1).unwrap().parse().unwrap()
    };
    assert!(rate("w_m1.5_predicted") < 0.0 && rate("w_m4_predicted") > 0.0);
    assert!(rate("w_m1.5_rate") < 0.0 && rate("w_m4_rate") > 0.0);
    assert!(done
        .report
        .contains("critical_order = 2.0000000000000000e0"));
    assert!(done.report.contains("[tail]"));
    assert!(done.dir.join("plots/log_w_m4.dat").is_file());
}

#[test]
fn metric_study_writes_distance_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "kind = \"metric-study\"\nagents = 500\nhorizon = 1\nsnapshot_interval = 0.25\n[trade]\nlambda = 0.3\nalpha = 0.6\n[noise]\nkind = \"uniform\"\nhalf_width = 0.05\n[initial]\nkind = \"uniform\"\n[metric]\nreference_time = 3\n",
    );
    let done = run_experiment(&cfg).unwrap();
    let table = fs::read_to_string(done.dir.join("metric.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert_eq!(snapshot_files(&done.dir).len(), 2);
    assert!(done.report.contains("recentered_slope"));
}

#[test]
fn parameter_sweep_runs_each_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "kind = \"linear\"\nagents = 50\nhorizon = 0.5\n[sweep]\nparameter = \"trade.lambda\"\nvalues = [0.2, 0.9]\n",
    );
    let done = run_sweep(&cfg).unwrap();
    assert!(done.dir.join("point_000/report.txt").is_file());
    assert!(done.dir.join("point_001/report.txt").is_file());
    let table = fs::read_to_string(done.dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);

    let bad = config(
        dir.path(),
        "kind = \"linear\"\n[sweep]\nparameter = \"trade.lambda\"\nvalues = [0.5, 2]\n",
    );
    assert_eq!(run_sweep(&bad).unwrap_err().exit_code(), 2);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edgeworth"))
}

#[test]
fn exit_codes_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(
        &good,
        "kind = \"linear\"\nagents = 10\nhorizon = 0.1\nseed = 1\n",
    )
    .unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "kind = \"linear\"\n[trade]\nlambda = 1.5\n").unwrap();
    let degenerate = dir.path().join("degenerate.toml");
    fs::write(
        &degenerate,
        "kind = \"linear\"\nagents = 10\n[initial]\nkind = \"point\"\nx = 0\ny = 1\n",
    )
    .unwrap();

    let status = |c: &mut Command| c.output().unwrap().status.code();
    assert_eq!(status(binary().arg("validate-config").arg(&good)), Some(0));
    assert_eq!(status(binary().arg("validate-config").arg(&bad)), Some(2));
    assert_eq!(
        status(
            binary()
                .arg("validate-config")
                .arg(dir.path().join("missing.toml"))
        ),
        Some(4)
    );
    let out = dir.path().join("deg");
    assert_eq!(
        status(
            binary()
                .arg("simulate")
                .arg(&degenerate)
                .arg("--out")
                .arg(&out)
        ),
        Some(3)
    );

    let env_out = dir.path().join("env");
    let flag_out = dir.path().join("flag");
    let run = binary()
        .arg("simulate")
        .arg(&good)
        .env("EDGEWORTH_SEED", "77")
        .env("EDGEWORTH_OUT", &env_out)
        .output()
        .unwrap();
    assert!(run.status.success());
    assert!(fs::read_to_string(env_out.join("manifest"))
        .unwrap()
        .contains("seed = 77"));
    let run = binary()
        .arg("simulate")
        .arg(&good)
        .args(["--seed", "78", "--out"])
        .arg(&flag_out)
        .env("EDGEWORTH_SEED", "77")
        .env("EDGEWORTH_OUT", &env_out)
        .output()
        .unwrap();
    assert!(run.status.success());
    assert!(fs::read_to_string(flag_out.join("manifest"))
        .unwrap()
        .contains("seed = 78"));

    let snap = snapshot_files(&flag_out).remove(0);
    let analysis = binary()
        .arg("analyze")
        .arg(&good)
        .arg(&snap)
        .arg("--out")
        .arg(dir.path().join("analysis"))
        .output()
        .unwrap();
    assert!(analysis.status.success());
    assert!(String::from_utf8(analysis.stdout)
        .unwrap()
        .contains("concentration"));
}
