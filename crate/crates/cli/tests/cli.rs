use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use plasmanet_core::dataset::DatasetManifest;
use plasmanet_core::field::read_field;

fn run(dir: &Path, command: &str, config: &str, extra: &[&str]) -> std::process::Output {
    let cfg = dir.join("run.ini");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_plasmanet"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, command: &str, config: &str, extra: &[&str]) -> PathBuf {
    let o = run(dir, command, config, extra);
    assert!(
        o.status.success(),
        "{command} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    dir.join("out")
}

const SMALL: &str = "[grid]\nnx = 17\nny = 17\n[dataset]\nkinds = random_4, fourier_3_1\ncount = 10\n\
[network]\ndepths = 1,1\nbudget = none\nbase_width = 3\n[training]\nepochs = 2\nbatch_size = 4\n";

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn dataset_is_reloadable_and_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = ok(a.path(), "dataset", SMALL, &["--seed", "5", "--threads", "1"]);
    let ob = ok(b.path(), "dataset", SMALL, &["--seed", "5", "--threads", "1"]);
    for kind in ["random_4", "fourier_3_1"] {
        let m = DatasetManifest::load(oa.join("datasets").join(kind)).unwrap();
        assert_eq!(m.samples.len() + m.rejected.len(), 10);
        assert_eq!(m.seed, 5);
        assert_eq!(
            read_dir_bytes(&oa.join("datasets").join(kind)),
            read_dir_bytes(&ob.join("datasets").join(kind))
        );
    }
    let run_txt = fs::read_to_string(oa.join("run.txt")).unwrap();
    assert!(run_txt.contains("command = dataset"));
    assert!(run_txt.contains("status = ok"));
    let hash = |t: &str| t.lines().find(|l| l.starts_with("config_sha256")).unwrap().to_string();
    assert_eq!(hash(&run_txt), hash(&fs::read_to_string(ob.join("run.txt")).unwrap()));
}

#[test]
fn solve_zero_charge_gives_zero_field() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), "solve", "[grid]\nnx = 21\nny = 21\n[solve]\nproblem = zero\n", &[]);
    let phi = read_field(out.join("phi.fld")).unwrap();
    assert!(phi.values.iter().all(|v| *v == 0.0));
    let csv = fs::read_to_string(out.join("solve.csv")).unwrap();
    assert!(csv.starts_with("solver,nodes,rtol,iterations,residual,seconds\n"));
}

#[test]
fn solve_two_gaussians_merges_into_one_extremum() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), "solve", "[grid]\nnx = 51\nny = 51\n[solve]\nbackend = analytic\n", &[]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains(" 1 interior extrema"), "{stdout}");
    let ex = read_field(d.path().join("out/ex.fld")).unwrap();
    assert_eq!(ex.grid.nx, 51);
}

#[test]
fn train_writes_history_and_resumes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n");
    ok(d.path(), "dataset", &cfg, &[]);
    let out = ok(d.path(), "train", &cfg, &[]);
    let hist = fs::read_to_string(out.join("training.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 3);
    let log = fs::read_to_string(out.join("log.txt")).unwrap();
    assert!(log.contains("receptive field 7"), "{log}");
    assert!(log.contains("optimal for n_p = 17: RF = 34, n_b = 3"), "{log}");

    let resumed = cfg.replace("budget = none", "budget = none\nresume = true");
    let o = run(d.path(), "train", &resumed, &[]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("resuming from"));
    let hist2 = fs::read_to_string(out.join("training.csv")).unwrap();
    let epoch0 = |h: &str| h.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse::<f64>().unwrap();
    assert!(epoch0(&hist2) < epoch0(&hist), "resumed run should start from the trained weights");
}

#[test]
fn eval_cg_self_eval_is_near_zero() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[eval]\nbackends = cg, analytic\n");
    ok(d.path(), "dataset", &cfg, &[]);
    let out = ok(d.path(), "eval", &cfg, &[]);
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    // two datasets plus the combined row, for each backend
    assert_eq!(rows.len(), 2 * 3);
    for r in rows.iter().filter(|r| r.starts_with("cg")) {
        let e_l1: f64 = r.split(',').nth(4).unwrap().parse().unwrap();
        assert!(e_l1 < 1e-3, "{r}");
    }
}

#[test]
fn rf_reports_formula_and_empirical() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), "rf", "[network]\ndepths = 2\nbudget = none\nbase_width = 2\n", &[]);
    let csv = fs::read_to_string(out.join("rf.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "5");
    assert_eq!(row[1], "5");
}

#[test]
fn bench_csv_schema() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[network]\ndepths = 1,1\nbudget = none\nbase_width = 2\n[bench]\nsizes = 9, 17\nrepetitions = 2\n";
    let out = ok(d.path(), "bench", cfg, &[]);
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "solver,nodes,rtol,iterations,residual,seconds,repetitions");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 2);
    for r in &rows {
        assert!(r[5].parse::<f64>().unwrap() > 0.0);
        assert_eq!(r[6], "2");
    }
}

#[test]
fn short_simulations_write_diagnostics() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), "oscillate", "[oscillation]\nn = 21\nperiods = 0.25\n", &[]);
    let csv = fs::read_to_string(out.join("oscillation.csv")).unwrap();
    assert!(csv.starts_with("t,mean_probe,max_probe\n"));
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("expected_period"));

    let e = tempfile::tempdir().unwrap();
    let cfg = "[streamer]\nnx = 41\nnr = 11\nsteps = 5\nsample_every = 1\nsnapshot_steps = 5\n";
    let out = ok(e.path(), "streamer", cfg, &[]);
    let csv = fs::read_to_string(out.join("streamer.csv")).unwrap();
    assert!(csv.starts_with("t,x_neg,x_pos,Ed,max_E,max_ne\n"));
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(out.join("ne_00005.fld").exists());
}

#[test]
fn bad_configs_fail_cleanly() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), "solve", "[grid]\nnz = 3\n", &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.nz"));

    let o = run(d.path(), "train", "[grid]\nnx = 17\nny = 17\n", &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset"));
    let record = fs::read_to_string(d.path().join("out/run.txt")).unwrap();
    assert!(record.contains("status = error"));
}
