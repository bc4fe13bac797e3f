use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rough-em-lab");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("ROUGH_EM_THREADS").output().unwrap()
}

fn small_config(dir: &Path, model: &str) -> String {
    let path = dir.join("small.cfg");
    let text = format!(
        "[run]\ncommand = rate\nmodel = {model}\nseed = 7\nthreads = 2\nout = small\n\n[study]\nlevels = 3..5\nreference_level = 9\npaths = 64\n"
    );
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn zero_model_rate_run_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "zero");
    let out = run(dir.path(), &["rate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("small_rate.csv")).unwrap();
    assert!(csv.starts_with("# rough-em-lab v1\nlevel,delta,mean_sq_sup_error,stderr,n_paths,bound_value,residual\n"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r[2].parse::<f64>().unwrap() <= 1e-20);
        assert_eq!(r[4], "64");
    }
    for f in ["small_plot.dat", "small_bound.dat", "small_summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "holder");
    let first = run(dir.path(), &["rate", "--config", &cfg, "--out", "a"]);
    let second = run(dir.path(), &["rate", "--config", &cfg, "--out", "b", "--threads", "1"]);
    assert!(first.status.code().is_some_and(|c| c <= 1));
    assert_eq!(first.status.code(), second.status.code());
    let a = std::fs::read(dir.path().join("a_rate.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b_rate.csv")).unwrap();
    assert_eq!(a, b);
    let rows = data_rows(std::str::from_utf8(&a).unwrap());
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn constants_command_reports_catalog_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["constants", "--model", "holder", "--out", "c"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("c_constants.txt")).unwrap();
    assert_eq!(text, String::from_utf8(out.stdout).unwrap());
    assert!(text.contains("lambda"));
}

#[test]
fn dump_config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(dir.path(), &["moment-check", "--model", "ou", "--seed", "11", "--dump-config"]);
    assert_eq!(first.status.code(), Some(0));
    let dumped = String::from_utf8(first.stdout).unwrap();
    let path = dir.path().join("dumped.cfg");
    std::fs::write(&path, &dumped).unwrap();
    let second = run(dir.path(), &["--config", path.to_str().unwrap(), "--dump-config"]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(String::from_utf8(second.stdout).unwrap(), dumped);
    assert!(dumped.contains("command = moment-check"));
    assert!(dumped.contains("seed = 11"));
}

#[test]
fn thread_variable_applies_only_without_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let dump = |extra: &[&str]| {
        let out = Command::new(BIN)
            .args(["rate", "--dump-config"])
            .args(extra)
            .env("ROUGH_EM_THREADS", "3")
            .current_dir(dir.path())
            .output()
            .unwrap();
        String::from_utf8(out.stdout).unwrap()
    };
    assert!(dump(&[]).contains("threads = 3"));
    assert!(dump(&["--threads", "5"]).contains("threads = 5"));
}

#[test]
fn usage_and_config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["rate", "--model", "no-such-model"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["rate", "--threads", "0"]).status.code(), Some(2));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "[study]\npaths = many\n").unwrap();
    let out = run(dir.path(), &["--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn missing_metadata_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["constants", "--model", "unbounded-holder"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["--config", "absent.cfg"]);
    assert_eq!(out.status.code(), Some(5));
}
