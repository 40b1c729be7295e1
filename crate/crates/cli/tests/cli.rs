use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dlpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlpa")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn small_config(dir: &Path, groups: usize, users: usize) -> String {
    let path = dir.join(format!("scenario_{groups}_{users}.cfg"));
    fs::write(&path, format!("# small array\nmx = 8\nmy = 8\ngroups = {groups}\nusers = {users}\n")).unwrap();
    path.to_str().unwrap().to_string()
}

const TINY_NET: &[&str] = &["--hidden", "16,8", "--epochs", "3"];

fn pipeline(dir: &Path, cfg: &str) -> Vec<u8> {
    let o = dir.to_str().unwrap();
    let gen = dlpa(&["generate", "-c", cfg, "-o", o, "-n", "24", "-s", "5", "-w", "1"]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    assert_eq!(code(&dlpa(&["generate", "-c", cfg, "-o", o, "-n", "12", "-s", "5", "--test"])), 0);
    let mut train = vec!["train", "-c", cfg, "-o", o, "-s", "5", "--loss", "mae"];
    train.extend_from_slice(TINY_NET);
    assert_eq!(code(&dlpa(&train)), 0);
    let model = dir.join("model.ckpt");
    let ev = dlpa(&["evaluate", "-c", cfg, "-o", o, "-s", "5", "--model", model.to_str().unwrap()]);
    assert_eq!(code(&ev), 0, "{}", String::from_utf8_lossy(&ev.stderr));
    fs::read(dir.join("evaluation.csv")).unwrap()
}

#[test]
fn full_pipeline_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_config(a.path(), 1, 3);
    let first = pipeline(a.path(), &cfg);
    let second = pipeline(b.path(), &cfg);
    assert_eq!(first, second);

    let text = String::from_utf8(first).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "split,method,samples,mean_sum_rate_bps_hz,relative_to_pso_pct");
    assert_eq!(lines.len(), 1 + 3 * 3);
    assert!(lines.iter().any(|l| l.starts_with("test,PSO-PA,12,") && l.ends_with(",100.0000")));

    for name in ["train.ds", "train.ds.meta", "test.ds", "model.ckpt", "train_history.csv", "train.txt", "evaluation.txt"] {
        assert!(a.path().join(name).exists(), "{name}");
    }
    let summary = fs::read_to_string(a.path().join("evaluation.txt")).unwrap();
    assert!(summary.contains("seed = 5") && summary.contains("scenario.mx = 8"));
    assert_eq!(&fs::read(a.path().join("model.ckpt")).unwrap()[..8], b"DLPA-MLP");
}

#[test]
fn generation_resumes_and_guards_its_seed() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path(), 1, 3);
    let o = d.path().to_str().unwrap();
    let file = d.path().join("resumed.ds");
    let f = file.to_str().unwrap();
    assert_eq!(code(&dlpa(&["generate", "-c", &cfg, "-o", o, "-n", "8", "--file", f])), 0);
    assert_eq!(code(&dlpa(&["generate", "-c", &cfg, "-o", o, "-n", "16", "--file", f])), 0);
    let whole = d.path().join("whole.ds");
    assert_eq!(code(&dlpa(&["generate", "-c", &cfg, "-o", o, "-n", "16", "--file", whole.to_str().unwrap()])), 0);
    assert_eq!(fs::read(&file).unwrap(), fs::read(&whole).unwrap());
    // another seed must not extend the same file
    assert_eq!(code(&dlpa(&["generate", "-c", &cfg, "-o", o, "-n", "20", "-s", "9", "--file", f])), 3);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path().to_str().unwrap();
    let bad = d.path().join("bad.cfg");
    fs::write(&bad, "groups = 2\nusers = 3\n").unwrap();
    assert_eq!(code(&dlpa(&["generate", "-c", bad.to_str().unwrap(), "-o", o])), 1);
    fs::write(&bad, "colour = blue\n").unwrap();
    assert_eq!(code(&dlpa(&["generate", "-c", bad.to_str().unwrap(), "-o", o])), 1);
    assert_eq!(code(&dlpa(&["train", "--loss", "huber", "-o", o])), 1);
    assert_eq!(code(&dlpa(&["frobnicate"])), 1);

    let cfg = small_config(d.path(), 1, 3);
    assert_eq!(code(&dlpa(&["generate", "-c", "/nonexistent/x.cfg", "-o", o])), 2);
    assert_eq!(code(&dlpa(&["train", "-c", &cfg, "-o", o])), 2);
    let junk = d.path().join("junk.ckpt");
    fs::write(&junk, b"DLPA-MLP garbage").unwrap();
    assert_eq!(code(&dlpa(&["bench-runtime", "-c", &cfg, "-o", o, "--model", junk.to_str().unwrap()])), 2);

    // model trained for three users applied to a six-user dataset
    assert_eq!(code(&dlpa(&["generate", "-c", &cfg, "-o", o, "-n", "10"])), 0);
    let mut train = vec!["train", "-c", &cfg, "-o", o];
    train.extend_from_slice(TINY_NET);
    assert_eq!(code(&dlpa(&train)), 0);
    let other = small_config(d.path(), 2, 6);
    let od = d.path().join("six");
    let od = od.to_str().unwrap();
    assert_eq!(code(&dlpa(&["generate", "-c", &other, "-o", od, "-n", "6"])), 0);
    let model = d.path().join("model.ckpt");
    let ev = dlpa(&["evaluate", "-c", &other, "-o", od, "--model", model.to_str().unwrap()]);
    assert_eq!(code(&ev), 3, "{}", String::from_utf8_lossy(&ev.stderr));
}

#[test]
fn sweeps_and_benchmark_write_their_tables() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path().to_str().unwrap();
    let cfg = small_config(d.path(), 2, 4);

    let mut size = vec!["sweep-size", "-c", &cfg, "-o", o, "--sizes", "10,20", "--test-size", "8", "-w", "1"];
    size.extend_from_slice(TINY_NET);
    assert_eq!(code(&dlpa(&size)), 0);
    let csv = fs::read_to_string(d.path().join("sweep_size.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let mut users = vec!["sweep-users", "-c", &cfg, "-o", o, "--users", "2,4", "-n", "12", "--test-size", "6", "--bench-realizations", "5"];
    users.extend_from_slice(TINY_NET);
    let run = dlpa(&users);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let table = fs::read_to_string(d.path().join("sweep_users_table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "metric,K=2,K=4");
    assert!(rows[1].starts_with("sum_rate_relative_pct,") && rows[2].starts_with("runtime_relative_pct,"));
    assert_eq!(code(&dlpa(&["sweep-users", "-c", &cfg, "-o", o, "--users", "3"])), 1);

    let mut train = vec!["generate", "-c", &cfg, "-o", o, "-n", "10"];
    assert_eq!(code(&dlpa(&train)), 0);
    train = vec!["train", "-c", &cfg, "-o", o];
    train.extend_from_slice(TINY_NET);
    assert_eq!(code(&dlpa(&train)), 0);
    assert_eq!(code(&dlpa(&["bench-runtime", "-c", &cfg, "-o", o, "--realizations", "10"])), 0);
    let bench = fs::read_to_string(d.path().join("bench_runtime.csv")).unwrap();
    assert_eq!(bench.lines().count(), 2);
    assert!(fs::read_to_string(d.path().join("bench_runtime.txt")).unwrap().contains("runtime.pso_total_s"));
}
