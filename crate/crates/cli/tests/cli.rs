use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bpc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BPC_OUT")
        .output()
        .expect("spawn bpc")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = bpc(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}\n{}",
        o.status,
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

const SMALL: &[&str] = &["--trajectories", "4", "--epochs", "10", "--jobs", "2"];

fn small_buffer(out: &Path) {
    ok(out, &[&["buffer"], SMALL].concat());
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn buffer_writes_files_index_and_one_line_per_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &[&["buffer"], SMALL].concat());
    assert_eq!(stdout.lines().filter(|l| l.starts_with("traj-")).count(), 4);
    let buffer = dir.path().join("buffer");
    let index = fs::read_to_string(buffer.join("index.tsv")).unwrap();
    assert_eq!(index.lines().count(), 4);
    for line in index.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 5);
        assert!(buffer.join(fields[1]).is_file());
        assert_eq!(fields[3], "10");
    }
    assert!(buffer.join("config.ini").is_file());
}

#[test]
fn buffer_rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_buffer(a.path());
    // thread count must not matter
    ok(b.path(), &["buffer", "--trajectories", "4", "--epochs", "10", "--jobs", "1"]);
    let strip = |v: Vec<(String, Vec<u8>)>| v.into_iter().filter(|(n, _)| n != "config.ini").collect::<Vec<_>>();
    assert_eq!(strip(files(&a.path().join("buffer"))), strip(files(&b.path().join("buffer"))));
}

#[test]
fn unwritable_buffer_dir_fails_without_an_index() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("not-a-dir");
    fs::write(&blocker, b"x").unwrap();
    let o = bpc(&blocker.join("run"), &[&["buffer"], SMALL].concat());
    assert_eq!(code(&o), 3);
    assert!(!blocker.join("run").exists());
}

#[test]
fn distill_writes_metrics_checkpoints_and_coreset() {
    let dir = tempfile::tempdir().unwrap();
    small_buffer(dir.path());
    ok(dir.path(), &["distill", "--iters", "30", "--set", "distill.log_every=10"]);
    let d = dir.path().join("distill");
    let metrics = fs::read_to_string(d.join("metrics.tsv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 31);
    assert_eq!(lines[0], "iteration\tloss\te_plus\te_minus\tgrad_norm");
    for l in &lines[1..] {
        let f: Vec<f64> = l.split('\t').map(|x| x.parse().unwrap()).collect();
        assert!((f[1] - (f[2] - f[3])).abs() <= 1e-9);
    }
    assert!(d.join("coreset.bpcs").is_file());
    assert_eq!(fs::read_dir(d.join("checkpoints")).unwrap().count(), 3);
    assert_eq!(
        fs::read(d.join("checkpoints/iter-000030.bpcs")).unwrap(),
        fs::read(d.join("coreset.bpcs")).unwrap()
    );
}

#[test]
fn zero_iterations_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bpc(dir.path(), &["distill", "--iters", "0"])), 2);
}

#[test]
fn bad_flags_and_config_files_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bpc(dir.path(), &["distill", "--alpha", "fast"])), 2);
    assert_eq!(code(&bpc(dir.path(), &["distill", "--set", "distill.nope=1"])), 2);
    assert_eq!(code(&bpc(dir.path(), &["nonsense"])), 2);
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[distill\niters = 3\n").unwrap();
    assert_eq!(code(&bpc(dir.path(), &["distill", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn diverging_chain_exits_with_code_4_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    small_buffer(dir.path());
    let o = bpc(dir.path(), &["distill", "--alpha", "1e300", "--iters", "5"]);
    assert_eq!(code(&o), 4);
    let metrics = fs::read_to_string(dir.path().join("distill/metrics.tsv")).unwrap();
    assert!(metrics.starts_with("iteration\t"));
}

#[test]
fn missing_buffer_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bpc(dir.path(), &["distill"])), 3);
}

#[test]
fn eval_and_compare_after_distill() {
    let dir = tempfile::tempdir().unwrap();
    small_buffer(dir.path());
    ok(dir.path(), &["distill", "--iters", "20"]);
    let eval = ok(dir.path(), &["eval", "--set", "eval.epochs=50"]);
    assert!(eval.contains("seeds=5"), "{eval}");
    let report = fs::read_to_string(dir.path().join("eval/report.tsv")).unwrap();
    assert_eq!(report.lines().count(), 6);

    let cmp = ok(dir.path(), &["compare", "--set", "eval.epochs=50"]);
    let row = |label: &str| -> f64 {
        let line = cmp.lines().find(|l| l.starts_with(label)).unwrap();
        line.split('\t').nth(2).unwrap().parse().unwrap()
    };
    let (d, r) = (row("distilled\t"), row("random\t"));
    let diff_line = cmp.lines().find(|l| l.starts_with("difference")).unwrap();
    let diff: f64 = diff_line.rsplit('\t').next().unwrap().parse().unwrap();
    assert!((diff - (d - r)).abs() < 2e-4, "{cmp}");
}

#[test]
fn tampered_coreset_magic_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    small_buffer(dir.path());
    ok(dir.path(), &["distill", "--iters", "2"]);
    let path = dir.path().join("distill/coreset.bpcs");
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, bytes).unwrap();
    let o = bpc(dir.path(), &["eval"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("format"));
}

#[test]
fn snapshot_alone_reproduces_the_coreset() {
    let dir = tempfile::tempdir().unwrap();
    small_buffer(dir.path());
    ok(dir.path(), &["distill", "--iters", "15", "--seed", "0", "--ipc", "2"]);
    let first = fs::read(dir.path().join("distill/coreset.bpcs")).unwrap();
    let snapshot = dir.path().join("distill/config.ini");
    let copy = dir.path().join("snapshot.ini");
    fs::copy(&snapshot, &copy).unwrap();
    // --out on the command line matches the snapshot's own value
    ok(dir.path(), &["distill", "--config", copy.to_str().unwrap()]);
    assert_eq!(fs::read(dir.path().join("distill/coreset.bpcs")).unwrap(), first);
}

#[test]
fn bpc_out_sets_the_default_root() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bpc"))
        .args(["buffer", "--trajectories", "1", "--epochs", "6"])
        .env("BPC_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("buffer/index.tsv").is_file());
}

#[test]
fn cross_arch_and_cross_loss_run_small_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let common = ["--set", "data.dim=16", "--set", "data.shape=1,4,4", "--set", "eval.epochs=30", "--set", "eval.seeds=2"];
    ok(out, &[&["buffer", "--arch", "convnet-small", "--trajectories", "2", "--epochs", "6"], &common[..]].concat());
    ok(out, &[&["distill", "--arch", "convnet-small", "--iters", "3"], &common[..]].concat());
    let grid = ok(out, &[&["cross-arch", "--set", "eval.archs=mlp,convnet-small"], &common[..]].concat());
    let rows: Vec<&str> = grid.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("convnet-small") && rows[1].contains("\tyes\t"), "{grid}");

    let loss = ok(
        out,
        &["cross-loss", "--trajectories", "2", "--epochs", "6", "--iters", "3", "--set", "eval.epochs=30", "--set", "eval.seeds=2"],
    );
    assert!(loss.contains("diagonal_mean") && loss.contains("diagonal_at_least_off_diagonal"), "{loss}");
    assert_eq!(fs::read_to_string(out.join("cross-loss/report.tsv")).unwrap().lines().count(), 1 + 4 * 2);
}

#[test]
fn idx_files_load_through_the_cli() {
    let root = repo_root();
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| root.join("data/mnist5k").join(f).to_string_lossy().into_owned();
    let args = [
        "--dataset",
        "idx",
        "--images",
        &p("train-images-idx3-ubyte.gz"),
        "--labels",
        &p("train-labels-idx1-ubyte.gz"),
        "--test-images",
        &p("t10k-images-idx3-ubyte.gz"),
        "--test-labels",
        &p("t10k-labels-idx1-ubyte.gz"),
        "--downsample",
        "2",
        "--set",
        "data.limit=500",
    ]
    .map(String::from);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(dir.path(), &[&["buffer", "--trajectories", "2", "--epochs", "6"], &args[..]].concat());
    ok(dir.path(), &[&["distill", "--iters", "2", "--ipc", "2"], &args[..]].concat());
    let eval = ok(dir.path(), &[&["eval", "--set", "eval.epochs=5", "--set", "eval.seeds=1"], &args[..]].concat());
    assert!(eval.starts_with("distilled\tmlp"), "{eval}");
}
