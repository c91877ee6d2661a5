use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
# tiny federation
schemes=bpsk,qpsk
snr_min=0
snr_max=10
train_per_cell=10
test_per_cell=4
frame_len=16
conv1=2
conv2=2
dense=4
clients=3
rounds=3
local_epochs=1
batch=8
samples=20
queue=40
clusters=2
";

fn amcfl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amcfl"))
        .args(args)
        .current_dir(dir)
        .env_remove("FV_SEED")
        .output()
        .expect("spawn amcfl")
}

fn stdout_path(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

#[test]
fn verify_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = amcfl(&["verify"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
    assert!(text.lines().count() >= 7);
}

#[test]
fn run_fl_writes_one_row_per_round_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    let args = ["run-fl", "--config", "tiny.cfg", "--algo", "fedvaccine", "--scenario", "iid"];
    let a = amcfl(&args, dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let out = dir.path().join(stdout_path(&a));
    let first = std::fs::read(out.join("metrics.csv")).unwrap();
    let text = String::from_utf8_lossy(&first);
    assert!(text.starts_with("run_id,algorithm,scenario,round,theta,clusters,queue,accuracy,loss,snr_-20,"));
    assert_eq!(text.lines().count(), 1 + 3);
    assert!(out.join("summary.json").is_file());
    let resolved = std::fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("rounds=3\n") && resolved.contains("algo=fedvaccine\n"));

    let b = amcfl(&args, dir.path());
    assert!(b.status.success());
    assert_eq!(stdout_path(&a), stdout_path(&b));
    assert_eq!(first, std::fs::read(out.join("metrics.csv")).unwrap());
}

#[test]
fn resolved_config_replays_to_same_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    let a = amcfl(&["run-fl", "--config", "tiny.cfg", "--set", "rounds=2", "--algo", "fedavg"], dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let resolved = Path::new(&stdout_path(&a)).join("config.resolved");
    let b = amcfl(&["run-fl", "--config", resolved.to_str().unwrap()], dir.path());
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(stdout_path(&a), stdout_path(&b));
}

#[test]
fn seed_env_changes_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    let args = ["run-fl", "--config", "tiny.cfg", "--set", "rounds=1"];
    let a = amcfl(&args, dir.path());
    let b = Command::new(env!("CARGO_BIN_EXE_amcfl"))
        .args(args)
        .current_dir(dir.path())
        .env("FV_SEED", "9")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_ne!(stdout_path(&a), stdout_path(&b));
    let resolved = std::fs::read_to_string(Path::new(dir.path()).join(stdout_path(&b)).join("config.resolved")).unwrap();
    assert!(resolved.contains("seed=9\n"));
}

#[test]
fn malformed_config_is_a_single_line_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "clients=3\ntheta=banana\n").unwrap();
    let o = amcfl(&["run-fl", "--config", "bad.cfg"], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=parse "), "{err}");
    assert!(err.contains("line 2") && err.contains("theta"), "{err}");
    assert!(!dir.path().join("out").exists() || std::fs::read_dir(dir.path().join("out")).unwrap().count() == 0);
}

#[test]
fn unknown_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = amcfl(&["run-fl", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error kind=usage ") && err.lines().count() == 1, "{err}");
}

#[test]
fn gen_data_then_pca() {
    let dir = tempfile::tempdir().unwrap();
    let g = amcfl(
        &[
            "gen-data",
            "--schemes",
            "bpsk,qam16",
            "--snr-min",
            "-4",
            "--snr-max",
            "4",
            "--frames-per-cell",
            "5",
            "--frame-len",
            "32",
            "--out",
            "d.amcd",
        ],
        dir.path(),
    );
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    assert!(stdout_path(&g).starts_with("50 frames sha256="));
    assert!(!dir.path().join("d.partial").exists());

    let p = amcfl(&["pca", "--in", "d.amcd", "--k", "3"], dir.path());
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    let out = dir.path().join(stdout_path(&p));
    let proj = std::fs::read_to_string(out.join("projections.csv")).unwrap();
    assert_eq!(proj.lines().next().unwrap(), "label,snr_db,pc1,pc2,pc3");
    assert_eq!(proj.lines().count(), 51);
    assert!(out.join("summary.json").is_file() && out.join("config.resolved").is_file());
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = amcfl(&["pca", "--in", "nope.amcd", "--k", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error kind=io "));
}

#[test]
fn ablation_with_too_few_clients_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    let o = amcfl(&["ablate", "--config", "tiny.cfg", "--kind", "cluster"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error kind=config "));
    let out = dir.path().join("out");
    assert!(!out.exists() || std::fs::read_dir(out).unwrap().count() == 0);
}
