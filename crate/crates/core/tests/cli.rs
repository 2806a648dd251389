use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maxwell-runge"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_solver_passes_and_writes_csv() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", s(&config("verify_solver")), "--out", s(out.path()), "--jobs", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.path().join("verify_solver.csv")).unwrap();
    assert!(csv.starts_with("n,h,error,order\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn malformed_config_exits_1_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"experiment\": \"runge\",\n \"omega\": \"fast\"}");
    let o = run(&["run", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("omega") && err.contains("line 2"), "{err}");

    let broken = write(dir.path(), "broken.json", "{\"experiment\": ");
    assert_eq!(run(&["run", s(&broken)]).status.code(), Some(1));

    let theta = write(dir.path(), "theta.json", r#"{"experiment": "runge", "exponents": {"q": 3, "q0": 4, "theta": 0.1}}"#);
    let o = run(&["run", s(&theta)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1/q = (1-theta)/2 + theta/q0"));
}

#[test]
fn tolerance_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "strict.json",
        r#"{"experiment": "verify_solver", "grid": {"n": 4}, "verify": {"grids": [4, 6, 8]}, "tolerances": {"order_min": 5.0}, "seed": 1}"#,
    );
    let o = run(&["run", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL min_convergence_order"));
}

#[test]
fn reruns_are_byte_identical_and_seed_is_recorded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("three_balls");
    assert_eq!(run(&["run", s(&cfg), "--out", s(a.path()), "--seed", "99"]).status.code(), Some(0));
    assert_eq!(run(&["run", s(&cfg), "--out", s(b.path()), "--seed", "99", "--jobs", "1"]).status.code(), Some(0));
    for f in ["three_balls.csv", "three_balls.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("three_balls.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["seed"], 99);
}

#[test]
fn verify_subcommand_overrides_the_tag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"experiment": "three_balls", "grid": {"n": 4}, "verify": {"grids": [4, 8, 16]}}"#);
    let o = run(&["verify", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("verify_solver.csv").exists());
    let side = std::fs::read_to_string(dir.path().join("verify_solver.json")).unwrap();
    assert!(side.contains("\"seed\""));
}

#[test]
fn cache_listing_and_removal() {
    let out = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    let o = run(&["run", s(&config("runge")), "--out", s(out.path()), "--cache", s(cache.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ls = run(&["cache", "ls", "--cache", s(cache.path())]);
    let text = String::from_utf8_lossy(&ls.stdout);
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(text.contains("operator") && text.contains("svd"));

    let warm = tempfile::tempdir().unwrap();
    let o = run(&["run", s(&config("runge")), "--out", s(warm.path()), "--cache", s(cache.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read(out.path().join("runge.csv")).unwrap(),
        std::fs::read(warm.path().join("runge.csv")).unwrap()
    );

    let rm = run(&["cache", "rm", "--cache", s(cache.path())]);
    assert_eq!(rm.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&rm.stdout).contains("removed 2"));
    assert_eq!(run(&["cache", "ls", "--cache", s(cache.path())]).stdout.len(), 0);
}

#[test]
fn unknown_subcommand_exits_1() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
