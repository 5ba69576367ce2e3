use std::path::PathBuf;
use std::process::Command;

fn example(name: &str) -> PathBuf {
    // test binaries live in target/<profile>/deps, examples one level up
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    deps.parent().unwrap().join("examples").join(name)
}

fn run(name: &str) {
    let path = example(name);
    assert!(path.exists(), "{} not built", path.display());
    let out = Command::new(&path).output().unwrap();
    assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stdout.is_empty());
}

#[test]
fn scale_map() {
    run("scale_map");
}

#[test]
fn gt_density() {
    run("gt_density");
}

#[test]
fn plane_conversion() {
    run("plane_conversion");
}

#[test]
fn temporal_consistency() {
    run("temporal_consistency");
}

#[test]
fn evaluate_metrics() {
    run("evaluate_metrics");
}

#[test]
fn simulate_crowd() {
    run("simulate_crowd");
}

#[test]
fn end_to_end() {
    run("end_to_end");
}
