use std::path::PathBuf;
use std::process::{Command, Output};

fn weakkam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakkam"))
        .args(args)
        .env("WEAKKAM_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("weakkam-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &std::path::Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn scenarios_lists_eight_and_json_round_trips() {
    let out = weakkam(&["scenarios"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 8);
    let out = weakkam(&["scenarios", "--json"]);
    let list: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(list.len(), 8);
    let text = serde_json::to_string(&list).unwrap();
    let again: Vec<serde_json::Value> = serde_json::from_str(&text).unwrap();
    assert_eq!(again, list);
    assert!(list.iter().any(|e| e["name"] == "counterexample"));
}

#[test]
fn free_run_passes_and_manifest_checks_out() {
    let dir = scratch("free");
    let out_dir = dir.join("out");
    let out = weakkam(&["run", "free", "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["manifest.json", "results.csv", "checks.csv", "config.toml"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let manifest = out_dir.join("manifest.json");
    let out = weakkam(&["check", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn sweep_with_config_file_is_reproducible() {
    let dir = scratch("sweep");
    let cfg = write_config(
        &dir,
        "scenario = \"pendulum\"\nepsilon = [0.1, 0.2]\nmomenta = [[2.0], [0.0]]\nresolution = [256]\nsde_enabled = false\n",
    );
    let a = dir.join("a");
    let b = dir.join("b");
    let ra = weakkam(&["sweep", &cfg, "--output", a.to_str().unwrap()]);
    let rb = weakkam(&["sweep", &cfg, "--output", b.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(ra.status.code(), rb.status.code());
    let csv = std::fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("results.csv")).unwrap());
    let eps: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(eps.len(), 4);
    assert!(eps[0] == eps[1] && eps[0].starts_with("2.0"), "{eps:?}");
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn config_errors_exit_with_four() {
    let dir = scratch("bad");
    for text in [
        "scenario = \"free\"\nepsilon = [0.0]\n",
        "scenario = \"free\"\nepsilon = []\n",
        "scenario = \"free\"\ncolour = 1\n",
        "scenario = \"nope\"\n",
    ] {
        let cfg = write_config(&dir, text);
        let out = weakkam(&["run", &cfg, "--output", dir.join("o").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(4), "{text}");
    }
    let cfg = write_config(&dir, "scenario = \"free\"\nepsilon = [0.0]\n");
    let out = weakkam(&["run", &cfg]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon must be positive"));
    let out = weakkam(&["run", "no-such-scenario"]);
    assert_eq!(out.status.code(), Some(4));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn failing_checks_exit_with_two() {
    // the free-particle exactness checks cannot hold once a potential is added
    let dir = scratch("checkfail");
    let cfg = write_config(
        &dir,
        "scenario = \"free\"\n[model]\nkind = \"mechanical\"\ndim = 1\n[model.potential]\nkind = \"cosine\"\namplitude = 0.5\n",
    );
    let out = weakkam(&["run", &cfg, "--output", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn solver_failures_exit_with_three() {
    let dir = scratch("solvefail");
    let cfg = write_config(
        &dir,
        "scenario = \"pendulum\"\nepsilon = [0.05]\nmomenta = [[0.0]]\nsde_enabled = false\n[solver]\nmax_iterations = 1\nfallbacks = false\n",
    );
    let out = weakkam(&["run", &cfg, "--output", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(dir.join("o/results.csv")).unwrap();
    assert!(csv.contains("failed:solve:"));
    let _ = std::fs::remove_dir_all(dir);
}
