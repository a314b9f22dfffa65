use std::path::Path;
use std::process::{Command, Output};

fn sarred(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sarred"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run sarred")
}

const ONE_CELL: [&str; 8] = [
    "--set",
    "seeds=[0]",
    "--set",
    "sr=[0.5]",
    "--set",
    "methods=[\"mf\"]",
    "--set",
    "scene.dims=[8,8,8]",
];

#[test]
fn sweep_one_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep"];
    args.extend(ONE_CELL);
    let out = sarred(&args, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(results.lines().nth(1).unwrap().starts_with("mf,"));
    assert!(tmp.path().join("manifest.toml").exists());
}

#[test]
fn simulate_reconstruct_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["simulate", "reconstruct", "evaluate"] {
        let mut args = vec![cmd];
        args.extend(ONE_CELL);
        let out = sarred(&args, tmp.path());
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(tmp.path().join("results.csv").exists());
}

#[test]
fn bad_override_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sarred(&["sweep", "--set", "solver.no_such_key=1"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no_such_key"), "{err}");

    let out = sarred(&["sweep", "--set", "missing_equals_sign"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_value_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sarred(&["simulate", "--set", "seeds=[0]", "--set", "sr=[1.5]"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sr[0]"));
}

#[test]
fn diagnose_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sarred(
        &["diagnose", "--set", "seeds=[0]", "--set", "scene.dims=[8,8,8]"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("adjoint"));
}

#[test]
fn failing_cells_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seeds = [0]\nsr = [0.5]\nmethods = [\"mf\", \"pnp\"]\n\n[scene]\ndims = [8, 8, 8]\n\n\
         [denoiser]\nkind = \"external\"\ncommand = \"false\"\ndeterministic = true\n",
    )
    .unwrap();
    let out = sarred(&["sweep", "--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(tmp.path().join("out/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
}
