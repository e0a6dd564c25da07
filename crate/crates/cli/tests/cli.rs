use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_paneitz-lab"));
    cmd.args(args).env_remove("PANEITZ_LAB_OUT");
    if let Some(p) = env_out {
        cmd.env("PANEITZ_LAB_OUT", p);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SOLVE: &[&str] = &["solve", "--n", "5", "--einstein", "20", "--q", "3", "--N", "200"];

#[test]
fn coefficients_for_the_round_sphere() {
    let o = lab(&["coefficients", "--n", "5", "--sc", "20"], None);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(&row[..5], &["5", "20", "13.125", "5.5", "6.5625"]);
    assert_eq!(row[5], "4");
}

#[test]
fn solve_writes_a_converged_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = SOLVE.to_vec();
    args.extend(["--out", out]);
    let o = lab(&args, None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = json(&dir.path().join("solution.json"));
    assert!(rec["residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(rec["converged"], true);
    assert_eq!(rec["N"], 200);
    let csv = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("# paneitz-lab "));
    assert!(csv.lines().any(|l| l == "t,u"));
}

#[test]
fn cosine_start_gives_a_nodal_solution() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SOLVE.to_vec();
    args.extend(["--start", "cosine", "--out", dir.path().to_str().unwrap()]);
    let o = lab(&args, None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = json(&dir.path().join("solution.json"));
    assert!(rec["residual"].as_f64().unwrap() < 1e-8);
    assert!(rec["sign_changes"].as_u64().unwrap() >= 1);
}

#[test]
fn invalid_exponent_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(
        &["solve", "--n", "5", "--einstein", "20", "--q", "1", "--N", "200", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("requires q > 1"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn other_violations_exit_two() {
    let cases: &[&[&str]] = &[
        &["solve", "--n", "5", "--einstein", "20", "--q", "3", "--N", "8"],
        &["solve", "--n", "5", "--einstein", "20", "--alpha", "1", "--beta", "1", "--q", "3", "--N", "100"],
        &["solve", "--n", "5", "--q", "3", "--N", "100"],
        &["frobnicate"],
    ];
    for args in cases {
        let o = lab(args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn flags_override_config_and_output_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_out = dir.path().join("from-config");
    let env_out = dir.path().join("from-env");
    let flag_out = dir.path().join("from-flag");
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "command": "solve", "n": 5, "einstein": 20.0, "q": 3.0, "N": 120,
            "out_dir": cfg_out, "solver": { "seed": 3 }
        })
        .to_string(),
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();

    assert!(lab(&["--config", cfg], None).status.success());
    assert_eq!(json(&cfg_out.join("solution.json"))["N"], 120);

    assert!(lab(&["--config", cfg, "solve", "--N", "160"], Some(&env_out)).status.success());
    assert_eq!(json(&env_out.join("solution.json"))["N"], 160);

    let o = lab(&["--config", cfg, "--out", flag_out.to_str().unwrap()], Some(&env_out));
    assert!(o.status.success());
    assert_eq!(json(&flag_out.join("solution.json"))["N"], 120);
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"command": "coefficients", "colour": 1}"#).unwrap();
    let o = lab(&["--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_and_blowup_are_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str, jobs: &str| {
        let out = dir.path().join(tag);
        let o = lab(
            &[
                "--jobs", jobs, "--out", out.to_str().unwrap(), "sweep-dm", "--n", "5", "--einstein", "20",
                "--q", "3", "--N", "200", "--dm-max-m", "3", "--seeds", "4",
            ],
            None,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = lab(
            &["--out", out.to_str().unwrap(), "blowup", "--q", "2", "--count", "11", "--trace-gamma", "-0.5"],
            None,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for f in ["records.json", "summary.csv", "oscillation.csv", "trace.csv"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert_eq!(x, y, "{f} differs");
        let text = String::from_utf8(x).unwrap();
        if f.ends_with(".csv") {
            assert!(text.starts_with("# paneitz-lab ") && text.contains("# config-sha256 "), "{f}");
        } else {
            assert!(json(&a.join(f))["meta"]["config_sha256"].is_string());
        }
    }
    let osc = std::fs::read_to_string(a.join("oscillation.csv")).unwrap();
    assert!(osc.lines().any(|l| l.contains("sign_change")));
}

#[test]
fn profiles_validate_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(
        &["--out", dir.path().to_str().unwrap(), "profiles", "--n", "5", "--k", "2", "--export"],
        None,
    );
    assert!(o.status.success(), "{}", stdout(&o));
    let exported = dir.path().join("sphere_point.json");
    assert!(json(&exported)["meta"]["tool"] == "paneitz-lab");
    let o = lab(
        &["profiles", "--profile", exported.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", stdout(&o));
}
