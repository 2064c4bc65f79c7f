use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfgs-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"{
  "version": 1,
  "grid": {"nx": [33], "nt": 65},
  "carleman": {"nx": [17], "nt": 41, "corpus": {"count": 10}},
  "experiment": {"quasi": {"pairs": 10}}
}"#;

#[test]
fn print_config_emits_parseable_defaults() {
    let o = lab(&["print-config"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["grid"]["nx"][0], 201);
    assert_eq!(v["problem"]["kernel"]["kind"], "gaussian");
    assert_eq!(v["carleman"]["mode"], "corrected");
}

#[test]
fn printed_config_reloads_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let first = lab(&["print-config", "--seed", "11"]);
    let cfg = write_config(
        dir.path(),
        "c.json",
        std::str::from_utf8(&first.stdout).unwrap(),
    );
    let second = lab(&["print-config", "--config", &cfg]);
    assert_eq!(code(&second), 0);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn malformed_and_unknown_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("bad.json", "{ not json"),
        ("unknown.json", r#"{"version": 1, "colour": "blue"}"#),
        ("version.json", r#"{"version": 3}"#),
        (
            "expr.json",
            r#"{"version": 1, "problem": {"u_terminal": "cos("}}"#,
        ),
        (
            "shift.json",
            r#"{"version": 1, "carleman": {"shift": 1.9}}"#,
        ),
    ];
    for (name, body) in cases {
        let cfg = write_config(dir.path(), name, body);
        for cmd in ["verify-carleman", "verify-quasi", "audit"] {
            let o = lab(&[cmd, "--config", &cfg]);
            assert_eq!(
                code(&o),
                2,
                "{name} {cmd}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
    }
    assert_eq!(code(&lab(&["audit", "--config", "/nonexistent/c.json"])), 2);
    assert_eq!(code(&lab(&["no-such-command"])), 2);
    assert_eq!(code(&lab(&["audit", "--mode", "sideways"])), 2);
}

#[test]
fn carleman_campaign_passes_corrected_and_fails_literal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    let o = lab(&[
        "verify-carleman",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("fuzz.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 * 6);
    assert!(out.join("margins.svg").exists());

    let o = lab(&[
        "verify-carleman",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "literal-paper",
    ]);
    assert_eq!(code(&o), 1);
    let csv = std::fs::read_to_string(out.join("fuzz.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",literal-paper,"));
}

#[test]
fn quasi_campaign_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    let o = lab(&[
        "verify-quasi",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("quasi.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 * 3);
}

#[test]
fn audit_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["audit", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let audit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("audit.json")).unwrap())
            .unwrap();
    assert_eq!(audit["reports"].as_array().unwrap().len(), 5);
    assert_eq!(audit["passed"], true);
}

#[test]
fn decoupled_solve_takes_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"version": 1, "grid": {"nx": [33], "nt": 33}, "problem": {"interaction": {"kind": "zero"}}}"#,
    );
    let out = dir.path().join("out");
    let o = lab(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    for f in ["u.field", "p.field", "u0.slice"] {
        assert!(out.join(f).metadata().unwrap().len() > 0);
    }
}

#[test]
fn strong_coupling_exits_1_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"version": 1, "grid": {"nx": [33], "nt": 33},
            "problem": {"interaction": {"kind": "linear", "gamma1": 400.0, "gamma2": 400.0}, "n3": 1e6, "n4": 1e6},
            "solver": {"damping": 1.0, "max_picard": 20}}"#,
    );
    let out = dir.path().join("out");
    let o = lab(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,du,dp"));
    assert!(!out.join("u.field").exists());
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = lab(&["audit", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn stability_reports_are_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let mut csvs = Vec::new();
    for (jobs, name) in [("1", "a"), ("3", "b")] {
        let out = dir.path().join(name);
        let o = lab(&[
            "stability",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        csvs.push(std::fs::read(out.join("sweep.csv")).unwrap());
        let svg = std::fs::read_to_string(out.join("stability.svg")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 3);
    assert!(text.lines().all(|l| l.split(',').count() == 9));
}
