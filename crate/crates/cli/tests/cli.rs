use std::process::Command;

fn deopt(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_deopt")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn clean_campaign_exits_zero() {
    let (code, stdout) = deopt(&["run", "--max-rules", "8", "--iterations", "5", "--seed", "2"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("iterations 5"));
}

#[test]
fn bugs_exit_two_and_reports_reduce() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let out_s = out.to_str().unwrap();
    let args = [
        "run",
        "--inject",
        "seminaive_delta",
        "--max-rules",
        "30",
        "--iterations",
        "20",
        "--seed",
        "4",
        "--no-reduce",
        "--out",
        out_s,
    ];
    let (code, stdout) = deopt(&args);
    assert_eq!(code, 2, "{stdout}");
    let report = std::fs::read_dir(out.join("reports")).unwrap().next().unwrap().unwrap().path();
    let (code, stdout) = deopt(&["reduce", "--report", report.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    assert!(report.join("reduced.dl").exists());

    let (code, stdout) = deopt(&["stats", "--out", out_s]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with(out_s));
}

#[test]
fn configuration_errors_exit_one() {
    assert_eq!(deopt(&["run", "--p-empty", "1.5"]).0, 1);
    assert_eq!(deopt(&["run", "--engine", "/nonexistent/engine.toml"]).0, 1);
    assert_eq!(deopt(&["run", "--workers", "0", "--iterations", "1"]).0, 1);
}

#[test]
fn example_engine_specs_load() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../engines");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let spec = deopt_core::adapters::EngineSpec::load(&path);
        assert!(spec.is_ok(), "{}: {:?}", path.display(), spec.err());
    }
}
