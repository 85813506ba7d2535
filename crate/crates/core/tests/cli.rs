use std::path::Path;
use std::process::{Command, Output};

fn seroprev(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seroprev"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SEROPREV_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&seroprev(&["fit", "--no-such-flag"], dir.path())), 64);
    assert_eq!(code(&seroprev(&["summarize"], dir.path())), 64);
    assert_eq!(code(&seroprev(&["--help"], dir.path())), 0);
}

#[test]
fn missing_inputs_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = seroprev(&["validate", "--data", "absent"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent"));
}

#[test]
fn pipeline_runs_and_lambda_one_matches_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let steps: [&[&str]; 5] = [
        &["simulate", "--seed", "3", "--out", "data"],
        &["validate", "--data", "data"],
        &["fit", "--data", "data", "--out", "fit", "--chains", "2", "--iterations", "1500", "--burnin", "500", "--thin", "5"],
        &["summarize", "--draws", "fit"],
        &["sensitivity", "--draws", "fit", "--lambdas", "1,2"],
    ];
    for args in steps {
        let o = seroprev(args, d);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["draws.csv", "fit-manifest.toml", "summary.csv", "summarize-manifest.toml", "sensitivity.svg"] {
        assert!(d.join("fit").join(f).is_file(), "{f}");
    }

    let summary = std::fs::read_to_string(d.join("fit/summary.csv")).unwrap();
    let sweep = std::fs::read_to_string(d.join("fit/sensitivity.csv")).unwrap();
    let at_one: Vec<String> = sweep
        .lines()
        .skip(1)
        .filter_map(|l| l.strip_prefix("1,").map(str::to_string))
        .collect();
    let rows: Vec<String> = summary.lines().skip(1).map(str::to_string).collect();
    assert_eq!(at_one, rows);

    // Editing an input after the fit is caught.
    let tracts = d.join("data/tracts.csv");
    let mut t = std::fs::read_to_string(&tracts).unwrap();
    t.push('\n');
    std::fs::write(&tracts, t).unwrap();
    assert_eq!(code(&seroprev(&["summarize", "--draws", "fit"], d)), 1);
}
