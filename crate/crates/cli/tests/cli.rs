use std::path::Path;
use std::process::{Command, Output};

fn omniwheel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omniwheel")).args(args).output().expect("spawn omniwheel")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn linearize_check_passes() {
    let o = omniwheel(&["linearize", "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn exported_gains_drive_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("gains.toml");
    let g = gains.to_str().unwrap();
    let o = omniwheel(&["synthesize", "--export-gains", g]);
    assert_eq!(o.status.code(), Some(0));
    assert!(gains.exists());

    let out = dir.path().join("out");
    let o = omniwheel(&["run", "station-keeping", "--gains", g, "--sensor", "ideal", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let run = out.join("station-keeping");
    for f in ["trace.csv", "metrics.json", "trajectory.svg", "attitude.svg"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    assert!(!run.join("velocity.svg").exists());
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["passed"], true);
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.toml");
    std::fs::write(&params, "R = -1.0\n").unwrap();
    let o = omniwheel(&["linearize", "--params", params.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let o = omniwheel(&["run", "cartwheel", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Path::new(&dir.path().join("cartwheel")).exists());
}
