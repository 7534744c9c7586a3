use std::path::Path;
use std::process::{Command, Output};

fn umsk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umsk"))
        .args(args)
        .current_dir(dir)
        .env("UMSK_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_then_skeleton_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = umsk(
        &["generate", "--family", "cantor", "--level", "6", "-o", "c6.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = umsk(&["skeleton", "-i", "c6.json", "-t", "2", "-o", "out/"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for f in [
        "tree.json",
        "measure.json",
        "report.json",
        "net_tree.json",
        "skeleton.json",
        "space.json",
        "tree.nwk",
    ] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }
    let o = umsk(&["verify", "-i", "out/"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn generation_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let o = umsk(
            &[
                "generate",
                "--family",
                "random-doubling",
                "--n",
                "60",
                "--seed",
                "9",
                "-o",
                name,
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn extract_records_t() {
    let dir = tempfile::tempdir().unwrap();
    umsk(
        &["generate", "--family", "cantor", "--level", "6", "-o", "c6.json"],
        dir.path(),
    );
    let alpha = 2f64.ln() / 3f64.ln();
    let (a, b) = (alpha.to_string(), (alpha / 2.0).to_string());
    let o = umsk(
        &["extract", "-i", "c6.json", "--alpha", &a, "--beta", &b, "-o", "out/"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["t"], 2);
    let o = umsk(&["verify", "-i", "out/"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn tampered_measure_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    umsk(
        &["generate", "--family", "grid", "--side", "40", "-o", "g.csv"],
        dir.path(),
    );
    let o = umsk(&["skeleton", "-i", "g.csv", "--t", "3", "-o", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let path = dir.path().join("out/measure.json");
    let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let p = m["support"][0].as_u64().unwrap() as usize;
    let v = m["nu"][p].as_f64().unwrap();
    m["nu"][p] = serde_json::json!(v * 50.0);
    std::fs::write(&path, m.to_string()).unwrap();
    let o = umsk(&["verify", "-i", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL  growth"), "{text}");
    assert!(text.contains("FAIL  measure-consistency"), "{text}");
}

#[test]
fn report_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    umsk(
        &["generate", "--family", "sierpinski", "--level", "3", "-o", "s.json"],
        dir.path(),
    );
    umsk(
        &["skeleton", "-i", "s.json", "-t", "2", "--concentric-probe", "-o", "out"],
        dir.path(),
    );
    let o = umsk(&["report", "-i", "out", "-o", "tables"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("distortion"));
    let csv = std::fs::read_to_string(dir.path().join("tables/verdicts.csv")).unwrap();
    assert!(csv.starts_with("inequality,center,radius,lhs,rhs,margin,witness"));
    assert!(dir.path().join("tables/ball_profile.csv").exists());
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        umsk(&["generate", "--family", "torus", "-o", "x.json"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        umsk(&["skeleton", "-i", "missing.json", "-o", "o"], dir.path())
            .status
            .code(),
        Some(2)
    );
    std::fs::write(dir.path().join("bad.json"), "{\"name\": \"x\"}").unwrap();
    assert_eq!(
        umsk(&["skeleton", "-i", "bad.json", "-o", "o"], dir.path())
            .status
            .code(),
        Some(2)
    );
    umsk(
        &["generate", "--family", "cantor", "--level", "3", "-o", "c.json"],
        dir.path(),
    );
    assert_eq!(
        umsk(&["skeleton", "-i", "c.json", "-t", "1", "-o", "o"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        umsk(
            &["extract", "-i", "c.json", "--alpha", "0.5", "--beta", "0.7", "-o", "o"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
}
