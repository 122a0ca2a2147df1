mod common;

use std::fs;
use std::time::Instant;

use common::{accuracy, bin, fixture_config, fixture_dir, pipeline, snapshot, stderr, stdout};

#[test]
fn two_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let start = Instant::now();
    for out in [&a, &b] {
        let o = pipeline(&fixture_config(), out, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(
            stdout(&o).contains("10 stages executed, 0 skipped"),
            "{}",
            stdout(&o)
        );
    }
    assert!(start.elapsed().as_secs() < 30);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{k} differs");
    }
    assert!(!sa
        .keys()
        .any(|k| k.ends_with(".partial") || k.ends_with(".pending")));
}

#[test]
fn mock_yields_hand_computed_accuracies() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = pipeline(&fixture_config(), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    // The dictionary knows only the law sense of "power".
    for t in ["T1", "T5"] {
        assert_eq!(accuracy(&out, t, "law"), Some(1.0));
        assert_eq!(accuracy(&out, t, "science"), Some(0.0));
    }
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("| T1 ")), "{report}");
    assert!(report.lines().any(|l| l.starts_with("| T5 ")), "{report}");
    assert!(
        report.contains("T5-T1") || report.contains("T5−T1"),
        "{report}"
    );
    assert!(
        report.contains("100.00") && report.contains("50.00"),
        "{report}"
    );
}

#[test]
fn rerun_skips_every_stage_and_force_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(pipeline(&fixture_config(), &out, &[]).status.success());
    let before = snapshot(&out);

    let o = pipeline(&fixture_config(), &out, &[]);
    assert!(o.status.success());
    assert!(
        stdout(&o).contains("0 stages executed, 10 skipped"),
        "{}",
        stdout(&o)
    );
    assert_eq!(snapshot(&out), before);

    let o = pipeline(&fixture_config(), &out, &["--force"]);
    assert!(stdout(&o).contains("10 stages executed"), "{}", stdout(&o));
    assert_eq!(snapshot(&out), before);
}

#[test]
fn tampered_output_reruns_its_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(pipeline(&fixture_config(), &out, &[]).status.success());
    let report = out.join("report.md");
    let original = fs::read(&report).unwrap();
    fs::write(&report, "edited").unwrap();
    let o = pipeline(&fixture_config(), &out, &[]);
    assert!(
        stdout(&o).contains("1 stages executed, 9 skipped"),
        "{}",
        stdout(&o)
    );
    assert_eq!(fs::read(&report).unwrap(), original);
}

#[test]
fn changed_config_invalidates_stamps() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let raw = fs::read_to_string(fixture_config()).unwrap();
    for entry in fs::read_dir(fixture_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            fs::copy(&p, dir.join(p.file_name().unwrap())).unwrap();
        } else {
            copy_dir(&p, &dir.join(p.file_name().unwrap()));
        }
    }
    let cfg = dir.join("pipeline.toml");
    let out = dir.join("out");
    assert!(pipeline(&cfg, &out, &[]).status.success());
    fs::write(&cfg, raw.replace("bootstrap = 11", "bootstrap = 12")).unwrap();
    let o = pipeline(&cfg, &out, &[]);
    assert!(stdout(&o).contains("10 stages executed"), "{}", stdout(&o));
}

fn copy_dir(from: &std::path::Path, to: &std::path::Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let p = entry.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest);
        } else {
            fs::copy(&p, &dest).unwrap();
        }
    }
}

#[test]
fn missing_manifest_exits_1_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("pipeline.toml");
    let raw = fs::read_to_string(fixture_config()).unwrap();
    fs::write(&cfg, raw.replace("manifest.toml", "nowhere.toml")).unwrap();
    let out = tmp.path().join("out");
    let o = pipeline(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn stage_failure_exits_2_and_names_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    // A file where the lexicon directory should go.
    fs::write(out.join("lexicon"), "").unwrap();
    let o = pipeline(&fixture_config(), &out, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("lexicon"), "{}", stderr(&o));
}

#[test]
fn sequential_flag_gives_same_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(pipeline(&fixture_config(), &a, &[]).status.success());
    let o = bin()
        .args([
            "--sequential",
            "--log-level",
            "warn",
            "pipeline",
            "all",
            "--config",
        ])
        .arg(fixture_config())
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(snapshot(&a), snapshot(&b));
}
