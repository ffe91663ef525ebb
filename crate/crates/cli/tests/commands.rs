use std::path::Path;
use std::process::Command;

use posefuse_cli::cli::read_report;
use posefuse_core::dataio::overlay::read_overlay_bundle;
use posefuse_core::dataio::poses::read_poses;
use posefuse_core::dataio::Sequence;
use posefuse_core::metrics::{ate, TrajectoryPair};

fn posefuse(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_posefuse")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> String {
    let (code, stdout, stderr) = posefuse(args);
    assert_eq!(code, 0, "{args:?}\n{stderr}");
    stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_noise_end_to_end_gives_a_zero_report() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("cv");
    ok(&["synth", "--out", s(&seq), "--frames", "60", "--zero-noise", "--motion", "constant-velocity"]);
    ok(&["smooth", s(&seq)]);
    ok(&["relpose", s(&seq)]);
    ok(&["optimize", s(&seq)]);
    let table = ok(&["evaluate", "--seq", s(&seq), "--estimate", s(&seq.join("optimized.csv"))]);
    assert!(table.contains("ATE (mm)"));
    let report = read_report(&seq.join("report.json")).unwrap();
    assert_eq!(report.frames, 60);
    assert!(report.is_perfect(1e-3), "{report}");
    assert!(report.add.is_some() && report.iou_recalls.is_some());
}

#[test]
fn commands_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["synth", "--out", s(d), "--id", "same", "--frames", "30", "--seed", "9"]);
    }
    for f in ["absolute.csv", "gt.csv", "tracks.csv", "model.xyz", "manifest.toml", "depth/000007.png"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let snapshot = |d: &Path| -> Vec<Vec<u8>> {
        ["smoothed.csv", "relatives.csv", "optimized.csv", "overlays.json"]
            .iter()
            .map(|f| std::fs::read(d.join(f)).unwrap())
            .collect()
    };
    ok(&["run", "--seed", "4", s(&a)]);
    ok(&["export-overlays", s(&a)]);
    let first = snapshot(&a);
    ok(&["run", "--seed", "4", "--jobs", "1", s(&a)]);
    ok(&["export-overlays", s(&a)]);
    assert_eq!(snapshot(&a), first);
}

#[test]
fn overlays_cover_every_available_variant() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("o");
    ok(&["synth", "--out", s(&seq), "--frames", "20"]);
    ok(&["export-overlays", s(&seq)]);
    let b = read_overlay_bundle(&seq.join("overlays.json")).unwrap();
    assert_eq!(b.variants, vec!["raw", "gt"]);
    ok(&["run", s(&seq)]);
    ok(&["export-overlays", s(&seq)]);
    let b = read_overlay_bundle(&seq.join("overlays.json")).unwrap();
    assert_eq!(b.variants, vec!["raw", "smoothed", "pgo", "gt"]);
    assert!(b.notices.is_empty());
    assert_eq!(b.frames.len(), 20);
}

#[test]
fn noisy_absolute_poses_reproduce_the_injected_noise() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("n");
    ok(&["synth", "--out", s(&seq), "--frames", "400", "--abs-trans-mm", "4", "--abs-rot-deg", "1.5", "--seed", "2"]);
    ok(&["evaluate", "--seq", s(&seq), "--estimate", s(&seq.join("absolute.csv"))]);
    let r = read_report(&seq.join("report.json")).unwrap();
    // mean of σ·chi(3)
    let chi3_mean = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let expected = 4.0 * chi3_mean;
    assert!((r.ate.mean - expected).abs() < 0.08 * expected, "ATE mean {} vs {expected}", r.ate.mean);
}

#[test]
fn removing_corrupted_frames_lowers_the_maximum_error() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("c");
    ok(&["synth", "--out", s(&seq), "--frames", "150", "--corrupt", "10", "--seed", "5"]);
    ok(&["smooth", s(&seq)]);
    ok(&["relpose", s(&seq)]);
    let plain = seq.join("plain.csv");
    ok(&["optimize", s(&seq), "--out", s(&plain)]);

    let corrupted = Sequence::open(&seq).unwrap().manifest.corrupted_frames;
    assert_eq!(corrupted.len(), 10);
    let mut text = String::from("# target,tier,weight\n");
    for f in &corrupted {
        text.push_str(&format!("{f},removed,\n"));
    }
    let ov = seq.join("remove.csv");
    std::fs::write(&ov, text).unwrap();
    let fixed = seq.join("fixed.csv");
    ok(&["optimize", s(&seq), "--overrides", s(&ov), "--out", s(&fixed)]);

    let gt = read_poses(&seq.join("gt.csv")).unwrap();
    let max = |p: &Path| ate(&TrajectoryPair::new(&read_poses(p).unwrap(), &gt).unwrap()).max;
    assert!(max(&fixed) < max(&plain), "{} vs {}", max(&fixed), max(&plain));
}

#[test]
fn saved_override_file_is_picked_up_by_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("p");
    ok(&["synth", "--out", s(&seq), "--frames", "40", "--corrupt-frames", "20"]);
    ok(&["run", s(&seq)]);
    let before = std::fs::read(seq.join("optimized.csv")).unwrap();
    std::fs::write(seq.join("overrides.csv"), "# target,tier,weight\n20,removed,\n").unwrap();
    ok(&["optimize", s(&seq)]);
    assert_ne!(std::fs::read(seq.join("optimized.csv")).unwrap(), before);
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("v");
    ok(&["synth", "--out", s(&seq), "--frames", "10"]);

    let (code, _, err) = posefuse(&["smooth", s(&dir.path().join("missing"))]);
    assert_eq!(code, 1);
    assert!(err.contains("missing"), "{err}");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[noise]\nunknown_key = 1\n").unwrap();
    assert_eq!(posefuse(&["--config", s(&cfg), "smooth", s(&seq)]).0, 1);

    let (code, _, _) = posefuse(&["synth", "--out", s(&dir.path().join("x")), "--frames", "10", "--corrupt-frames", "10"]);
    assert_eq!(code, 1);

    let ov = dir.path().join("ov.csv");
    std::fs::write(&ov, "# target,tier,weight\n99,removed,\n").unwrap();
    ok(&["smooth", s(&seq)]);
    ok(&["relpose", s(&seq)]);
    assert_eq!(posefuse(&["optimize", s(&seq), "--overrides", s(&ov)]).0, 1);

    assert_eq!(posefuse(&["smooth", s(&seq), s(&seq), "--out", s(&ov)]).0, 1);
    assert_eq!(posefuse(&["evaluate", "--estimate", s(&seq.join("absolute.csv"))]).0, 1);
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("f");
    ok(&["synth", "--out", s(&seq), "--frames", "10"]);
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, "[noise]\nsigma_meas_trans = 1e-200\nsigma_meas_rot = 1e-200\nq_accel = 1e-200\nq_alpha = 1e-200\n").unwrap();
    let (code, _, err) = posefuse(&["--config", s(&cfg), "smooth", s(&seq)]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn help_and_version_succeed() {
    assert!(ok(&["--help"]).contains("export-overlays"));
    assert!(ok(&["--version"]).contains("posefuse"));
}

#[test]
fn evaluate_accepts_explicit_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("e");
    ok(&["synth", "--out", s(&seq), "--frames", "12"]);
    let out = dir.path().join("r.json");
    let est = seq.join("absolute.csv");
    let gt = seq.join("gt.csv");
    let model = seq.join("model.xyz");
    ok(&[
        "evaluate", "--estimate", s(&est), "--reference", s(&gt), "--model", s(&model),
        "--extents", "0.12,0.16,0.09", "--thresholds", "5:2,10:5", "--delta", "2", "--out", s(&out),
    ]);
    let r = read_report(&out).unwrap();
    assert_eq!(r.rpe_delta, 2);
    assert_eq!(r.pose_recalls.len(), 2);
    assert!(r.iou_recalls.is_some() && r.add.is_some());
    assert_eq!(posefuse(&["evaluate", "--estimate", s(&est), "--reference", s(&gt), "--extents", "0.1,0.2"]).0, 1);
    assert_eq!(posefuse(&["evaluate", "--estimate", s(&est), "--reference", s(&gt), "--thresholds", "5"]).0, 1);
}
