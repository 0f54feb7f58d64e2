use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use augforge::imaging::{save_image, save_mask, BBox, Image, Mask};
use augforge::search::{read_log, TrialState};
use serde_json::{json, Value};

fn augforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_augforge"))
        .args(args)
        .env_remove("AUGFORGE_SEED")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn evaluate_perfect_detections() {
    let dir = tempfile::tempdir().unwrap();
    let boxes = [[10.0, 10.0, 50.0, 40.0], [60.0, 5.0, 90.0, 70.0]];
    let gt = json!({"images": [{"id": "a", "width": 100, "height": 80, "subset": "lightbox",
        "boxes": boxes.iter().enumerate().map(|(i, b)| json!({"x_min": b[0], "y_min": b[1], "x_max": b[2], "y_max": b[3], "class_id": i})).collect::<Vec<_>>()}]});
    let det = json!({"detections": boxes.iter().enumerate().map(|(i, b)| json!({"image_id": "a", "x_min": b[0], "y_min": b[1], "x_max": b[2], "y_max": b[3], "class_id": i, "score": 0.9})).collect::<Vec<_>>()});
    fs::write(dir.path().join("gt.json"), gt.to_string()).unwrap();
    fs::write(dir.path().join("det.json"), det.to_string()).unwrap();
    let out = dir.path().join("metrics.json");
    let o = augforge(&["evaluate", "--gt", s(&dir.path().join("gt.json")), "--det", s(&dir.path().join("det.json")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json_file(&out);
    assert_eq!(m["mAP"], 1.0);
    assert_eq!(m["mAP@50"], 1.0);
    assert_eq!(m["mean_IoU"], 1.0);
    assert_eq!(m["subset_mAP"]["lightbox"], 1.0);
}

#[test]
fn validation_errors_exit_one() {
    let o = augforge(&["search", "--surrogate", "--trials", "10", "--startup", "64"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[validation]:"));
    assert_eq!(stderr(&o).lines().count(), 1);

    let o = augforge(&["evaluate", "--gt", "x.json", "--nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[validation]:"));

    let o = augforge(&["search", "--surrogate", "--objective-cmd", "true"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("study.jsonl");
    fs::write(&db, "{\"trial_id\": 0, \"state\": \"nonsense\"}\n").unwrap();
    let o = augforge(&["report", "--db", s(&db)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error[runtime]:") && err.contains("line 1"), "{err}");
}

#[test]
fn external_objective_protocol_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let requests = dir.path().join("requests");
    fs::create_dir(&requests).unwrap();
    // records each request and answers with metrics
    let cmd = format!(
        r#"cat > "{}/$$.json"; echo '{{"objective": 0.25, "metrics": {{"mAP@50": 0.5, "note": "double"}}}}'"#,
        requests.display()
    );
    let db = dir.path().join("study.jsonl");
    let space = dir.path().join("space.json");
    fs::write(&space, r#"{"params": ["fog", "invert", "affine"]}"#).unwrap();
    let o = augforge(&["search", "--space", s(&space), "--objective-cmd", &cmd, "--trials", "6", "--startup", "3", "--db", s(&db), "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let docs: Vec<Value> = fs::read_dir(&requests)
        .unwrap()
        .map(|e| json_file(&e.unwrap().path()))
        .collect();
    assert_eq!(docs.len(), 6);
    let mut ids: Vec<u64> = docs.iter().map(|d| d["trial_id"].as_u64().unwrap()).collect();
    ids.sort();
    assert_eq!(ids, (0..6).collect::<Vec<_>>());
    for d in &docs {
        assert_eq!(d["seed"], 4);
        assert_eq!(d["chain"]["augmentations"].as_array().unwrap().len(), 30);
    }
    let log = read_log(&db).unwrap();
    for t in log.trials.values() {
        assert_eq!(t.value, Some(0.25));
        assert_eq!(t.metrics.as_ref().unwrap(), &json!({"mAP@50": 0.5, "note": "double"}));
    }
}

#[test]
fn failing_objective_marks_trial_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("study.jsonl");
    let cmd = r#"req=$(cat); case "$req" in *'"trial_id":2}'*) exit 1;; *'"trial_id":3}'*) sleep 5;; *'"trial_id":4}'*) echo nope; exit 0;; esac; echo '{"objective": 0.5}'"#;
    let o = augforge(&["search", "--objective-cmd", cmd, "--trials", "8", "--startup", "4", "--db", s(&db), "--timeout", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = read_log(&db).unwrap();
    let reason = |id: u64| log.trials[&id].reason.clone().unwrap_or_default();
    assert_eq!(log.trials[&2].state, TrialState::Failed);
    assert_eq!(reason(3), "timeout");
    assert!(reason(4).starts_with("malformed output"), "{}", reason(4));
    assert_eq!(log.complete().count(), 5);
}

#[test]
fn mostly_failing_objective_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let o = augforge(&["search", "--objective-cmd", "exit 3", "--trials", "6", "--startup", "2", "--db", s(&dir.path().join("db.jsonl"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("aborted"), "{}", stderr(&o));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    let base = ["search", "--surrogate", "--trials", "12", "--startup", "4"];
    let o = augforge(&[&base[..], &["--seed", "99", "--db", s(&a)]].concat());
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_augforge"))
        .args([&base[..], &["--db", s(&b)]].concat())
        .env("AUGFORGE_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        augforge::search::normalize_log(&a).unwrap(),
        augforge::search::normalize_log(&b).unwrap()
    );
}

#[test]
fn importance_single_repeat_has_zero_std() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("study.jsonl");
    let space = dir.path().join("space.json");
    fs::write(&space, r#"{"params": ["fog", "snow", "invert", "affine"]}"#).unwrap();
    let o = augforge(&["search", "--space", s(&space), "--surrogate", "--noise", "0.1", "--trials", "40", "--startup", "10", "--db", s(&db)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("imp.json");
    let o = augforge(&["importance", "--db", s(&db), "--repeats", "1", "--trees", "16", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json_file(&out);
    let params = r["params"].as_array().unwrap();
    assert_eq!(params.len(), 4);
    assert!(params.iter().all(|p| p["std"] == 0.0));
}

#[test]
fn importance_rejects_small_studies() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("study.jsonl");
    let o = augforge(&["search", "--surrogate", "--trials", "5", "--startup", "5", "--db", s(&db)]);
    assert!(o.status.success());
    let o = augforge(&["importance", "--db", s(&db)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("60"), "{}", stderr(&o));
}

fn write_dataset(root: &Path) {
    fs::create_dir_all(root.join("images")).unwrap();
    fs::create_dir_all(root.join("masks")).unwrap();
    let b = BBox::new(8.0, 6.0, 24.0, 18.0, 0).unwrap();
    let img = Image::from_fn(32, 24, |x, y| [x as f32 / 31.0, y as f32 / 23.0, 0.3]);
    save_image(&img, root.join("images/one.png")).unwrap();
    save_mask(&Mask::from_boxes(32, 24, &[b]), root.join("masks/one.png")).unwrap();
    let gt = json!({"images": [{"id": "one", "width": 32, "height": 24, "boxes": [b]}]});
    fs::write(root.join("ground_truth.json"), gt.to_string()).unwrap();
}

#[test]
fn augment_and_preview() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data);
    let cfg = dir.path().join("chain.json");
    fs::write(
        &cfg,
        json!({"augmentations": [{"kind": "affine", "active": true, "probability": 1.0}, {"kind": "fog", "active": true, "probability": 1.0}]}).to_string(),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = augforge(&["augment", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&out), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("images/one.png").exists() && out.join("masks/one.png").exists());
    assert_eq!(json_file(&out.join("ground_truth.json"))["images"].as_array().unwrap().len(), 1);

    let grid = dir.path().join("grid.png");
    let o = augforge(&["preview", "--input", s(&data.join("images/one.png")), "--mask", s(&data.join("masks/one.png")), "--out", s(&grid)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["tiles"], 31);
    assert_eq!(summary["degraded"], json!(["background"]));
    assert!(grid.exists());
}

#[test]
fn augment_reports_every_dataset_problem() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data);
    fs::remove_file(data.join("images/one.png")).unwrap();
    fs::remove_file(data.join("masks/one.png")).unwrap();
    let cfg = dir.path().join("chain.json");
    fs::write(&cfg, r#"{"augmentations": []}"#).unwrap();
    let out = dir.path().join("out");
    let o = augforge(&["augment", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("images/one.png") && err.contains("masks/one.png"), "{err}");
    assert!(!out.exists());
}
