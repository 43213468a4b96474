use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn boxlab(project: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxlab"))
        .arg("--project")
        .arg(project)
        .args(args)
        .env_remove("BOXLAB_API_KEY")
        .env_remove("BOXLAB_PROJECT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn png(seed: u8, w: u32, h: u32) -> Vec<u8> {
    let img = image::RgbaImage::from_fn(w, h, |x, y| image::Rgba([seed, x as u8, y as u8, 255]));
    boxlab_core::image_store::encode_png(&img).unwrap()
}

#[test]
fn cost_prints_two_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let o = boxlab(dir.path(), &["cost", "--n", "1000", "--full-sec", "30", "--box-sec", "10", "--wage", "18", "--api-cost", "0.0002"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("human_only_cost: 150.00\n"), "{out}");
    assert!(out.contains("savings: 99.80\n"), "{out}");
    let bad = boxlab(dir.path(), &["cost", "--n", "1", "--full-sec", "-1", "--box-sec", "1", "--wage", "1", "--api-cost", "0"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let project = dir.path().join("p");
    assert_eq!(boxlab(&project, &["eval", "--policy", "base"]).status.code(), Some(2), "missing project");
    assert!(boxlab(&project, &["init"]).status.success());
    assert_eq!(boxlab(&project, &["init"]).status.code(), Some(2), "already exists");
    assert_eq!(boxlab(&project, &["eval", "--policy", "base"]).status.code(), Some(1), "nothing to evaluate");
    assert_eq!(boxlab(&project, &["eval", "--policy", "fuzzy"]).status.code(), Some(2));
    assert_eq!(boxlab(&project, &["label", "--provider", "live"]).status.code(), Some(2), "no key in env");
    assert_eq!(boxlab(&project, &["label", "--provider", "remote"]).status.code(), Some(2));
    assert_eq!(boxlab(&project, &["label", "--provider", "mock:/no/such/file"]).status.code(), Some(2));
    assert_eq!(boxlab(&project, &["label", "--filter", "status=Verified", "--provider", "mock:/dev/null"]).status.code(), Some(2));

    fs::write(project.join("annotations.log"), "garbage\n").unwrap();
    let o = boxlab(&project, &["status"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt"));
}

#[test]
fn writers_are_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    assert!(boxlab(dir.path(), &["init"]).status.success());
    let _held = boxlab_core::project::ProjectLock::acquire(dir.path()).unwrap();
    let o = boxlab(dir.path(), &["ingest", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("locked"));
    // Readers do not need the lock.
    assert!(boxlab(dir.path(), &["status"]).status.success());
}

#[test]
fn import_label_review_export() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    let zoo = png(9, 120, 80);
    fs::write(data.join("zoo.png"), &zoo).unwrap();
    let hash = boxlab_core::image_store::content_hash(&zoo);
    let doc = serde_json::json!({
        "images": [{"id": 1, "file_name": "zoo.png", "width": 120, "height": 80}],
        "annotations": [
            {"id": 1, "image_id": 1, "bbox": [0, 0, 30, 30], "category_id": 1},
            {"id": 2, "image_id": 1, "bbox": [30, 0, 30, 30], "category_id": 2},
            {"id": 3, "image_id": 1, "bbox": [60, 0, 30, 30], "category_id": 3},
            {"id": 4, "image_id": 1, "bbox": [0, 40, 30.4, 29.6], "category_id": 4}
        ],
        "categories": [
            {"id": 1, "name": "saddle-billed stork"}, {"id": 2, "name": "elephant rhinoceros"},
            {"id": 3, "name": "giraffe"}, {"id": 4, "name": "ankole-watusi"}
        ]
    });
    fs::write(data.join("boxes.json"), doc.to_string()).unwrap();
    let fixture = format!(
        "{hash}@0,0,30,30\tSaddle-Billed Stork\n{hash}@30,0,30,30\tElephant Rhinoceros\n{hash}@60,0,30,30\tGiraffe\n{hash}@0,40,30,30\tAnkole-Watusi\n"
    );
    fs::write(data.join("replies.tsv"), fixture).unwrap();

    let project = dir.path().join("zoo");
    assert!(boxlab(&project, &["init", "--taxonomy", "builtin:zoo"]).status.success());
    let o = boxlab(&project, &["import-boxes", data.join("boxes.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mock = format!("mock:{}", data.join("replies.tsv").display());
    let o = boxlab(&project, &["label", "--provider", &mock, "--mode", "crop"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("labeled 4 of 4"));

    let o = boxlab(&project, &["eval", "--policy", "exact"]);
    assert!(stdout(&o).contains("accuracy: 100.00% (4/4)"), "{}", stdout(&o));

    let loaded = boxlab_core::project::load(&project).unwrap();
    let ids: Vec<String> = loaded.annotations().map(|a| a.id.clone()).collect();
    assert!(boxlab(&project, &["verdict", &ids[0], "accept"]).status.success());
    assert!(boxlab(&project, &["verdict", &ids[1], "correct", "white rhino"]).status.success());
    assert!(boxlab(&project, &["verdict", &ids[2], "flag", "two giraffes"]).status.success());
    assert_eq!(boxlab(&project, &["verdict", &ids[0], "accept"]).status.code(), Some(2));

    let out = dir.path().join("export.json");
    assert!(boxlab(&project, &["export", "--level", "base", "--out", out.to_str().unwrap()]).status.success());
    let exported: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let names: Vec<&str> = exported["categories"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, vec!["bird", "white rhino"]);
    assert_eq!(exported["annotations"][0]["bbox"], serde_json::json!([0.0, 0.0, 30.0, 30.0]));

    // Unreviewed annotations can be exported with their AI class on request.
    assert_eq!(boxlab(&project, &["export", "--include", "BoxDrawn,AiLabeled,Verified"]).status.code(), Some(0));
    let status = stdout(&boxlab(&project, &["status"]));
    assert!(status.contains("Flagged: 1") && status.contains("AiLabeled: 1"), "{status}");
}
