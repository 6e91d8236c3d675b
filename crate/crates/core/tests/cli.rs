use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "[synth]\nn_users = 300\n";

fn leaning(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_leaning"))
        .current_dir(dir)
        .args(args)
        .env_remove("LEANING_CONFIG")
        .env_remove("LEANING_SOURCE")
        .env_remove("LEANING_SEEDS")
        .env_remove("LEANING_OUT")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "leaning {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    leaning(d, &["--config", "small.toml", "--seed", "1", "--out", "src", "synth"]);
    for run in ["a", "b"] {
        leaning(d, &["--config", "small.toml", "--seed", "1", "--source", "file:src", "--out", run, "pipeline"]);
    }
    let a = files_under(&d.join("a"));
    let b = files_under(&d.join("b"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        // Manifests carry timestamps; everything else must match exactly.
        if !name.starts_with("manifests") {
            assert!(bytes == &b[name], "{name} differs between runs");
        }
    }
    assert!(a.contains_key("reports/eval.json"));
    assert!(a.contains_key("model/model.json"));

    let manifest: serde_json::Value = serde_json::from_slice(&a["manifests/pipeline.json"]).unwrap();
    let other: serde_json::Value = serde_json::from_slice(&b["manifests/pipeline.json"]).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config_sha256"], other["config_sha256"]);
    let digests = |m: &serde_json::Value| -> Vec<(String, String)> {
        m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| {
                let path = o["path"].as_str().unwrap();
                (path[2..].to_string(), o["sha256"].as_str().expect("file digest").to_string())
            })
            .collect()
    };
    assert_eq!(digests(&manifest), digests(&other));
    assert!(digests(&manifest).iter().any(|(p, _)| p == "reports/eval.json"));
}

#[test]
fn user_below_like_threshold_is_excluded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    leaning(d, &["--config", "small.toml", "--seed", "2", "--out", "src", "synth"]);

    let likes_path = d.join("src/likes.jsonl");
    let mut likes = std::fs::read_to_string(&likes_path).unwrap();
    let posts: Vec<String> = likes
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["post_id"].as_str().unwrap().to_string())
        .collect();
    let mut distinct = posts.clone();
    distinct.sort();
    distinct.dedup();
    for post in distinct.iter().take(9) {
        likes.push_str(&format!("{{\"user_id\":\"nine_likes\",\"post_id\":\"{post}\"}}\n"));
    }
    std::fs::write(&likes_path, likes).unwrap();

    leaning(d, &["--source", "file:src", "--out", "run", "ingest"]);
    let out = leaning(d, &["--out", "run", "label"]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["below_threshold"], 1);

    let profiles = std::fs::read_to_string(d.join("run/labels/profiles.csv")).unwrap();
    assert!(!profiles.contains("nine_likes"));
    let exclusions = std::fs::read_to_string(d.join("run/labels/exclusions.csv")).unwrap();
    assert!(exclusions.lines().any(|l| l == "nine_likes,9"), "{exclusions}");
}

#[test]
fn planted_signal_is_recovered_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("planted.toml"),
        "[synth]\nn_users = 300\nlike_noise = 0.0\nparty_token_rate = 1.0\nneighbor_borrow_rate = 0.0\nannotator_noise = 0.0\n",
    )
    .unwrap();
    leaning(d, &["--config", "planted.toml", "--seed", "3", "--out", "src", "synth"]);
    let out = leaning(d, &["--config", "planted.toml", "--seed", "3", "--source", "file:src", "--out", "run", "pipeline"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("user-level micro-F1 (manual-test): 1.0000"), "{stdout}");

    let pred = leaning(d, &["--out", "run", "predict", "--text", "p3n1 p3n2 p3n3 p3n4 p3n5"]);
    let row: serde_json::Value = serde_json::from_slice(&pred.stdout).unwrap();
    assert_eq!(row["label"], "PiS", "{row}");
}

#[test]
fn errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_leaning"))
        .current_dir(dir.path())
        .args(["--out", "run", "train"])
        .env_remove("LEANING_CONFIG")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}
