use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use termset_core::TrainConfig;
use termset_service::{api, Store};
use tower::ServiceExt;

const TOY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/toy.conllu");
const TRAIN: &[&str] = &[
    "train",
    "--contexts",
    "linear,list,unary",
    "--dim",
    "40",
    "--epochs",
    "20",
    "--subsample",
    "1e-2",
    "--min-count",
    "2",
    "--seed",
    "5",
];

fn termset(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_termset"))
        .args(args)
        .env("TERMSET_DATA", data)
        .output()
        .expect("run termset")
}

fn ok(data: &Path, args: &[&str]) -> String {
    let out = termset(data, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn trained(data: &Path) {
    let msg = ok(data, &["ingest", TOY, "--conllu"]);
    assert!(msg.contains("1200 sentences"), "{msg}");
    ok(data, TRAIN);
}

fn http_get(data: &Path, uri: &str) -> (StatusCode, String) {
    let store = Store::new(data, TrainConfig::default()).unwrap();
    let app = api::router(Arc::new(store), 1 << 20);
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let res = app
            .oneshot(Request::builder().uri(uri).body(Body::empty()).unwrap())
            .await
            .unwrap();
        let status = res.status();
        let body = res.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(body.to_vec()).unwrap())
    })
}

#[test]
fn toy_pipeline_expands_java_and_python() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    trained(data);

    let table = ok(data, &["expand", "--category", "languages", "--seed", "java,python", "--k", "8"]);
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 10, "{table}");
    for row in &rows[..2] {
        assert!(row.contains("1.0000") && row.contains('*'), "{row}");
    }

    // Top candidates are other languages.
    let json: Value = serde_json::from_str(&ok(data, &["session", "s1", "-o", "json"])).unwrap();
    let langs = ["perl", "ruby", "scala", "rust", "kotlin", "erlang", "haskell", "JS", "JavaScript", "go"];
    let top: Vec<&str> = json["items"].as_array().unwrap()[2..6]
        .iter()
        .map(|i| i["canonical"].as_str().unwrap())
        .collect();
    assert!(top.iter().all(|c| langs.contains(c)), "{top:?}");

    // Validate, save, export.
    let picked = format!("{},{}", top[0], top[1]);
    ok(data, &["validate", "--session", "s1", "--terms", &picked]);
    let saved = ok(data, &["save", "--session", "s1"]);
    assert!(saved.contains("saved 2 items"), "{saved}");
    let out = dir.path().join("langs.csv");
    ok(data, &["export", "--category", "languages", "--out", out.to_str().unwrap()]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert_eq!(csv.lines().next(), Some("canonical,group_id,certainty"));

    let re = ok(data, &["reexpand", "--session", "s1", "--accept", top[0], "-o", "json"]);
    let re: Value = serde_json::from_str(&re).unwrap();
    assert_eq!(re["session_id"], "s2");
    assert_eq!(re["items"].as_array().unwrap().iter().filter(|i| i["seed"] == true).count(), 3);

    let snippets = ok(data, &["snippets", "java", "--max-n", "2"]);
    assert_eq!(snippets.lines().count(), 2, "{snippets}");
}

#[test]
fn json_output_matches_the_service() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    trained(data);
    let cli = ok(data, &["expand", "--category", "langs", "--seed", "java,python", "--k", "12", "-o", "json"]);
    let (status, http) = http_get(data, "/projects/default/sessions/s1");
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cli, http);
    let v: Value = serde_json::from_str(&cli).unwrap();
    for key in ["category", "items", "scorer", "session_id"] {
        assert!(v.get(key).is_some(), "{key} missing");
    }
    let item = &v["items"][0];
    for key in ["group_id", "canonical", "certainty", "seed", "completed", "features"] {
        assert!(item.get(key).is_some(), "{key} missing");
    }
    assert_eq!(item["features"].as_array().unwrap().len(), 5);

    let cli = ok(data, &["groups", "--filter", "york", "-o", "json"]);
    let (_, http) = http_get(data, "/projects/default/groups?filter=york");
    assert_eq!(cli, http);
    let page: Value = serde_json::from_str(&cli).unwrap();
    assert_eq!(page["total"], 1);

    let cli = ok(data, &["status", "-o", "json"]);
    let (_, http) = http_get(data, "/projects/default");
    assert_eq!(cli, http);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();

    let out = termset(data, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = termset(data, &["expand", "--category", "x"]);
    assert_eq!(out.status.code(), Some(1));
    let out = termset(data, &["train", "--contexts", "sideways"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(termset(data, &["--help"]).status.code(), Some(0));

    // No project yet.
    let out = termset(data, &["groups"]);
    assert_eq!(out.status.code(), Some(2));

    trained(data);
    let out = termset(data, &["expand", "--category", "x", "--seed", "java,klingon"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("klingon") && !err.contains("java\""), "{err}");

    let out = termset(data, &["ingest", "/nonexistent/file.txt"]);
    assert_eq!(out.status.code(), Some(2));
    let out = termset(data, &["session", "s9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reingest_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    trained(data);
    let cache = data.join("default/corpus/sentences.jsonl");
    let before = std::fs::read(&cache).unwrap();
    let groups_before = ok(data, &["groups", "-o", "json", "--limit", "1000"]);
    ok(data, &["ingest", TOY, "--conllu"]);
    assert_eq!(std::fs::read(&cache).unwrap(), before);
    assert_eq!(ok(data, &["groups", "-o", "json", "--limit", "1000"]), groups_before);
}

#[test]
fn plain_text_ingest_and_train() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    let text = data.join("corpus.txt");
    let mut body = String::new();
    for (a, b, c) in [("java", "python", "ruby"), ("perl", "ruby", "java"), ("python", "perl", "scala")] {
        body.push_str(&format!("We compared {a}, {b} and {c} today. Teams write {a} code daily.\n"));
        body.push_str("They visited Paris, London and Berlin. Paris is lovely in spring.\n\n");
    }
    std::fs::write(&text, body.repeat(10)).unwrap();
    let msg = ok(data, &["-p", "plain", "ingest", text.to_str().unwrap()]);
    assert!(msg.contains("120 sentences in 30 documents"), "{msg}");
    ok(
        data,
        &["-p", "plain", "train", "--contexts", "linear", "--dim", "16", "--epochs", "5", "--min-count", "1", "--no-aux"],
    );
    let page: Value = serde_json::from_str(&ok(data, &["-p", "plain", "groups", "-o", "json", "--filter", "paris"])).unwrap();
    assert!(page["total"].as_u64().unwrap() >= 1);
}

#[test]
fn eval_and_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    trained(data);

    let dataset = data.join("gold.jsonl");
    std::fs::write(
        &dataset,
        concat!(
            "{\"name\":\"languages\",\"gold\":[\"java\",\"python\",\"ruby\",\"perl\",\"scala\",\"cobol\"],\"seeds\":[\"java\",\"python\"]}\n",
            "{\"name\":\"cities\",\"gold\":[\"London\",\"Paris\",\"NYC\",\"Madrid\"],\"seeds\":[\"London\"]}\n",
        ),
    )
    .unwrap();
    let report = ok(data, &["eval", "--dataset", dataset.to_str().unwrap(), "--n", "2,4", "-o", "json"]);
    let report: Value = serde_json::from_str(&report).unwrap();
    let map = report["map"]["4"].as_f64().unwrap();
    assert!(map > 0.5, "{report}");
    assert_eq!(report["unresolved"]["languages"], serde_json::json!(["cobol"]));
    let table = ok(data, &["eval", "--dataset", dataset.to_str().unwrap()]);
    assert!(table.contains("AP@10") && table.contains("cities"), "{table}");

    let csv = data.join("labels.csv");
    let mut rows = String::from("f1,f2,f3,f4,f5,label,split\n");
    for i in 0..40 {
        let x = i as f64 / 40.0;
        let label = if x > 0.5 { 1 } else { 0 };
        let split = if i % 5 == 0 { "dev" } else { "train" };
        rows.push_str(&format!("{x},{x},0,0,{x},{label},{split}\n"));
    }
    std::fs::write(&csv, rows).unwrap();
    let msg = ok(data, &["mlp-train", "--data", csv.to_str().unwrap(), "--epochs", "50"]);
    assert!(msg.contains("mlp trained on 32 rows (8 dev)"), "{msg}");
    assert!(data.join("default/mlp.json").exists());
    let v: Value = serde_json::from_str(&ok(data, &["expand", "--category", "c", "--seed", "java", "-o", "json"])).unwrap();
    assert_eq!(v["scorer"], "mlp");
    assert_eq!(v["items"][0]["certainty"], 1.0);

    let bad = data.join("bad.csv");
    std::fs::write(&bad, "f1,f2,f3,f4,f5,label,split\n0,0,0,0,0,2,train\n").unwrap();
    assert_eq!(termset(data, &["mlp-train", "--data", bad.to_str().unwrap()]).status.code(), Some(2));
}
