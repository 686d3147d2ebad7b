use std::io::Write;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use fairsearch_core::MTable;
use fairsearch_service::wire::ModelRecord;
use fairsearch_service::Engine;
use serde_json::Value;

fn fairsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairsearch")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mtable_command() {
    let out = stdout(&fairsearch(&["mtable", "--k", "12", "--p", "0.7", "--alpha", "0.1"]));
    let table: MTable = serde_json::from_str(&out).unwrap();
    assert_eq!(table.entries(), &[0, 1, 1, 2, 2, 3, 3, 4, 5, 5, 6, 6]);

    let out = stdout(&fairsearch(&["mtable", "--k", "1", "--p", "0.5", "--alpha", "0.1", "--adjust"]));
    let table: MTable = serde_json::from_str(&out).unwrap();
    assert_eq!(table.entries(), &[0]);
    assert_eq!(table.alpha_c(), 0.1);

    let bad = fairsearch(&["mtable", "--k", "12", "--p", "1.5"]);
    assert_eq!(code(&bad), 1);
    assert!(bad.stdout.is_empty());
}

fn rerank_rows(csv_text: &str) -> Vec<Vec<String>> {
    csv_text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn rerank_examples() {
    let dir = tempfile::tempdir().unwrap();
    let candidates = dir.path().join("c.csv");
    std::fs::write(&candidates, "id,score,protected\nm1,0.9,0\nm2,0.8,0\nm3,0.7,0\nm4,0.6,0\nf1,0.5,1\nf2,0.4,1\n").unwrap();
    let table = dir.path().join("t.json");
    let out = stdout(&fairsearch(&["mtable", "--k", "6", "--p", "0.5", "--alpha", "0.1"]));
    std::fs::write(&table, out).unwrap();

    let out = fairsearch(&["rerank", "--candidates", path_str(&candidates), "--mtable-file", path_str(&table)]);
    let rows = rerank_rows(&stdout(&out));
    let ids: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(ids, ["m1", "m2", "m3", "f1", "m4", "f2"]);
    assert!(rows.iter().all(|r| r[6] == "true"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("satisfied: true"));

    // Same result from parameters instead of a stored table.
    let out = stdout(&fairsearch(&["rerank", "--candidates", path_str(&candidates), "--p", "0.5", "--json"]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["satisfied"], true);
    assert_eq!(doc["ranking"][3]["id"], "f1");

    // Tiny p gives an all-zero table: plain score order.
    let out = stdout(&fairsearch(&["rerank", "--candidates", path_str(&candidates), "--p", "0.01"]));
    let ids: Vec<String> = rerank_rows(&out).into_iter().map(|r| r[1].clone()).collect();
    assert_eq!(ids, ["m1", "m2", "m3", "m4", "f1", "f2"]);

    // All protected: score order, satisfied.
    std::fs::write(&candidates, "id,score,protected\na,0.2,1\nb,0.9,1\nc,0.5,1\n").unwrap();
    let out = stdout(&fairsearch(&["rerank", "--candidates", path_str(&candidates), "--p", "0.9", "--json"]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    let ids: Vec<&str> = doc["ranking"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["b", "c", "a"]);
    assert_eq!(doc["satisfied"], true);

    // Shortage is reported, not an error.
    std::fs::write(&candidates, "id,score,protected\nm1,4,0\nm2,3,0\nm3,2,0\nm4,1,0\n").unwrap();
    let out = stdout(&fairsearch(&["rerank", "--candidates", path_str(&candidates), "--p", "0.7", "--json"]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["satisfied"], false);
    assert_eq!(doc["violations"], serde_json::json!([2, 3, 4]));

    std::fs::write(&candidates, "id,score,protected\nm1,high,0\n").unwrap();
    let bad = fairsearch(&["rerank", "--candidates", path_str(&candidates), "--p", "0.5"]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));
}

#[test]
fn synth_is_deterministic() {
    let a = stdout(&fairsearch(&["synth", "--n", "20", "--seed", "7"]));
    let b = stdout(&fairsearch(&["synth", "--n", "20", "--seed", "7"]));
    let c = stdout(&fairsearch(&["synth", "--n", "20", "--seed", "8"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 21);
    assert_eq!(code(&fairsearch(&["synth", "--n", "7"])), 1);
}

#[test]
fn train_predict_and_upload() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.csv");
    let model = dir.path().join("m.json");
    stdout(&fairsearch(&["synth", "--out", path_str(&data)]));

    let out = stdout(&fairsearch(&["train", "--data", path_str(&data), "--gamma", "0", "--out", path_str(&model)]));
    let totals: Vec<f64> = out.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(out.lines().next().unwrap(), "iteration,relevance_part,fairness_part,total");
    assert_eq!(totals.len(), 501);
    assert!(totals.last().unwrap() <= totals.first().unwrap());

    let again = stdout(&fairsearch(&["train", "--data", path_str(&data), "--gamma", "0", "--out", path_str(&model)]));
    assert_eq!(out, again);

    let record: ModelRecord = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(record.feature_set, ["protected", "score"]);
    Engine::in_memory().upload_model(record).unwrap();

    let ranked = stdout(&fairsearch(&["predict", "--model", path_str(&model), "--data", path_str(&data)]));
    assert_eq!(ranked.lines().count(), 51);
    assert!(ranked.lines().nth(1).unwrap().ends_with(",1"));

    let missing = fairsearch(&["train", "--data", "/nonexistent.csv", "--out", path_str(&model)]);
    assert_eq!(code(&missing), 2);
    let negative = fairsearch(&["train", "--data", path_str(&data), "--gamma", "-1", "--out", path_str(&model)]);
    assert_eq!(code(&negative), 1);

    std::fs::write(&data, "query_id,doc_id,protected,score,judgment\nq,a,0,1.0,1\nq,b,2,0.5,0\n").unwrap();
    let malformed = fairsearch(&["train", "--data", path_str(&data), "--out", path_str(&model)]);
    assert_eq!(code(&malformed), 2);
    assert!(String::from_utf8_lossy(&malformed.stderr).contains("line 3"));
}

#[test]
fn experiment_sweep() {
    let rows = |args: &[&str]| -> Vec<Vec<String>> {
        let out = stdout(&fairsearch(args));
        let mut lines = out.lines();
        assert_eq!(
            lines.next().unwrap(),
            "gamma,exposure_gap,avg_position_of_protected,final_loss,max_fairness_loss,ranking_fingerprint"
        );
        lines.map(|l| l.split(',').map(String::from).collect()).collect()
    };
    let last = rows(&["experiment", "--gammas", "0,100", "--relative"]);
    assert_eq!(last.len(), 2);
    let gap = |r: &Vec<String>| r[1].parse::<f64>().unwrap();
    assert!(gap(&last[1]) < gap(&last[0]));

    let first = rows(&["experiment", "--gammas", "0,100", "--relative", "--protected-first"]);
    assert_eq!(first[0][5], first[1][5]);
}

#[test]
fn ingest_snapshot_then_serve() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.ndjson");
    let snapshot = dir.path().join("indices.json");
    std::fs::write(&docs, "{\"id\":\"a\",\"body\":\"jon snow\",\"attributes\":{\"gender\":\"f\"}}\n{\"body\":\"no id\"}\n").unwrap();
    let bad = fairsearch(&["ingest", "--index", "people", "--file", path_str(&docs), "--snapshot", path_str(&snapshot)]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));
    assert!(bad.stdout.is_empty());

    std::fs::write(&docs, "{\"id\":\"a\",\"body\":\"jon snow\",\"attributes\":{\"gender\":\"f\"}}\n").unwrap();
    let out = stdout(&fairsearch(&["ingest", "--index", "people", "--file", path_str(&docs), "--snapshot", path_str(&snapshot)]));
    assert_eq!(serde_json::from_str::<Value>(&out).unwrap()["indexed"], 1);

    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = dir.path().join("serve.toml");
    let mut f = std::fs::File::create(&config).unwrap();
    writeln!(f, "address = \"127.0.0.1:{port}\"\nstorage_dir = \"store\"\nindex_snapshot = \"indices.json\"").unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_fairsearch"))
        .args(["serve", "--config", path_str(&config)])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let started = Instant::now();
    while std::net::TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(started.elapsed() < Duration::from_secs(20), "service did not start");
        std::thread::sleep(Duration::from_millis(50));
    }

    let url = format!("http://127.0.0.1:{port}");
    std::fs::write(&docs, "{\"id\":\"b\",\"body\":\"jon\",\"attributes\":{\"gender\":\"m\"}}\n").unwrap();
    let remote = fairsearch(&["ingest", "--index", "people", "--file", path_str(&docs), "--url", &url]);
    let remote_out = String::from_utf8_lossy(&remote.stdout).to_string();
    let remote_code = code(&remote);
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(remote_code, 0, "{}", String::from_utf8_lossy(&remote.stderr));
    assert_eq!(serde_json::from_str::<Value>(&remote_out).unwrap()["indexed"], 1);

    // The served engine persisted both documents to the snapshot.
    let snap: Value = serde_json::from_str(&std::fs::read_to_string(&snapshot).unwrap()).unwrap();
    assert_eq!(snap["people"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("store").join("models.jsonl").exists());

    std::fs::write(&config, "address = \"127.0.0.1:70000\"\nstorage_dir = \"store\"\n").unwrap();
    assert_eq!(code(&fairsearch(&["serve", "--config", path_str(&config)])), 1);
    assert_eq!(code(&fairsearch(&["serve", "--config", "/nonexistent.toml"])), 2);
}
