//! Drives a real server over HTTP.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use vdcook_core::fixtures::{fixture_corpus, write_fixture_corpus};
use vdcook_core::Engine;
use vdcook_service::jobs::RESTART_ERROR;
use vdcook_service::AppState;

struct Server {
    base: String,
    agent: ureq::Agent,
}

impl Server {
    fn start(store: &Path, workers: usize) -> Server {
        let engine = Arc::new(Engine::open(store).unwrap());
        let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let state = AppState::new(engine, workers).unwrap();
                vdcook_service::serve(state, "127.0.0.1:0".parse().unwrap(), |addr| tx.send(addr).unwrap())
                    .await
                    .unwrap();
            });
        });
        let addr = rx.recv_timeout(Duration::from_secs(10)).unwrap();
        let config = ureq::Agent::config_builder().http_status_as_error(false).build();
        Server { base: format!("http://{addr}"), agent: ureq::Agent::new_with_config(config) }
    }

    fn get(&self, path: &str) -> (u16, String) {
        let mut r = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        let status = r.status().as_u16();
        (status, r.body_mut().read_to_string().unwrap())
    }

    fn get_bytes(&self, path: &str) -> (u16, Vec<u8>) {
        let mut r = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        let status = r.status().as_u16();
        (status, r.body_mut().read_to_vec().unwrap())
    }

    fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let mut r = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(body.to_string())
            .unwrap();
        let status = r.status().as_u16();
        let text = r.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    fn get_json(&self, path: &str) -> (u16, Value) {
        let (status, text) = self.get(path);
        (status, serde_json::from_str(&text).unwrap())
    }

    fn wait_terminal(&self, job_id: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            let (_, state) = self.get_json(&format!("/api/jobs/{job_id}"));
            if matches!(state["phase"].as_str(), Some("done" | "failed")) {
                return state;
            }
            assert!(Instant::now() < deadline, "job {job_id} did not finish");
            std::thread::sleep(Duration::from_millis(50));
        }
    }

    /// Every `data:` payload of a job's event stream, read until it closes.
    fn events(&self, job_id: &str) -> Vec<Value> {
        let (status, text) = self.get(&format!("/api/jobs/{job_id}/events"));
        assert_eq!(status, 200);
        text.lines().filter_map(|l| l.strip_prefix("data:")).map(|d| serde_json::from_str(d.trim()).unwrap()).collect()
    }
}

fn seeded(dir: &Path, count: usize) -> Server {
    let fixtures = dir.join("fixtures");
    write_fixture_corpus(&fixtures, count, 11).unwrap();
    let server = Server::start(&dir.join("store"), 2);
    let (status, _) = server.post(
        "/api/sources",
        &json!({"source_id": "fx", "connector_kind": "local_dir", "config": {"root": fixtures.display().to_string()}}),
    );
    assert_eq!(status, 201);
    let (status, out) = server.post("/api/ingest/fx", &json!({}));
    assert_eq!(status, 200, "{out}");
    assert_eq!(out["results"].as_array().unwrap().len(), count);
    server
}

fn phase_rank(phase: &str) -> usize {
    ["queued", "expanding", "retrieving", "synthesizing", "filtering", "packaging", "done", "failed"]
        .iter()
        .position(|p| *p == phase)
        .unwrap()
}

#[test]
fn sources_and_uploads() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&dir.path().join("store"), 1);
    for id in ["zeta", "alpha"] {
        let (status, _) =
            server.post("/api/sources", &json!({"source_id": id, "connector_kind": "upload", "config": {}}));
        assert_eq!(status, 201);
    }
    let (status, body) =
        server.post("/api/sources", &json!({"source_id": "alpha", "connector_kind": "upload", "config": {}}));
    assert_eq!(status, 409, "{body}");
    let (status, body) = server.post("/api/sources", &json!({"source_id": "x", "connector_kind": "ftp", "config": {}}));
    assert_eq!(status, 400, "{body}");
    let (_, list) = server.get_json("/api/sources");
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|s| s["source_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["alpha", "zeta"]);

    use base64::Engine as _;
    let items: Vec<Value> = fixture_corpus(3, 5)
        .into_iter()
        .map(|c| json!({"container_bytes": base64::engine::general_purpose::STANDARD.encode(&c.bytes), "locator": c.spec.name}))
        .collect();
    let (status, out) = server.post("/api/ingest/alpha", &json!({ "items": items }));
    assert_eq!(status, 200, "{out}");
    assert!(out["results"].as_array().unwrap().iter().all(|r| r["accepted"] == json!(true)));
    let (status, out) = server.post("/api/ingest/alpha", &json!({ "items": items }));
    assert_eq!(status, 200);
    assert!(out["results"].as_array().unwrap().iter().all(|r| r["reason"] == json!("duplicate")));
    let (status, _) = server.post("/api/ingest/nope", &json!({}));
    assert_eq!(status, 404);

    let (status, annotators) = server.get_json("/api/annotators");
    assert_eq!(status, 200);
    assert!(annotators.as_array().unwrap().iter().any(|a| a["annotator_id"] == json!("mock_caption")));
}

#[test]
fn cook_jobs_stream_and_persist() {
    let dir = tempfile::tempdir().unwrap();
    let server = seeded(dir.path(), 40);

    let (status, body) =
        server.post("/api/jobs", &json!({"query": "motion scenes", "scale": 4, "retrieval_ratio": 1.5}));
    assert_eq!(status, 422);
    assert_eq!(body["errors"][0]["field"], json!("retrieval_ratio"));

    let request = json!({"query": "motion scenes", "scale": 6, "retrieval_ratio": 0.5, "seed": 3});
    let (status, a) = server.post("/api/jobs", &request);
    assert_eq!(status, 202);
    let (_, b) = server.post("/api/jobs", &request);
    assert_ne!(a["job_id"], b["job_id"]);
    let a = a["job_id"].as_str().unwrap().to_owned();
    let b = b["job_id"].as_str().unwrap().to_owned();

    let events = server.events(&a);
    let phases: Vec<&str> = events.iter().map(|e| e["phase"].as_str().unwrap()).collect();
    assert_eq!(*phases.last().unwrap(), "done", "{phases:?}");
    assert!(phases.windows(2).all(|w| phase_rank(w[0]) <= phase_rank(w[1])), "{phases:?}");
    let progress: Vec<f64> = events.iter().map(|e| e["progress"].as_f64().unwrap()).collect();
    assert!(progress.windows(2).all(|w| w[0] <= w[1]));

    // After completion the stream replays only the terminal state.
    let replayed = server.events(&a);
    assert_eq!(replayed.len(), 1);
    assert_eq!(replayed[0]["phase"], json!("done"));

    let done = server.wait_terminal(&b);
    assert_eq!(done["counts"]["retrieved"], json!(3));
    assert_eq!(done["counts"]["synthesized"], json!(3));
    let (status, ma) = server.get(&format!("/api/jobs/{a}/manifest"));
    assert_eq!(status, 200);
    let (_, mb) = server.get(&format!("/api/jobs/{b}/manifest"));
    assert_eq!(ma, mb);
    let manifest: Value = serde_json::from_str(&ma).unwrap();
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 6);

    // A retrieval shortfall fails the job with a message.
    let (_, f) = server.post("/api/jobs", &json!({"query": "motion scenes", "scale": 500, "retrieval_ratio": 1.0}));
    let f = f["job_id"].as_str().unwrap().to_owned();
    let events = server.events(&f);
    let last = events.last().unwrap();
    assert_eq!(last["phase"], json!("failed"));
    assert!(last["error"].as_str().unwrap().contains("shortfall"));
    let (status, _) = server.get(&format!("/api/jobs/{f}/manifest"));
    assert_eq!(status, 409);

    // Dry runs retrieve only and write no package.
    let (_, d) =
        server.post("/api/jobs?dry_run=true", &json!({"query": "motion scenes", "scale": 12, "retrieval_ratio": 1.0}));
    let d = d["job_id"].as_str().unwrap().to_owned();
    let state = server.wait_terminal(&d);
    assert_eq!(state["phase"], json!("done"));
    assert_eq!(state["counts"]["synthesized"], json!(0));
    let (_, dm) = server.get_json(&format!("/api/jobs/{d}/manifest"));
    assert_eq!(dm["entries"].as_array().unwrap().len(), 12);

    let (_, jobs) = server.get_json("/api/jobs");
    let listed: Vec<&str> = jobs.as_array().unwrap().iter().map(|j| j["job_id"].as_str().unwrap()).collect();
    assert_eq!(listed, [a.as_str(), b.as_str(), f.as_str(), d.as_str()]);
    assert_eq!(server.get("/api/jobs/nope").0, 404);
    assert_eq!(server.get("/api/jobs/nope/events").0, 404);
}

#[test]
fn restart_fails_interrupted_jobs_and_keeps_finished_ones() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let finished;
    {
        let server = seeded(dir.path(), 20);
        let (_, j) = server.post("/api/jobs", &json!({"query": "motion scenes", "scale": 2, "retrieval_ratio": 1.0}));
        finished = j["job_id"].as_str().unwrap().to_owned();
        server.wait_terminal(&finished);
    }
    // Simulate a job that was running when the process died.
    let jobs_dir = store.join("store/jobs");
    let mut running: Value =
        serde_json::from_str(&std::fs::read_to_string(jobs_dir.join(format!("{finished}.json"))).unwrap()).unwrap();
    running["job_id"] = json!("interrupted");
    running["phase"] = json!("synthesizing");
    running["seq"] = json!(99);
    std::fs::write(jobs_dir.join("interrupted.json"), running.to_string()).unwrap();

    let server = Server::start(&store, 2);
    let (_, state) = server.get_json("/api/jobs/interrupted");
    assert_eq!(state["phase"], json!("failed"));
    assert_eq!(state["error"], json!(RESTART_ERROR));
    let (_, state) = server.get_json(&format!("/api/jobs/{finished}"));
    assert_eq!(state["phase"], json!("done"));
    assert_eq!(server.get(&format!("/api/jobs/{finished}/manifest")).0, 200);
}

#[test]
fn clips_previews_stats_and_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let server = seeded(dir.path(), 24);
    let (_, d) =
        server.post("/api/jobs?dry_run=true", &json!({"query": "motion scenes", "scale": 3, "retrieval_ratio": 1.0}));
    let d = d["job_id"].as_str().unwrap().to_owned();
    server.wait_terminal(&d);
    let (_, manifest) = server.get_json(&format!("/api/jobs/{d}/manifest"));
    let clip_id = manifest["entries"][0]["clip_id"].as_str().unwrap().to_owned();

    let (status, clip) = server.get_json(&format!("/api/clips/{clip_id}"));
    assert_eq!(status, 200);
    assert_eq!(clip["record"]["clip_id"], json!(clip_id));
    assert_eq!(clip["provenance"]["kind"], json!("crawled"));
    assert!(clip["metadata"]["caption"].as_str().unwrap().contains("motion"));

    for query in ["", "?frame=mid", "?frame=3"] {
        let (status, png) = server.get_bytes(&format!("/api/clips/{clip_id}/preview.png{query}"));
        assert_eq!(status, 200);
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    }
    assert_eq!(server.get(&format!("/api/clips/{}/preview.png", "0".repeat(64))).0, 404);
    assert_eq!(server.get("/api/clips/not-an-id").0, 404);

    let (status, summary) = server.get_json("/api/stats/summary");
    assert_eq!(status, 200);
    let n = summary["clip_count"].as_u64().unwrap();
    assert!(n > 0);
    let (_, sampled) = server.get_json(&format!("/api/stats/summary?mode=random_n&n={n}&seed=4"));
    assert_eq!(sampled["clip_count"], summary["clip_count"]);
    assert_eq!(sampled["motion_intensity_mean"], summary["motion_intensity_mean"]);
    let (_, table) = server.get("/api/stats/summary?format=text");
    assert!(table.contains("ocr_text_area"));

    let (status, h) = server.get_json("/api/stats/histogram?field=duration_s&edges=2,3,4,5");
    assert_eq!(status, 200);
    let counts: u64 = h["histogram"]["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(
        counts + h["histogram"]["underflow"].as_u64().unwrap() + h["histogram"]["overflow"].as_u64().unwrap(),
        n
    );
    assert_eq!(server.get("/api/stats/histogram?field=duration_s&edges=3,2").0, 400);
    assert_eq!(server.get("/api/stats/histogram?field=nope&edges=1,2").0, 422);

    let (status, cov) = server.get_json("/api/coverage?floor=2&tags=snow");
    assert_eq!(status, 200);
    assert_eq!(cov["deficient_tags"], json!([["snow", 2]]));
    assert_eq!(server.get("/api/coverage?floor=0").0, 422);

    let (status, amp) = server.post("/api/amplify", &json!({"floor": 2, "tags": ["snow"], "seed": 1}));
    assert_eq!(status, 200, "{amp}");
    assert_eq!(amp["after"]["per_tag_counts"]["snow"], json!(2));
}
