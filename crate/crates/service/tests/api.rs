use std::sync::Arc;

use rapid_service::{spawn, SessionStore};
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Api {
    base: String,
    http: reqwest::Client,
}

impl Api {
    async fn start(store: SessionStore) -> Api {
        let (addr, _) = spawn(Arc::new(store), "127.0.0.1:0").await.unwrap();
        Api {
            base: format!("http://{addr}"),
            http: reqwest::Client::new(),
        }
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self
            .http
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn create(&self, body: Value) -> String {
        let (status, state) = self.post("/sessions", body).await;
        assert_eq!(status, StatusCode::CREATED, "{state}");
        state["id"].as_str().unwrap().to_string()
    }
}

fn traffic() -> Value {
    json!({ "data": { "preset": "traffic", "records": 60 }, "config": { "seed": 3 } })
}

fn glaucoma() -> Value {
    json!({ "data": { "preset": "glaucoma", "records": 60 }, "config": { "seed": 1 } })
}

fn ids(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap().to_string())
        .collect()
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].is_string());
    assert!(body.get("detail").is_some());
}

#[tokio::test(flavor = "multi_thread")]
async fn created_session_has_first_batch() {
    let api = Api::start(SessionStore::in_memory()).await;
    let id = api.create(traffic()).await;
    let (status, state) = api.get(&format!("/sessions/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state["iteration"], 0);
    assert_eq!(state["pending_batch"].as_array().unwrap().len(), 3);
    assert_eq!(state["labeled"].as_array().unwrap().len(), 3);
    assert_eq!(state["metrics"].as_array().unwrap().len(), 1);

    let (status, batch) = api.get(&format!("/sessions/{id}/batch")).await;
    assert_eq!(status, StatusCode::OK);
    let items = batch["items"].as_array().unwrap();
    assert_eq!(items.len(), 3);
    for item in items {
        assert!(item["record"]["facts"].is_array());
        assert!(item["record"].get("label").is_none());
        assert!(item["decision"]["csr"].is_object());
        assert!(item["score"].is_number());
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unlabeled_dataset_without_bootstrap_is_rejected() {
    let api = Api::start(SessionStore::in_memory()).await;
    let records = (0..6)
        .map(|i| json!({ "id": format!("r{i}"), "facts": [["object", "car"]] }).to_string())
        .collect::<Vec<_>>()
        .join("\n");
    let body = json!({ "data": { "records": records, "labels": ["a", "b"] } });
    let (status, err) = api.post("/sessions", body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&err, "not_enough_labeled");
}

#[tokio::test(flavor = "multi_thread")]
async fn bootstrap_list_picks_the_first_training_records() {
    let api = Api::start(SessionStore::in_memory()).await;
    let mut lines = Vec::new();
    for i in 0..12 {
        let (sort, label) = if i % 2 == 0 {
            ("truck", "highway")
        } else {
            ("building", "downtown")
        };
        let mut r = json!({ "id": format!("r{i:02}"), "facts": [["object", sort]] });
        if i < 2 {
            r["label"] = json!(label);
        }
        lines.push(r.to_string());
    }
    let body = json!({
        "data": { "records": lines.join("\n"), "labels": ["downtown", "highway"] },
        "bootstrap": ["r00", "r01"],
        "config": { "test_fraction": 0.0 }
    });
    let id = api.create(body).await;
    let (_, state) = api.get(&format!("/sessions/{id}")).await;
    let labeled: Vec<&str> = state["labeled"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["id"].as_str().unwrap())
        .collect();
    assert_eq!(labeled, ["r00", "r01"]);
    assert_eq!(state["rules"].as_array().unwrap().len(), 2);

    let bad = json!({
        "data": { "records": lines.join("\n"), "labels": ["downtown", "highway"] },
        "bootstrap": ["r05"]
    });
    let (status, err) = api.post("/sessions", bad).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "unlabeled_record");
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_are_independent() {
    let api = Api::start(SessionStore::in_memory()).await;
    let a = api.create(traffic()).await;
    let b = api.create(traffic()).await;
    assert_ne!(a, b);
    let (status, _) = api
        .post(
            &format!("/sessions/{a}/corrections"),
            json!({ "corrections": {} }),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let (_, sb) = api.get(&format!("/sessions/{b}")).await;
    assert_eq!(sb["ready"], false);
    assert!(sb["resolved"].is_null());
}

#[tokio::test(flavor = "multi_thread")]
async fn corrections_move_the_whole_batch() {
    let api = Api::start(SessionStore::in_memory()).await;
    let id = api.create(traffic()).await;
    let (_, batch) = api.get(&format!("/sessions/{id}/batch")).await;
    let first = &batch["items"][0];
    let predicted = first["decision"]["label"].as_str().unwrap();
    let other = ["downtown", "highway", "rural"]
        .into_iter()
        .find(|l| *l != predicted)
        .unwrap();
    let target = first["record_id"].as_str().unwrap();
    let (status, state) = api
        .post(
            &format!("/sessions/{id}/corrections"),
            json!({ "corrections": { target: other } }),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert_eq!(state["ready"], true);
    let labeled = state["labeled"].as_array().unwrap();
    assert_eq!(labeled.len(), 6);
    for item in batch["items"].as_array().unwrap() {
        let rid = item["record_id"].as_str().unwrap();
        let entry = labeled.iter().find(|l| l["id"] == rid).unwrap();
        let expected = if rid == target {
            other
        } else {
            item["decision"]["label"].as_str().unwrap()
        };
        assert_eq!(entry["label"], expected);
        assert!(!ids(&state["unlabeled"]).contains(&rid.to_string()));
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn correction_outside_batch_changes_nothing() {
    let api = Api::start(SessionStore::in_memory()).await;
    let id = api.create(traffic()).await;
    let (_, before) = api.get(&format!("/sessions/{id}")).await;
    let outsider = ids(&before["unlabeled"])
        .into_iter()
        .find(|u| !ids(&before["pending_batch"]).contains(u))
        .unwrap();
    let (status, err) = api
        .post(
            &format!("/sessions/{id}/corrections"),
            json!({ "corrections": { outsider.clone(): "rural" } }),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "not_in_batch");
    assert_eq!(err["detail"]["id"], outsider);
    let (_, after) = api.get(&format!("/sessions/{id}")).await;
    assert_eq!(before, after);

    let batch_id = ids(&before["pending_batch"])[0].clone();
    let (status, err) = api
        .post(
            &format!("/sessions/{id}/corrections"),
            json!({ "corrections": { batch_id: "nowhere" } }),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "unknown_label");
}

#[tokio::test(flavor = "multi_thread")]
async fn threshold_edit_becomes_an_include() {
    let api = Api::start(SessionStore::in_memory()).await;
    let id = api.create(glaucoma()).await;
    let path = format!("/sessions/{id}/rules");
    let loose = "normal(X) :- ACDR(X,A), area(A,N), smaller(N,0.17).";
    let (status, r) = api
        .post(&path, json!({ "label": "normal", "dsl": loose }))
        .await;
    assert_eq!(status, StatusCode::OK, "{r}");
    let (status, r) = api
        .post(&path, json!({ "label": "normal", "dsl": "normal(X) :- ACDR(X,A), area(A,N), smaller(N,0.31)." }))
        .await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["added"], json!(["ACDR(X,A), area(A,N), smaller(N,0.31)"]));
    assert_eq!(
        r["removed"],
        json!(["ACDR(X,A), area(A,N), smaller(N,0.17)"])
    );
    let c = &r["state"]["constraints"]["normal"];
    assert_eq!(
        c["include"],
        json!(["ACDR(X,A), area(A,N), smaller(N,0.31)"])
    );
    assert!(c["exclude"]
        .as_array()
        .unwrap()
        .contains(&json!("ACDR(X,A), area(A,N), smaller(N,0.17)")));
    let normal = r["state"]["rules"]
        .as_array()
        .unwrap()
        .iter()
        .find(|x| x["label"] == "normal")
        .unwrap();
    assert_eq!(
        normal["dsl"],
        "normal(X) :- ACDR(X,A), area(A,N), smaller(N,0.31)."
    );

    let (status, again) = api
        .post(&path, json!({ "label": "normal", "dsl": "normal(X) :- ACDR(X,A), area(A,N), smaller(N,0.31)." }))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["added"], json!([]));
    assert_eq!(again["state"]["constraints"], r["state"]["constraints"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_rule_reports_position() {
    let api = Api::start(SessionStore::in_memory()).await;
    let id = api.create(glaucoma()).await;
    let (_, before) = api.get(&format!("/sessions/{id}")).await;
    let (status, err) = api
        .post(
            &format!("/sessions/{id}/rules"),
            json!({ "label": "normal", "dsl": "normal(X) :- ACDR(X,A), area(A,N) smaller(N,0.31)." }),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "parse_error");
    assert_eq!(err["detail"]["line"], 1);
    assert!(err["detail"]["column"].as_u64().unwrap() > 1);
    let (_, after) = api.get(&format!("/sessions/{id}")).await;
    assert_eq!(before, after);

    let (status, err) = api
        .post(
            &format!("/sessions/{id}/rules"),
            json!({ "label": "glaucoma", "dsl": "normal(X) :- ACDR(X,A), area(A,N), smaller(N,0.31)." }),
        )
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "label_mismatch");
}

#[tokio::test(flavor = "multi_thread")]
async fn edits_are_refused_when_the_mode_has_none() {
    let api = Api::start(SessionStore::in_memory()).await;
    let mut body = glaucoma();
    body["config"]["mode"] = json!("no-edit");
    let id = api.create(body).await;
    let (status, err) = api
        .post(
            &format!("/sessions/{id}/rules"),
            json!({ "label": "normal", "dsl": "normal(X) :- ACDR(X,A), area(A,N), smaller(N,0.31)." }),
        )
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&err, "edits_disabled");
}

#[tokio::test(flavor = "multi_thread")]
async fn step_requires_resolved_batch() {
    let api = Api::start(SessionStore::in_memory()).await;
    let id = api.create(traffic()).await;
    let (status, err) = api.post(&format!("/sessions/{id}/step"), json!(null)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&err, "not_ready");

    api.post(&format!("/sessions/{id}/corrections"), json!({}))
        .await;
    let (status, state) = api.post(&format!("/sessions/{id}/step"), json!(null)).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert_eq!(state["iteration"], 1);
    let labeled: Vec<String> = state["labeled"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["id"].as_str().unwrap().to_string())
        .collect();
    for b in ids(&state["pending_batch"]) {
        assert!(!labeled.contains(&b));
    }
    let (_, m) = api.get(&format!("/sessions/{id}/metrics")).await;
    let series = m["metrics"].as_array().unwrap();
    assert_eq!(series.len(), 2);
    assert_eq!(series[1]["iteration"], 1);
    assert!(series[1]["hit_rate"].is_number());
}

#[tokio::test(flavor = "multi_thread")]
async fn small_pool_ends_the_session() {
    let api = Api::start(SessionStore::in_memory()).await;
    let lines: Vec<String> = (0..8)
        .map(|i| {
            let (sort, label) = if i % 2 == 0 {
                ("truck", "highway")
            } else {
                ("building", "downtown")
            };
            json!({ "id": format!("r{i}"), "facts": [["object", sort]], "label": label })
                .to_string()
        })
        .collect();
    let body = json!({ "data": { "records": lines.join("\n") }, "config": { "test_fraction": 0.25, "bootstrap_size": 2 } });
    let id = api.create(body).await;
    // 6 training records: 2 bootstrap, one batch of 3, then a pool of 1.
    api.post(&format!("/sessions/{id}/corrections"), json!({}))
        .await;
    let (status, state) = api.post(&format!("/sessions/{id}/step"), json!(null)).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert_eq!(state["finished"], true);
    assert!(state["pending_batch"].is_null());
    let (status, err) = api.get(&format!("/sessions/{id}/batch")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&err, "no_pending_batch");
    let (status, err) = api.post(&format!("/sessions/{id}/step"), json!(null)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&err, "finished");
}

#[tokio::test(flavor = "multi_thread")]
async fn client_faults_are_json() {
    let api = Api::start(SessionStore::in_memory()).await;
    let (status, err) = api.get("/sessions/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&err, "unknown_session");

    let r = api
        .http
        .post(format!("{}/sessions", api.base))
        .header("content-type", "application/json")
        .body("{ not json")
        .send()
        .await
        .unwrap();
    assert!(r.status().is_client_error());
    assert_error(&r.json().await.unwrap(), "invalid_body");

    let (status, err) = api
        .post("/sessions", json!({ "data": { "preset": "nowhere" } }))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "invalid_dataset");

    let (status, err) = api
        .post("/sessions", json!({ "data": { "preset": "traffic" }, "config": { "selection": { "strategy": "psychic" } } }))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "unknown_strategy");

    let (status, err) = api.get("/elsewhere").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&err, "no_route");
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_mutations_serialize() {
    let api = Arc::new(Api::start(SessionStore::in_memory()).await);
    let id = api.create(traffic()).await;
    let mut tasks = Vec::new();
    for _ in 0..6 {
        let api = api.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            api.post(&format!("/sessions/{id}/corrections"), json!({}))
                .await
                .0
        }));
    }
    let mut ok = 0;
    for t in tasks {
        match t.await.unwrap() {
            StatusCode::OK => ok += 1,
            s => assert_eq!(s, StatusCode::CONFLICT),
        }
    }
    assert_eq!(ok, 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before) = {
        let (store, failures) = SessionStore::open(dir.path()).unwrap();
        assert!(failures.is_empty());
        let api = Api::start(store).await;
        let id = api.create(glaucoma()).await;
        api.post(&format!("/sessions/{id}/corrections"), json!({}))
            .await;
        api.post(
            &format!("/sessions/{id}/rules"),
            json!({ "label": "normal", "dsl": "normal(X) :- ACDR(X,A), area(A,N), smaller(N,0.31)." }),
        )
        .await;
        api.post(&format!("/sessions/{id}/step"), json!(null)).await;
        // Rejected requests leave no trace in the log.
        api.post(&format!("/sessions/{id}/step"), json!(null)).await;
        let (_, state) = api.get(&format!("/sessions/{id}")).await;
        (id, state)
    };
    let log = rapid_service::read_log(&dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(log.len(), 4);

    let (store, failures) = SessionStore::open(dir.path()).unwrap();
    assert!(failures.is_empty());
    let api = Api::start(store).await;
    let (status, after) = api.get(&format!("/sessions/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
    let (status, _) = api
        .post(&format!("/sessions/{id}/corrections"), json!({}))
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        rapid_service::read_log(&dir.path().join(format!("{id}.jsonl")))
            .unwrap()
            .len(),
        5
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn torn_final_event_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let (store, _) = SessionStore::open(dir.path()).unwrap();
        let api = Api::start(store).await;
        let id = api.create(traffic()).await;
        api.post(&format!("/sessions/{id}/corrections"), json!({}))
            .await;
        id
    };
    let path = dir.path().join(format!("{id}.jsonl"));
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"seq\":2,\"event\":{\"ty");
    std::fs::write(&path, text).unwrap();

    let (store, failures) = SessionStore::open(dir.path()).unwrap();
    assert!(failures.is_empty(), "{failures:?}");
    let api = Api::start(store).await;
    let (status, state) = api.post(&format!("/sessions/{id}/step"), json!(null)).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert_eq!(rapid_service::read_log(&path).unwrap().len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn corrupt_log_is_reported_not_loaded() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.jsonl"),
        "{\"seq\":0,\"event\":{\"type\":\"step\"}}\n",
    )
    .unwrap();
    let (store, failures) = SessionStore::open(dir.path()).unwrap();
    assert_eq!(failures.len(), 1);
    assert!(store.ids().is_empty());
}
