use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use seqdiscover::config::EncoderName;
use seqdiscover::synth::SynthConfig;
use seqdiscover::RunConfig;
use seqdiscover_service::{router, AppState, ServiceConfig, Transcript};

fn small_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.corpus.synthetic = Some(SynthConfig {
        n: 150,
        target_frac: 0.1,
        ..Default::default()
    });
    c.encoder.kind = EncoderName::Table;
    c.bnn.hidden = vec![8];
    c.bnn.prior_std = 0.3;
    c.bnn.mc_samples = 5;
    c.train.epochs = 3;
    c.train.learning_rate = 1e-2;
    c.train.batch_size = 16;
    c.schedule.budget = 4;
    c.schedule.rounds = 3;
    c.schedule.q = 4;
    c.schedule.h = 4;
    c.run.seed = 11;
    c
}

fn app(config: ServiceConfig) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(config));
    (router(state.clone()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn create(app: &Router, config: &RunConfig) -> Value {
    let (status, body) = call(app, "POST", "/sessions", Some(serde_json::to_value(config).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body
}

fn first_ids(body: &Value, n: usize) -> Vec<String> {
    body["recommendations"]
        .as_array()
        .unwrap()
        .iter()
        .take(n)
        .map(|r| r["id"].as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn create_returns_bounded_union_with_scores() {
    let (app, _) = app(ServiceConfig::default());
    let body = create(&app, &small_config()).await;
    assert_eq!(body["phase"], "AwaitingSelection");
    assert_eq!(body["round"], 1);
    let recs = body["recommendations"].as_array().unwrap();
    assert!((4..=8).contains(&recs.len()));
    for r in recs {
        assert!(["search", "uncertainty", "both"].contains(&r["batch"].as_str().unwrap()));
        assert!(!r["sequence"].as_str().unwrap().is_empty());
        assert_eq!(r["mu"].as_array().unwrap().len(), 3);
        assert_eq!(r["sigma_d"].as_array().unwrap().len(), 3);
        assert_eq!(r["sigma_m"].as_array().unwrap().len(), 3);
        assert!(r["r_un"].is_number() && r["r_se"].is_number());
    }
}

#[tokio::test]
async fn meta_off_hides_every_score_field() {
    let (app, _) = app(ServiceConfig::default());
    let mut config = small_config();
    config.expert.meta_visible = false;
    let body = create(&app, &config).await;
    for r in body["recommendations"].as_array().unwrap() {
        let keys: Vec<&str> = r.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 3, "{keys:?}");
        for k in ["id", "sequence", "batch"] {
            assert!(keys.contains(&k));
        }
    }
}

#[tokio::test]
async fn rejects_invalid_configs() {
    let (app, _) = app(ServiceConfig::default());
    let mut config = small_config();
    config.schedule.budget = 9;
    let (status, body) = call(&app, "POST", "/sessions", Some(serde_json::to_value(&config).unwrap())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_code"], "ConfigInvalid");
    assert!(body["message"].as_str().unwrap().contains("q + h"));

    let mut config = small_config();
    config.policy.name = "ucb".into();
    let (status, body) = call(&app, "POST", "/sessions", Some(serde_json::to_value(&config).unwrap())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_code"], "ConfigInvalid");

    let (status, body) = call(&app, "POST", "/sessions", Some(json!({"nonsense": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error_code"], "ConfigInvalid");
}

#[tokio::test]
async fn selection_rules_and_phases() {
    let (app, _) = app(ServiceConfig::default());
    let body = create(&app, &small_config()).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    let sel = format!("/sessions/{id}/selection");

    let (status, err) = call(&app, "POST", &sel, Some(json!({"ids": first_ids(&body, 3)}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error_code"], "BadSelection");

    let mut outside = first_ids(&body, 3);
    outside.push("not-a-molecule".into());
    let (status, err) = call(&app, "POST", &sel, Some(json!({"ids": outside}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error_code"], "BadSelection");

    let mut dup = first_ids(&body, 3);
    dup.push(dup[0].clone());
    let (status, _) = call(&app, "POST", &sel, Some(json!({"ids": dup}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    // Rejected submissions leave the session untouched.
    let (_, progress) = call(&app, "GET", &format!("/sessions/{id}/progress"), None).await;
    assert_eq!(progress["history"].as_array().unwrap().len(), 0);
    assert_eq!(progress["phase"], "AwaitingSelection");

    let mut current = body;
    for t in 1..=3 {
        let picks = first_ids(&current, 4);
        let (status, resp) = call(&app, "POST", &sel, Some(json!({"ids": picks.clone()}))).await;
        assert_eq!(status, StatusCode::OK, "{resp}");
        let record = &resp["record"];
        assert_eq!(record["t"], t);
        let revealed: Vec<&str> = record["revealed"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
        assert_eq!(revealed, picks.iter().map(String::as_str).collect::<Vec<_>>());
        let hits = record["revealed"].as_array().unwrap().iter().filter(|r| r["hit"] == true).count();
        assert_eq!(record["hits"], hits);
        if t < 3 {
            assert_eq!(resp["phase"], "AwaitingSelection");
            assert_eq!(resp["round"], t + 1);
        } else {
            assert_eq!(resp["phase"], "Finished");
            assert!(resp["recommendations"].as_array().unwrap().is_empty());
        }
        current = resp;
    }

    let (status, err) = call(&app, "POST", &sel, Some(json!({"ids": ["a", "b", "c", "d"]}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error_code"], "WrongPhase");

    let (_, progress) = call(&app, "GET", &format!("/sessions/{id}/progress"), None).await;
    let history = progress["history"].as_array().unwrap();
    assert_eq!(history.len(), 3);
    let cum: Vec<u64> = history.iter().map(|r| r["cum_hits"].as_u64().unwrap()).collect();
    assert!(cum.windows(2).all(|w| w[0] <= w[1]));
    let (_, status_body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status_body["phase"], "Finished");
}

#[tokio::test]
async fn unknown_sessions_are_not_found() {
    let (app, _) = app(ServiceConfig::default());
    for (method, uri, body) in [
        ("GET", "/sessions/nope", None),
        ("GET", "/sessions/nope/progress", None),
        ("POST", "/sessions/nope/selection", Some(json!({"ids": []}))),
    ] {
        let (status, err) = call(&app, method, uri, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(err["error_code"], "SessionNotFound");
    }
}

#[tokio::test]
async fn fresh_session_has_empty_history() {
    let (app, _) = app(ServiceConfig::default());
    let body = create(&app, &small_config()).await;
    let id = body["session_id"].as_str().unwrap();
    let (status, progress) = call(&app, "GET", &format!("/sessions/{id}/progress"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(progress["history"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn payloads_carry_no_unrevealed_labels() {
    let (app, _) = app(ServiceConfig::default());
    let body = create(&app, &small_config()).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    let text = body.to_string();
    for key in ["labels", "hit", "was_target", "is_target", "disclosed"] {
        assert!(!text.contains(&format!("\"{key}\"")), "{key} leaked before any reveal");
    }
    let picks = first_ids(&body, 4);
    let (_, resp) = call(&app, "POST", &format!("/sessions/{id}/selection"), Some(json!({"ids": picks}))).await;
    let next = resp["recommendations"].to_string();
    assert!(!next.contains("\"labels\"") && !next.contains("\"hit\""));
    let (_, view) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let revealed: Vec<Value> = view["history"][0]["revealed"].as_array().unwrap().clone();
    assert_eq!(revealed.len(), 4);
}

#[tokio::test]
async fn transcript_replay_matches_the_session() {
    let (app, state) = app(ServiceConfig::default());
    let config = small_config();
    let mut body = create(&app, &config).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    let mut transcript = Transcript::new(config);
    for _ in 0..3 {
        // Last four ids, so the picks do not just follow the listing order.
        let recs = body["recommendations"].as_array().unwrap();
        let picks: Vec<String> = recs[recs.len() - 4..].iter().map(|r| r["id"].as_str().unwrap().to_string()).collect();
        transcript.selections.push(picks.clone());
        let (status, resp) = call(&app, "POST", &format!("/sessions/{id}/selection"), Some(json!({"ids": picks}))).await;
        assert_eq!(status, StatusCode::OK);
        body = resp;
    }
    let replayed = transcript.replay().unwrap();
    let served = state.progress(&id).unwrap().history;
    assert_eq!(replayed.records(), served.as_slice());
}

#[tokio::test]
async fn snapshots_restore_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        snapshot_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let (app, state) = app(config.clone());
    let body = create(&app, &small_config()).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    let picks = first_ids(&body, 4);
    let (_, resp) = call(&app, "POST", &format!("/sessions/{id}/selection"), Some(json!({"ids": picks}))).await;
    let before = state.view(&id).unwrap();

    let fresh = Arc::new(AppState::new(config));
    assert_eq!(fresh.restore().unwrap(), 1);
    let after = fresh.view(&id).unwrap();
    assert_eq!(after, before);
    assert_eq!(
        serde_json::to_value(&after.recommendations).unwrap(),
        resp["recommendations"]
    );
}
