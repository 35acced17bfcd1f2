#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use assistant_api::cli;
use assistant_api::http::{router, SharedState};
use assistant_api::service::{Assistant, AssistantConfig};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::NaiveDate;
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub struct Demo {
    pub dir: TempDir,
    pub state: SharedState,
    pub app: Router,
    /// Day after the last observation.
    pub date: NaiveDate,
}

impl Demo {
    pub fn store(&self) -> PathBuf {
        self.dir.path().join("store")
    }

    pub fn models(&self) -> PathBuf {
        self.dir.path().join("models")
    }
}

/// Seeds a store, trains it with the default spec and opens the service.
pub fn demo(materials: usize, clients: usize, series: usize, days: usize, seed: u64) -> Demo {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let models = dir.path().join("models");
    let mut sink = Vec::new();
    cli::seed_demo(materials, clients, series, days, seed, &store, &mut sink).unwrap();
    let spec = cli::model_spec(None, 0.1).unwrap();
    cli::train(&store, &spec, seed, &models, &mut sink).unwrap();
    let (state, date) = open(&store, &models);
    Demo {
        app: router(state.clone()),
        state,
        dir,
        date,
    }
}

pub fn open(store: &Path, models: &Path) -> (SharedState, NaiveDate) {
    let assistant = Assistant::open(store, models, AssistantConfig::default()).unwrap();
    let date = assistant.store().last_date().unwrap().succ_opt().unwrap();
    (Arc::new(Mutex::new(assistant)), date)
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    session: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(s) = session {
        req = req.header("X-Session", s);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

pub async fn open_session(app: &Router) -> String {
    let (status, v) = call(app, "POST", "/api/sessions", None, None).await;
    assert_eq!(status, StatusCode::OK);
    v["session_id"].as_str().unwrap().to_string()
}

/// Materials ordered by id with their client count.
pub fn materials(state: &SharedState) -> Vec<(String, usize)> {
    let a = state.lock().unwrap();
    a.store()
        .materials()
        .into_iter()
        .map(|m| (m.to_string(), a.store().series_for_material(m).count()))
        .collect()
}
