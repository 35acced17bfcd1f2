mod common;

use std::collections::BTreeSet;

use assistant_core::active_learning::{forecast_uncertainty, train_committee, CommitteeConfig};
use assistant_core::forecasting::build_features;
use assistant_core::knowledge_graph::{KnowledgeGraph, Relation};
use assistant_core::recommender::{Recommender, SelectionOutcome};
use axum::http::StatusCode;
use common::{call, demo, materials, open_session};
use serde_json::{json, Value};

fn error_code(v: &Value) -> &str {
    v["error"]["code"]
        .as_str()
        .unwrap_or_else(|| panic!("not an error envelope: {v}"))
}

#[tokio::test]
async fn sessions_are_distinct() {
    let d = demo(2, 2, 3, 120, 1);
    let a = open_session(&d.app).await;
    let b = open_session(&d.app).await;
    assert_ne!(a, b);

    let handles: Vec<_> = (0..1000)
        .map(|_| {
            let app = d.app.clone();
            tokio::spawn(async move { open_session(&app).await })
        })
        .collect();
    let mut ids = BTreeSet::new();
    for h in handles {
        ids.insert(h.await.unwrap());
    }
    assert_eq!(ids.len(), 1000);
}

#[tokio::test]
async fn forecasts_per_client_are_registered_once() {
    let d = demo(3, 4, 8, 150, 2);
    let (material, clients) = materials(&d.state).into_iter().max_by_key(|m| m.1).unwrap();
    assert!(clients >= 2);
    let s = open_session(&d.app).await;
    let uri = format!("/api/forecasts?date={}&material={material}", d.date);
    let (status, first) = call(&d.app, "GET", &uri, Some(&s), None).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    let list = first.as_array().unwrap();
    assert_eq!(list.len(), clients);
    let client_ids: Vec<&str> = list.iter().map(|f| f["client_id"].as_str().unwrap()).collect();
    let mut sorted = client_ids.clone();
    sorted.sort();
    assert_eq!(client_ids, sorted);
    assert!(list
        .iter()
        .all(|f| f["quantity"].as_f64().unwrap() >= 0.0 && f.get("coefficients").is_none()));

    let ids: BTreeSet<String> = list
        .iter()
        .map(|f| f["forecast_id"].as_str().unwrap().to_string())
        .collect();
    {
        let a = d.state.lock().unwrap();
        assert_eq!(a.session(&s).unwrap().displayed_forecasts, ids);
    }
    let (_, again) = call(&d.app, "GET", &uri, Some(&s), None).await;
    assert_eq!(again, first);

    let (status, v) = call(
        &d.app,
        "GET",
        &format!("/api/forecasts?date={}&material=NOPE", d.date),
        Some(&s),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "unknown_material");
    let (status, v) = call(&d.app, "GET", &uri, None, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "missing_session");
    let (status, _) = call(
        &d.app,
        "GET",
        &format!("/api/forecasts?date=yesterday&material={material}"),
        Some(&s),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

async fn first_forecast(d: &common::Demo, s: &str) -> Value {
    let material = materials(&d.state)[0].0.clone();
    let (_, v) = call(
        &d.app,
        "GET",
        &format!("/api/forecasts?date={}&material={material}", d.date),
        Some(s),
        None,
    )
    .await;
    v[0].clone()
}

#[tokio::test]
async fn explanation_is_cached_top_three() {
    let d = demo(1, 2, 2, 150, 3);
    let s = open_session(&d.app).await;
    let f = first_forecast(&d, &s).await;
    let id = f["forecast_id"].as_str().unwrap();
    let uri = format!("/api/forecasts/{id}/explanation");
    let (status, e) = call(&d.app, "GET", &uri, Some(&s), None).await;
    assert_eq!(status, StatusCode::OK, "{e}");
    assert_eq!(e["attributions"].as_array().unwrap().len(), 3);
    assert!(e["fidelity"].as_f64().unwrap() >= 0.0);
    let (_, again) = call(&d.app, "GET", &uri, Some(&s), None).await;
    assert_eq!(again["explanation_id"], e["explanation_id"]);
    assert_eq!(d.state.lock().unwrap().graph().count_predicate(Relation::Explains), 1);

    let (status, v) = call(&d.app, "GET", "/api/forecasts/nope/explanation", Some(&s), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "unknown_forecast");

    let eid = e["explanation_id"].as_str().unwrap();
    let feature = e["attributions"][0]["feature_name"].as_str().unwrap();
    let remove = format!("/api/explanations/{eid}/remove-feature");
    let (status, _) = call(
        &d.app,
        "POST",
        &remove,
        Some(&s),
        Some(json!({ "feature_name": feature })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = call(
        &d.app,
        "POST",
        &remove,
        Some(&s),
        Some(json!({ "feature_name": "lag_99" })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "invalid_payload");
    let (status, _) = call(&d.app, "POST", &remove, Some(&s), Some(json!({ "feature": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn option_flow_matches_direct_recommender() {
    let d = demo(1, 2, 2, 150, 4);
    let s = open_session(&d.app).await;
    let f = first_forecast(&d, &s).await;
    let fid = f["forecast_id"].as_str().unwrap().to_string();

    // the same decision computed directly on a copy of the inputs
    let (record, mut ledger) = {
        let a = d.state.lock().unwrap();
        (a.forecast(&fid).unwrap().clone(), a.ledger().clone())
    };
    let mut scratch = KnowledgeGraph::new();
    assistant_core::knowledge_graph::mapping::assert_forecast(&mut scratch, &record).unwrap();
    let r = Recommender::default();
    let direct1 = r.first_snapshot(&record, ledger.states(), &mut scratch).unwrap();

    let uri = format!("/api/forecasts/{fid}/options");
    let (status, s1) = call(&d.app, "GET", &uri, Some(&s), None).await;
    assert_eq!(status, StatusCode::OK, "{s1}");
    let (_, again) = call(&d.app, "GET", &uri, Some(&s), None).await;
    assert_eq!(again["snapshot_id"], s1["snapshot_id"]);
    assert_eq!(s1["position"], 1);
    let options = s1["options"].as_array().unwrap();
    let shape: Vec<(String, Option<String>, u64)> = options
        .iter()
        .map(|o| {
            (
                o["kind"].as_str().unwrap().to_string(),
                o["transport_id"].as_str().map(str::to_string),
                o["rank"].as_u64().unwrap(),
            )
        })
        .collect();
    let want: Vec<(String, Option<String>, u64)> = direct1
        .options
        .iter()
        .map(|o| (o.kind.name().to_string(), o.transport_id.clone(), o.rank as u64))
        .collect();
    assert_eq!(shape, want);
    let ranks: Vec<u64> = shape.iter().map(|x| x.2).collect();
    assert_eq!(ranks, (1..=ranks.len() as u64).collect::<Vec<_>>());
    assert_eq!(shape.last().unwrap().0, "create_new_transport");

    let pick = options[0]["option_id"].as_str().unwrap();
    let select = format!("/api/snapshots/{}/select", s1["snapshot_id"].as_str().unwrap());
    let (status, next) = call(&d.app, "POST", &select, Some(&s), Some(json!({ "option_id": pick }))).await;
    assert_eq!(status, StatusCode::OK, "{next}");
    assert_eq!(next["status"], "next");
    let s2 = &next["snapshot"];
    assert_eq!(s2["stage"], "confirm");
    assert_eq!(s2["position"], 2);

    let SelectionOutcome::Next(direct2) = r
        .apply_selection(
            &record,
            &direct1,
            &direct1.options[0].option_id.clone(),
            None,
            &mut ledger,
            &mut scratch,
        )
        .unwrap()
    else {
        panic!("direct call should continue");
    };
    let kinds: Vec<&str> = s2["options"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds, direct2.options.iter().map(|o| o.kind.name()).collect::<Vec<_>>());

    let (status, v) = call(&d.app, "POST", &select, Some(&s), Some(json!({ "option_id": pick }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_code(&v), "already_selected");

    let confirm = s2["options"][0]["option_id"].as_str().unwrap();
    let select2 = format!("/api/snapshots/{}/select", s2["snapshot_id"].as_str().unwrap());
    let (status, done) = call(
        &d.app,
        "POST",
        &select2,
        Some(&s),
        Some(json!({ "option_id": confirm })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{done}");
    assert_eq!(done["status"], "terminal");
    assert_eq!(done["outcome"]["outcome"], "committed");
    assert_eq!(done["position"], 2);
    let (status, v) = call(
        &d.app,
        "POST",
        &select2,
        Some(&s),
        Some(json!({ "option_id": confirm })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_code(&v), "already_selected");

    let (status, t) = call(&d.app, "GET", &format!("/api/kg/trace/{confirm}"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(t["origin_forecast"], fid.as_str());
    assert_eq!(t["path"].as_array().unwrap().len(), 2);
    let (status, _) = call(&d.app, "GET", "/api/kg/trace/nope", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&d.app, "GET", &format!("/api/kg/trace/{fid}"), None, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // completed flows stay completed
    let (_, head) = call(&d.app, "GET", &uri, Some(&s), None).await;
    assert_eq!(head["snapshot_id"], s2["snapshot_id"]);
    assert_eq!(head["outcome"]["outcome"], "committed");
}

#[tokio::test]
async fn reasons_and_catalog() {
    let d = demo(1, 1, 1, 150, 5);
    let s = open_session(&d.app).await;
    let f = first_forecast(&d, &s).await;
    let (_, s1) = call(
        &d.app,
        "GET",
        &format!("/api/forecasts/{}/options", f["forecast_id"].as_str().unwrap()),
        Some(&s),
        None,
    )
    .await;
    let sid = s1["snapshot_id"].as_str().unwrap();
    let oid = s1["options"][0]["option_id"].as_str().unwrap();

    let (status, v) = call(
        &d.app,
        "POST",
        "/api/feedback/reason",
        Some(&s),
        Some(json!({ "snapshot_id": sid, "option_id": oid, "reason_code": "cost" })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_code(&v), "no_selection_yet");

    call(
        &d.app,
        "POST",
        &format!("/api/snapshots/{sid}/select"),
        Some(&s),
        Some(json!({ "option_id": oid })),
    )
    .await;
    let (status, _) = call(
        &d.app,
        "POST",
        "/api/feedback/reason",
        Some(&s),
        Some(json!({ "snapshot_id": sid, "option_id": oid, "reason_code": "earliest departure" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, before) = call(&d.app, "GET", "/api/reasons", None, None).await;
    assert_eq!(before.as_array().unwrap().len(), 5);
    let (status, _) = call(
        &d.app,
        "POST",
        "/api/feedback/reason",
        Some(&s),
        Some(json!({ "snapshot_id": sid, "option_id": oid, "reason_text": "customer requested Friday delivery" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, after) = call(&d.app, "GET", "/api/reasons", None, None).await;
    assert_eq!(after.as_array().unwrap().len(), 6);
    assert_eq!(after[5], "customer requested Friday delivery");
    let (status, _) = call(
        &d.app,
        "POST",
        "/api/feedback/reason",
        Some(&s),
        Some(json!({ "snapshot_id": sid, "option_id": oid })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn edit_then_close_counts_set_difference() {
    let d = demo(1, 3, 3, 150, 6);
    let s = open_session(&d.app).await;
    let material = materials(&d.state)[0].0.clone();
    let (_, list) = call(
        &d.app,
        "GET",
        &format!("/api/forecasts?date={}&material={material}", d.date),
        Some(&s),
        None,
    )
    .await;
    assert_eq!(list.as_array().unwrap().len(), 3);
    let edited = list[1]["forecast_id"].as_str().unwrap();
    let (status, _) = call(
        &d.app,
        "POST",
        &format!("/api/forecasts/{edited}/edit"),
        Some(&s),
        Some(json!({ "quantity": 15.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = call(
        &d.app,
        "POST",
        &format!("/api/forecasts/{edited}/edit"),
        Some(&s),
        Some(json!({ "quantity": -2.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    assert_eq!(d.state.lock().unwrap().forecast(edited).unwrap().quantity, 15.0);

    let (status, v) = call(&d.app, "POST", &format!("/api/sessions/{s}/close"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({ "implicit_approvals": 2 }));
    let (_, v) = call(&d.app, "POST", &format!("/api/sessions/{s}/close"), None, None).await;
    assert_eq!(v, json!({ "implicit_approvals": 0 }));
    let (status, v) = call(
        &d.app,
        "POST",
        &format!("/api/forecasts/{edited}/edit"),
        Some(&s),
        Some(json!({ "quantity": 1.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_code(&v), "session_closed");
    let (status, _) = call(&d.app, "POST", "/api/sessions/nope/close", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // the edited quantity feeds the next decision flow
    let s2 = open_session(&d.app).await;
    let (_, opts) = call(
        &d.app,
        "GET",
        &format!("/api/forecasts/{edited}/options"),
        Some(&s2),
        None,
    )
    .await;
    assert!(opts["options"]
        .as_array()
        .unwrap()
        .iter()
        .all(|o| o["quantity"] == 15.0));
}

#[tokio::test]
async fn suggestions_follow_committee_variance() {
    let d = demo(1, 2, 2, 150, 7);
    let (status, v) = call(&d.app, "GET", "/api/al/suggestions?k=0", None, None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "invalid_request");
    let (status, v) = call(&d.app, "GET", "/api/al/suggestions?k=3", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!([]));

    let s = open_session(&d.app).await;
    let material = materials(&d.state)[0].0.clone();
    let (_, list) = call(
        &d.app,
        "GET",
        &format!("/api/forecasts?date={}&material={material}", d.date),
        Some(&s),
        None,
    )
    .await;

    // independent committee scoring of each displayed forecast
    let mut best: Option<(f64, String)> = None;
    {
        let a = d.state.lock().unwrap();
        for f in list.as_array().unwrap() {
            let id = f["forecast_id"].as_str().unwrap();
            let record = a.forecast(id).unwrap();
            let spec = assistant_core::forecasting::ModelSpec::default();
            let committee = train_committee(a.store(), &record.series, &spec, &CommitteeConfig::new(5, 0)).unwrap();
            let fv = build_features(a.store(), &record.series, record.target_date, &spec).unwrap();
            let v = forecast_uncertainty(&committee, &fv).unwrap();
            let better = match &best {
                None => true,
                Some((bv, bid)) => v > *bv || (v == *bv && id < bid.as_str()),
            };
            if better {
                best = Some((v, id.to_string()));
            }
        }
    }
    let (best_v, best_id) = best.unwrap();
    let (status, top) = call(&d.app, "GET", "/api/al/suggestions?k=1", None, None).await;
    assert_eq!(status, StatusCode::OK, "{top}");
    assert_eq!(top.as_array().unwrap().len(), 1);
    assert_eq!(top[0]["target_id"], best_id.as_str());
    assert_eq!(top[0]["target_kind"], "forecast");
    assert!((top[0]["informativeness"].as_f64().unwrap() - best_v).abs() <= 1e-9 * (1.0 + best_v));
    assert!(!top[0]["rationale"].as_str().unwrap().is_empty());

    call(
        &d.app,
        "GET",
        &format!("/api/forecasts/{best_id}/options"),
        Some(&s),
        None,
    )
    .await;
    let (_, all) = call(&d.app, "GET", "/api/al/suggestions?k=10", None, None).await;
    let kinds: Vec<&str> = all
        .as_array()
        .unwrap()
        .iter()
        .map(|q| q["target_kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds, vec!["forecast", "snapshot", "forecast"]);
    assert_eq!(all[1]["informativeness"], 1.0);
}

#[tokio::test]
async fn state_survives_restart() {
    let d = demo(1, 1, 1, 150, 8);
    let s = open_session(&d.app).await;
    let f = first_forecast(&d, &s).await;
    let fid = f["forecast_id"].as_str().unwrap().to_string();
    let (_, s1) = call(&d.app, "GET", &format!("/api/forecasts/{fid}/options"), Some(&s), None).await;
    let sid = s1["snapshot_id"].as_str().unwrap();
    let create = s1["options"].as_array().unwrap().last().unwrap()["option_id"]
        .as_str()
        .unwrap();
    let (_, next) = call(
        &d.app,
        "POST",
        &format!("/api/snapshots/{sid}/select"),
        Some(&s),
        Some(json!({ "option_id": create })),
    )
    .await;
    let s2 = next["snapshot"]["snapshot_id"].as_str().unwrap();
    let confirm = next["snapshot"]["options"][0]["option_id"].as_str().unwrap();
    call(
        &d.app,
        "POST",
        &format!("/api/snapshots/{s2}/select"),
        Some(&s),
        Some(json!({ "option_id": confirm })),
    )
    .await;
    call(
        &d.app,
        "POST",
        "/api/feedback/reason",
        Some(&s),
        Some(json!({ "snapshot_id": s2, "option_id": confirm, "reason_text": "only option left" })),
    )
    .await;
    let (_, e) = call(
        &d.app,
        "GET",
        &format!("/api/forecasts/{fid}/explanation"),
        Some(&s),
        None,
    )
    .await;
    let (transports, committed) = {
        let a = d.state.lock().unwrap();
        (a.ledger().len(), a.ledger().total_committed())
    };

    let (state, _) = common::open(&d.store(), &d.models());
    let app = assistant_api::http::router(state.clone());
    {
        let a = state.lock().unwrap();
        assert_eq!(a.ledger().len(), transports);
        assert_eq!(a.ledger().total_committed(), committed);
        assert!(a.reasons().iter().any(|r| r == "only option left"));
    }
    let s = open_session(&app).await;
    let f2 = {
        let material = materials(&state)[0].0.clone();
        let (_, v) = call(
            &app,
            "GET",
            &format!("/api/forecasts?date={}&material={material}", d.date),
            Some(&s),
            None,
        )
        .await;
        v[0].clone()
    };
    assert_eq!(f2["forecast_id"], fid.as_str());
    let (_, head) = call(&app, "GET", &format!("/api/forecasts/{fid}/options"), Some(&s), None).await;
    assert_eq!(head["snapshot_id"], s2);
    assert_eq!(head["outcome"]["created_transport"], true);
    let (_, e2) = call(
        &app,
        "GET",
        &format!("/api/forecasts/{fid}/explanation"),
        Some(&s),
        None,
    )
    .await;
    assert_eq!(e2, e);
}

#[tokio::test]
async fn unknown_routes_use_the_envelope() {
    let d = demo(1, 1, 1, 120, 9);
    let (status, v) = call(&d.app, "GET", "/api/nothing", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "not_found");
    let s = open_session(&d.app).await;
    let (status, v) = call(
        &d.app,
        "POST",
        "/api/snapshots/nope/select",
        Some(&s),
        Some(json!({ "option_id": "x" })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "unknown_snapshot");
    assert!(v["error"]["message"].as_str().unwrap().contains("nope"));
}
