use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use chrono::{Duration, TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use votelab_core::engine::{EngineConfig, Platform, Timestamp};
use votelab_server::{router, Access, AppState, HttpConfig, MemoryMailSink, ServerConfig, ROUTES};

const ADMIN: &str = "admin-secret";

fn t(h: i64) -> Timestamp {
    Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap() + Duration::hours(h)
}

struct App {
    router: Router,
    mail: Arc<MemoryMailSink>,
    now: Arc<Mutex<Timestamp>>,
    state: AppState,
}

struct Reply {
    status: StatusCode,
    body: Value,
}

impl App {
    fn new() -> Self {
        let config = ServerConfig {
            store: "memory:".into(),
            server: HttpConfig {
                admin_token: Some(ADMIN.into()),
                rate_limit_per_minute: 0,
                scheduler: false,
                ..HttpConfig::default()
            },
            ..ServerConfig::default()
        };
        let mail = Arc::new(MemoryMailSink::default());
        let now = Arc::new(Mutex::new(t(0)));
        let clock_now = Arc::clone(&now);
        let state = AppState::new(
            Platform::in_memory(EngineConfig::default()),
            config,
            mail.clone(),
            Arc::new(move || *clock_now.lock().unwrap()),
        );
        Self {
            router: router(state.clone()),
            mail,
            now,
            state,
        }
    }

    fn set_time(&self, at: Timestamp) {
        *self.now.lock().unwrap() = at;
    }

    async fn call(&self, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> Reply {
        self.call_with(method, path, token, body, &[]).await
    }

    async fn call_with(
        &self,
        method: &str,
        path: &str,
        token: Option<&str>,
        body: Option<Value>,
        headers: &[(&str, &str)],
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(token) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {token}"));
        }
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let req = match body {
            Some(b) => req
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let body = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        Reply { status, body }
    }

    /// Registers, verifies and signs in; returns the session token.
    async fn sign_in(&self, email: &str, role: &str) -> String {
        let r = self
            .call("POST", "/v1/auth/register", None, Some(json!({ "email": email, "role": role })))
            .await;
        assert_eq!(r.status, StatusCode::ACCEPTED, "{:?}", r.body);
        let code = self.mail.last_code_for(email).expect("code mailed");
        let r = self
            .call("POST", "/v1/auth/verify", None, Some(json!({ "email": email, "code": code })))
            .await;
        assert_eq!(r.status, StatusCode::OK, "{:?}", r.body);
        r.body["token"].as_str().unwrap().to_string()
    }

    async fn campaign(&self, designer: &str, methods: &[&str]) -> String {
        let def = json!({
            "title": "Bike lanes",
            "tags": ["transport"],
            "open_at": t(1),
            "close_at": t(10),
            "questions": [{
                "text": "Which street first?",
                "options": [{ "label": "Main" }, { "label": "Elm" }, { "label": "Oak" }],
                "methods": methods,
            }],
        });
        let r = self.call("POST", "/v1/campaigns", Some(designer), Some(def)).await;
        assert_eq!(r.status, StatusCode::CREATED, "{:?}", r.body);
        let id = r.body["campaign_id"].as_str().unwrap().to_string();
        let r = self.call("POST", &format!("/v1/campaigns/{id}/open"), Some(designer), None).await;
        assert_eq!(r.status, StatusCode::OK, "{:?}", r.body);
        id
    }
}

fn trace(at: Timestamp) -> Value {
    json!({
        "ballot_opened_at": at - Duration::seconds(30),
        "first_interaction_at": at - Duration::seconds(20),
        "submitted_at": at,
        "in_form_changes": 1,
    })
}

fn concrete(path: &str) -> String {
    path.replace("{id}", "cmp-0001")
        .replace("{question}", "q1")
        .replace("{method}", "mv")
        .replace("{kind}", "ballots")
}

#[tokio::test]
async fn role_matrix_holds_for_every_route() {
    let app = App::new();
    let voter = app.sign_in("v@example.org", "voter").await;
    let designer = app.sign_in("d@example.org", "designer").await;
    for r in ROUTES {
        let path = format!("/v1{}", concrete(r.path));
        let body = (r.method != "GET" && r.method != "DELETE").then(|| json!({}));
        let anon = app.call(r.method, &path, None, body.clone()).await;
        if r.access == Access::Public {
            assert_ne!(anon.status, StatusCode::UNAUTHORIZED, "{} {}", r.method, r.path);
        } else {
            assert_eq!(anon.status, StatusCode::UNAUTHORIZED, "{} {}", r.method, r.path);
            assert_eq!(anon.body["code"], "Unauthenticated");
        }
        let callers = [("voter", voter.as_str()), ("designer", designer.as_str()), ("admin", ADMIN)];
        for (role, token) in callers {
            // Logging out or deleting the account would end the sessions the
            // matrix still needs.
            if matches!(r.path, "/auth/logout" | "/me") && r.method != "GET" {
                continue;
            }
            let allowed = match r.access {
                Access::Public | Access::Session => true,
                Access::Voter => role == "voter",
                Access::Designer => role != "voter",
                Access::Admin => role == "admin",
            };
            let reply = app.call(r.method, &path, Some(token), body.clone()).await;
            assert_ne!(reply.status, StatusCode::UNAUTHORIZED, "{role} {} {}", r.method, r.path);
            if allowed {
                assert_ne!(reply.status, StatusCode::FORBIDDEN, "{role} {} {}: {:?}", r.method, r.path, reply.body);
            } else {
                assert_eq!(reply.status, StatusCode::FORBIDDEN, "{role} {} {}", r.method, r.path);
            }
        }
    }
}

#[tokio::test]
async fn full_workflow_replays_to_the_same_state() {
    let app = App::new();
    let designer = app.sign_in("d@example.org", "designer").await;
    let voters = [
        (app.sign_in("a@example.org", "voter").await, "o1"),
        (app.sign_in("b@example.org", "voter").await, "o2"),
        (app.sign_in("c@example.org", "voter").await, "o1"),
    ];
    let id = app.campaign(&designer, &["mv", "sv"]).await;

    app.set_time(t(2));
    for (token, option) in &voters {
        let r = app
            .call("POST", "/v1/subscriptions", Some(token), Some(json!({ "tags": ["transport"] })))
            .await;
        assert_eq!(r.status, StatusCode::OK);
        let feed = app.call("GET", "/v1/feed", Some(token), None).await;
        assert_eq!(feed.body["items"][0]["campaign_id"], id.as_str());

        let form = app.call("GET", &format!("/v1/campaigns/{id}/ballot/q1/mv"), Some(token), None).await;
        assert_eq!(form.status, StatusCode::OK, "{:?}", form.body);
        let r = app
            .call(
                "POST",
                &format!("/v1/campaigns/{id}/ballot/q1/mv"),
                Some(token),
                Some(json!({ "input": { "single_choice": option }, "trace": trace(t(2)) })),
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{:?}", r.body);
        let sv = json!({ "per_option_score": { "o1": "1", "o2": "3/5", "o3": "0" } });
        let r = app
            .call(
                "POST",
                &format!("/v1/campaigns/{id}/ballot/q1/sv"),
                Some(token),
                Some(json!({ "input": sv, "trace": trace(t(2)) })),
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{:?}", r.body);
    }

    let early = app.call("GET", &format!("/v1/campaigns/{id}/results"), Some(&voters[0].0), None).await;
    assert_eq!(early.status, StatusCode::CONFLICT);
    assert_eq!(early.body["code"], "ResultsNotReady");
    let interim = app
        .call("GET", &format!("/v1/campaigns/{id}/results?interim=true"), Some(&voters[0].0), None)
        .await;
    assert_eq!(interim.status, StatusCode::FORBIDDEN);
    let interim = app
        .call("GET", &format!("/v1/campaigns/{id}/results?interim=true"), Some(&designer), None)
        .await;
    assert_eq!(interim.status, StatusCode::OK);
    assert_eq!(interim.body["interim"], true);

    app.set_time(t(10));
    let r = app.call("POST", "/v1/admin/scheduler/tick", Some(ADMIN), Some(json!({}))).await;
    assert_eq!(r.body["tallied"], json!([id]));

    let results = app.call("GET", &format!("/v1/campaigns/{id}/results"), Some(&voters[1].0), None).await;
    assert_eq!(results.status, StatusCode::OK, "{:?}", results.body);
    assert_eq!(results.body["interim"], false);
    assert_eq!(results.body["tallies"].as_array().unwrap().len(), 2);

    let report = app
        .call("GET", &format!("/v1/campaigns/{id}/consistency"), Some(&voters[1].0), None)
        .await;
    assert_eq!(report.status, StatusCode::OK, "{:?}", report.body);
    assert_eq!(report.body.as_array().unwrap().len(), 1);

    let r = app
        .call(
            "POST",
            &format!("/v1/campaigns/{id}/feedback"),
            Some(&voters[2].0),
            Some(json!({ "question_id": "q1", "rating": 4, "text": "fine" })),
        )
        .await;
    assert_eq!(r.status, StatusCode::CREATED, "{:?}", r.body);

    let csv = app
        .call("GET", &format!("/v1/campaigns/{id}/export/ballots"), Some(&designer), None)
        .await;
    assert_eq!(csv.status, StatusCode::OK);
    let text = csv.body.as_str().unwrap();
    assert!(!text.contains('@'), "export leaks email addresses");

    let state = app.call("GET", "/v1/admin/state", Some(ADMIN), None).await;
    assert_eq!(state.status, StatusCode::OK);
    assert_eq!(state.body["state_hash"], state.body["replayed_state_hash"]);
    assert_eq!(app.state.platform.state_report().unwrap().state_hash, state.body["state_hash"]);
}

#[tokio::test]
async fn inadmissible_level_is_rejected_with_the_violation() {
    let app = App::new();
    let designer = app.sign_in("d@example.org", "designer").await;
    let voter = app.sign_in("v@example.org", "voter").await;
    let id = app.campaign(&designer, &["sv"]).await;
    app.set_time(t(2));
    app.call("POST", "/v1/subscriptions", Some(&voter), Some(json!({ "tags": ["transport"] })))
        .await;
    let sv = json!({ "per_option_score": { "o1": "3/10", "o2": "1", "o3": "0" } });
    let r = app
        .call(
            "POST",
            &format!("/v1/campaigns/{id}/ballot/q1/sv"),
            Some(&voter),
            Some(json!({ "input": sv, "trace": trace(t(2)) })),
        )
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{:?}", r.body);
    assert_eq!(r.body["code"], "ValidationFailed");
    assert_eq!(r.body["errors"][0]["code"], "LevelNotAdmissible");
}

#[tokio::test]
async fn idempotency_key_replays_the_first_ack() {
    let app = App::new();
    let designer = app.sign_in("d@example.org", "designer").await;
    let voter = app.sign_in("v@example.org", "voter").await;
    let id = app.campaign(&designer, &["mv"]).await;
    app.set_time(t(2));
    app.call("POST", "/v1/subscriptions", Some(&voter), Some(json!({ "tags": ["transport"] })))
        .await;
    let path = format!("/v1/campaigns/{id}/ballot/q1/mv");
    let body = json!({ "input": { "single_choice": "o2" }, "trace": trace(t(2)) });
    let key = [("idempotency-key", "k-1")];
    let first = app.call_with("POST", &path, Some(&voter), Some(body.clone()), &key).await;
    let second = app.call_with("POST", &path, Some(&voter), Some(body), &key).await;
    assert_eq!(first.status, StatusCode::CREATED, "{:?}", first.body);
    assert_eq!(second.status, StatusCode::OK, "{:?}", second.body);
    assert_eq!(second.body["replayed"], true);
    assert_eq!(first.body["ballot_id"], second.body["ballot_id"]);
    assert_eq!(first.body["revision_index"], second.body["revision_index"]);
}

#[tokio::test]
async fn sign_in_codes_are_single_use() {
    let app = App::new();
    app.call("POST", "/v1/auth/register", None, Some(json!({ "email": "v@example.org" })))
        .await;
    let code = app.mail.last_code_for("v@example.org").unwrap();
    let body = json!({ "email": "V@Example.org ", "code": code });
    let ok = app.call("POST", "/v1/auth/verify", None, Some(body.clone())).await;
    assert_eq!(ok.status, StatusCode::OK);
    assert_eq!(ok.body["role"], "voter");
    let again = app.call("POST", "/v1/auth/verify", None, Some(body)).await;
    assert_eq!(again.status, StatusCode::UNAUTHORIZED);
    assert_eq!(again.body["code"], "InvalidCode");

    let unknown = app
        .call("POST", "/v1/auth/login", None, Some(json!({ "email": "nobody@example.org" })))
        .await;
    assert_eq!(unknown.status, StatusCode::NOT_FOUND);

    let token = ok.body["token"].as_str().unwrap();
    assert_eq!(app.call("GET", "/v1/me", Some(token), None).await.status, StatusCode::OK);
    app.call("POST", "/v1/auth/logout", Some(token), None).await;
    assert_eq!(app.call("GET", "/v1/me", Some(token), None).await.status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn bad_bodies_and_unknown_routes_are_problem_documents() {
    let app = App::new();
    let designer = app.sign_in("d@example.org", "designer").await;
    let r = app.call("POST", "/v1/campaigns", Some(&designer), Some(json!({ "title": 3 }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["code"], "InvalidBody");
    assert_eq!(r.body["status"], 422);

    let r = app.call("GET", "/v1/nope", None, None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.body["code"], "NoSuchRoute");

    let doc = app.call("GET", "/v1/openapi.json", None, None).await;
    assert_eq!(doc.body["paths"].as_object().unwrap().len(), {
        let mut paths: Vec<_> = ROUTES.iter().map(|r| r.path).collect();
        paths.dedup();
        paths.sort();
        paths.dedup();
        paths.len()
    });
}

#[tokio::test]
async fn fixture_seeding_matches_the_golden_consistency() {
    let app = App::new();
    let r = app.call("POST", "/v1/admin/fixtures/covid", Some(ADMIN), Some(json!({}))).await;
    assert_eq!(r.status, StatusCode::CREATED, "{:?}", r.body);
    let again = app.call("POST", "/v1/admin/fixtures/covid", Some(ADMIN), Some(json!({}))).await;
    assert_eq!(again.status, StatusCode::CONFLICT);

    let close = votelab_core::fixture::study_close_at();
    app.call("POST", "/v1/admin/scheduler/tick", Some(ADMIN), Some(json!({ "at": close })))
        .await;
    let report = app.call("GET", "/v1/campaigns/cmp-0001/consistency", Some(ADMIN), None).await;
    assert_eq!(report.status, StatusCode::OK, "{:?}", report.body);
    let means: Vec<String> = report.body.as_array().unwrap().iter().map(|r| r["mean"].as_str().unwrap().to_string()).collect();
    assert_eq!(means, ["3/5", "13/20", "1", "9/10"]);
}
