use std::collections::BTreeSet;

use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{middleware, Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::{ServeDir, ServeFile};
use tower_http::trace::TraceLayer;

use votelab_core::ballot::{MethodId, RawBallotInput, VotingMethodSpec};
use votelab_core::consistency::{reports_by_question, RankingBasis};
use votelab_core::engine::{
    Actor, BallotSubmission, CampaignDefinition, ClientTrace, EngineError, Platform, ResultSet, Role, Timestamp,
};
use votelab_core::export::{ExportFormat, ExportKind};
use votelab_core::fixture;
use votelab_core::ids::{CampaignId, QuestionId};

use crate::auth::{AdminCaller, Caller, DesignerCaller, VoterCaller};
use crate::error::{ApiError, ApiResult};
use crate::{openapi, rate_limit, AppState};

/// Who may call a route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Public,
    /// Any signed-in caller (voter, designer or admin).
    Session,
    Voter,
    /// Designers, and the admin acting for any designer.
    Designer,
    Admin,
}

impl Access {
    pub fn as_str(self) -> &'static str {
        match self {
            Access::Public => "public",
            Access::Session => "session",
            Access::Voter => "voter",
            Access::Designer => "designer",
            Access::Admin => "admin",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RouteSpec {
    pub method: &'static str,
    /// Path below `/v1`, with `{param}` placeholders.
    pub path: &'static str,
    pub access: Access,
    pub summary: &'static str,
}

const fn route(method: &'static str, path: &'static str, access: Access, summary: &'static str) -> RouteSpec {
    RouteSpec {
        method,
        path,
        access,
        summary,
    }
}

/// Every route the API serves. The OpenAPI document is generated from this
/// table and the role matrix test walks it.
pub const ROUTES: &[RouteSpec] = &[
    route("GET", "/health", Access::Public, "Liveness and the last event sequence number"),
    route("GET", "/openapi.json", Access::Public, "This API description"),
    route("GET", "/methods", Access::Public, "Voting method specs with their admissible values"),
    route("POST", "/auth/register", Access::Public, "Create an identity and mail a one-time code"),
    route("POST", "/auth/login", Access::Public, "Mail a one-time code to a registered email"),
    route("POST", "/auth/verify", Access::Public, "Exchange a one-time code for a session"),
    route("POST", "/auth/logout", Access::Session, "End the current session"),
    route("GET", "/me", Access::Session, "The signed-in identity"),
    route("DELETE", "/me", Access::Session, "Delete the signed-in identity's email link"),
    route("GET", "/campaigns", Access::Designer, "Campaigns the caller manages"),
    route("POST", "/campaigns", Access::Designer, "Create a draft campaign from a definition"),
    route("GET", "/campaigns/{id}", Access::Designer, "One managed campaign"),
    route("PATCH", "/campaigns/{id}", Access::Designer, "Replace a draft's definition"),
    route("POST", "/campaigns/{id}/tags", Access::Designer, "Replace the campaign's tags"),
    route("POST", "/campaigns/{id}/open", Access::Designer, "Publish a draft"),
    route("POST", "/campaigns/{id}/clone", Access::Designer, "Copy a campaign into a new draft"),
    route("POST", "/campaigns/{id}/release", Access::Designer, "Release held results to voters"),
    route("GET", "/campaigns/{id}/results", Access::Session, "Frozen results, or interim ones for designers"),
    route("GET", "/campaigns/{id}/consistency", Access::Session, "Per-rank consistency across methods"),
    route("GET", "/campaigns/{id}/export/{kind}", Access::Designer, "Research dataset as CSV or JSON"),
    route("GET", "/feed", Access::Voter, "Open campaigns sharing a tag with the voter"),
    route("GET", "/subscriptions", Access::Voter, "The voter's tags"),
    route("POST", "/subscriptions", Access::Voter, "Replace the voter's tags"),
    route("GET", "/campaigns/{id}/ballot/{question}/{method}", Access::Voter, "Ballot form and current ballot"),
    route("POST", "/campaigns/{id}/ballot/{question}/{method}", Access::Voter, "Submit or revise a ballot"),
    route("POST", "/campaigns/{id}/feedback", Access::Voter, "Rate a question after results are out"),
    route("POST", "/admin/fixtures/covid", Access::Admin, "Seed the synthetic COVID campaign into an empty store"),
    route("POST", "/admin/scheduler/tick", Access::Admin, "Run one close-and-tally pass"),
    route("GET", "/admin/state", Access::Admin, "Live and replayed state hashes"),
];

// ----- extractors with problem-document rejections ---------------------------

pub struct ApiJson<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(e) => Err(ApiError::bad_request("InvalidBody", e.body_text())),
        }
    }
}

pub struct ApiQuery<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for ApiQuery<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        match Query::<T>::from_request_parts(parts, state).await {
            Ok(Query(v)) => Ok(ApiQuery(v)),
            Err(e) => Err(ApiError::bad_request("InvalidQuery", e.body_text())),
        }
    }
}

fn parse_method(text: &str) -> ApiResult<MethodId> {
    text.parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "UnknownMethod", format!("no voting method {text:?}")))
}

// ----- router ----------------------------------------------------------------

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/openapi.json", get(openapi_doc))
        .route("/methods", get(methods))
        .route("/auth/register", post(register))
        .route("/auth/login", post(login))
        .route("/auth/verify", post(verify))
        .route("/auth/logout", post(logout))
        .route("/me", get(me).delete(delete_me))
        .route("/campaigns", get(list_campaigns).post(create_campaign))
        .route("/campaigns/{id}", get(get_campaign).patch(update_campaign))
        .route("/campaigns/{id}/tags", post(assign_tags))
        .route("/campaigns/{id}/open", post(open_campaign))
        .route("/campaigns/{id}/clone", post(clone_campaign))
        .route("/campaigns/{id}/release", post(release_results))
        .route("/campaigns/{id}/results", get(results))
        .route("/campaigns/{id}/consistency", get(consistency))
        .route("/campaigns/{id}/export/{kind}", get(export))
        .route("/feed", get(feed))
        .route("/subscriptions", get(subscription).post(subscribe))
        .route("/campaigns/{id}/ballot/{question}/{method}", get(ballot_form).post(submit_ballot))
        .route("/campaigns/{id}/feedback", post(feedback))
        .route("/admin/fixtures/covid", post(seed_fixture))
        .route("/admin/scheduler/tick", post(tick))
        .route("/admin/state", get(admin_state))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NoSuchRoute", "no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "MethodNotAllowed", "method not allowed on this route")
        })
        .layer(middleware::from_fn_with_state(state.clone(), rate_limit));

    let mut app = Router::new().nest("/v1", api);
    if let Some(dir) = &state.config.server.static_dir {
        let index = dir.join("index.html");
        app = app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)));
    }
    if let Some(origin) = &state.config.server.cors_origin {
        let allow = if origin == "*" {
            AllowOrigin::any()
        } else {
            match HeaderValue::from_str(origin) {
                Ok(v) => AllowOrigin::exact(v),
                Err(_) => {
                    tracing::warn!(%origin, "ignoring unparsable CORS origin");
                    AllowOrigin::list(Vec::<HeaderValue>::new())
                }
            }
        };
        app = app.layer(
            CorsLayer::new()
                .allow_origin(allow)
                .allow_methods([Method::GET, Method::POST, Method::PATCH, Method::DELETE, Method::OPTIONS])
                .allow_headers([
                    header::AUTHORIZATION,
                    header::CONTENT_TYPE,
                    HeaderName::from_static("idempotency-key"),
                ]),
        );
    }
    app.layer(TraceLayer::new_for_http()).with_state(state)
}

// ----- public ----------------------------------------------------------------

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "last_seq": state.platform.last_seq() }))
}

async fn openapi_doc() -> Json<serde_json::Value> {
    Json(openapi::document())
}

async fn methods(State(state): State<AppState>) -> Json<Vec<VotingMethodSpec>> {
    let params = &state.config.engine.method_params;
    Json(MethodId::ALL.iter().map(|m| VotingMethodSpec::standard(*m, params)).collect())
}

// ----- auth ------------------------------------------------------------------

#[derive(Deserialize)]
struct RegisterBody {
    email: String,
    #[serde(default = "default_role")]
    role: Role,
}

fn default_role() -> Role {
    Role::Voter
}

#[derive(Deserialize)]
struct EmailBody {
    email: String,
}

#[derive(Deserialize)]
struct VerifyBody {
    email: String,
    code: String,
}

#[derive(Serialize)]
struct CodeSent {
    email: String,
    role: Role,
    created: bool,
    code_expires_at: Timestamp,
}

async fn register(State(state): State<AppState>, ApiJson(body): ApiJson<RegisterBody>) -> ApiResult<Response> {
    let email = body.email.clone();
    let (record, created) = state
        .run(move |p, now| Ok(p.register_identity(&body.email, body.role, now, &mut rand::rng())?))
        .await?;
    let expires = state.auth.send_code(&email, state.now())?;
    let out = CodeSent {
        email: email.trim().to_lowercase(),
        role: record.role,
        created,
        code_expires_at: expires,
    };
    Ok((StatusCode::ACCEPTED, Json(out)).into_response())
}

async fn login(State(state): State<AppState>, ApiJson(body): ApiJson<EmailBody>) -> ApiResult<Response> {
    let email = body.email.clone();
    let record = state
        .run(move |p, _| p.identity_by_email(&body.email).ok_or_else(|| EngineError::UnknownIdentity.into()))
        .await?;
    let expires = state.auth.send_code(&email, state.now())?;
    let out = CodeSent {
        email: email.trim().to_lowercase(),
        role: record.role,
        created: false,
        code_expires_at: expires,
    };
    Ok((StatusCode::ACCEPTED, Json(out)).into_response())
}

async fn verify(State(state): State<AppState>, ApiJson(body): ApiJson<VerifyBody>) -> ApiResult<Json<crate::Session>> {
    state.auth.check_code(&body.email, &body.code, state.now())?;
    let record = state
        .run(move |p, now| {
            let record = p.identity_by_email(&body.email).ok_or(EngineError::UnknownIdentity)?;
            Ok(if record.verified {
                record
            } else {
                p.verify_identity(&record.pseudonym, now)?
            })
        })
        .await?;
    Ok(Json(state.auth.open_session(record.role, record.pseudonym, state.now())))
}

async fn logout(State(state): State<AppState>, caller: Caller) -> StatusCode {
    if let Some(token) = caller.token() {
        state.auth.close_session(token);
    }
    StatusCode::NO_CONTENT
}

async fn me(State(state): State<AppState>, caller: Caller) -> ApiResult<Json<serde_json::Value>> {
    match caller {
        Caller::Admin => Ok(Json(json!({ "role": "admin" }))),
        Caller::User(s) => {
            let identity = state.platform.identity(&s.pseudonym);
            let tags = state.platform.subscription(&s.pseudonym);
            Ok(Json(json!({
                "pseudonym": s.pseudonym,
                "role": s.role,
                "verified": identity.as_ref().is_some_and(|i| i.verified),
                "subscription": tags,
                "session_expires_at": s.expires_at,
            })))
        }
    }
}

async fn delete_me(State(state): State<AppState>, caller: Caller) -> ApiResult<StatusCode> {
    let Caller::User(session) = caller else {
        return Err(ApiError::forbidden("the admin token has no identity"));
    };
    let pseudonym = session.pseudonym.clone();
    state.run(move |p, now| Ok(p.delete_identity(&pseudonym, now)?)).await?;
    state.auth.close_sessions_of(&session.pseudonym);
    Ok(StatusCode::NO_CONTENT)
}

// ----- designer --------------------------------------------------------------

async fn list_campaigns(State(state): State<AppState>, DesignerCaller(c): DesignerCaller) -> ApiResult<Response> {
    let actor = c.actor();
    let list = state.run(move |p, _| Ok(p.campaigns(&actor))).await?;
    Ok(Json(list).into_response())
}

async fn create_campaign(
    State(state): State<AppState>,
    DesignerCaller(c): DesignerCaller,
    ApiJson(def): ApiJson<CampaignDefinition>,
) -> ApiResult<Response> {
    let actor = c.actor();
    let created = state.run(move |p, now| Ok(p.create_campaign(&actor, &def, now)?)).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn get_campaign(
    State(state): State<AppState>,
    DesignerCaller(c): DesignerCaller,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let actor = c.actor();
    let campaign = state.run(move |p, _| Ok(p.campaign(&actor, &id.into())?)).await?;
    Ok(Json(campaign).into_response())
}

async fn update_campaign(
    State(state): State<AppState>,
    DesignerCaller(c): DesignerCaller,
    Path(id): Path<String>,
    ApiJson(def): ApiJson<CampaignDefinition>,
) -> ApiResult<Response> {
    let actor = c.actor();
    let campaign = state
        .run(move |p, now| Ok(p.update_campaign(&actor, &id.into(), &def, now)?))
        .await?;
    Ok(Json(campaign).into_response())
}

#[derive(Deserialize)]
struct TagsBody {
    tags: BTreeSet<String>,
}

async fn assign_tags(
    State(state): State<AppState>,
    DesignerCaller(c): DesignerCaller,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<TagsBody>,
) -> ApiResult<Response> {
    let actor = c.actor();
    let campaign = state
        .run(move |p, now| Ok(p.assign_tags(&actor, &id.into(), &body.tags, now)?))
        .await?;
    Ok(Json(campaign).into_response())
}

async fn open_campaign(
    State(state): State<AppState>,
    DesignerCaller(c): DesignerCaller,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let actor = c.actor();
    let campaign = state.run(move |p, now| Ok(p.open_campaign(&actor, &id.into(), now)?)).await?;
    Ok(Json(campaign).into_response())
}

async fn clone_campaign(
    State(state): State<AppState>,
    DesignerCaller(c): DesignerCaller,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let actor = c.actor();
    let campaign = state.run(move |p, now| Ok(p.clone_campaign(&actor, &id.into(), now)?)).await?;
    Ok((StatusCode::CREATED, Json(campaign)).into_response())
}

async fn release_results(
    State(state): State<AppState>,
    DesignerCaller(c): DesignerCaller,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let actor = c.actor();
    let campaign = state.run(move |p, now| Ok(p.release_results(&actor, &id.into(), now)?)).await?;
    Ok(Json(campaign).into_response())
}

#[derive(Deserialize, Default)]
struct ResultsQuery {
    #[serde(default)]
    interim: bool,
    at: Option<Timestamp>,
    #[serde(default)]
    basis: Option<String>,
    #[serde(default)]
    format: Option<String>,
}

/// Voters get frozen, released results only; managers may ask for interim
/// figures as of `at` (default: now).
fn results_for(p: &Platform, actor: &Actor, id: &CampaignId, q: &ResultsQuery, now: Timestamp) -> ApiResult<ResultSet> {
    if !q.interim {
        return Ok(p.get_results(actor, id)?);
    }
    if matches!(actor, Actor::Voter(_)) {
        return Err(ApiError::forbidden("interim results are for campaign designers"));
    }
    Ok(p.on_demand_results(actor, id, q.at.unwrap_or(now))?)
}

async fn results(
    State(state): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<ResultsQuery>,
) -> ApiResult<Response> {
    let actor = caller.actor();
    let rs = state.run(move |p, now| results_for(p, &actor, &id.into(), &q, now)).await?;
    Ok(Json(rs).into_response())
}

async fn consistency(
    State(state): State<AppState>,
    caller: Caller,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<ResultsQuery>,
) -> ApiResult<Response> {
    let basis: RankingBasis = match &q.basis {
        Some(b) => b.parse().map_err(|e: String| ApiError::bad_request("InvalidQuery", e).with_field("basis"))?,
        None => RankingBasis::Aggregate,
    };
    let actor = caller.actor();
    let rs = state.run(move |p, now| results_for(p, &actor, &id.into(), &q, now)).await?;
    Ok(Json(reports_by_question(&rs.tallies, basis)).into_response())
}

async fn export(
    State(state): State<AppState>,
    DesignerCaller(c): DesignerCaller,
    Path((id, kind)): Path<(String, String)>,
    ApiQuery(q): ApiQuery<ResultsQuery>,
) -> ApiResult<Response> {
    let kind: ExportKind = kind
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::NOT_FOUND, "UnknownExportKind", e))?;
    let format = match q.format.as_deref() {
        None | Some("csv") => ExportFormat::Csv,
        Some("json") => ExportFormat::Json,
        Some(other) => {
            return Err(ApiError::bad_request("InvalidQuery", format!("unknown format {other:?}")).with_field("format"))
        }
    };
    let actor = c.actor();
    let table = state
        .run(move |p, now| Ok(p.export(&actor, &id.into(), kind, q.interim, q.at.unwrap_or(now))?))
        .await?;
    let body = table.render(format)?;
    let content_type = match format {
        ExportFormat::Csv => "text/csv; charset=utf-8",
        ExportFormat::Json => "application/json",
    };
    let disposition = format!("attachment; filename=\"{}\"", table.file_name(format));
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        body,
    )
        .into_response())
}

// ----- voter -----------------------------------------------------------------

#[derive(Deserialize)]
struct FeedQuery {
    since: Option<u64>,
    cursor: Option<String>,
    limit: Option<usize>,
}

async fn feed(
    State(state): State<AppState>,
    VoterCaller(s): VoterCaller,
    ApiQuery(q): ApiQuery<FeedQuery>,
) -> ApiResult<Response> {
    let limit = q.limit.unwrap_or(50).clamp(1, 200);
    let page = state
        .run(move |p, now| Ok(p.feed(&s.pseudonym, now, q.since, q.cursor.as_deref(), limit)?))
        .await?;
    Ok(Json(page).into_response())
}

async fn subscription(State(state): State<AppState>, VoterCaller(s): VoterCaller) -> Json<serde_json::Value> {
    Json(json!({ "tags": state.platform.subscription(&s.pseudonym) }))
}

async fn subscribe(
    State(state): State<AppState>,
    VoterCaller(s): VoterCaller,
    ApiJson(body): ApiJson<TagsBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let tags = state.run(move |p, now| Ok(p.subscribe(&s.pseudonym, &body.tags, now)?)).await?;
    Ok(Json(json!({ "tags": tags })))
}

async fn ballot_form(
    State(state): State<AppState>,
    VoterCaller(s): VoterCaller,
    Path((id, question, method)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    let method = parse_method(&method)?;
    let form = state
        .run(move |p, _| Ok(p.ballot_form(&s.pseudonym, &id.into(), &question.into(), method)?))
        .await?;
    Ok(Json(form).into_response())
}

#[derive(Deserialize)]
struct BallotBody {
    input: RawBallotInput,
    trace: ClientTrace,
}

async fn submit_ballot(
    State(state): State<AppState>,
    VoterCaller(s): VoterCaller,
    Path((id, question, method)): Path<(String, String, String)>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<BallotBody>,
) -> ApiResult<Response> {
    let method = parse_method(&method)?;
    let idempotency_key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty());
    let sub = BallotSubmission {
        voter: s.pseudonym,
        campaign_id: id.into(),
        question_id: question.into(),
        method,
        input: body.input,
        trace: body.trace,
        idempotency_key,
    };
    let ack = state.run(move |p, now| Ok(p.submit_ballot(&sub, now)?)).await?;
    let status = if ack.replayed { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(ack)).into_response())
}

#[derive(Deserialize)]
struct FeedbackBody {
    question_id: String,
    rating: i64,
    #[serde(default)]
    text: Option<String>,
}

async fn feedback(
    State(state): State<AppState>,
    VoterCaller(s): VoterCaller,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<FeedbackBody>,
) -> ApiResult<Response> {
    let record = state
        .run(move |p, now| {
            Ok(p.submit_feedback(
                &s.pseudonym,
                &id.into(),
                &QuestionId::from(body.question_id),
                body.rating,
                body.text,
                now,
            )?)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

// ----- admin -----------------------------------------------------------------

#[derive(Deserialize)]
struct SeedBody {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_voters")]
    voters: usize,
}

fn default_seed() -> u64 {
    7
}

fn default_voters() -> usize {
    fixture::FIXTURE_VOTERS
}

async fn seed_fixture(
    State(state): State<AppState>,
    _: AdminCaller,
    ApiJson(body): ApiJson<SeedBody>,
) -> ApiResult<Response> {
    if body.voters == 0 || body.voters > 10_000 {
        return Err(ApiError::bad_request("InvalidBody", "voters must be in 1..=10000").with_field("voters"));
    }
    let report = state
        .run(move |p, _| Ok(fixture::seed_covid(p, body.seed, body.voters)?))
        .await?;
    Ok((StatusCode::CREATED, Json(report)).into_response())
}

#[derive(Deserialize)]
struct TickBody {
    at: Option<Timestamp>,
}

async fn tick(State(state): State<AppState>, _: AdminCaller, ApiJson(body): ApiJson<TickBody>) -> ApiResult<Response> {
    let tallied = state
        .run(move |p, now| Ok(p.scheduler_tick(body.at.unwrap_or(now))))
        .await?;
    Ok(Json(json!({ "tallied": tallied })).into_response())
}

async fn admin_state(State(state): State<AppState>, _: AdminCaller) -> ApiResult<Response> {
    let report = state.run(|p, _| Ok(p.state_report()?)).await?;
    Ok(Json(report).into_response())
}
