//! HTTP facade over the votelab engine.
//!
//! All routes live under `/v1`. Designers and voters sign in with a one-time
//! code mailed to them; the operator uses a static admin token. Handlers only
//! translate between JSON and engine calls, and the close-and-tally scheduler
//! runs as a background task next to the listener.

pub mod auth;
pub mod config;
pub mod error;
pub mod openapi;
pub mod routes;

use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{ConnectInfo, Request, State};
use axum::http::StatusCode;
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use chrono::Utc;

use votelab_core::engine::{Platform, Timestamp};
use votelab_core::store;

pub use auth::{AuthService, FileMailSink, LogMailSink, MailMessage, MailSink, MemoryMailSink, Session};
pub use config::{ConfigError, HttpConfig, MailConfig, MailTransport, ServerConfig};
pub use error::{ApiError, ApiResult};
pub use routes::{router, Access, RouteSpec, ROUTES};

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

/// Everything a handler can reach.
#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    pub auth: Arc<AuthService>,
    pub config: Arc<ServerConfig>,
    pub clock: Clock,
    limiter: Arc<RateLimiter>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("store: {0}")]
    Store(#[from] store::StoreError),
    #[error("engine: {0}")]
    Engine(#[from] votelab_core::engine::EngineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AppState {
    pub fn new(platform: Platform, config: ServerConfig, mail: Arc<dyn MailSink>, clock: Clock) -> Self {
        let s = &config.server;
        let auth = AuthService::new(
            mail,
            config.mail.from.clone(),
            s.admin_token.clone(),
            s.session_ttl_secs,
            s.code_ttl_secs,
            s.code_max_attempts,
        );
        Self {
            platform: Arc::new(platform),
            auth: Arc::new(auth),
            limiter: Arc::new(RateLimiter::new(s.rate_limit_per_minute)),
            config: Arc::new(config),
            clock,
        }
    }

    /// Opens the configured store and mail transport with the system clock.
    pub fn from_config(config: ServerConfig) -> Result<Self, StartError> {
        let platform = Platform::open(store::open_store(&config.store)?, config.engine.clone())?;
        let mail: Arc<dyn MailSink> = match config.mail.transport {
            MailTransport::File => Arc::new(FileMailSink::new(config.mail.path.clone())),
            MailTransport::Log => Arc::new(LogMailSink),
            MailTransport::Memory => Arc::new(MemoryMailSink::default()),
        };
        Ok(Self::new(platform, config, mail, system_clock()))
    }

    pub fn now(&self) -> Timestamp {
        (self.clock)()
    }

    /// Runs blocking engine work off the async workers.
    pub async fn run<T, F>(&self, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&Platform, Timestamp) -> ApiResult<T> + Send + 'static,
    {
        let platform = Arc::clone(&self.platform);
        let now = self.now();
        tokio::task::spawn_blocking(move || f(&platform, now))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
    }
}

/// Fixed one-minute windows per client address.
struct RateLimiter {
    per_minute: u32,
    windows: Mutex<HashMap<IpAddr, (Instant, u32)>>,
}

impl RateLimiter {
    fn new(per_minute: u32) -> Self {
        Self {
            per_minute,
            windows: Mutex::new(HashMap::new()),
        }
    }

    fn admit(&self, ip: IpAddr) -> bool {
        if self.per_minute == 0 {
            return true;
        }
        let now = Instant::now();
        let mut windows = self.windows.lock().unwrap_or_else(|e| e.into_inner());
        if windows.len() > 10_000 {
            windows.retain(|_, (start, _)| now.duration_since(*start) < Duration::from_secs(60));
        }
        let entry = windows.entry(ip).or_insert((now, 0));
        if now.duration_since(entry.0) >= Duration::from_secs(60) {
            *entry = (now, 0);
        }
        entry.1 += 1;
        entry.1 <= self.per_minute
    }
}

pub(crate) async fn rate_limit(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let ip = req
        .extensions()
        .get::<ConnectInfo<SocketAddr>>()
        .map(|c| c.0.ip())
        .unwrap_or(IpAddr::V4(Ipv4Addr::UNSPECIFIED));
    if !state.limiter.admit(ip) {
        return ApiError::new(StatusCode::TOO_MANY_REQUESTS, "RateLimited", "too many requests; retry in a minute")
            .into_response();
    }
    next.run(req).await
}

/// Ticks the engine scheduler every `scheduler_period_secs` until dropped.
pub fn spawn_scheduler(state: AppState) -> tokio::task::JoinHandle<()> {
    let period = Duration::from_secs(state.config.engine.scheduler_period_secs.max(1));
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            interval.tick().await;
            let platform = Arc::clone(&state.platform);
            let now = state.now();
            match tokio::task::spawn_blocking(move || platform.scheduler_tick(now)).await {
                Ok(tallied) => {
                    for c in tallied {
                        tracing::info!(campaign = %c, "closed and tallied");
                    }
                }
                Err(e) => tracing::error!(error = %e, "scheduler pass panicked"),
            }
        }
    })
}

/// Serves `state` on `listener` until `shutdown` resolves.
pub async fn serve(
    state: AppState,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let scheduler = state.config.server.scheduler.then(|| spawn_scheduler(state.clone()));
    let app = router(state);
    let result = axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(shutdown)
        .await;
    if let Some(handle) = scheduler {
        handle.abort();
    }
    result
}
