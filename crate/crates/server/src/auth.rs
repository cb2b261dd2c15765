//! Email one-time codes, bearer sessions, and the extractors that enforce a
//! route's role before any body is parsed.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use axum::extract::FromRequestParts;
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use chrono::Duration;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use votelab_core::engine::{Actor, Role, Timestamp};
use votelab_core::ids::Pseudonym;

use crate::error::ApiError;
use crate::AppState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MailMessage {
    pub to: String,
    pub subject: String,
    pub body: String,
    pub sent_at: Timestamp,
}

impl MailMessage {
    /// The first six-digit token in the body.
    pub fn code(&self) -> Option<&str> {
        self.body
            .split(|c: char| !c.is_ascii_digit())
            .find(|w| w.len() == 6)
    }
}

pub trait MailSink: Send + Sync {
    fn send(&self, message: &MailMessage) -> std::io::Result<()>;
}

/// Appends JSON lines to a local file; the offline default.
pub struct FileMailSink {
    path: PathBuf,
    lock: Mutex<()>,
}

impl FileMailSink {
    pub fn new(path: PathBuf) -> Self {
        Self {
            path,
            lock: Mutex::new(()),
        }
    }
}

impl MailSink for FileMailSink {
    fn send(&self, message: &MailMessage) -> std::io::Result<()> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(f, "{}", serde_json::to_string(message)?)
    }
}

pub struct LogMailSink;

impl MailSink for LogMailSink {
    fn send(&self, message: &MailMessage) -> std::io::Result<()> {
        tracing::info!(to = %message.to, subject = %message.subject, body = %message.body, "mail");
        Ok(())
    }
}

#[derive(Default)]
pub struct MemoryMailSink {
    messages: Mutex<Vec<MailMessage>>,
}

impl MemoryMailSink {
    pub fn messages(&self) -> Vec<MailMessage> {
        self.messages.lock().unwrap().clone()
    }

    /// Code from the latest message sent to `email`.
    pub fn last_code_for(&self, email: &str) -> Option<String> {
        let email = normalize(email);
        self.messages
            .lock()
            .unwrap()
            .iter()
            .rev()
            .find(|m| m.to == email)
            .and_then(|m| m.code().map(str::to_string))
    }
}

impl MailSink for MemoryMailSink {
    fn send(&self, message: &MailMessage) -> std::io::Result<()> {
        self.messages.lock().unwrap().push(message.clone());
        Ok(())
    }
}

fn normalize(email: &str) -> String {
    email.trim().to_lowercase()
}

#[derive(Debug, Clone)]
struct Challenge {
    code: String,
    expires_at: Timestamp,
    attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub role: Role,
    pub pseudonym: Pseudonym,
    pub expires_at: Timestamp,
}

impl Session {
    pub fn actor(&self) -> Actor {
        match self.role {
            Role::Designer => Actor::Designer(self.pseudonym.clone()),
            Role::Voter => Actor::Voter(self.pseudonym.clone()),
        }
    }
}

pub struct AuthService {
    sessions: Mutex<HashMap<String, Session>>,
    challenges: Mutex<HashMap<String, Challenge>>,
    mail: std::sync::Arc<dyn MailSink>,
    from: String,
    admin_token: Option<String>,
    session_ttl: Duration,
    code_ttl: Duration,
    max_attempts: u32,
}

impl AuthService {
    pub fn new(
        mail: std::sync::Arc<dyn MailSink>,
        from: String,
        admin_token: Option<String>,
        session_ttl_secs: i64,
        code_ttl_secs: i64,
        max_attempts: u32,
    ) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            challenges: Mutex::new(HashMap::new()),
            mail,
            from,
            admin_token,
            session_ttl: Duration::seconds(session_ttl_secs),
            code_ttl: Duration::seconds(code_ttl_secs),
            max_attempts,
        }
    }

    /// Creates a fresh code for `email`, replacing any earlier one, and mails it.
    pub fn send_code(&self, email: &str, now: Timestamp) -> Result<Timestamp, ApiError> {
        let email = normalize(email);
        let code = format!("{:06}", rand::rng().random_range(0..1_000_000u32));
        let expires_at = now + self.code_ttl;
        let message = MailMessage {
            to: email.clone(),
            subject: "Your votelab sign-in code".into(),
            body: format!(
                "Your votelab verification code is {code}. It expires at {} and works once.\n\nSent by {}.",
                expires_at.to_rfc3339(),
                self.from
            ),
            sent_at: now,
        };
        self.mail.send(&message).map_err(|e| {
            ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "MailUnavailable", e.to_string())
        })?;
        self.challenges.lock().unwrap().insert(
            email,
            Challenge {
                code,
                expires_at,
                attempts: 0,
            },
        );
        Ok(expires_at)
    }

    /// Consumes the pending code for `email` if `code` matches.
    pub fn check_code(&self, email: &str, code: &str, now: Timestamp) -> Result<(), ApiError> {
        let email = normalize(email);
        let mut challenges = self.challenges.lock().unwrap();
        let invalid = || ApiError::new(StatusCode::UNAUTHORIZED, "InvalidCode", "code is wrong, used or expired");
        let Some(c) = challenges.get_mut(&email) else {
            return Err(invalid());
        };
        if now >= c.expires_at {
            challenges.remove(&email);
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "CodeExpired", "code has expired"));
        }
        if c.code != code.trim() {
            c.attempts += 1;
            if c.attempts >= self.max_attempts {
                challenges.remove(&email);
            }
            return Err(invalid());
        }
        challenges.remove(&email);
        Ok(())
    }

    pub fn open_session(&self, role: Role, pseudonym: Pseudonym, now: Timestamp) -> Session {
        let mut bytes = [0u8; 32];
        rand::rng().fill_bytes(&mut bytes);
        let session = Session {
            token: hex::encode(bytes),
            role,
            pseudonym,
            expires_at: now + self.session_ttl,
        };
        let mut sessions = self.sessions.lock().unwrap();
        sessions.retain(|_, s| s.expires_at > now);
        sessions.insert(session.token.clone(), session.clone());
        session
    }

    pub fn close_session(&self, token: &str) {
        self.sessions.lock().unwrap().remove(token);
    }

    pub fn close_sessions_of(&self, pseudonym: &Pseudonym) {
        self.sessions.lock().unwrap().retain(|_, s| &s.pseudonym != pseudonym);
    }

    fn resolve(&self, token: &str, now: Timestamp) -> Result<Caller, ApiError> {
        if let Some(admin) = &self.admin_token {
            if constant_time_eq(admin.as_bytes(), token.as_bytes()) {
                return Ok(Caller::Admin);
            }
        }
        let mut sessions = self.sessions.lock().unwrap();
        match sessions.get(token) {
            Some(s) if s.expires_at > now => Ok(Caller::User(s.clone())),
            Some(_) => {
                sessions.remove(token);
                Err(ApiError::new(StatusCode::UNAUTHORIZED, "SessionExpired", "session has expired"))
            }
            None => Err(ApiError::unauthenticated("unknown session token")),
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// An authenticated caller.
#[derive(Debug, Clone)]
pub enum Caller {
    Admin,
    User(Session),
}

impl Caller {
    pub fn actor(&self) -> Actor {
        match self {
            Caller::Admin => Actor::Admin,
            Caller::User(s) => s.actor(),
        }
    }

    pub fn token(&self) -> Option<&str> {
        match self {
            Caller::Admin => None,
            Caller::User(s) => Some(&s.token),
        }
    }
}

fn bearer(parts: &Parts) -> Result<&str, ApiError> {
    let value = parts
        .headers
        .get(header::AUTHORIZATION)
        .ok_or_else(|| ApiError::unauthenticated("missing bearer token"))?;
    value
        .to_str()
        .ok()
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ApiError::unauthenticated("malformed Authorization header"))
}

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = bearer(parts)?;
        state.auth.resolve(token, state.now())
    }
}

/// A signed-in voter.
pub struct VoterCaller(pub Session);

impl FromRequestParts<AppState> for VoterCaller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        match Caller::from_request_parts(parts, state).await? {
            Caller::User(s) if s.role == Role::Voter => Ok(VoterCaller(s)),
            _ => Err(ApiError::forbidden("this route is for voters")),
        }
    }
}

/// A signed-in designer, or the operator acting as one.
pub struct DesignerCaller(pub Caller);

impl FromRequestParts<AppState> for DesignerCaller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        match Caller::from_request_parts(parts, state).await? {
            Caller::User(s) if s.role == Role::Voter => Err(ApiError::forbidden("this route is for designers")),
            c => Ok(DesignerCaller(c)),
        }
    }
}

/// The operator holding the admin token.
pub struct AdminCaller;

impl FromRequestParts<AppState> for AdminCaller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        match Caller::from_request_parts(parts, state).await? {
            Caller::Admin => Ok(AdminCaller),
            Caller::User(_) => Err(ApiError::forbidden("this route needs the admin token")),
        }
    }
}
