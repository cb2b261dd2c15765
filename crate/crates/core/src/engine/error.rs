use serde::{Deserialize, Serialize};

use super::model::{CampaignStatus, Timestamp};
use crate::ballot::{MethodId, TallyError, Violations};
use crate::ids::{CampaignId, Pseudonym, QuestionId};
use crate::store::StoreError;

/// One problem found in a campaign definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Broad category of an engine error, used for HTTP statuses and CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Validation,
    Conflict,
    Forbidden,
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("unknown campaign {0}")]
    UnknownCampaign(CampaignId),
    #[error("campaign has no question {0}")]
    UnknownQuestion(QuestionId),
    #[error("method {method} is not enabled for question {question}")]
    MethodNotEnabled { question: QuestionId, method: MethodId },
    #[error("unknown voter {0}")]
    UnknownVoter(Pseudonym),
    #[error("no identity registered for this email")]
    UnknownIdentity,
    #[error("identity {0} has not completed verification")]
    UnverifiedIdentity(Pseudonym),
    #[error("invalid campaign definition ({} problem(s))", .0.len())]
    InvalidDefinition(Vec<FieldError>),
    #[error("campaign {0} is already tallied")]
    CampaignFinalized(CampaignId),
    #[error("tag set must contain at least one non-empty tag")]
    EmptyTagSet,
    #[error("campaign {campaign} is not open for voting at {at}")]
    CampaignNotOpen { campaign: CampaignId, at: Timestamp },
    #[error("campaign {0} is not visible to this voter")]
    NotVisibleToVoter(CampaignId),
    #[error("ballot rejected: {0}")]
    ValidationFailed(#[from] Violations),
    #[error("choice trace rejected: {0}")]
    ClockSkew(String),
    #[error("revision received at {received} does not follow the previous revision at {previous}")]
    RevisionOutOfOrder { previous: Timestamp, received: Timestamp },
    #[error("not authorized for this operation")]
    NotAuthorized,
    #[error("campaign {0} is still a draft")]
    CampaignDraft(CampaignId),
    #[error("campaign {campaign} is {status:?}; only drafts can be edited")]
    NotDraft { campaign: CampaignId, status: CampaignStatus },
    #[error("results for campaign {0} are not ready")]
    ResultsNotReady(CampaignId),
    #[error("results for campaign {0} have not been released")]
    ResultsNotReleased(CampaignId),
    #[error("rating {0} is outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("store already holds {0} event(s)")]
    StoreNotEmpty(u64),
    #[error("tally failed: {0}")]
    Tally(#[from] TallyError),
    #[error("storage: {0}")]
    Storage(#[from] StoreError),
}

impl EngineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnknownCampaign(_) => "UnknownCampaign",
            EngineError::UnknownQuestion(_) => "UnknownQuestion",
            EngineError::MethodNotEnabled { .. } => "MethodNotEnabled",
            EngineError::UnknownVoter(_) => "UnknownVoter",
            EngineError::UnknownIdentity => "UnknownIdentity",
            EngineError::UnverifiedIdentity(_) => "UnverifiedIdentity",
            EngineError::InvalidDefinition(_) => "InvalidDefinition",
            EngineError::CampaignFinalized(_) => "CampaignFinalized",
            EngineError::EmptyTagSet => "EmptyTagSet",
            EngineError::CampaignNotOpen { .. } => "CampaignNotOpen",
            EngineError::NotVisibleToVoter(_) => "NotVisibleToVoter",
            EngineError::ValidationFailed(_) => "ValidationFailed",
            EngineError::ClockSkew(_) => "ClockSkew",
            EngineError::RevisionOutOfOrder { .. } => "RevisionOutOfOrder",
            EngineError::NotAuthorized => "NotAuthorized",
            EngineError::CampaignDraft(_) => "CampaignDraft",
            EngineError::NotDraft { .. } => "NotDraft",
            EngineError::ResultsNotReady(_) => "ResultsNotReady",
            EngineError::ResultsNotReleased(_) => "ResultsNotReleased",
            EngineError::RatingOutOfRange(_) => "RatingOutOfRange",
            EngineError::StoreNotEmpty(_) => "StoreNotEmpty",
            EngineError::Tally(_) => "TallyFailed",
            EngineError::Storage(StoreError::StorageFull { .. }) => "StorageFull",
            EngineError::Storage(StoreError::CorruptEvent { .. }) => "CorruptEvent",
            EngineError::Storage(_) => "StorageError",
        }
    }

    pub fn class(&self) -> ErrorClass {
        use EngineError::*;
        match self {
            UnknownCampaign(_) | UnknownQuestion(_) | MethodNotEnabled { .. } | UnknownVoter(_)
            | UnknownIdentity => ErrorClass::NotFound,
            InvalidDefinition(_) | EmptyTagSet | ValidationFailed(_) | ClockSkew(_)
            | RatingOutOfRange(_) => ErrorClass::Validation,
            CampaignFinalized(_) | CampaignNotOpen { .. } | RevisionOutOfOrder { .. }
            | CampaignDraft(_) | NotDraft { .. } | ResultsNotReady(_) | ResultsNotReleased(_)
            | StoreNotEmpty(_) => ErrorClass::Conflict,
            NotAuthorized | NotVisibleToVoter(_) | UnverifiedIdentity(_) => ErrorClass::Forbidden,
            Tally(_) | Storage(_) => ErrorClass::Internal,
        }
    }
}

pub type EngineResult<T> = Result<T, EngineError>;
