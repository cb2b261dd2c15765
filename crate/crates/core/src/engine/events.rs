use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::model::{Campaign, FeedbackRecord, ResultSet, Revision, Role, Timestamp};
use crate::ballot::MethodId;
use crate::ids::{BallotId, CampaignId, Pseudonym, QuestionId};

/// Everything that changes engine state. Replaying these in order rebuilds it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    IdentityRegistered {
        pseudonym: Pseudonym,
        email_hash: String,
        role: Role,
    },
    IdentityVerified {
        pseudonym: Pseudonym,
    },
    IdentityDeleted {
        pseudonym: Pseudonym,
    },
    CampaignCreated {
        campaign: Campaign,
    },
    CampaignUpdated {
        campaign: Campaign,
    },
    Opened {
        campaign_id: CampaignId,
    },
    TagAssigned {
        campaign_id: CampaignId,
        tags: BTreeSet<String>,
    },
    Subscribed {
        voter: Pseudonym,
        tags: BTreeSet<String>,
    },
    BallotSubmitted {
        ballot_id: BallotId,
        voter: Pseudonym,
        campaign_id: CampaignId,
        question_id: QuestionId,
        method: MethodId,
        revision: Revision,
    },
    BallotRevised {
        ballot_id: BallotId,
        revision: Revision,
    },
    Closed {
        campaign_id: CampaignId,
    },
    Tallied {
        campaign_id: CampaignId,
        results: ResultSet,
    },
    ResultsReleased {
        campaign_id: CampaignId,
    },
    Feedback {
        record: FeedbackRecord,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::IdentityRegistered { .. } => "identity_registered",
            Event::IdentityVerified { .. } => "identity_verified",
            Event::IdentityDeleted { .. } => "identity_deleted",
            Event::CampaignCreated { .. } => "campaign_created",
            Event::CampaignUpdated { .. } => "campaign_updated",
            Event::Opened { .. } => "opened",
            Event::TagAssigned { .. } => "tag_assigned",
            Event::Subscribed { .. } => "subscribed",
            Event::BallotSubmitted { .. } => "ballot_submitted",
            Event::BallotRevised { .. } => "ballot_revised",
            Event::Closed { .. } => "closed",
            Event::Tallied { .. } => "tallied",
            Event::ResultsReleased { .. } => "results_released",
            Event::Feedback { .. } => "feedback",
        }
    }

    /// Campaign the event belongs to, if any.
    pub fn campaign_id(&self) -> Option<&CampaignId> {
        match self {
            Event::CampaignCreated { campaign } | Event::CampaignUpdated { campaign } => {
                Some(&campaign.campaign_id)
            }
            Event::Opened { campaign_id }
            | Event::TagAssigned { campaign_id, .. }
            | Event::BallotSubmitted { campaign_id, .. }
            | Event::Closed { campaign_id }
            | Event::Tallied { campaign_id, .. }
            | Event::ResultsReleased { campaign_id } => Some(campaign_id),
            Event::Feedback { record } => Some(&record.campaign_id),
            _ => None,
        }
    }
}

/// An event as stored: gapless sequence number plus the time it was recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub sequence_no: u64,
    pub recorded_at: Timestamp,
    #[serde(flatten)]
    pub event: Event,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn record_json_carries_kind_and_payload() {
        let rec = EventRecord {
            sequence_no: 7,
            recorded_at: chrono::Utc.with_ymd_and_hms(2021, 5, 3, 8, 0, 0).unwrap(),
            event: Event::Subscribed {
                voter: "v-1".into(),
                tags: ["health".to_string()].into(),
            },
        };
        let json = serde_json::to_value(&rec).unwrap();
        assert_eq!(json["kind"], "subscribed");
        assert_eq!(json["payload"]["voter"], "v-1");
        assert_eq!(json["sequence_no"], 7);
        let back: EventRecord = serde_json::from_value(json).unwrap();
        assert_eq!(back, rec);
    }
}
