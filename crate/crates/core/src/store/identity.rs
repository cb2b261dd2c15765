//! Login identities. This table is the only place an email (as a hash) is
//! linked to a pseudonym; nothing else in the engine or its exports reads it.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::model::{Role, Timestamp};
use crate::ids::Pseudonym;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub pseudonym: Pseudonym,
    /// `None` once the identity has been deleted.
    pub email_hash: Option<String>,
    pub role: Role,
    pub verified: bool,
    pub registered_at: Timestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityTable {
    records: BTreeMap<Pseudonym, IdentityRecord>,
    by_email: BTreeMap<String, Pseudonym>,
}

pub fn hash_email(pepper: &str, email: &str) -> String {
    let mut h = Sha256::new();
    h.update(pepper.as_bytes());
    h.update([0u8]);
    h.update(email.trim().to_lowercase().as_bytes());
    hex::encode(h.finalize())
}

pub fn generate_pseudonym(role: Role, rng: &mut impl Rng) -> Pseudonym {
    let bytes: [u8; 12] = rng.random();
    let prefix = match role {
        Role::Designer => "d",
        Role::Voter => "v",
    };
    Pseudonym(format!("{prefix}-{}", hex::encode(bytes)))
}

impl IdentityTable {
    pub fn get(&self, pseudonym: &Pseudonym) -> Option<&IdentityRecord> {
        self.records.get(pseudonym)
    }

    pub fn by_email_hash(&self, email_hash: &str) -> Option<&IdentityRecord> {
        self.by_email.get(email_hash).and_then(|p| self.records.get(p))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub(crate) fn insert(&mut self, record: IdentityRecord) {
        if let Some(hash) = &record.email_hash {
            self.by_email.insert(hash.clone(), record.pseudonym.clone());
        }
        self.records.insert(record.pseudonym.clone(), record);
    }

    pub(crate) fn mark_verified(&mut self, pseudonym: &Pseudonym) {
        if let Some(r) = self.records.get_mut(pseudonym) {
            r.verified = true;
        }
    }

    /// Forgets the email link; the pseudonym (and its ballots) stay.
    pub(crate) fn erase(&mut self, pseudonym: &Pseudonym) {
        if let Some(r) = self.records.get_mut(pseudonym) {
            if let Some(hash) = r.email_hash.take() {
                self.by_email.remove(&hash);
            }
            r.verified = false;
        }
    }
}
