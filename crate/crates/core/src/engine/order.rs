//! Per-voter method order for within-subjects designs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::model::{Campaign, MethodOrderPolicy};
use crate::ballot::MethodId;
use crate::ids::{CampaignId, Pseudonym};

/// Seeded shuffle keyed on (campaign seed, voter); stable across calls.
pub fn method_order(campaign: &Campaign, voter: &Pseudonym) -> Vec<MethodId> {
    let mut methods = campaign.methods();
    if campaign.method_order_policy == MethodOrderPolicy::RandomizedPerVoter {
        let mut rng = ChaCha8Rng::seed_from_u64(voter_seed(campaign.order_seed, voter));
        methods.shuffle(&mut rng);
    }
    methods
}

fn voter_seed(campaign_seed: u64, voter: &Pseudonym) -> u64 {
    let mut h = Sha256::new();
    h.update(campaign_seed.to_le_bytes());
    h.update(voter.as_str().as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Default order seed for campaigns that do not set one.
pub fn default_order_seed(campaign_id: &CampaignId) -> u64 {
    let digest = Sha256::digest(campaign_id.as_str().as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
