//! Cross-method outcome consistency.
//!
//! For a question answered under `M` methods, the consistency at rank `k` is
//! the largest number of methods that agree on which option sits at rank `k`,
//! divided by `M`. It ranges from `1/M` (total disagreement) to 1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ballot::{rank_by_first_choice, rank_options, MethodId, TallyResult};
use crate::ids::{OptionId, QuestionId};
use crate::rational::{self, int, Rational};

/// Which per-option quantity orders the options before comparing methods.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingBasis {
    #[default]
    Aggregate,
    FirstChoice,
}

impl fmt::Display for RankingBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankingBasis::Aggregate => "aggregate",
            RankingBasis::FirstChoice => "first-choice",
        })
    }
}

impl FromStr for RankingBasis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aggregate" => Ok(RankingBasis::Aggregate),
            "first-choice" | "first_choice" => Ok(RankingBasis::FirstChoice),
            other => Err(format!("unknown ranking basis {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsistencyError {
    #[error("method {0} appears more than once")]
    DuplicateMethod(MethodId),
    #[error("tallies mix questions {0} and {1}")]
    MixedQuestions(QuestionId, QuestionId),
    #[error("consistency needs at least two methods, got {0}")]
    TooFewMethods(usize),
    #[error("ranking for {0} is not a permutation of the question's options")]
    NotAPermutation(MethodId),
    #[error("rank {k} is outside 1..={n}")]
    RankOutOfRange { k: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRanking {
    pub method: MethodId,
    pub linear: Vec<OptionId>,
    /// Tie groups behind the linear order, reported for transparency.
    pub groups: Vec<Vec<OptionId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankProfile {
    pub question_id: QuestionId,
    pub basis: RankingBasis,
    pub rankings: Vec<MethodRanking>,
}

impl RankProfile {
    /// Builds a profile from explicit linear rankings (no tie information).
    pub fn from_rankings(
        question_id: QuestionId,
        rankings: Vec<(MethodId, Vec<OptionId>)>,
    ) -> Result<Self, ConsistencyError> {
        let profile = Self {
            question_id,
            basis: RankingBasis::Aggregate,
            rankings: rankings
                .into_iter()
                .map(|(method, linear)| MethodRanking {
                    method,
                    groups: linear.iter().map(|o| vec![o.clone()]).collect(),
                    linear,
                })
                .collect(),
        };
        profile.check()?;
        Ok(profile)
    }

    fn check(&self) -> Result<(), ConsistencyError> {
        if self.rankings.len() < 2 {
            return Err(ConsistencyError::TooFewMethods(self.rankings.len()));
        }
        let mut methods = BTreeSet::new();
        for r in &self.rankings {
            if !methods.insert(r.method) {
                return Err(ConsistencyError::DuplicateMethod(r.method));
            }
        }
        let reference: BTreeSet<&OptionId> = self.rankings[0].linear.iter().collect();
        for r in &self.rankings {
            let set: BTreeSet<&OptionId> = r.linear.iter().collect();
            if set.len() != r.linear.len() || set != reference {
                return Err(ConsistencyError::NotAPermutation(r.method));
            }
        }
        Ok(())
    }

    pub fn method_count(&self) -> usize {
        self.rankings.len()
    }

    pub fn option_count(&self) -> usize {
        self.rankings.first().map_or(0, |r| r.linear.len())
    }

    pub fn methods(&self) -> Vec<MethodId> {
        self.rankings.iter().map(|r| r.method).collect()
    }
}

/// Collects the linearized rankings of one question's tallies (aggregate basis).
pub fn build_rank_profile(tallies: &[TallyResult]) -> Result<RankProfile, ConsistencyError> {
    build_rank_profile_with(tallies, RankingBasis::Aggregate)
}

pub fn build_rank_profile_with(
    tallies: &[TallyResult],
    basis: RankingBasis,
) -> Result<RankProfile, ConsistencyError> {
    let first = tallies.first().ok_or(ConsistencyError::TooFewMethods(0))?;
    let mut seen = BTreeSet::new();
    let mut rankings = Vec::with_capacity(tallies.len());
    for t in tallies {
        if t.question_id != first.question_id {
            return Err(ConsistencyError::MixedQuestions(
                first.question_id.clone(),
                t.question_id.clone(),
            ));
        }
        if !seen.insert(t.method) {
            return Err(ConsistencyError::DuplicateMethod(t.method));
        }
        let ranking = match basis {
            RankingBasis::Aggregate => rank_options(t),
            RankingBasis::FirstChoice => rank_by_first_choice(t),
        };
        rankings.push(MethodRanking {
            method: t.method,
            linear: ranking.linear,
            groups: ranking.groups,
        });
    }
    let profile = RankProfile {
        question_id: first.question_id.clone(),
        basis,
        rankings,
    };
    profile.check()?;
    Ok(profile)
}

fn mode_at(profile: &RankProfile, k: usize) -> (usize, Vec<OptionId>) {
    let mut counts: BTreeMap<&OptionId, usize> = BTreeMap::new();
    for r in &profile.rankings {
        *counts.entry(&r.linear[k - 1]).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    // report modal options in the order the first method lists them
    let modal = profile.rankings[0]
        .linear
        .iter()
        .filter(|o| counts.get(o) == Some(&best))
        .cloned()
        .collect();
    (best, modal)
}

/// Consistency at 1-based rank `k`.
pub fn consistency_at_rank(profile: &RankProfile, k: usize) -> Result<Rational, ConsistencyError> {
    let n = profile.option_count();
    if k == 0 || k > n {
        return Err(ConsistencyError::RankOutOfRange { k, n });
    }
    let (agree, _) = mode_at(profile, k);
    Ok(Rational::new(agree as i64, profile.method_count() as i64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub question_id: QuestionId,
    pub basis: RankingBasis,
    pub methods: Vec<MethodId>,
    /// `c_1 ..= c_n`.
    #[serde(with = "rational::serde_vec")]
    pub per_rank: Vec<Rational>,
    #[serde(with = "rational::serde_str")]
    pub mean: Rational,
    /// Option(s) holding the modal count at each rank.
    pub modal_options: Vec<Vec<OptionId>>,
    pub rankings: Vec<MethodRanking>,
}

impl ConsistencyReport {
    /// Number of methods agreeing at rank `k` (1-based): `c_k * M`.
    pub fn agreeing_methods(&self, k: usize) -> i64 {
        let c = self.per_rank[k - 1] * int(self.methods.len() as i64);
        debug_assert!(c.is_integer());
        c.to_integer()
    }
}

pub fn consistency_report(profile: &RankProfile) -> ConsistencyReport {
    let n = profile.option_count();
    let m = profile.method_count() as i64;
    let mut per_rank = Vec::with_capacity(n);
    let mut modal_options = Vec::with_capacity(n);
    for k in 1..=n {
        let (agree, modal) = mode_at(profile, k);
        per_rank.push(Rational::new(agree as i64, m));
        modal_options.push(modal);
    }
    ConsistencyReport {
        question_id: profile.question_id.clone(),
        basis: profile.basis,
        methods: profile.methods(),
        mean: rational::mean(&per_rank),
        per_rank,
        modal_options,
        rankings: profile.rankings.clone(),
    }
}

/// One report per question with at least two methods, in first-seen question
/// order. Questions whose tallies do not form a valid profile are skipped.
pub fn reports_by_question(tallies: &[TallyResult], basis: RankingBasis) -> Vec<ConsistencyReport> {
    let mut order: Vec<&QuestionId> = Vec::new();
    let mut groups: BTreeMap<&QuestionId, Vec<TallyResult>> = BTreeMap::new();
    for t in tallies {
        if !groups.contains_key(&t.question_id) {
            order.push(&t.question_id);
        }
        groups.entry(&t.question_id).or_default().push(t.clone());
    }
    order
        .into_iter()
        .filter_map(|q| {
            let group = &groups[q];
            if group.len() < 2 {
                return None;
            }
            build_rank_profile_with(group, basis).ok().map(|p| consistency_report(&p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::frac;

    fn ids(names: &[&str]) -> Vec<OptionId> {
        names.iter().map(|n| OptionId::from(*n)).collect()
    }

    fn profile(rankings: &[(MethodId, &[&str])]) -> RankProfile {
        RankProfile::from_rankings(
            "q".into(),
            rankings.iter().map(|(m, r)| (*m, ids(r))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn reversed_pair_hits_the_floor() {
        let p = profile(&[(MethodId::Mv, &["a", "b"]), (MethodId::Sv, &["b", "a"])]);
        let r = consistency_report(&p);
        assert_eq!(r.per_rank, vec![frac(1, 2), frac(1, 2)]);
        assert_eq!(r.mean, frac(1, 2));
    }

    #[test]
    fn identical_rankings_are_fully_consistent() {
        let order: &[&str] = &["c", "a", "b"];
        let p = profile(&[(MethodId::Mv, order), (MethodId::Cav, order), (MethodId::Mbc, order)]);
        for k in 1..=3 {
            assert_eq!(consistency_at_rank(&p, k).unwrap(), int(1));
        }
    }

    #[test]
    fn rank_bounds() {
        let p = profile(&[(MethodId::Mv, &["a", "b"]), (MethodId::Sv, &["b", "a"])]);
        assert_eq!(
            consistency_at_rank(&p, 0),
            Err(ConsistencyError::RankOutOfRange { k: 0, n: 2 })
        );
        assert!(consistency_at_rank(&p, 3).is_err());
    }

    #[test]
    fn guards() {
        let err = RankProfile::from_rankings("q".into(), vec![(MethodId::Mv, ids(&["a", "b"]))]).unwrap_err();
        assert_eq!(err, ConsistencyError::TooFewMethods(1));
        let err = RankProfile::from_rankings(
            "q".into(),
            vec![(MethodId::Mv, ids(&["a", "b"])), (MethodId::Sv, ids(&["a", "c"]))],
        )
        .unwrap_err();
        assert_eq!(err, ConsistencyError::NotAPermutation(MethodId::Sv));

        let t1 = TallyResult::from_aggregates("q1".into(), MethodId::Mv, ids(&["a", "b"]), vec![int(1), int(2)]);
        let mut t2 = t1.clone();
        assert_eq!(
            build_rank_profile(&[t1.clone(), t2.clone()]).unwrap_err(),
            ConsistencyError::DuplicateMethod(MethodId::Mv)
        );
        t2.method = MethodId::Sv;
        t2.question_id = "q2".into();
        assert!(matches!(
            build_rank_profile(&[t1, t2]).unwrap_err(),
            ConsistencyError::MixedQuestions(..)
        ));
    }

    #[test]
    fn two_identical_tallies() {
        let t1 = TallyResult::from_aggregates("q".into(), MethodId::Mv, ids(&["a", "b", "c"]), vec![int(1), int(3), int(2)]);
        let mut t2 = t1.clone();
        t2.method = MethodId::Cav;
        let p = build_rank_profile(&[t1, t2]).unwrap();
        assert_eq!(p.rankings[0].linear, p.rankings[1].linear);
        assert_eq!(p.rankings[0].linear, ids(&["b", "c", "a"]));
    }

    #[test]
    fn first_choice_basis_uses_first_choice_shares() {
        let mut t1 = TallyResult::from_aggregates("q".into(), MethodId::Cav, ids(&["a", "b"]), vec![int(3), int(1)]);
        t1.first_choice_share = Some(vec![int(25), int(75)]);
        let mut t2 = t1.clone();
        t2.method = MethodId::Sv;
        let agg = build_rank_profile_with(&[t1.clone(), t2.clone()], RankingBasis::Aggregate).unwrap();
        let fc = build_rank_profile_with(&[t1, t2], RankingBasis::FirstChoice).unwrap();
        assert_eq!(agg.rankings[0].linear, ids(&["a", "b"]));
        assert_eq!(fc.rankings[0].linear, ids(&["b", "a"]));
    }
}
