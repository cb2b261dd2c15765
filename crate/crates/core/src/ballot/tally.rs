//! Score summation, normalized shares and rankings.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::method::{MethodId, VotingMethodSpec};
use super::question::Question;
use super::validate::ScoreVector;
use crate::ids::{OptionId, QuestionId};
use crate::rational::{self, int, Rational};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TallyError {
    #[error("ballot {index} has {found} entries, question has {expected} options")]
    WrongLength {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("ballot {index} was produced by {found}, tally is for {expected}")]
    MethodMismatch {
        index: usize,
        expected: MethodId,
        found: MethodId,
    },
    #[error("every aggregate is zero; shares are undefined")]
    NoScoreMass,
}

/// Aggregated outcome of one (question, method) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyResult {
    pub question_id: QuestionId,
    pub method: MethodId,
    /// Canonical option order; every per-option vector below follows it.
    pub options: Vec<OptionId>,
    #[serde(with = "rational::serde_vec")]
    pub aggregates: Vec<Rational>,
    /// Percentages summing to exactly 100; absent when there is no score mass.
    #[serde(with = "rational::serde_opt_vec")]
    pub shares: Option<Vec<Rational>>,
    /// Rank groups, best first. Options inside a group keep canonical order.
    pub ranking: Vec<Vec<OptionId>>,
    /// Percentage of voters with a unique top option choosing each option;
    /// absent when no voter had a unique top.
    #[serde(with = "rational::serde_opt_vec")]
    pub first_choice_share: Option<Vec<Rational>>,
    pub first_choice_voters: u64,
    pub counted_ballots: u64,
}

impl TallyResult {
    /// Builds a tally directly from per-option aggregate values, e.g. published
    /// percentages. First-choice data is left empty.
    pub fn from_aggregates(
        question_id: QuestionId,
        method: MethodId,
        options: Vec<OptionId>,
        aggregates: Vec<Rational>,
    ) -> Self {
        let shares = shares_of(&aggregates);
        let ranking = Ranking::from_values(&options, &aggregates).groups;
        Self {
            question_id,
            method,
            options,
            aggregates,
            shares,
            ranking,
            first_choice_share: None,
            first_choice_voters: 0,
            counted_ballots: 0,
        }
    }

    pub fn shares(&self) -> Result<&[Rational], TallyError> {
        self.shares.as_deref().ok_or(TallyError::NoScoreMass)
    }

    pub fn has_score_mass(&self) -> bool {
        self.shares.is_some()
    }

    pub fn total(&self) -> Rational {
        self.aggregates.iter().copied().sum()
    }
}

/// Ranking with ties: grouped, and linearized by canonical option order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub groups: Vec<Vec<OptionId>>,
    pub linear: Vec<OptionId>,
}

impl Ranking {
    /// Orders options by `values` descending; equal values share a group and
    /// keep the order in which `options` lists them.
    pub fn from_values(options: &[OptionId], values: &[Rational]) -> Self {
        assert_eq!(options.len(), values.len(), "one value per option");
        let mut order: Vec<usize> = (0..options.len()).collect();
        // stable: equal values stay in canonical order
        order.sort_by(|&a, &b| values[b].cmp(&values[a]));
        let mut groups: Vec<Vec<OptionId>> = Vec::new();
        let mut last: Option<Rational> = None;
        for idx in order {
            match last {
                Some(v) if v == values[idx] => groups.last_mut().unwrap().push(options[idx].clone()),
                _ => groups.push(vec![options[idx].clone()]),
            }
            last = Some(values[idx]);
        }
        let linear = groups.iter().flatten().cloned().collect();
        Self { groups, linear }
    }
}

fn shares_of(aggregates: &[Rational]) -> Option<Vec<Rational>> {
    let total: Rational = aggregates.iter().copied().sum();
    if total.is_zero() {
        return None;
    }
    Some(aggregates.iter().map(|a| int(100) * a / total).collect())
}

/// Sums the ballots of one (question, method) pair.
///
/// Callers pass at most one ballot per voter. With no score mass the result
/// still carries aggregates and an all-tied ranking, but no shares.
pub fn aggregate(
    question: &Question,
    spec: &VotingMethodSpec,
    ballots: &[ScoreVector],
) -> Result<TallyResult, TallyError> {
    let n = question.option_count();
    let mut aggregates = vec![Rational::zero(); n];
    let mut first_counts = vec![0u64; n];
    let mut first_voters = 0u64;

    for (index, ballot) in ballots.iter().enumerate() {
        if ballot.method != spec.method_id {
            return Err(TallyError::MethodMismatch {
                index,
                expected: spec.method_id,
                found: ballot.method,
            });
        }
        if ballot.len() != n {
            return Err(TallyError::WrongLength {
                index,
                expected: n,
                found: ballot.len(),
            });
        }
        for (acc, s) in aggregates.iter_mut().zip(&ballot.scores) {
            *acc += s;
        }
        if let Some(top) = ballot.unique_top() {
            first_counts[top] += 1;
            first_voters += 1;
        }
    }

    let options = question.option_ids();
    let shares = shares_of(&aggregates);
    let ranking = Ranking::from_values(&options, &aggregates).groups;
    let first_choice_share = (first_voters > 0).then(|| {
        first_counts
            .iter()
            .map(|&c| int(100) * int(c as i64) / int(first_voters as i64))
            .collect()
    });

    Ok(TallyResult {
        question_id: question.question_id.clone(),
        method: spec.method_id,
        options,
        aggregates,
        shares,
        ranking,
        first_choice_share,
        first_choice_voters: first_voters,
        counted_ballots: ballots.len() as u64,
    })
}

/// Rank groups plus a total order that breaks ties by canonical option order.
pub fn rank_options(tally: &TallyResult) -> Ranking {
    Ranking::from_values(&tally.options, &tally.aggregates)
}

/// Ranking by first-choice percentages instead of aggregates. Options nobody
/// placed first tie at the bottom.
pub fn rank_by_first_choice(tally: &TallyResult) -> Ranking {
    let values = tally
        .first_choice_share
        .clone()
        .unwrap_or_else(|| vec![Rational::zero(); tally.options.len()]);
    Ranking::from_values(&tally.options, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ballot::validate::{normalize_scores, RawBallotInput};
    use crate::rational::frac;

    fn ids(names: &[&str]) -> Vec<OptionId> {
        names.iter().map(|n| OptionId::from(*n)).collect()
    }

    #[test]
    fn three_mv_ballots() {
        let q = Question::with_option_ids("q", &["o1", "o2"], vec![VotingMethodSpec::mv()]).unwrap();
        let spec = VotingMethodSpec::mv();
        let ballots: Vec<ScoreVector> = ["o1", "o1", "o2"]
            .iter()
            .map(|c| normalize_scores(&q, &spec, &RawBallotInput::single(c)).unwrap())
            .collect();
        let t = aggregate(&q, &spec, &ballots).unwrap();
        assert_eq!(t.aggregates, vec![int(2), int(1)]);
        assert_eq!(t.shares().unwrap(), &[frac(200, 3), frac(100, 3)]);
        assert_eq!(t.ranking, vec![ids(&["o1"]), ids(&["o2"])]);
        assert_eq!(t.counted_ballots, 3);
        assert_eq!(t.first_choice_share.clone().unwrap(), vec![frac(200, 3), frac(100, 3)]);
    }

    #[test]
    fn symmetric_cav_ballots_tie() {
        let spec = VotingMethodSpec::cav();
        let q = Question::with_option_ids("q", &["o1", "o2"], vec![spec.clone()]).unwrap();
        let ballots = vec![
            ScoreVector { method: MethodId::Cav, scores: vec![int(1), frac(1, 2)] },
            ScoreVector { method: MethodId::Cav, scores: vec![frac(1, 2), int(1)] },
        ];
        let t = aggregate(&q, &spec, &ballots).unwrap();
        assert_eq!(t.aggregates, vec![frac(3, 2), frac(3, 2)]);
        assert_eq!(t.ranking, vec![ids(&["o1", "o2"])]);
    }

    #[test]
    fn no_score_mass_keeps_aggregates() {
        let spec = VotingMethodSpec::sv();
        let q = Question::with_option_ids("q", &["a", "b", "c"], vec![spec.clone()]).unwrap();
        let t = aggregate(&q, &spec, &[ScoreVector::zeros(MethodId::Sv, 3)]).unwrap();
        assert_eq!(t.shares(), Err(TallyError::NoScoreMass));
        assert_eq!(t.ranking, vec![ids(&["a", "b", "c"])]);
        assert_eq!(t.first_choice_share, None);
        assert_eq!(t.counted_ballots, 1);
    }

    #[test]
    fn rank_groups_and_linearization() {
        let options = ids(&["o1", "o2", "o3", "o4"]);
        let r = Ranking::from_values(&options, &[int(5), int(3), int(3), int(1)]);
        assert_eq!(r.groups, vec![ids(&["o1"]), ids(&["o2", "o3"]), ids(&["o4"])]);
        assert_eq!(r.linear, options);

        let equal = Ranking::from_values(&options, &[int(2); 4]);
        assert_eq!(equal.groups, vec![options.clone()]);
        assert_eq!(equal.linear, options);
    }

    #[test]
    fn published_mv_vaccine_column_linearizes() {
        let options = ids(&["o1", "o2", "o3", "o4", "o5"]);
        let values: Vec<Rational> = [147, 318, 116, 186, 233].iter().map(|&v| frac(v, 10)).collect();
        let r = Ranking::from_values(&options, &values);
        assert_eq!(r.linear, ids(&["o2", "o5", "o4", "o1", "o3"]));
    }

    #[test]
    fn mismatched_ballots_are_rejected() {
        let spec = VotingMethodSpec::mv();
        let q = Question::with_option_ids("q", &["a", "b"], vec![spec.clone()]).unwrap();
        let err = aggregate(&q, &spec, &[ScoreVector::zeros(MethodId::Mv, 3)]).unwrap_err();
        assert!(matches!(err, TallyError::WrongLength { .. }));
        let err = aggregate(&q, &spec, &[ScoreVector::zeros(MethodId::Sv, 2)]).unwrap_err();
        assert!(matches!(err, TallyError::MethodMismatch { .. }));
    }
}
