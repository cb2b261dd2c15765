//! Ballot validation and normalization into per-option score vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::method::{BallotShape, MethodId, VotingMethodSpec};
use super::question::Question;
use crate::ids::OptionId;
use crate::rational::{self, frac, int, Rational};

/// What a voter submits, keyed by ballot shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawBallotInput {
    SingleChoice(OptionId),
    PerOptionScore(#[serde(with = "rational::serde_map")] BTreeMap<OptionId, Rational>),
    RankedSubset(Vec<OptionId>),
    IntegerAllocation(BTreeMap<OptionId, u32>),
}

impl RawBallotInput {
    pub fn shape(&self) -> BallotShape {
        match self {
            RawBallotInput::SingleChoice(_) => BallotShape::SingleChoice,
            RawBallotInput::PerOptionScore(_) => BallotShape::PerOptionScore,
            RawBallotInput::RankedSubset(_) => BallotShape::RankedSubset,
            RawBallotInput::IntegerAllocation(_) => BallotShape::IntegerAllocation,
        }
    }

    pub fn single(option: &str) -> Self {
        RawBallotInput::SingleChoice(option.into())
    }

    pub fn ranked(options: &[&str]) -> Self {
        RawBallotInput::RankedSubset(options.iter().map(|o| OptionId::from(*o)).collect())
    }

    pub fn scores(pairs: &[(&str, Rational)]) -> Self {
        RawBallotInput::PerOptionScore(pairs.iter().map(|(o, v)| (OptionId::from(*o), *v)).collect())
    }

    pub fn allocation(pairs: &[(&str, u32)]) -> Self {
        RawBallotInput::IntegerAllocation(pairs.iter().map(|(o, v)| (OptionId::from(*o), *v)).collect())
    }
}

/// One reason a ballot was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Violation {
    #[error("unknown option {option}")]
    UnknownOption { option: OptionId },
    #[error("option {option} listed more than once")]
    DuplicateOption { option: OptionId },
    #[error("option {option}: level {} is not admissible", rational::to_fraction_string(.level))]
    LevelNotAdmissible {
        option: OptionId,
        #[serde(with = "rational::serde_str")]
        level: Rational,
    },
    #[error("option {option} has no level assigned")]
    Unassigned { option: OptionId },
    #[error("allocation costs {cost}, limit is {limit}")]
    BudgetExceeded { cost: u64, limit: u64 },
    #[error("ballot is empty")]
    EmptyBallot,
    #[error("{method} expects a {expected} ballot, got {found}")]
    ShapeMismatch {
        method: MethodId,
        expected: BallotShape,
        found: BallotShape,
    },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::UnknownOption { .. } => "UnknownOption",
            Violation::DuplicateOption { .. } => "DuplicateOption",
            Violation::LevelNotAdmissible { .. } => "LevelNotAdmissible",
            Violation::Unassigned { .. } => "Unassigned",
            Violation::BudgetExceeded { .. } => "BudgetExceeded",
            Violation::EmptyBallot => "EmptyBallot",
            Violation::ShapeMismatch { .. } => "ShapeMismatch",
        }
    }

    /// The option the violation refers to, if any.
    pub fn option(&self) -> Option<&OptionId> {
        match self {
            Violation::UnknownOption { option }
            | Violation::DuplicateOption { option }
            | Violation::LevelNotAdmissible { option, .. }
            | Violation::Unassigned { option } => Some(option),
            _ => None,
        }
    }
}

/// Non-empty list of violations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Violations {}

/// Checks `input` against the method's ballot shape and constraints.
pub fn validate_ballot(
    question: &Question,
    spec: &VotingMethodSpec,
    input: &RawBallotInput,
) -> Result<(), Violations> {
    let mut violations = Vec::new();
    let known = |o: &OptionId| question.option_index(o).is_some();

    if input.shape() != spec.ballot_shape {
        return Err(Violations(vec![Violation::ShapeMismatch {
            method: spec.method_id,
            expected: spec.ballot_shape,
            found: input.shape(),
        }]));
    }

    match input {
        RawBallotInput::SingleChoice(option) => {
            if !known(option) {
                violations.push(Violation::UnknownOption { option: option.clone() });
            }
        }
        RawBallotInput::PerOptionScore(levels) => {
            if levels.is_empty() {
                violations.push(Violation::EmptyBallot);
            } else {
                for (option, level) in levels {
                    if !known(option) {
                        violations.push(Violation::UnknownOption { option: option.clone() });
                    } else if !spec.score_levels.contains(level) {
                        violations.push(Violation::LevelNotAdmissible {
                            option: option.clone(),
                            level: *level,
                        });
                    }
                }
                for opt in &question.options {
                    if !levels.contains_key(&opt.option_id) {
                        violations.push(Violation::Unassigned { option: opt.option_id.clone() });
                    }
                }
            }
        }
        RawBallotInput::RankedSubset(ranking) => {
            if ranking.is_empty() {
                violations.push(Violation::EmptyBallot);
            }
            let mut seen = BTreeSet::new();
            for option in ranking {
                if !known(option) {
                    violations.push(Violation::UnknownOption { option: option.clone() });
                } else if !seen.insert(option) {
                    violations.push(Violation::DuplicateOption { option: option.clone() });
                }
            }
        }
        RawBallotInput::IntegerAllocation(alloc) => {
            for option in alloc.keys() {
                if !known(option) {
                    violations.push(Violation::UnknownOption { option: option.clone() });
                }
            }
            let limit = u64::from(spec.allocation_limit.unwrap_or(0));
            let cost: u64 = match spec.method_id {
                MethodId::Qv => alloc.values().map(|&v| u64::from(v) * u64::from(v)).sum(),
                _ => alloc.values().map(|&v| u64::from(v)).sum(),
            };
            if cost > limit {
                violations.push(Violation::BudgetExceeded { cost, limit });
            }
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(Violations(violations))
    }
}

/// Per-option scores of one ballot, in the question's canonical option order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub method: MethodId,
    #[serde(with = "rational::serde_vec")]
    pub scores: Vec<Rational>,
}

impl ScoreVector {
    pub fn zeros(method: MethodId, n: usize) -> Self {
        Self {
            method,
            scores: vec![Rational::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Index of the unique highest score, if there is exactly one.
    pub fn unique_top(&self) -> Option<usize> {
        let max = self.scores.iter().max()?;
        let mut tops = self.scores.iter().enumerate().filter(|(_, s)| *s == max);
        let (idx, _) = tops.next()?;
        if tops.next().is_some() {
            None
        } else {
            Some(idx)
        }
    }

    /// True when every entry is a value the method can produce.
    pub fn is_admissible(&self, spec: &VotingMethodSpec, option_count: usize) -> bool {
        if self.method != spec.method_id || self.scores.len() != option_count {
            return false;
        }
        match spec.admissible_scores(option_count) {
            Some(levels) => self.scores.iter().all(|s| levels.contains(s)),
            None => {
                let limit = u64::from(spec.allocation_limit.unwrap_or(0));
                let integral = self
                    .scores
                    .iter()
                    .all(|s| s.is_integer() && rational::is_nonnegative(s));
                if !integral {
                    return false;
                }
                let values = self.scores.iter().map(|s| *s.numer() as u64);
                let cost: u64 = match spec.method_id {
                    MethodId::Qv => values.map(|v| v * v).sum(),
                    _ => values.sum(),
                };
                cost <= limit
            }
        }
    }
}

/// Validates and converts a raw ballot into per-option scores.
///
/// MBC over `n` options with `m` ranked: rank `r` scores `(m - r + 1) / n`,
/// unranked options score 0.
pub fn normalize_scores(
    question: &Question,
    spec: &VotingMethodSpec,
    input: &RawBallotInput,
) -> Result<ScoreVector, Violations> {
    validate_ballot(question, spec, input)?;
    let n = question.option_count();
    let mut out = ScoreVector::zeros(spec.method_id, n);
    let index = |o: &OptionId| question.option_index(o).expect("validated option");

    match input {
        RawBallotInput::SingleChoice(option) => out.scores[index(option)] = int(1),
        RawBallotInput::PerOptionScore(levels) => {
            for (option, level) in levels {
                out.scores[index(option)] = *level;
            }
        }
        RawBallotInput::RankedSubset(ranking) => {
            let m = ranking.len() as i64;
            for (pos, option) in ranking.iter().enumerate() {
                let rank = pos as i64 + 1;
                out.scores[index(option)] = frac(m - rank + 1, n as i64);
            }
        }
        RawBallotInput::IntegerAllocation(alloc) => {
            for (option, votes) in alloc {
                out.scores[index(option)] = int(i64::from(*votes));
            }
        }
    }
    Ok(out)
}
