use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rational::{self, frac, int, Rational};

/// The supported preference-elicitation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodId {
    /// Majority voting: one choice.
    Mv,
    /// Combined approval voting: disapprove / neutral / approve per option.
    Cav,
    /// Score voting on a six-level scale.
    Sv,
    /// Modified Borda count over a ranked subset.
    Mbc,
    /// Approval voting.
    Av,
    /// Quadratic voting with a credit budget.
    Qv,
    /// Cumulative voting with a fixed point total.
    Cumulative,
}

impl MethodId {
    pub const ALL: [MethodId; 7] = [
        MethodId::Mv,
        MethodId::Cav,
        MethodId::Sv,
        MethodId::Mbc,
        MethodId::Av,
        MethodId::Qv,
        MethodId::Cumulative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Mv => "mv",
            MethodId::Cav => "cav",
            MethodId::Sv => "sv",
            MethodId::Mbc => "mbc",
            MethodId::Av => "av",
            MethodId::Qv => "qv",
            MethodId::Cumulative => "cumulative",
        }
    }

    pub fn ballot_shape(self) -> BallotShape {
        match self {
            MethodId::Mv => BallotShape::SingleChoice,
            MethodId::Cav | MethodId::Sv | MethodId::Av => BallotShape::PerOptionScore,
            MethodId::Mbc => BallotShape::RankedSubset,
            MethodId::Qv | MethodId::Cumulative => BallotShape::IntegerAllocation,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown voting method {0:?}")]
pub struct UnknownMethod(pub String);

impl FromStr for MethodId {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallotShape {
    SingleChoice,
    PerOptionScore,
    RankedSubset,
    IntegerAllocation,
}

impl fmt::Display for BallotShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BallotShape::SingleChoice => "single_choice",
            BallotShape::PerOptionScore => "per_option_score",
            BallotShape::RankedSubset => "ranked_subset",
            BallotShape::IntegerAllocation => "integer_allocation",
        })
    }
}

/// Campaign-level constants for the integer-allocation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodParams {
    #[serde(default = "MethodParams::default_qv_budget")]
    pub qv_budget: u32,
    #[serde(default = "MethodParams::default_cumulative_total")]
    pub cumulative_total: u32,
}

impl MethodParams {
    pub const DEFAULT_QV_BUDGET: u32 = 100;
    pub const DEFAULT_CUMULATIVE_TOTAL: u32 = 10;

    fn default_qv_budget() -> u32 {
        Self::DEFAULT_QV_BUDGET
    }

    fn default_cumulative_total() -> u32 {
        Self::DEFAULT_CUMULATIVE_TOTAL
    }
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            qv_budget: Self::DEFAULT_QV_BUDGET,
            cumulative_total: Self::DEFAULT_CUMULATIVE_TOTAL,
        }
    }
}

/// A method's admissible score set and ballot-shape constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotingMethodSpec {
    pub method_id: MethodId,
    /// Ascending admissible per-option levels. Empty for MBC (levels depend
    /// on the option count) and for the integer-allocation methods.
    #[serde(with = "rational::serde_vec")]
    pub score_levels: Vec<Rational>,
    pub ballot_shape: BallotShape,
    /// Credit budget (QV) or point total (cumulative).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation_limit: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("{method}: score levels do not match the method's published set")]
    LevelsMismatch { method: MethodId },
    #[error("{method}: ballot shape must be {expected}")]
    ShapeMismatch { method: MethodId, expected: BallotShape },
    #[error("{method}: allocation limit must be a positive integer")]
    MissingLimit { method: MethodId },
}

impl VotingMethodSpec {
    pub fn mv() -> Self {
        Self::with_levels(MethodId::Mv, vec![int(0), int(1)])
    }

    pub fn cav() -> Self {
        Self::with_levels(MethodId::Cav, vec![int(0), frac(1, 2), int(1)])
    }

    pub fn sv() -> Self {
        Self::with_levels(MethodId::Sv, (0..=5).map(|k| frac(k, 5)).collect())
    }

    pub fn av() -> Self {
        Self::with_levels(MethodId::Av, vec![int(0), int(1)])
    }

    pub fn mbc() -> Self {
        Self::with_levels(MethodId::Mbc, Vec::new())
    }

    pub fn qv(budget: u32) -> Self {
        Self {
            allocation_limit: Some(budget),
            ..Self::with_levels(MethodId::Qv, Vec::new())
        }
    }

    pub fn cumulative(total: u32) -> Self {
        Self {
            allocation_limit: Some(total),
            ..Self::with_levels(MethodId::Cumulative, Vec::new())
        }
    }

    pub fn standard(method: MethodId, params: &MethodParams) -> Self {
        match method {
            MethodId::Mv => Self::mv(),
            MethodId::Cav => Self::cav(),
            MethodId::Sv => Self::sv(),
            MethodId::Mbc => Self::mbc(),
            MethodId::Av => Self::av(),
            MethodId::Qv => Self::qv(params.qv_budget),
            MethodId::Cumulative => Self::cumulative(params.cumulative_total),
        }
    }

    fn with_levels(method_id: MethodId, score_levels: Vec<Rational>) -> Self {
        Self {
            method_id,
            score_levels,
            ballot_shape: method_id.ballot_shape(),
            allocation_limit: None,
        }
    }

    /// Checks a (possibly deserialized) spec against the method's definition.
    pub fn check(&self) -> Result<(), SpecError> {
        let method = self.method_id;
        if self.ballot_shape != method.ballot_shape() {
            return Err(SpecError::ShapeMismatch {
                method,
                expected: method.ballot_shape(),
            });
        }
        match method {
            MethodId::Qv | MethodId::Cumulative => {
                if !self.score_levels.is_empty() {
                    return Err(SpecError::LevelsMismatch { method });
                }
                match self.allocation_limit {
                    Some(limit) if limit > 0 => Ok(()),
                    _ => Err(SpecError::MissingLimit { method }),
                }
            }
            _ => {
                let canonical = Self::standard(method, &MethodParams::default());
                if self.score_levels != canonical.score_levels {
                    return Err(SpecError::LevelsMismatch { method });
                }
                Ok(())
            }
        }
    }

    /// The scores a normalized ballot may contain for a question with
    /// `option_count` options, or `None` for integer allocations.
    pub fn admissible_scores(&self, option_count: usize) -> Option<Vec<Rational>> {
        match self.method_id {
            MethodId::Mbc => {
                let n = option_count as i64;
                Some((0..=n).map(|k| frac(k, n.max(1))).collect())
            }
            MethodId::Qv | MethodId::Cumulative => None,
            _ => Some(self.score_levels.clone()),
        }
    }

    pub fn is_integer_allocation(&self) -> bool {
        self.ballot_shape == BallotShape::IntegerAllocation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_score_sets() {
        assert_eq!(VotingMethodSpec::mv().score_levels, vec![int(0), int(1)]);
        assert_eq!(
            VotingMethodSpec::cav().score_levels,
            vec![int(0), frac(1, 2), int(1)]
        );
        let sv: Vec<String> = VotingMethodSpec::sv()
            .score_levels
            .iter()
            .map(|r| rational::to_decimal_string(r, 1))
            .collect();
        assert_eq!(sv, ["0.0", "0.2", "0.4", "0.6", "0.8", "1.0"]);
        assert_eq!(VotingMethodSpec::mbc().ballot_shape, BallotShape::RankedSubset);
        assert_eq!(VotingMethodSpec::mv().ballot_shape, BallotShape::SingleChoice);
    }

    #[test]
    fn mbc_admissible_for_five_options_matches_sv_scale() {
        let mbc = VotingMethodSpec::mbc().admissible_scores(5).unwrap();
        assert_eq!(mbc, VotingMethodSpec::sv().score_levels);
    }

    #[test]
    fn check_rejects_tampered_specs() {
        let mut sv = VotingMethodSpec::sv();
        sv.score_levels.push(frac(3, 10));
        assert!(matches!(sv.check(), Err(SpecError::LevelsMismatch { .. })));
        assert!(VotingMethodSpec::qv(0).check().is_err());
        assert!(VotingMethodSpec::qv(100).check().is_ok());
        let mut mv = VotingMethodSpec::mv();
        mv.ballot_shape = BallotShape::RankedSubset;
        assert!(mv.check().is_err());
    }

    #[test]
    fn method_ids_parse_case_insensitively() {
        assert_eq!("MBC".parse::<MethodId>().unwrap(), MethodId::Mbc);
        assert_eq!("cumulative".parse::<MethodId>().unwrap(), MethodId::Cumulative);
        assert!("borda".parse::<MethodId>().is_err());
    }
}
