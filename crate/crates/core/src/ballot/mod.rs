//! Pure ballot engine: method catalog, validation, scoring, aggregation and
//! ranking. Every function here is deterministic and free of shared state.

pub mod method;
pub mod question;
pub mod tally;
pub mod validate;

pub use method::{BallotShape, MethodId, MethodParams, SpecError, UnknownMethod, VotingMethodSpec};
pub use question::{OptionItem, Question, QuestionError};
pub use tally::{aggregate, rank_by_first_choice, rank_options, Ranking, TallyError, TallyResult};
pub use validate::{normalize_scores, validate_ballot, RawBallotInput, ScoreVector, Violation, Violations};
