//! Campaign lifecycle, ballot intake, tallying and results over an event log.

pub mod config;
pub mod error;
pub mod events;
pub mod model;
pub mod order;
pub mod platform;
pub mod state;

pub use config::EngineConfig;
pub use error::{EngineError, EngineResult, ErrorClass, FieldError};
pub use events::{Event, EventRecord};
pub use model::*;
pub use order::{default_order_seed, method_order};
pub use platform::{BallotForm, BallotSubmission, Platform};
pub use state::EngineState;
