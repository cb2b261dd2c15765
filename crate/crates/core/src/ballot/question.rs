use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::method::{MethodId, SpecError, VotingMethodSpec};
use crate::ids::{OptionId, QuestionId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionItem {
    pub option_id: OptionId,
    pub label: String,
}

/// A question with its canonical option order and enabled methods.
///
/// The option order is stable for the life of the question and is the
/// tie-breaking order for every ranking derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: QuestionId,
    pub text: String,
    pub options: Vec<OptionItem>,
    pub enabled_methods: Vec<VotingMethodSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuestionError {
    #[error("question {0} needs at least two options")]
    TooFewOptions(QuestionId),
    #[error("question {0}: option ids must be non-empty")]
    EmptyOptionId(QuestionId),
    #[error("question {question}: duplicate option id {option}")]
    DuplicateOption { question: QuestionId, option: OptionId },
    #[error("question {0} enables no voting method")]
    NoMethods(QuestionId),
    #[error("question {question}: method {method} enabled twice")]
    DuplicateMethod { question: QuestionId, method: MethodId },
    #[error("question {question}: {source}")]
    InvalidMethod {
        question: QuestionId,
        #[source]
        source: SpecError,
    },
}

impl Question {
    pub fn new(
        question_id: impl Into<QuestionId>,
        text: impl Into<String>,
        options: Vec<OptionItem>,
        enabled_methods: Vec<VotingMethodSpec>,
    ) -> Result<Self, Vec<QuestionError>> {
        let q = Self {
            question_id: question_id.into(),
            text: text.into(),
            options,
            enabled_methods,
        };
        q.check()?;
        Ok(q)
    }

    /// Convenience constructor where labels equal ids.
    pub fn with_option_ids(
        question_id: &str,
        option_ids: &[&str],
        enabled_methods: Vec<VotingMethodSpec>,
    ) -> Result<Self, Vec<QuestionError>> {
        let options = option_ids
            .iter()
            .map(|id| OptionItem {
                option_id: OptionId::from(*id),
                label: id.to_string(),
            })
            .collect();
        Self::new(question_id, question_id, options, enabled_methods)
    }

    pub fn check(&self) -> Result<(), Vec<QuestionError>> {
        let qid = &self.question_id;
        let mut errors = Vec::new();
        if self.options.len() < 2 {
            errors.push(QuestionError::TooFewOptions(qid.clone()));
        }
        let mut seen = BTreeSet::new();
        for opt in &self.options {
            if opt.option_id.as_str().trim().is_empty() {
                errors.push(QuestionError::EmptyOptionId(qid.clone()));
            } else if !seen.insert(&opt.option_id) {
                errors.push(QuestionError::DuplicateOption {
                    question: qid.clone(),
                    option: opt.option_id.clone(),
                });
            }
        }
        if self.enabled_methods.is_empty() {
            errors.push(QuestionError::NoMethods(qid.clone()));
        }
        let mut methods = BTreeSet::new();
        for spec in &self.enabled_methods {
            if !methods.insert(spec.method_id) {
                errors.push(QuestionError::DuplicateMethod {
                    question: qid.clone(),
                    method: spec.method_id,
                });
            }
            if let Err(source) = spec.check() {
                errors.push(QuestionError::InvalidMethod {
                    question: qid.clone(),
                    source,
                });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    pub fn option_count(&self) -> usize {
        self.options.len()
    }

    pub fn option_ids(&self) -> Vec<OptionId> {
        self.options.iter().map(|o| o.option_id.clone()).collect()
    }

    pub fn option_index(&self, id: &OptionId) -> Option<usize> {
        self.options.iter().position(|o| &o.option_id == id)
    }

    pub fn method(&self, method: MethodId) -> Option<&VotingMethodSpec> {
        self.enabled_methods.iter().find(|s| s.method_id == method)
    }

    pub fn method_ids(&self) -> Vec<MethodId> {
        self.enabled_methods.iter().map(|s| s.method_id).collect()
    }
}
