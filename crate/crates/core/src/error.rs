use thiserror::Error;

use crate::model::{DomainId, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cannot normalize: every entry is zero")]
    AllZero,

    #[error("weight for {domain} is negative or not finite ({value})")]
    InvalidWeight { domain: DomainId, value: f64 },

    #[error("expected a {expected} vector, got {found}")]
    KindMismatch { expected: String, found: String },

    #[error("invalid mixing parameters: {0}")]
    InvalidMix(String),

    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),

    #[error("profile `{label}` is missing domain {domain}")]
    IncompleteProfile { label: String, domain: DomainId },

    #[error("profile `{0}` is degenerate (zero variance or zero magnitude)")]
    DegenerateProfile(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("nothing left after exclusion: {0}")]
    EmptyAfterExclusion(&'static str),

    #[error("trajectory `{task_id}` has {attempts} attempt(s); at least 2 are required")]
    TooFewAttempts { task_id: String, attempts: usize },

    #[error("invalid perturbation family: {0}")]
    InvalidFamily(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid numeric guards: {0}")]
    InvalidGuards(String),

    #[error("invalid agent parameters: {0}")]
    InvalidParams(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation failed with {} violation(s): {}", .0.len(), join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
