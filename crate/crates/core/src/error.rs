use thiserror::Error;

use crate::varset::VarSet;

pub type Result<T, E = MllError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MllError {
    #[error("weight at cell offset {offset} is {value}, below the positivity floor")]
    PositivityViolation { offset: usize, value: f64 },

    #[error("expected {expected} weights for the given levels, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("invalid variable definition: {0}")]
    InvalidVariables(String),

    #[error("{subset} is not a subset of {superset}")]
    NotASubset { subset: VarSet, superset: VarSet },

    #[error("sets {left} and {right} overlap")]
    OverlappingSets { left: VarSet, right: VarSet },

    #[error("effect/margin nesting violated: {0}")]
    NotNested(String),

    #[error("margin {margin} must be a proper subset of {outer}")]
    NotStrictlyNested { margin: VarSet, outer: VarSet },

    #[error("binary sign formula needs all-binary margin, {margin} is not")]
    NotBinary { margin: VarSet },

    #[error("subset {0} missing from lattice assignment")]
    MissingSubset(VarSet),

    #[error("effect {effect} within margin {margin} is not in the parameter set")]
    EffectAbsent { effect: VarSet, margin: VarSet },

    #[error("cell index {cell:?} invalid for variables {vars}")]
    InvalidCell { cell: Vec<usize>, vars: VarSet },

    #[error("margin {margin} is not contained in the variable set {vars}")]
    MarginNotInV { margin: VarSet, vars: VarSet },

    #[error("invalid marginal specification: {0}")]
    InvalidSpec(String),

    #[error("bad partition: {0}")]
    BadPartition(String),

    #[error("effect {effect} is not covered by {cover}")]
    NotCovered { effect: VarSet, cover: VarSet },

    #[error("query over {n} variables exceeds the enumeration limit of {limit}")]
    QueryTooLarge { n: usize, limit: usize },

    #[error("internal equivalence breach: {0}")]
    EquivalenceBreach(String),

    #[error("invalid generator spec: {0}")]
    SpecInvalid(String),

    #[error("interaction for {0} could not be centered")]
    NonCentered(VarSet),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MllError {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        MllError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        MllError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors that signal an engine inconsistency rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, MllError::EquivalenceBreach(_))
    }
}
