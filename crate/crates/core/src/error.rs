use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("bus {0} is not connected to the slack bus")]
    DisconnectedGraph(u32),
    #[error("branch {index} ({from}-{to}) has non-positive reactance {reactance}")]
    NonPositiveReactance {
        index: usize,
        from: u32,
        to: u32,
        reactance: f64,
    },
    #[error("unknown branch: {0}")]
    UnknownBranch(String),
    #[error("unknown bus {0}")]
    UnknownBus(u32),
    #[error("configuration is unobservable: rank(H) = {rank} < {states}")]
    UnobservableConfiguration { rank: usize, states: usize },
    #[error("gain matrix H^T R^-1 H is singular")]
    SingularGainMatrix,
    #[error("Gram matrix H^T H is singular")]
    SingularGram,
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("chi-square test needs m > n (m = {m}, n = {n})")]
    DegenerateFreedom { m: usize, n: usize },
    #[error("every meter is critical; normalized residual test is undefined")]
    AllMetersCritical,
    #[error("no nonzero attack is supported on the controlled meter set {0:?}")]
    InfeasibleSupport(Vec<usize>),
    #[error("dispatch is infeasible: {0}")]
    InfeasibleDispatch(String),
    #[error("linear program is unbounded")]
    UnboundedProblem,
    #[error("{path}:{location}: {reason}")]
    Parse {
        path: PathBuf,
        location: String,
        reason: String,
    },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn dims(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            actual,
        }
    }

    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Short machine-readable tag used as the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::DuplicateBus(_) => "duplicate_bus",
            Error::DisconnectedGraph(_) => "disconnected_graph",
            Error::NonPositiveReactance { .. } => "non_positive_reactance",
            Error::UnknownBranch(_) => "unknown_branch",
            Error::UnknownBus(_) => "unknown_bus",
            Error::UnobservableConfiguration { .. } => "unobservable",
            Error::SingularGainMatrix => "singular_gain",
            Error::SingularGram => "singular_gram",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DegenerateFreedom { .. } => "degenerate_freedom",
            Error::AllMetersCritical => "all_meters_critical",
            Error::InfeasibleSupport(_) => "infeasible_support",
            Error::InfeasibleDispatch(_) => "infeasible_dispatch",
            Error::UnboundedProblem => "unbounded",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Stage { .. } => unreachable!("root() strips stages"),
        }
    }

    /// Process exit code: 2 parse/validation, 3 numerical failure, 4 infeasible.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::DuplicateBus(_)
            | Error::DisconnectedGraph(_)
            | Error::NonPositiveReactance { .. }
            | Error::UnknownBranch(_)
            | Error::UnknownBus(_)
            | Error::DimensionMismatch { .. }
            | Error::Parse { .. }
            | Error::Validation(_) => 2,
            Error::UnobservableConfiguration { .. }
            | Error::SingularGainMatrix
            | Error::SingularGram
            | Error::DegenerateFreedom { .. }
            | Error::AllMetersCritical
            | Error::UnboundedProblem => 3,
            Error::InfeasibleSupport(_) | Error::InfeasibleDispatch(_) => 4,
            Error::Stage { .. } => unreachable!(),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
