use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("duplicate {0}")]
    Duplicate(String),
    #[error("unresolved {0}")]
    Unresolved(String),
    #[error("no entry function")]
    NoEntry,
    #[error("arity mismatch for {0}")]
    Arity(String),
    #[error("shared-field rewrite misuse: {0}")]
    Rewrite(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("schedule exhausted at branch {0}")]
    ScheduleExhausted(String),
    #[error("library function {0} has no ground truth")]
    NoGroundTruth(String),
    #[error("call to unknown function {0}")]
    UnknownFunction(String),
    #[error("branch count exceeds cap of {0}")]
    BranchCap(usize),
    #[error("call depth exceeded in {0}")]
    DepthExceeded(String),
}

/// Errors for the line-oriented artifact formats (points-to files, schemes,
/// schedules, counterexample lines).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("format error on line {line}: {msg}")]
pub struct FormatError {
    pub line: usize,
    pub msg: String,
}

impl FormatError {
    pub fn new(line: usize, msg: impl Into<String>) -> Self {
        FormatError {
            line,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("ambiguous variable {0}; qualify it as <function>.<name>")]
    Ambiguous(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferError {
    #[error("target {0} is not derivable even with pessimistic library bodies")]
    Underivable(String),
    #[error("target variable {0} is not a program variable")]
    NotProgramVar(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("monitor {0} is not part of the scheme")]
    NotInScheme(String),
    #[error("no construction applies to monitor {0}")]
    NoConstruction(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoopError {
    #[error("object {0} reported with conflicting classes")]
    ClassConflict(usize),
    #[error(transparent)]
    Exec(#[from] ExecError),
}
