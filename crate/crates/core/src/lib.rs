//! Points-to analysis for programs that call library code without
//! specifications, made eventually sound by monitoring executions and feeding
//! observed counterexamples back into the analysis.

pub mod error;
pub mod ir;
pub mod pta;
pub mod monitor;
pub mod dynexec;
pub mod feedback;
pub mod specinfer;
pub mod oracle;
