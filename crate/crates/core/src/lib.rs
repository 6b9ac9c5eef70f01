//! Translate natural-language experimental protocols into structured DSL
//! programs, trace reagents through them and simulate the result against
//! resource and safety constraints.
//!
//! [`pipeline::translate`] runs every stage; the modules can also be used
//! one at a time.

pub mod cli;
pub mod dsl;
pub mod eval;
pub mod execution;
pub mod extractor;
pub mod flow;
pub mod pdg;
pub mod pipeline;
pub mod preprocess;
pub mod program;
pub mod synthesis;
pub mod units;
