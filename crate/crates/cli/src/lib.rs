//! Command-line surface and HTTP server for the size recommender.
//!
//! Exit codes: 0 success, 1 invalid input, 2 I/O or bind failure,
//! 3 degenerate data, 4 no path between brands, 5 unknown brand.

pub mod commands;
pub mod error;
pub mod experiment;
pub mod query;
pub mod server;

pub use commands::{run, Cli};
pub use error::CliError;
pub use query::{answer, Answer, Query, QueryError, QueryMethod};
