//! Command-line front end: CSV ingestion, the `r2d2` subcommands and the
//! JSON documents they emit.

pub mod commands;
pub mod error;
pub mod io;

pub use commands::{run, run_analysis, Analysis, AnalysisSummary, Cli, Command, FitReport};
pub use error::{CliError, Result};
pub use io::{canonical_schema, load_csv, load_csv_reader, write_canonical_csv, CsvSchema, LoadedData, SpatialColumns};

/// JSON schemas of the documents written by `fit-gbp`, `analyze` and the
/// error report on stderr.
pub mod schemas {
    pub const FIT_GBP: &str = include_str!("../schemas/fit_gbp.schema.json");
    pub const ANALYZE_SUMMARY: &str = include_str!("../schemas/analyze_summary.schema.json");
    pub const ERROR: &str = include_str!("../schemas/error.schema.json");
}
