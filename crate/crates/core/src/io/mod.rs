//! File formats: `SARVOL1` volumes, TOML run configs, and CSV tables for
//! echoes, results and convergence traces.

pub mod config;
mod table;
mod volume;

pub use config::{apply_override, RunConfig};
pub use table::{
    format_number, read_echo, read_results, read_trace, write_echo, write_results, write_trace,
    ResultRow, RESULT_COLUMNS, TRACE_COLUMNS,
};
pub use volume::{decode_volume, encode_volume, read_volume, write_volume, HEADER_LEN, MAGIC};
