//! File formats: marker stream CSV, session configuration and reports.

pub mod config;
pub mod stream;

pub use config::{ConsistencySpec, SessionConfig, Thresholds};
pub use stream::{parse_clock_time, parse_marker_stream, write_marker_stream, MarkerStreamReader, STREAM_HEADER};
