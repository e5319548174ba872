//! Benchmark workloads for `tapegrad` and a naive reference engine to
//! compare against.

pub mod graphs;
pub mod naive;
pub mod report;
pub mod workloads;

pub use report::BenchReport;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Engine(#[from] tapegrad::Error),
    #[error("check failed: {0}")]
    Check(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
