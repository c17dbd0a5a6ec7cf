//! Configuration parsing, run/sweep execution, CSV emission, and the
//! oracle-check validation command.
//!
//! Config files are flat `key = value` text with dotted section prefixes
//! (`model.s`, `grid.dt`, `comp.epsilon`, `probe.xi`, `sweep.param`,
//! `sweep.values`, `lyapunov.t0`, `lyapunov.t1`, `output_dir`). Unknown keys
//! are rejected; missing keys take the documented defaults.

pub mod config;
pub mod output;
pub mod runner;

use std::fmt;

/// Exit discipline: 0 success, 2 config, 3 numerical, 4 oracle-check.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Io(std::io::Error),
    Numerical(String),
    OracleCheck(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io(_) => 1,
            AppError::Numerical(_) => 3,
            AppError::OracleCheck(_) => 4,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "config error: {msg}"),
            AppError::Io(e) => write!(f, "io error: {e}"),
            AppError::Numerical(msg) => write!(f, "numerical error: {msg}"),
            AppError::OracleCheck(msg) => write!(f, "oracle check failed: {msg}"),
        }
    }
}

impl std::error::Error for AppError {}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e)
    }
}
