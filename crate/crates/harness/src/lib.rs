//! Simulation harness for `pptp-core`: a retailer, smart meters and
//! auditors talking over a length-prefixed TCP protocol, an in-process
//! driver producing the same results, tamper scenarios and benchmarks.
//!
//! Transport is plaintext. The harness is a simulation and provides no
//! channel security.

pub mod bench;
pub mod config;
pub mod inproc;
pub mod net;
pub mod node;
pub mod tamper;
pub mod wire;

use pptp_core::bulletin::BoardError;
use pptp_core::protocol::ProtocolError;
use thiserror::Error;

pub use config::{ConfigError, RunConfig, Variant};

pub const INSECURE_BANNER: &str =
    "insecure, simulation-only: plaintext transport without authentication";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("board: {0}")]
    Board(#[from] BoardError),
    #[error(transparent)]
    Wire(#[from] wire::WireError),
    #[error("cannot reach {0}")]
    Unreachable(String),
    #[error("peer reported: {0}")]
    Remote(String),
    #[error("operation counts: {0}")]
    Counter(String),
}

/// Process exit codes.
pub mod exit {
    pub const ACCEPT: i32 = 0;
    pub const REJECT: i32 = 1;
    pub const UNREACHABLE: i32 = 2;
    pub const CONFIG: i32 = 3;
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => exit::CONFIG,
            HarnessError::Unreachable(_)
            | HarnessError::Wire(_)
            | HarnessError::Board(BoardError::Io(_)) => exit::UNREACHABLE,
            _ => exit::REJECT,
        }
    }
}
