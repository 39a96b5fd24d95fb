//! Declarative experiment harness: simulate, train, evaluate, render and
//! report from TOML configs.

pub mod commands;
pub mod config;

use pignpi_core::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;
pub const EXIT_INVARIANT: i32 = 5;

/// Process exit status for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => EXIT_CONFIG,
                Error::Data(_) | Error::Io(_) | Error::Json(_) | Error::UndefinedMetric(_) => {
                    EXIT_DATA
                }
                Error::Singularity { .. } | Error::Diverged { .. } | Error::NonFiniteLoss { .. } => {
                    EXIT_DIVERGENCE
                }
                Error::Invariant(_) => EXIT_INVARIANT,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_DATA;
        }
        if cause.is::<toml::ser::Error>() {
            return EXIT_CONFIG;
        }
    }
    1
}
