//! Scenario runner and figure reproduction on top of the `biphoton` engines.
//!
//! The binary is a thin shell over [`run::run_scenario`],
//! [`run::reproduce_figure`] and [`run::solve_angle`]; the same functions are
//! available here for tests and scripting.

use std::path::PathBuf;

pub mod output;
pub mod run;
pub mod scenario;

pub use scenario::Scenario;

/// Everything a command can fail with, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error(transparent)]
    Engine(#[from] biphoton::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// `1` for anything wrong with the input, `2` when the physics or the
    /// numerics refuse.
    pub fn exit_code(&self) -> i32 {
        use biphoton::Error as E;
        match self {
            CliError::Parse(_) | CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Engine(e) => match e {
                E::InvalidParameter { .. } | E::GridMismatch(_) | E::OutOfRange { .. } | E::TooLarge { .. } | E::Dataset { .. } => 1,
                E::Evanescent { .. }
                | E::NoSignChange
                | E::NonConvergent { .. }
                | E::HalfLevelNotCrossed
                | E::BelowThreshold { .. }
                | E::NotHermitian { .. } => 2,
            },
        }
    }
}

/// Quadrature overrides given on the command line. They win over the
/// scenario's own values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub omega_samples: Option<usize>,
    pub qmax_scale: Option<f64>,
    pub seed: Option<u64>,
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
