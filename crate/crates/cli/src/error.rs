// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use csas_core::CsasError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    /// Writing results failed.
    pub const OUTPUT: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const CONFIG: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// A numerical stage failed.
    #[error("{stage} failed{}{}: {source}", cluster.map(|c| format!(" for cluster {c}")).unwrap_or_default(), window.map(|(a, b)| format!(" on window [{a}, {b}]")).unwrap_or_default())]
    Numerical {
        stage: &'static str,
        cluster: Option<usize>,
        window: Option<(usize, usize)>,
        source: CsasError,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) | Self::Read { .. } => exit::INPUT,
            Self::Numerical { .. } => exit::NUMERICAL,
            Self::Config(_) => exit::CONFIG,
            Self::Write { .. } => exit::OUTPUT,
        }
    }

    pub(crate) fn numerical(stage: &'static str, source: CsasError) -> Self {
        Self::Numerical {
            stage,
            cluster: None,
            window: None,
            source,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: impl Into<std::io::Error>) -> Self {
        Self::Write {
            path: path.into(),
            source: source.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
